//! Python bindings for the `dcgf` crate.

use dcgf::builtins;
use dcgf::hybrid::{osteomyelitis_defaults, osteomyelitis_system};
use dcgf::mpc::{self, CftocProblem, TerminalMode};
use dcgf::parser::parse_named;
use dcgf::simulator::{integrate, Method, ModeSchedule, SimulationError};
use dcgf::{compile_model, CompiledModel, DcgfModel, Diagnostic, SwitchedSystem};
use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;

fn to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

fn diagnostics_err(diags: &[Diagnostic]) -> PyErr {
    PyValueError::new_err(diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))
}

/// A parsed model with its parameter values.
#[pyclass(name = "Model", module = "pydcgf")]
#[derive(Clone)]
struct PyModel {
    inner: DcgfModel,
    warnings: Vec<String>,
}

#[pymethods]
impl PyModel {
    /// Parses model source text. Raises `ValueError` with the diagnostics on failure.
    #[staticmethod]
    #[pyo3(signature = (source, name=None))]
    fn parse(source: &str, name: Option<&str>) -> PyResult<Self> {
        let parsed = parse_named(source, name).map_err(|d| diagnostics_err(&d))?;
        Ok(PyModel { inner: parsed.model, warnings: parsed.warnings.iter().map(|w| w.to_string()).collect() })
    }

    /// Loads `sir` or `sir-therapy`.
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        let source =
            builtins::builtin_source(name).ok_or_else(|| PyKeyError::new_err(format!("unknown builtin `{name}`")))?;
        Self::parse(source, Some(&format!("builtin:{name}")))
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.warnings.clone()
    }

    #[getter]
    fn species(&self) -> Vec<String> {
        self.inner.species.iter().map(|d| d.name.clone()).collect()
    }

    #[getter]
    fn therapies(&self) -> Vec<String> {
        self.inner.therapies.iter().map(|d| d.name.clone()).collect()
    }

    #[getter]
    fn parameters(&self) -> Vec<(String, f64)> {
        self.inner.parameters.iter().map(|(k, v)| (k.clone(), *v)).collect()
    }

    fn set_param(&mut self, name: &str, value: f64) -> PyResult<()> {
        match self.inner.parameters.get_mut(name) {
            Some(slot) => {
                *slot = value;
                Ok(())
            }
            None => Err(PyKeyError::new_err(format!("`{name}` is not a declared parameter"))),
        }
    }

    fn compile(&self) -> PyResult<PyCompiled> {
        compile_model(&self.inner).map(|inner| PyCompiled { inner }).map_err(|e| diagnostics_err(&e.diagnostics()))
    }

    fn __repr__(&self) -> String {
        format!("Model(species={:?}, therapies={:?})", self.species(), self.therapies())
    }
}

/// Stoichiometric matrix, rate vector, therapy analysis and switched system of a model.
#[pyclass(name = "CompiledModel", module = "pydcgf")]
struct PyCompiled {
    inner: CompiledModel,
}

#[pymethods]
impl PyCompiled {
    /// `{"rows", "species_count", "columns", "entries"}`.
    fn matrix<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.matrix)
    }

    /// Rate expressions, one per column, as text.
    fn phi(&self) -> Vec<String> {
        self.inner.phi.iter().map(|r| r.to_string()).collect()
    }

    fn analysis<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.analysis)
    }

    fn analysis_text(&self) -> String {
        self.inner.analysis.conditions.to_text()
    }

    fn st_graph_dot(&self) -> String {
        self.inner.analysis.st_graph.to_dot()
    }

    fn mode_graph_dot(&self) -> String {
        self.inner.analysis.mode_graph.to_dot()
    }

    fn system(&self) -> PySystem {
        PySystem { inner: self.inner.system.clone() }
    }
}

/// Switched system `x' = f_q(x)` over a finite set of modes.
#[pyclass(name = "System", module = "pydcgf")]
#[derive(Clone)]
struct PySystem {
    inner: SwitchedSystem,
}

#[pymethods]
impl PySystem {
    /// The osteomyelitis treatment model. `params` overrides the defaults.
    #[staticmethod]
    #[pyo3(signature = (params=None))]
    fn osteomyelitis(params: Option<Vec<(String, f64)>>) -> PyResult<Self> {
        let mut values = osteomyelitis_defaults();
        for (name, value) in params.unwrap_or_default() {
            match values.get_mut(&name) {
                Some(slot) => *slot = value,
                None => return Err(PyKeyError::new_err(format!("`{name}` is not an osteomyelitis parameter"))),
            }
        }
        osteomyelitis_system(&values).map(|inner| PySystem { inner }).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn state_names(&self) -> Vec<String> {
        self.inner.state_names.clone()
    }

    #[getter]
    fn mode_labels(&self) -> Vec<String> {
        self.inner.mode_labels.clone()
    }

    #[getter]
    fn initial_state(&self) -> Vec<f64> {
        self.inner.initial_state.clone()
    }

    #[getter]
    fn initial_mode(&self) -> usize {
        self.inner.initial_mode
    }

    #[getter]
    fn input_names(&self) -> Vec<String> {
        self.inner.inputs.iter().map(|i| i.name.clone()).collect()
    }

    fn input_alphabet(&self) -> Vec<Vec<usize>> {
        self.inner.input_alphabet()
    }

    fn mode_for_input(&self, input: Vec<usize>) -> Option<usize> {
        self.inner.mode_for_input(&input)
    }

    fn input_for_mode(&self, mode: usize) -> PyResult<Vec<usize>> {
        self.check_mode(mode)?;
        Ok(self.inner.input_for_mode(mode))
    }

    fn rhs(&self, mode: usize, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_mode(mode)?;
        self.check_dim(&x)?;
        Ok(self.inner.rhs(mode, &x))
    }

    fn output(&self, mode: usize, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_mode(mode)?;
        self.check_dim(&x)?;
        Ok(self.inner.output_of(mode, &x))
    }

    fn to_json<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.to_json())
    }

    /// Integrates from `x0` (default: the initial state).
    ///
    /// `schedule` is a list of `(start, mode)` pairs beginning at 0; switch
    /// times must fall on the `dt` grid. Returns the trajectory as a dict.
    /// A divergent run raises `RuntimeError`.
    #[pyo3(signature = (duration, dt, schedule=None, x0=None, method="euler", clamp=None))]
    #[allow(clippy::too_many_arguments)]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        duration: f64,
        dt: f64,
        schedule: Option<Vec<(f64, usize)>>,
        x0: Option<Vec<f64>>,
        method: &str,
        clamp: Option<Vec<(f64, f64)>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let method = match method {
            "euler" => Method::Euler,
            "rk4" => Method::Rk4,
            other => return Err(PyValueError::new_err(format!("unknown method `{other}`"))),
        };
        let schedule = match schedule {
            Some(segments) => ModeSchedule::new(segments, duration),
            None => Ok(ModeSchedule::constant(self.inner.initial_mode, duration)),
        }
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let x0 = x0.unwrap_or_else(|| self.inner.initial_state.clone());
        self.check_dim(&x0)?;
        match integrate(&self.inner, &schedule, &x0, dt, method, clamp.as_deref()) {
            Ok(traj) => to_py(py, &traj),
            Err(e @ SimulationError::NonFinite { .. }) => Err(PyRuntimeError::new_err(e.to_string())),
            Err(e) => Err(PyValueError::new_err(e.to_string())),
        }
    }

    fn __repr__(&self) -> String {
        format!("System(states={:?}, modes={})", self.inner.state_names, self.inner.mode_count())
    }
}

impl PySystem {
    fn check_mode(&self, mode: usize) -> PyResult<()> {
        if mode < self.inner.mode_count() {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!("mode {mode} out of range (0..{})", self.inner.mode_count())))
        }
    }

    fn check_dim(&self, x: &[f64]) -> PyResult<()> {
        if x.len() == self.inner.dim() {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!("state has length {}, expected {}", x.len(), self.inner.dim())))
        }
    }
}

/// Finite-horizon optimal control problem over the system's inputs.
#[pyclass(name = "CftocProblem", module = "pydcgf")]
#[derive(Clone)]
struct PyProblem {
    inner: CftocProblem,
}

#[pymethods]
impl PyProblem {
    #[new]
    fn new(system: &PySystem) -> Self {
        PyProblem { inner: CftocProblem::for_system(&system.inner) }
    }

    /// Preset for SIR scenario 1, 2 or 3.
    #[staticmethod]
    fn scenario(scenario: u8, system: &PySystem) -> PyResult<Self> {
        if system.inner.dim() != 3 {
            return Err(PyValueError::new_err("scenario presets need a three-state SIR system"));
        }
        CftocProblem::sir_scenario(scenario, &system.inner)
            .map(|inner| PyProblem { inner })
            .ok_or_else(|| PyValueError::new_err(format!("unknown scenario {scenario}")))
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon
    }
    #[setter]
    fn set_horizon(&mut self, v: usize) {
        self.inner.horizon = v;
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }
    #[setter]
    fn set_dt(&mut self, v: f64) {
        self.inner.dt = v;
    }

    #[getter]
    fn substeps(&self) -> usize {
        self.inner.substeps
    }
    #[setter]
    fn set_substeps(&mut self, v: usize) {
        self.inner.substeps = v;
    }

    #[getter]
    fn q(&self) -> Vec<Vec<f64>> {
        self.inner.q.clone()
    }
    #[setter]
    fn set_q(&mut self, v: Vec<Vec<f64>>) {
        self.inner.q = v;
    }

    #[getter]
    fn r(&self) -> Vec<Vec<f64>> {
        self.inner.r.clone()
    }
    #[setter]
    fn set_r(&mut self, v: Vec<Vec<f64>>) {
        self.inner.r = v;
    }

    #[getter]
    fn state_box(&self) -> Vec<(f64, f64)> {
        self.inner.state_box.clone()
    }
    #[setter]
    fn set_state_box(&mut self, v: Vec<(f64, f64)>) {
        self.inner.state_box = v;
    }

    #[getter]
    fn terminal_vertices(&self) -> Vec<Vec<f64>> {
        self.inner.terminal_vertices.clone()
    }
    #[setter]
    fn set_terminal_vertices(&mut self, v: Vec<Vec<f64>>) {
        self.inner.terminal_vertices = v;
    }

    #[getter]
    fn cap(&self) -> usize {
        self.inner.cap
    }
    #[setter]
    fn set_cap(&mut self, v: usize) {
        self.inner.cap = v;
    }

    #[getter]
    fn clamp_plant(&self) -> bool {
        self.inner.clamp_plant
    }
    #[setter]
    fn set_clamp_plant(&mut self, v: bool) {
        self.inner.clamp_plant = v;
    }

    #[pyo3(signature = (epsilon=mpc::DEFAULT_EPSILON))]
    fn hard_terminal(&mut self, epsilon: f64) {
        self.inner.terminal_mode = TerminalMode::Hard { epsilon };
    }

    #[pyo3(signature = (lambda_=mpc::DEFAULT_LAMBDA))]
    fn soft_terminal(&mut self, lambda_: f64) {
        self.inner.terminal_mode = TerminalMode::Soft { lambda: lambda_ };
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    /// Solves one problem from `x0`. Raises `RuntimeError` when no sequence is admissible.
    fn solve<'py>(&self, py: Python<'py>, system: &PySystem, x0: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
        let (problem, sys) = (&self.inner, &system.inner);
        let result = py.detach(|| mpc::solve_cftoc(problem, sys, &x0));
        match result {
            Ok(solution) => to_py(py, &solution),
            Err(e @ mpc::MpcError::InvalidProblem(_)) => Err(PyValueError::new_err(e.to_string())),
            Err(e) => Err(PyRuntimeError::new_err(e.to_string())),
        }
    }

    /// Receding-horizon run. Returns the run as a dict; a halted run carries
    /// its error under `"halted"` and the samples completed so far.
    #[pyo3(signature = (system, duration, x0=None, label="custom"))]
    fn run<'py>(
        &self,
        py: Python<'py>,
        system: &PySystem,
        duration: f64,
        x0: Option<Vec<f64>>,
        label: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let x0 = x0.unwrap_or_else(|| system.inner.initial_state.clone());
        let (problem, sys) = (&self.inner, &system.inner);
        let result = py.detach(|| mpc::run_receding_horizon(problem, sys, &x0, duration, label));
        let (run, halted) = match result {
            Ok(run) => (run, None),
            Err(h) => {
                let message = h.to_string();
                (*h.partial, Some(message))
            }
        };
        let summary = serde_json::json!({
            "scenario": run.scenario,
            "inputs": run.input_names,
            "schedule": run.schedule(),
            "steps": run.steps,
            "trajectory": run.trajectory,
            "csv": run.to_csv(),
            "halted": halted,
        });
        to_py(py, &summary)
    }
}

/// Quadratic stage cost `x'Qx + u'Ru`.
#[pyfunction]
fn stage_cost(x: Vec<f64>, u: Vec<usize>, q: Vec<Vec<f64>>, r: Vec<Vec<f64>>) -> f64 {
    mpc::stage_cost(&x, &u, &q, &r)
}

/// `(member, distance)` of `x` against the convex hull of `vertices`.
#[pyfunction]
#[pyo3(signature = (x, vertices, epsilon=mpc::DEFAULT_EPSILON))]
fn terminal_membership(x: Vec<f64>, vertices: Vec<Vec<f64>>, epsilon: f64) -> (bool, f64) {
    let m = mpc::terminal_membership(&x, &vertices, epsilon);
    (m.member, m.distance)
}

#[pymodule]
fn pydcgf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyCompiled>()?;
    m.add_class::<PySystem>()?;
    m.add_class::<PyProblem>()?;
    m.add_function(wrap_pyfunction!(stage_cost, m)?)?;
    m.add_function(wrap_pyfunction!(terminal_membership, m)?)?;
    m.add("DAY", mpc::DAY)?;
    m.add("BUILTINS", builtins::BUILTIN_NAMES.to_vec())?;
    Ok(())
}
