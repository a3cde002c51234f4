//! Constrained finite-time optimal control over discrete therapy inputs,
//! solved by exhaustive enumeration, and the receding-horizon loop.

use std::cmp::Ordering;
use std::fmt::Write as _;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hybrid::SwitchedSystem;
use crate::simulator::{clamp_policy, csv_float, euler_advance, step_count, SimulationError, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum TerminalMode {
    /// `x(T)` must lie within `epsilon` (max-norm) of the terminal set.
    Hard { epsilon: f64 },
    /// `lambda · distance(x(T))` is added to the cost.
    Soft { lambda: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CftocProblem {
    pub horizon: usize,
    pub dt: f64,
    /// Euler sub-steps per sample, shared by the predictor and the plant.
    pub substeps: usize,
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub state_box: Vec<(f64, f64)>,
    pub box_tolerance: f64,
    pub input_alphabet: Vec<Vec<usize>>,
    pub terminal_vertices: Vec<Vec<f64>>,
    pub terminal_mode: TerminalMode,
    /// Largest number of sequences `solve_cftoc` will enumerate.
    pub cap: usize,
    /// Clamp the plant state to `state_box` after every sample.
    pub clamp_plant: bool,
}

pub const DEFAULT_CAP: usize = 4096;
pub const DEFAULT_LAMBDA: f64 = 1e3;
pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DAY: f64 = 1.0 / 365.0;

pub fn diag(entries: &[f64]) -> Vec<Vec<f64>> {
    (0..entries.len()).map(|i| (0..entries.len()).map(|j| if i == j { entries[i] } else { 0.0 }).collect()).collect()
}

/// Input weights of the three SIR scenarios; `None` outside 1..=3.
pub fn scenario_r(scenario: u8) -> Option<Vec<Vec<f64>>> {
    match scenario {
        1 => Some(diag(&[0.1, 0.1])),
        2 => Some(diag(&[100.0, 0.1])),
        3 => Some(diag(&[0.1, 100.0])),
        _ => None,
    }
}

impl CftocProblem {
    /// Soft terminal set, one-day samples, unit state box, every input of
    /// `system`, identity weights.
    pub fn for_system(system: &SwitchedSystem) -> Self {
        let n = system.dim();
        let m = system.inputs.len();
        CftocProblem {
            horizon: 3,
            dt: DAY,
            substeps: 1,
            q: diag(&vec![1.0; n]),
            r: diag(&vec![1.0; m]),
            state_box: vec![(0.0, 1.0); n],
            box_tolerance: 1e-9,
            input_alphabet: system.input_alphabet(),
            terminal_vertices: Vec::new(),
            terminal_mode: TerminalMode::Soft { lambda: DEFAULT_LAMBDA },
            cap: DEFAULT_CAP,
            clamp_plant: false,
        }
    }

    /// The SIR therapy scenarios: `Q = diag(1, 10, 0.5)`, horizon of three
    /// one-day samples, terminal segment between `[1,0,0]` and `[0,0,1]`.
    /// Each day is integrated with ten Euler sub-steps; a single step of a
    /// day is unstable at these rates.
    pub fn sir_scenario(scenario: u8, system: &SwitchedSystem) -> Option<Self> {
        let r = scenario_r(scenario)?;
        Some(CftocProblem {
            substeps: 10,
            q: diag(&[1.0, 10.0, 0.5]),
            r,
            terminal_vertices: vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]],
            ..CftocProblem::for_system(system)
        })
    }

    pub fn sequence_count(&self) -> Option<usize> {
        self.input_alphabet.len().checked_pow(self.horizon as u32)
    }

    fn validate(&self, system: &SwitchedSystem) -> Result<(), MpcError> {
        let n = system.dim();
        let m = system.inputs.len();
        let bad = |what: String| Err(MpcError::InvalidProblem(what));
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) || self.substeps == 0 {
            return bad("dt must be positive and substeps at least 1".into());
        }
        if self.q.iter().any(|row| row.len() != n) {
            return bad(format!("Q must have {n} columns"));
        }
        if self.r.iter().any(|row| row.len() != m) {
            return bad(format!("R must have {m} columns"));
        }
        if self.state_box.len() != n {
            return bad(format!("state box must have {n} intervals"));
        }
        if self.terminal_vertices.iter().any(|v| v.len() != n) {
            return bad(format!("terminal vertices must have dimension {n}"));
        }
        if self.input_alphabet.is_empty() {
            return bad("input alphabet is empty".into());
        }
        if let Some(u) = self.input_alphabet.iter().find(|u| system.mode_for_input(u).is_none()) {
            return bad(format!("input {u:?} does not select a mode"));
        }
        match self.terminal_mode {
            TerminalMode::Hard { epsilon } if epsilon.is_nan() || epsilon < 0.0 => {
                bad("epsilon must be nonnegative".into())
            }
            TerminalMode::Soft { lambda } if lambda.is_nan() || lambda < 0.0 => {
                bad("lambda must be nonnegative".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MpcError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("{count} input sequences exceed the enumeration cap of {cap}")]
    CapExceeded { count: String, cap: usize },
    #[error("no admissible input sequence")]
    Infeasible,
    #[error("prediction became non-finite at step {step}")]
    NonFinite { step: usize },
    #[error(transparent)]
    Simulation(#[from] SimulationError),
}

fn mat_vec_l1(m: &[Vec<f64>], v: &[f64]) -> f64 {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>().abs()).sum()
}

/// `‖R·u‖₁ + ‖Q·x‖₁`.
pub fn stage_cost(x: &[f64], u: &[usize], q: &[Vec<f64>], r: &[Vec<f64>]) -> f64 {
    let u: Vec<f64> = u.iter().map(|&v| v as f64).collect();
    mat_vec_l1(r, &u) + mat_vec_l1(q, x)
}

/// Euler rollout: `T + 1` states starting with `x0`.
pub fn predict(
    system: &SwitchedSystem,
    x0: &[f64],
    inputs: &[Vec<usize>],
    dt: f64,
    substeps: usize,
) -> Result<Vec<Vec<f64>>, MpcError> {
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(x0.to_vec());
    for (k, u) in inputs.iter().enumerate() {
        let mode = system
            .mode_for_input(u)
            .ok_or_else(|| MpcError::InvalidProblem(format!("input {u:?} does not select a mode")))?;
        let next = euler_advance(system, mode, &states[k], dt, substeps);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(MpcError::NonFinite { step: k + 1 });
        }
        states.push(next);
    }
    Ok(states)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub member: bool,
    pub distance: f64,
}

/// Max-norm distance from `x` to the convex hull of `vertices`.
///
/// One or two vertices are handled exactly; larger hulls go through a
/// linear program over the convex weights.
pub fn terminal_membership(x: &[f64], vertices: &[Vec<f64>], epsilon: f64) -> Membership {
    let distance = match vertices {
        [] => f64::INFINITY,
        [v] => max_residual(x, v, v, 0.0),
        [v1, v2] => segment_distance(x, v1, v2),
        _ => hull_distance_lp(x, vertices),
    };
    Membership { member: distance <= epsilon, distance }
}

/// `max_j |x_j − (λ·v1_j + (1−λ)·v2_j)|`.
fn max_residual(x: &[f64], v1: &[f64], v2: &[f64], lambda: f64) -> f64 {
    x.iter()
        .zip(v1.iter().zip(v2))
        .map(|(xj, (a, b))| (xj - (lambda * a + (1.0 - lambda) * b)).abs())
        .fold(0.0, f64::max)
}

/// The residual is convex and piecewise linear in λ, so its minimum over
/// [0, 1] sits at an endpoint, a zero of one component, or a crossing of
/// two components.
fn segment_distance(x: &[f64], v1: &[f64], v2: &[f64]) -> f64 {
    let a: Vec<f64> = x.iter().zip(v2).map(|(x, b)| x - b).collect();
    let d: Vec<f64> = v1.iter().zip(v2).map(|(p, q)| p - q).collect();
    let mut candidates = vec![0.0, 1.0];
    for i in 0..a.len() {
        if d[i] != 0.0 {
            candidates.push(a[i] / d[i]);
        }
        for j in i + 1..a.len() {
            for sign in [1.0, -1.0] {
                let den = d[i] - sign * d[j];
                if den != 0.0 {
                    candidates.push((a[i] - sign * a[j]) / den);
                }
            }
        }
    }
    candidates
        .into_iter()
        .filter(|l| (0.0..=1.0).contains(l))
        .map(|l| max_residual(x, v1, v2, l))
        .fold(f64::INFINITY, f64::min)
}

fn hull_distance_lp(x: &[f64], vertices: &[Vec<f64>]) -> f64 {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let w: Vec<_> = vertices.iter().map(|_| lp.add_var(0.0, (0.0, 1.0))).collect();
    let t = lp.add_var(1.0, (0.0, f64::INFINITY));
    lp.add_constraint(w.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>().as_slice(), ComparisonOp::Eq, 1.0);
    for (j, &xj) in x.iter().enumerate() {
        let mut row: Vec<_> = w.iter().zip(vertices).map(|(&v, p)| (v, p[j])).collect();
        row.push((t, 1.0));
        lp.add_constraint(row.as_slice(), ComparisonOp::Ge, xj);
        let last = row.len() - 1;
        row[last].1 = -1.0;
        lp.add_constraint(row.as_slice(), ComparisonOp::Le, xj);
    }
    match lp.solve() {
        Ok(sol) => {
            // evaluate the residual at the returned weights rather than trusting t
            (0..x.len())
                .map(|j| {
                    let p: f64 = w.iter().zip(vertices).map(|(&v, vert)| sol[v] * vert[j]).sum();
                    (x[j] - p).abs()
                })
                .fold(0.0, f64::max)
        }
        Err(_) => f64::INFINITY,
    }
}

/// One enumerated sequence and its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub index: usize,
    pub sequence: Vec<Vec<usize>>,
    /// `None` when the sequence is inadmissible.
    pub cost: Option<f64>,
    pub terminal_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CftocSolution {
    pub sequence: Vec<Vec<usize>>,
    pub cost: f64,
    pub feasible: bool,
    pub terminal_distance: f64,
    pub predicted: Vec<Vec<f64>>,
    pub candidates_evaluated: usize,
}

/// Sequence number `index` with the first step most significant.
fn decode(index: usize, alphabet: &[Vec<usize>], horizon: usize) -> Vec<Vec<usize>> {
    let base = alphabet.len();
    let mut digits = vec![0; horizon];
    let mut rest = index;
    for d in digits.iter_mut().rev() {
        *d = rest % base;
        rest /= base;
    }
    digits.into_iter().map(|d| alphabet[d].clone()).collect()
}

fn sorted_alphabet(problem: &CftocProblem) -> Vec<Vec<usize>> {
    let mut alphabet = problem.input_alphabet.clone();
    alphabet.sort();
    alphabet.dedup();
    alphabet
}

fn evaluate(
    problem: &CftocProblem,
    system: &SwitchedSystem,
    x0: &[f64],
    index: usize,
    alphabet: &[Vec<usize>],
) -> Candidate {
    let sequence = decode(index, alphabet, problem.horizon);
    let mut cost = 0.0;
    let mut admissible = true;
    let mut x = x0.to_vec();
    for u in &sequence {
        cost += stage_cost(&x, u, &problem.q, &problem.r);
        let mode = system.mode_for_input(u).expect("validated alphabet");
        x = euler_advance(system, mode, &x, problem.dt, problem.substeps);
        let tol = problem.box_tolerance;
        if x.iter().zip(&problem.state_box).any(|(v, (lo, hi))| !(*v >= lo - tol && *v <= hi + tol)) {
            admissible = false;
        }
    }
    let terminal_distance = if problem.terminal_vertices.is_empty() || !admissible {
        if problem.terminal_vertices.is_empty() {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        terminal_membership(&x, &problem.terminal_vertices, 0.0).distance
    };
    match problem.terminal_mode {
        TerminalMode::Hard { epsilon } => admissible &= terminal_distance <= epsilon,
        TerminalMode::Soft { lambda } => cost += lambda * terminal_distance,
    }
    Candidate { index, sequence, cost: admissible.then_some(cost), terminal_distance }
}

/// Evaluates every input sequence, in lexicographic order.
pub fn cost_table(problem: &CftocProblem, system: &SwitchedSystem, x0: &[f64]) -> Result<Vec<Candidate>, MpcError> {
    problem.validate(system)?;
    if x0.len() != system.dim() {
        return Err(MpcError::InvalidProblem(format!("state has {} entries, expected {}", x0.len(), system.dim())));
    }
    let alphabet = sorted_alphabet(problem);
    let count = alphabet.len().checked_pow(problem.horizon as u32).filter(|&c| c <= problem.cap).ok_or_else(|| {
        MpcError::CapExceeded { count: format!("{}^{}", alphabet.len(), problem.horizon), cap: problem.cap }
    })?;
    Ok((0..count).into_par_iter().map(|i| evaluate(problem, system, x0, i, &alphabet)).collect())
}

fn better(a: &Candidate, b: &Candidate) -> Ordering {
    match (a.cost, b.cost) {
        (Some(x), Some(y)) => x.total_cmp(&y).then(a.index.cmp(&b.index)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.index.cmp(&b.index),
    }
}

/// Minimum-cost admissible sequence; ties go to the lexicographically
/// smallest sequence (earlier steps, then earlier components, first).
pub fn solve_cftoc(problem: &CftocProblem, system: &SwitchedSystem, x0: &[f64]) -> Result<CftocSolution, MpcError> {
    let table = cost_table(problem, system, x0)?;
    let evaluated = table.len();
    let best = table.into_par_iter().min_by(better).expect("alphabet is nonempty");
    let cost = best.cost.ok_or(MpcError::Infeasible)?;
    let predicted = predict(system, x0, &best.sequence, problem.dt, problem.substeps)?;
    Ok(CftocSolution {
        sequence: best.sequence,
        cost,
        feasible: true,
        terminal_distance: best.terminal_distance,
        predicted,
        candidates_evaluated: evaluated,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlStep {
    pub sample: usize,
    pub time: f64,
    pub measured_state: Vec<f64>,
    pub output: Vec<f64>,
    pub chosen_input: Vec<usize>,
    pub mode: usize,
    pub predicted_cost: f64,
    pub feasible: bool,
    pub terminal_distance: f64,
    pub candidates_evaluated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRun {
    pub scenario: String,
    pub input_names: Vec<String>,
    pub steps: Vec<ControlStep>,
    pub trajectory: Trajectory,
}

impl ControlRun {
    pub fn schedule(&self) -> Vec<Vec<usize>> {
        self.steps.iter().map(|s| s.chosen_input.clone()).collect()
    }

    /// One row per sample: state, applied input, predicted cost.
    pub fn to_csv(&self) -> String {
        let traj = &self.trajectory;
        let mut out = String::from("sample,t");
        for n in &traj.state_names {
            write!(out, ",{n}").unwrap();
        }
        for n in &self.input_names {
            write!(out, ",{n}").unwrap();
        }
        out.push_str(",mode,cost,feasible,terminal_distance,candidates\n");
        for (k, t) in traj.times.iter().enumerate() {
            write!(out, "{k},{}", csv_float(*t)).unwrap();
            for v in &traj.states[k] {
                write!(out, ",{}", csv_float(*v)).unwrap();
            }
            match self.steps.get(k) {
                Some(s) => {
                    for u in &s.chosen_input {
                        write!(out, ",{u}").unwrap();
                    }
                    writeln!(
                        out,
                        ",{},{},{},{},{}",
                        traj.mode_labels[s.mode],
                        csv_float(s.predicted_cost),
                        s.feasible,
                        csv_float(s.terminal_distance),
                        s.candidates_evaluated
                    )
                    .unwrap();
                }
                None => {
                    out.push_str(&",".repeat(self.input_names.len()));
                    writeln!(out, ",{},,,,", traj.mode_labels[traj.modes[k]]).unwrap();
                }
            }
        }
        out
    }
}

/// A run that stopped early, with everything recorded up to the failure.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("control run halted at sample {sample}: {error}")]
pub struct ControlHalted {
    pub sample: usize,
    pub error: MpcError,
    pub partial: Box<ControlRun>,
}

/// Receding-horizon loop: solve from the measured state, apply the first
/// input for one sample, advance the plant, repeat.
pub fn run_receding_horizon(
    problem: &CftocProblem,
    system: &SwitchedSystem,
    x0: &[f64],
    duration: f64,
    scenario: &str,
) -> Result<ControlRun, ControlHalted> {
    let mut run = ControlRun {
        scenario: scenario.to_owned(),
        input_names: system.inputs.iter().map(|c| c.name.clone()).collect(),
        steps: Vec::new(),
        trajectory: Trajectory::start(system, x0, system.initial_mode),
    };
    let halt =
        |run: ControlRun, sample: usize, error: MpcError| ControlHalted { sample, error, partial: Box::new(run) };
    let samples = match step_count(duration, problem.dt) {
        Ok(n) => n,
        Err(e) => return Err(halt(run, 0, e.into())),
    };
    let mut x = x0.to_vec();
    for k in 0..samples {
        let sol = match solve_cftoc(problem, system, &x) {
            Ok(s) => s,
            Err(e) => return Err(halt(run, k, e)),
        };
        let u = sol.sequence[0].clone();
        let mode = system.mode_for_input(&u).expect("validated alphabet");
        run.trajectory.modes[k] = mode;
        run.steps.push(ControlStep {
            sample: k,
            time: k as f64 * problem.dt,
            output: system.output_of(mode, &x),
            measured_state: x.clone(),
            chosen_input: u,
            mode,
            predicted_cost: sol.cost,
            feasible: sol.feasible,
            terminal_distance: sol.terminal_distance,
            candidates_evaluated: sol.candidates_evaluated,
        });
        let mut next = euler_advance(system, mode, &x, problem.dt, problem.substeps);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(halt(run, k + 1, MpcError::NonFinite { step: k + 1 }));
        }
        let mut fired = false;
        if problem.clamp_plant {
            (next, fired) = clamp_policy(&next, &problem.state_box);
        }
        run.trajectory.push(system, (k + 1) as f64 * problem.dt, next.clone(), mode, fired);
        x = next;
    }
    Ok(run)
}
