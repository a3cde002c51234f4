use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dcgf::builtins;
use dcgf::hybrid::{osteomyelitis_defaults, osteomyelitis_system};
use dcgf::mpc::{self, CftocProblem, TerminalMode, DAY, DEFAULT_CAP, DEFAULT_EPSILON, DEFAULT_LAMBDA};
use dcgf::parser::{diagnostics_to_json, parse_named, Diagnostic};
use dcgf::simulator::{integrate, Method, ModeSchedule, SimulationError};
use dcgf::stoichiometry::derive_ode;
use dcgf::{compile_model, CompiledModel, DcgfModel, SwitchedSystem};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "dcgf", version, about = "Compile, analyse, simulate and schedule therapies for D-CGF models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and validate a model; report diagnostics only.
    Check(CommonArgs),
    /// Therapy well-formedness report, ST-graph and mode graph.
    Analyze(CommonArgs),
    /// Emit the stoichiometric matrix, rate vector, ODEs or switched system.
    Compile {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value_t = Emit::Css)]
        emit: Emit,
    },
    /// Integrate the switched system under a mode schedule.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        time: TimeArgs,
        /// Constant mode: a label, `qN` (1-based) or an input vector `u:1,0`.
        #[arg(long, conflicts_with = "schedule")]
        mode: Option<String>,
        /// Piecewise schedule `t0:MODE;t1:MODE;...` starting at t = 0.
        #[arg(long)]
        schedule: Option<String>,
        #[arg(long, value_enum, default_value_t = MethodArg::Euler)]
        method: MethodArg,
        /// Clamp every state component to [0, 1] after each step.
        #[arg(long)]
        clamp: bool,
    },
    /// Receding-horizon therapy scheduling.
    Control {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        time: TimeArgs,
        /// SIR preset: 1, 2 or 3 (sets Q, R and the terminal segment).
        #[arg(long)]
        scenario: Option<u8>,
        #[arg(long)]
        horizon: Option<usize>,
        /// Euler sub-steps per sample, shared by predictor and plant.
        #[arg(long)]
        substeps: Option<usize>,
        /// `diag:a,b,...` or a JSON file holding a matrix.
        #[arg(long)]
        q: Option<String>,
        /// `diag:a,b,...` or a JSON file holding a matrix.
        #[arg(long)]
        r: Option<String>,
        /// Terminal vertices `1,0,0;0,0,1`.
        #[arg(long)]
        terminal: Option<String>,
        #[arg(long, value_enum)]
        terminal_mode: Option<TerminalArg>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        /// State box `LO:HI` for every state, or one `LO:HI` per state separated by `;`.
        #[arg(long = "box")]
        state_box: Option<String>,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
        /// Clamp the plant state to the state box after every sample.
        #[arg(long)]
        clamp: bool,
        /// Label recorded in the run output.
        #[arg(long)]
        label: Option<String>,
    },
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Model file, or `builtin:sir`, `builtin:sir-therapy`, `builtin:osteomyelitis`.
    model: String,
    /// Parameter override `name=value`; repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
    /// Directory for artifact files; stdout when absent.
    #[arg(long, env = "DCGF_OUT_DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args, Debug)]
struct TimeArgs {
    /// Duration in days (one day = 1/365 time units).
    #[arg(long, conflicts_with = "duration")]
    days: Option<f64>,
    /// Duration in model time units.
    #[arg(long)]
    duration: Option<f64>,
    /// Step size; accepts fractions such as `1/3650`.
    #[arg(long)]
    dt: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Dot,
    Text,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Emit {
    Matrix,
    Phi,
    Ode,
    Css,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Euler,
    Rk4,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TerminalArg {
    Soft,
    Hard,
}

/// Exit 1 for problems with the model, 2 for everything else.
enum Failure {
    Model(Vec<String>),
    Runtime(String),
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn runtime(msg: impl ToString) -> Failure {
    Failure::Runtime(msg.to_string())
}

fn usage(msg: impl ToString) -> Failure {
    Failure::Model(vec![format!("error: {}", msg.to_string())])
}

/// Collected outputs: `(file name, contents)`; the first is printed when
/// no output directory is given.
struct Artifacts {
    files: Vec<(String, String)>,
}

impl Artifacts {
    fn new() -> Self {
        Artifacts { files: Vec::new() }
    }

    fn add(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    fn emit(&self, out: Option<&Path>, command: &str, argv: &[String]) -> Result<(), Failure> {
        match out {
            None => {
                if let Some((_, contents)) = self.files.first() {
                    print!("{contents}");
                }
            }
            Some(dir) => {
                fs::create_dir_all(dir)?;
                for (name, contents) in &self.files {
                    fs::write(dir.join(name), contents)?;
                }
                let meta = json!({
                    "command": command,
                    "argv": argv,
                    "version": env!("CARGO_PKG_VERSION"),
                    "artifacts": self.files.iter().map(|(n, _)| n).collect::<Vec<_>>(),
                });
                fs::write(dir.join("meta.json"), pretty(&meta))?;
            }
        }
        Ok(())
    }
}

fn pretty(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable");
    s.push('\n');
    s
}

enum Source {
    Model(Box<DcgfModel>),
    Osteomyelitis,
}

fn load(common: &CommonArgs) -> Result<Source, Failure> {
    let (text, file) = match common.model.strip_prefix("builtin:") {
        Some("osteomyelitis") => return Ok(Source::Osteomyelitis),
        Some(name) => {
            let src = builtins::builtin_source(name).ok_or_else(|| {
                usage(format!("unknown builtin `{name}` (known: {})", builtins::BUILTIN_NAMES.join(", ")))
            })?;
            (src.to_owned(), format!("builtin:{name}"))
        }
        None => (
            fs::read_to_string(&common.model).map_err(|e| runtime(format!("cannot read {}: {e}", common.model)))?,
            common.model.clone(),
        ),
    };
    let parsed = parse_named(&text, Some(&file)).map_err(|diags| diagnostics_failure(&diags))?;
    for w in &parsed.warnings {
        eprintln!("{w}");
    }
    let mut model = parsed.model;
    for (name, value) in overrides(&common.params)? {
        match model.parameters.get_mut(&name) {
            Some(slot) => *slot = value,
            None => return Err(usage(format!("`{name}` is not a declared parameter"))),
        }
    }
    Ok(Source::Model(Box::new(model)))
}

fn overrides(params: &[String]) -> Result<Vec<(String, f64)>, Failure> {
    params
        .iter()
        .map(|p| {
            let (k, v) = p.split_once('=').ok_or_else(|| usage(format!("override `{p}` is not NAME=VALUE")))?;
            let v: f64 = v.trim().parse().map_err(|_| usage(format!("override `{p}` has a non-numeric value")))?;
            Ok((k.trim().to_owned(), v))
        })
        .collect()
}

fn diagnostics_failure(diags: &[Diagnostic]) -> Failure {
    Failure::Model(diags.iter().map(ToString::to_string).collect())
}

fn compile(model: &DcgfModel) -> Result<CompiledModel, Failure> {
    compile_model(model).map_err(|e| diagnostics_failure(&e.diagnostics()))
}

fn system_for(common: &CommonArgs) -> Result<SwitchedSystem, Failure> {
    match load(common)? {
        Source::Model(model) => Ok(compile(&model)?.system),
        Source::Osteomyelitis => {
            let mut params = osteomyelitis_defaults();
            for (name, value) in overrides(&common.params)? {
                match params.get_mut(&name) {
                    Some(slot) => *slot = value,
                    None => return Err(usage(format!("`{name}` is not an osteomyelitis parameter"))),
                }
            }
            osteomyelitis_system(&params).map_err(|e| Failure::Model(vec![format!("error: {e}")]))
        }
    }
}

fn textual_model(common: &CommonArgs) -> Result<DcgfModel, Failure> {
    match load(common)? {
        Source::Model(m) => Ok(*m),
        Source::Osteomyelitis => {
            Err(usage("builtin:osteomyelitis has no D-CGF form; use compile --emit css, simulate or control"))
        }
    }
}

fn parse_number(s: &str) -> Result<f64, Failure> {
    let value = match s.split_once('/') {
        Some((a, b)) => a.trim().parse::<f64>().ok().zip(b.trim().parse::<f64>().ok()).map(|(a, b)| a / b),
        None => s.trim().parse().ok(),
    };
    value.filter(|v| v.is_finite()).ok_or_else(|| usage(format!("`{s}` is not a number")))
}

fn duration(time: &TimeArgs) -> f64 {
    match (time.days, time.duration) {
        (Some(d), _) => d * DAY,
        (None, Some(t)) => t,
        (None, None) => 15.0 * DAY,
    }
}

fn parse_mode(system: &SwitchedSystem, spec: &str) -> Result<usize, Failure> {
    let spec = spec.trim();
    if let Some(q) = system.mode_index(spec) {
        return Ok(q);
    }
    if let Some(u) = spec.strip_prefix("u:") {
        let input: Vec<usize> = u
            .split(',')
            .map(|v| v.trim().parse().map_err(|_| usage(format!("bad input vector `{spec}`"))))
            .collect::<Result<_, _>>()?;
        return system.mode_for_input(&input).ok_or_else(|| usage(format!("input `{spec}` selects no mode")));
    }
    if let Some(n) = spec.strip_prefix('q').and_then(|n| n.parse::<usize>().ok()) {
        if (1..=system.mode_count()).contains(&n) {
            return Ok(n - 1);
        }
    }
    Err(usage(format!("unknown mode `{spec}` (modes: {})", system.mode_labels.join(", "))))
}

fn parse_matrix(spec: &str) -> Result<Vec<Vec<f64>>, Failure> {
    if let Some(entries) = spec.strip_prefix("diag:") {
        let d: Vec<f64> = entries.split(',').map(parse_number).collect::<Result<_, _>>()?;
        return Ok(mpc::diag(&d));
    }
    let text = fs::read_to_string(spec).map_err(|e| runtime(format!("cannot read {spec}: {e}")))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{spec}: expected a JSON matrix: {e}")))
}

fn parse_vertices(spec: &str) -> Result<Vec<Vec<f64>>, Failure> {
    spec.split(';').filter(|v| !v.trim().is_empty()).map(|v| v.split(',').map(parse_number).collect()).collect()
}

fn parse_box(spec: &str, dim: usize) -> Result<Vec<(f64, f64)>, Failure> {
    let bound = |s: &str| match s.trim() {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        other => parse_number(other),
    };
    let intervals = spec
        .split(';')
        .map(|iv| {
            let (lo, hi) = iv.split_once(':').ok_or_else(|| usage(format!("interval `{iv}` is not LO:HI")))?;
            Ok((bound(lo)?, bound(hi)?))
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    match intervals.len() {
        1 => Ok(vec![intervals[0]; dim]),
        n if n == dim => Ok(intervals),
        n => Err(usage(format!("state box has {n} intervals, model has {dim} states"))),
    }
}

fn run(cli: Cli, argv: &[String]) -> Result<(), Failure> {
    let mut artifacts = Artifacts::new();
    let (command, out) = match &cli.command {
        Command::Check(c) => ("check", c.out.clone()),
        Command::Analyze(c) => ("analyze", c.out.clone()),
        Command::Compile { common, .. } => ("compile", common.out.clone()),
        Command::Simulate { common, .. } => ("simulate", common.out.clone()),
        Command::Control { common, .. } => ("control", common.out.clone()),
    };
    match cli.command {
        Command::Check(common) => {
            let json = common.format == Some(Format::Json);
            let result = if common.model == "builtin:osteomyelitis" {
                system_for(&common).map(|_| ())
            } else {
                textual_model(&common).and_then(|m| compile(&m).map(|_| ()))
            };
            match (result, json) {
                (Ok(()), true) => artifacts.add("diagnostics.json", diagnostics_to_json(&[]) + "\n"),
                (Ok(()), false) => artifacts.add("check.txt", format!("{}: ok\n", common.model)),
                (Err(f), _) => return Err(f),
            }
        }
        Command::Analyze(common) => {
            let model = textual_model(&common)?;
            let c = compile(&model)?;
            let a = &c.analysis;
            let mut text = a.conditions.to_text();
            text.push_str(&format!("switching therapies: {}\n", a.switching_therapies.len()));
            for st in &a.switching_therapies {
                text.push_str(&format!("  {{{}}} initially {}\n", st.terms.join(","), st.initially_active));
            }
            for d in &a.definition_divergences {
                text.push_str(&format!("  warning: {d}\n"));
            }
            text.push_str(&format!("modes: {}\n", a.mode_graph.modes.len()));
            for q in 0..a.mode_graph.modes.len() {
                let initial = if q == a.mode_graph.initial { " (initial)" } else { "" };
                text.push_str(&format!("  q{} = ({}){initial}\n", q + 1, a.mode_graph.mode_label(q)));
            }
            let json = pretty(a);
            let dots = a.st_graph.to_dot() + &a.mode_graph.to_dot();
            match common.format {
                Some(Format::Json) => artifacts.add("analysis.json", json.clone()),
                Some(Format::Dot) => artifacts.add("graphs.dot", dots),
                _ => artifacts.add("report.txt", text.clone()),
            }
            if common.out.is_some() {
                artifacts.files.clear();
                artifacts.add("report.txt", text);
                artifacts.add("analysis.json", json);
                artifacts.add("st_graph.dot", a.st_graph.to_dot());
                artifacts.add("mode_graph.dot", a.mode_graph.to_dot());
            }
        }
        Command::Compile { common, emit } => {
            let json = common.format == Some(Format::Json);
            if let Source::Osteomyelitis = load(&common)? {
                if !matches!(emit, Emit::Css) {
                    return Err(usage("builtin:osteomyelitis only supports --emit css"));
                }
            }
            match emit {
                Emit::Css => {
                    let sys = system_for(&common)?;
                    if common.format == Some(Format::Text) {
                        artifacts.add("css.txt", sys.to_text());
                    } else {
                        artifacts.add("css.json", pretty(&sys.to_json()));
                    }
                }
                Emit::Matrix => {
                    let c = compile(&textual_model(&common)?)?;
                    if json {
                        artifacts.add("matrix.json", pretty(&c.matrix));
                    } else {
                        artifacts.add("matrix.txt", c.matrix.to_text());
                    }
                }
                Emit::Phi => {
                    let c = compile(&textual_model(&common)?)?;
                    if json {
                        artifacts.add("phi.json", pretty(&c.phi));
                    } else {
                        let lines: String = c.phi.iter().map(|p| format!("{} = {p}\n", p.label)).collect();
                        artifacts.add("phi.txt", lines);
                    }
                }
                Emit::Ode => {
                    let c = compile(&textual_model(&common)?)?;
                    // therapy-gated rates only make sense per mode
                    match derive_ode(&c.matrix, &c.phi, &c.system.parameters) {
                        Ok(ode) if json => artifacts.add("ode.json", pretty(&ode)),
                        Ok(ode) => artifacts.add("ode.txt", ode.to_text()),
                        Err(_) if json => artifacts.add("ode.json", pretty(&c.system.to_json())),
                        Err(_) => artifacts.add("ode.txt", c.system.to_text()),
                    }
                }
            }
        }
        Command::Simulate { common, time, mode, schedule, method, clamp } => {
            let sys = system_for(&common)?;
            let dt = time.dt.as_deref().map(parse_number).transpose()?.unwrap_or(DAY);
            let total = duration(&time);
            let schedule = match (mode, schedule) {
                (Some(m), _) => ModeSchedule::constant(parse_mode(&sys, &m)?, total),
                (None, Some(s)) => {
                    let segments = s
                        .split(';')
                        .map(|seg| {
                            let (t, m) = seg
                                .split_once(':')
                                .ok_or_else(|| usage(format!("segment `{seg}` is not TIME:MODE")))?;
                            Ok((parse_number(t)?, parse_mode(&sys, m)?))
                        })
                        .collect::<Result<Vec<_>, Failure>>()?;
                    ModeSchedule::new(segments, total).map_err(usage)?
                }
                (None, None) => ModeSchedule::constant(sys.initial_mode, total),
            };
            let method = match method {
                MethodArg::Euler => Method::Euler,
                MethodArg::Rk4 => Method::Rk4,
            };
            let bounds = vec![(0.0, 1.0); sys.dim()];
            let result = integrate(&sys, &schedule, &sys.initial_state, dt, method, clamp.then_some(bounds.as_slice()));
            let (traj, failure) = match result {
                Ok(t) => (t, None),
                Err(SimulationError::NonFinite { step, time, partial }) => (
                    *partial,
                    Some(runtime(format!("non-finite state at step {step} (t = {time}); partial trajectory written"))),
                ),
                Err(e) => return Err(usage(e)),
            };
            if common.format == Some(Format::Json) {
                artifacts.add("trajectory.json", pretty(&traj));
            } else {
                artifacts.add("trajectory.csv", traj.to_csv());
            }
            artifacts.emit(out.as_deref(), command, argv)?;
            return failure.map_or(Ok(()), Err);
        }
        Command::Control {
            common,
            time,
            scenario,
            horizon,
            substeps,
            q,
            r,
            terminal,
            terminal_mode,
            lambda,
            epsilon,
            state_box,
            cap,
            clamp,
            label,
        } => {
            let sys = system_for(&common)?;
            let mut problem = match scenario {
                Some(s) => CftocProblem::sir_scenario(s, &sys).ok_or_else(|| usage(format!("unknown scenario {s}")))?,
                None => CftocProblem::for_system(&sys),
            };
            if scenario.is_some() && sys.dim() != 3 {
                return Err(usage("scenario presets need a three-state SIR system"));
            }
            if let Some(h) = horizon {
                problem.horizon = h;
            }
            if let Some(dt) = time.dt.as_deref() {
                problem.dt = parse_number(dt)?;
            }
            if let Some(n) = substeps {
                problem.substeps = n;
            } else if scenario.is_none() {
                problem.substeps = 10;
            }
            if let Some(q) = q {
                problem.q = parse_matrix(&q)?;
            }
            if let Some(r) = r {
                problem.r = parse_matrix(&r)?;
            }
            if let Some(t) = terminal {
                problem.terminal_vertices = parse_vertices(&t)?;
            }
            problem.terminal_mode = match terminal_mode {
                Some(TerminalArg::Hard) => TerminalMode::Hard { epsilon: epsilon.unwrap_or(DEFAULT_EPSILON) },
                _ => TerminalMode::Soft { lambda: lambda.unwrap_or(DEFAULT_LAMBDA) },
            };
            if let Some(b) = state_box {
                problem.state_box = parse_box(&b, sys.dim())?;
            }
            problem.cap = cap;
            problem.clamp_plant = clamp;
            let label =
                label.or_else(|| scenario.map(|s| format!("scenario {s}"))).unwrap_or_else(|| "custom".to_owned());
            let (run, failure) =
                match mpc::run_receding_horizon(&problem, &sys, &sys.initial_state, duration(&time), &label) {
                    Ok(run) => (run, None),
                    Err(halt) => {
                        let f = match halt.error {
                            mpc::MpcError::InvalidProblem(_) | mpc::MpcError::Simulation(_) => usage(&halt),
                            _ => runtime(&halt),
                        };
                        (*halt.partial, Some(f))
                    }
                };
            let summary = json!({
                "scenario": run.scenario,
                "problem": problem,
                "inputs": run.input_names,
                "schedule": run.schedule(),
                "steps": run.steps,
                "halted": failure.as_ref().map(|f| match f { Failure::Runtime(m) => m.clone(), Failure::Model(m) => m.join("; ") }),
            });
            if common.format == Some(Format::Json) {
                artifacts.add("control.json", pretty(&summary));
                artifacts.add("control.csv", run.to_csv());
            } else {
                artifacts.add("control.csv", run.to_csv());
                artifacts.add("control.json", pretty(&summary));
            }
            artifacts.emit(out.as_deref(), command, argv)?;
            return failure.map_or(Ok(()), Err);
        }
    }
    artifacts.emit(out.as_deref(), command, argv)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match run(cli, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Model(lines)) => {
            for l in lines {
                eprintln!("{l}");
            }
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
