//! Fixed-step integration of a switched system under a mode schedule.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hybrid::SwitchedSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Euler,
    Rk4,
}

/// Piecewise-constant mode signal: `(start time, mode)` segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSchedule {
    pub segments: Vec<(f64, usize)>,
    pub duration: f64,
}

impl ModeSchedule {
    pub fn constant(mode: usize, duration: f64) -> Self {
        ModeSchedule { segments: vec![(0.0, mode)], duration }
    }

    pub fn new(segments: Vec<(f64, usize)>, duration: f64) -> Result<Self, SimulationError> {
        match segments.first() {
            Some(&(0.0, _)) => {}
            Some(&(t0, _)) => return Err(SimulationError::ScheduleGap { from: 0.0, to: t0 }),
            None => return Err(SimulationError::ScheduleGap { from: 0.0, to: duration }),
        }
        if segments.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(SimulationError::UnorderedSchedule);
        }
        Ok(ModeSchedule { segments, duration })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub state_names: Vec<String>,
    pub output_names: Vec<String>,
    pub mode_labels: Vec<String>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub modes: Vec<usize>,
    pub outputs: Vec<Vec<f64>>,
    /// Whether clamping changed the state at each sample.
    pub clamped: Vec<bool>,
}

impl Trajectory {
    pub(crate) fn start(system: &SwitchedSystem, x0: &[f64], mode: usize) -> Self {
        Trajectory {
            state_names: system.state_names.clone(),
            output_names: system.output_names(),
            mode_labels: system.mode_labels.clone(),
            times: vec![0.0],
            states: vec![x0.to_vec()],
            modes: vec![mode],
            outputs: vec![system.output_of(mode, x0)],
            clamped: vec![false],
        }
    }

    pub(crate) fn push(&mut self, system: &SwitchedSystem, t: f64, x: Vec<f64>, mode: usize, clamped: bool) {
        self.times.push(t);
        self.outputs.push(system.output_of(mode, &x));
        self.states.push(x);
        self.modes.push(mode);
        self.clamped.push(clamped);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has the initial sample")
    }

    /// CSV with header `t,<states>,mode,<outputs>`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push('t');
        for n in &self.state_names {
            write!(out, ",{n}").unwrap();
        }
        out.push_str(",mode");
        for n in &self.output_names {
            write!(out, ",{n}").unwrap();
        }
        out.push('\n');
        for k in 0..self.len() {
            out.push_str(&csv_float(self.times[k]));
            for v in &self.states[k] {
                write!(out, ",{}", csv_float(*v)).unwrap();
            }
            write!(out, ",{}", self.mode_labels[self.modes[k]]).unwrap();
            for v in &self.outputs[k] {
                write!(out, ",{}", csv_float(*v)).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Shortest round-trip form, switching to exponent notation at the extremes.
pub fn csv_float(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-6..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("duration {duration} is not a multiple of dt = {dt}")]
    NotMultiple { duration: f64, dt: f64 },
    #[error("schedule does not cover [{from}, {to})")]
    ScheduleGap { from: f64, to: f64 },
    #[error("schedule segment start times must be strictly increasing")]
    UnorderedSchedule,
    #[error("mode switch at t = {time} does not fall on the integration grid")]
    OffGrid { time: f64 },
    #[error("mode {0} is not a mode of the system")]
    UnknownMode(usize),
    #[error("initial state has {found} entries, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("non-finite state at step {step} (t = {time})")]
    NonFinite { step: usize, time: f64, partial: Box<Trajectory> },
}

/// Number of steps of size `dt` in `duration`, if it is a whole number.
pub fn step_count(duration: f64, dt: f64) -> Result<usize, SimulationError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimulationError::InvalidStep(dt));
    }
    let n = (duration / dt).round();
    if duration < 0.0 || (n * dt - duration).abs() > 1e-9 * duration.abs().max(1.0) {
        return Err(SimulationError::NotMultiple { duration, dt });
    }
    Ok(n as usize)
}

pub fn euler_step(system: &SwitchedSystem, mode: usize, x: &[f64], h: f64, scratch: &mut [f64]) -> Vec<f64> {
    system.rhs_into(mode, x, scratch);
    x.iter().zip(scratch.iter()).map(|(xi, fi)| xi + h * fi).collect()
}

pub fn rk4_step(system: &SwitchedSystem, mode: usize, x: &[f64], h: f64) -> Vec<f64> {
    let n = x.len();
    let k1 = system.rhs(mode, x);
    let x2: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * h * k1[i]).collect();
    let k2 = system.rhs(mode, &x2);
    let x3: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * h * k2[i]).collect();
    let k3 = system.rhs(mode, &x3);
    let x4: Vec<f64> = (0..n).map(|i| x[i] + h * k3[i]).collect();
    let k4 = system.rhs(mode, &x4);
    (0..n).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
}

/// Advances `x` by `substeps` Euler steps of size `dt / substeps` in `mode`.
pub fn euler_advance(system: &SwitchedSystem, mode: usize, x: &[f64], dt: f64, substeps: usize) -> Vec<f64> {
    let h = dt / substeps as f64;
    let mut scratch = vec![0.0; x.len()];
    let mut x = x.to_vec();
    for _ in 0..substeps {
        x = euler_step(system, mode, &x, h, &mut scratch);
    }
    x
}

/// Componentwise clamp; returns the clamped state and whether it changed.
pub fn clamp_policy(state: &[f64], bounds: &[(f64, f64)]) -> (Vec<f64>, bool) {
    let mut fired = false;
    let out = state
        .iter()
        .zip(bounds)
        .map(|(&v, &(lo, hi))| {
            let c = v.max(lo).min(hi);
            if c != v {
                fired = true;
            }
            c
        })
        .collect();
    (out, fired)
}

/// Integrates `system` from `x0` over the schedule with step `dt`.
///
/// Switches take effect at the grid point equal to the segment start; a
/// start that is not a grid point is rejected. When `clamp` is set the
/// state is clamped after every step.
pub fn integrate(
    system: &SwitchedSystem,
    schedule: &ModeSchedule,
    x0: &[f64],
    dt: f64,
    method: Method,
    clamp: Option<&[(f64, f64)]>,
) -> Result<Trajectory, SimulationError> {
    if x0.len() != system.dim() {
        return Err(SimulationError::Dimension { expected: system.dim(), found: x0.len() });
    }
    let steps = step_count(schedule.duration, dt)?;
    let mut switches = Vec::with_capacity(schedule.segments.len());
    for &(start, mode) in &schedule.segments {
        if mode >= system.mode_count() {
            return Err(SimulationError::UnknownMode(mode));
        }
        let k = start / dt;
        if (k - k.round()).abs() > 1e-6 {
            return Err(SimulationError::OffGrid { time: start });
        }
        switches.push((k.round() as usize, mode));
    }
    match switches.first() {
        Some(&(0, _)) => {}
        _ => {
            return Err(SimulationError::ScheduleGap {
                from: 0.0,
                to: schedule.segments.first().map_or(schedule.duration, |s| s.0),
            })
        }
    }
    let mode_at = |k: usize| switches.iter().rev().find(|(s, _)| *s <= k).map(|&(_, m)| m).unwrap_or(switches[0].1);

    let mut traj = Trajectory::start(system, x0, mode_at(0));
    let mut scratch = vec![0.0; system.dim()];
    let mut x = x0.to_vec();
    for k in 0..steps {
        let mode = mode_at(k);
        let mut next = match method {
            Method::Euler => euler_step(system, mode, &x, dt, &mut scratch),
            Method::Rk4 => rk4_step(system, mode, &x, dt),
        };
        let t = (k + 1) as f64 * dt;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(SimulationError::NonFinite { step: k + 1, time: t, partial: Box::new(traj) });
        }
        let mut fired = false;
        if let Some(bounds) = clamp {
            (next, fired) = clamp_policy(&next, bounds);
        }
        traj.push(system, t, next.clone(), mode_at(k + 1), fired);
        x = next;
    }
    Ok(traj)
}
