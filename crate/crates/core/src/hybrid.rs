//! Controlled switched-system semantics: per-mode vector fields
//! `f_q = M|S · φ_q` and output maps, plus the built-in osteomyelitis plant.
//!
//! Therapy-only switch actions are left out of the continuous dynamics:
//! modes are commanded by a controller and change instantaneously, so the
//! autonomous switching rates in the model are documentation only.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::ast::DcgfModel;
use crate::error::SystemError;
use crate::stoichiometry::{format_sum, CompiledRhs, Monomial, RateExpression, StoichiometricMatrix};
use crate::therapy::ModeGraph;

/// A rate-vector entry specialised to one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "monomials", rename_all = "lowercase")]
pub enum ModeRate {
    /// Active therapy factors replaced by 1.
    Active(Vec<Monomial>),
    /// Mentions a therapy term outside the mode.
    Zeroed,
    /// Pure therapy switch with no species effect.
    Excluded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRateVector {
    pub mode: String,
    pub labels: Vec<String>,
    pub entries: Vec<ModeRate>,
}

impl ModeRateVector {
    pub fn entry(&self, label: &str) -> Option<&ModeRate> {
        self.labels.iter().position(|l| l == label).map(|i| &self.entries[i])
    }
}

/// Specialises `phi` to the set of active therapy terms `active`.
pub fn specialize_rate_vector(
    phi: &[RateExpression],
    matrix: &StoichiometricMatrix,
    mode_label: &str,
    active: &[&str],
) -> ModeRateVector {
    let therapies = matrix.therapy_names();
    let is_therapy = |v: &str| therapies.iter().any(|t| t == v);
    let entries = phi
        .iter()
        .enumerate()
        .map(|(j, entry)| {
            if matrix.is_species_neutral(j) && entry.factors().iter().any(|f| is_therapy(f)) {
                return ModeRate::Excluded;
            }
            if entry.factors().iter().any(|f| is_therapy(f) && !active.contains(f)) {
                return ModeRate::Zeroed;
            }
            let monomials = entry
                .monomials()
                .into_iter()
                .map(|mut m| {
                    m.vars.retain(|v| !is_therapy(v));
                    m
                })
                .collect();
            ModeRate::Active(monomials)
        })
        .collect();
    ModeRateVector { mode: mode_label.to_owned(), labels: phi.iter().map(|p| p.label.clone()).collect(), entries }
}

/// One discrete input: a switching therapy and its terms, in the order
/// that defines the input value (term index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputComponent {
    pub name: String,
    pub terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OutputMap {
    Identity,
    /// `y = rows · x + offset`
    Affine {
        names: Vec<String>,
        rows: Vec<Vec<f64>>,
        offset: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsteomyelitisParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub g11: f64,
    pub g12: f64,
    pub g21: f64,
    pub g22: f64,
    pub f11: f64,
    pub f12: f64,
    pub f21: f64,
    pub f22: f64,
    pub s: f64,
    pub gamma_b: f64,
    pub k_i: f64,
    pub k1: f64,
    pub k2: f64,
}

impl OsteomyelitisParams {
    /// `[Oc, Ob, B]` derivative under antibiotic `t1` and anti-inflammatory `t2`.
    pub fn rhs(&self, t1: f64, t2: f64, x: &[f64], out: &mut [f64]) {
        let (oc, ob, b) = (x[0], x[1], x[2]);
        let load = b / self.s;
        out[0] = self.alpha1
            * oc.powf(self.g11 * (1.0 + self.f11 * load))
            * ob.powf(self.g21 * (1.0 + t2 * self.k_i - self.f21 * load))
            - self.beta1 * oc;
        out[1] = self.alpha2 * oc.powf(self.g12 / (1.0 + self.f12 * load)) * ob.powf(self.g22 - self.f22 * load)
            - self.beta2 * ob;
        out[2] = (1.0 - t1) * self.gamma_b * b * (self.s / b).ln();
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Dynamics {
    MassAction { rhs: Vec<Vec<Vec<Monomial>>>, compiled: Vec<CompiledRhs> },
    Osteomyelitis(OsteomyelitisParams),
}

/// `ẋ = f_q(x)`, `y = g_q(x)` with an externally commanded mode `q`.
///
/// Modes are indexed in mixed radix over the inputs, first input varying
/// fastest; a mode's input vector holds each switching therapy's term index.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedSystem {
    pub state_names: Vec<String>,
    pub inputs: Vec<InputComponent>,
    pub mode_labels: Vec<String>,
    pub output: OutputMap,
    pub parameters: IndexMap<String, f64>,
    pub initial_state: Vec<f64>,
    pub initial_mode: usize,
    dynamics: Dynamics,
}

impl SwitchedSystem {
    pub fn dim(&self) -> usize {
        self.state_names.len()
    }

    pub fn mode_count(&self) -> usize {
        self.mode_labels.len()
    }

    pub fn mode_index(&self, label: &str) -> Option<usize> {
        self.mode_labels.iter().position(|l| l == label)
    }

    /// True when every input has exactly two values.
    pub fn is_binary(&self) -> bool {
        self.inputs.iter().all(|c| c.terms.len() == 2)
    }

    pub fn mode_for_input(&self, input: &[usize]) -> Option<usize> {
        if input.len() != self.inputs.len() {
            return None;
        }
        let mut index = 0;
        let mut stride = 1;
        for (&u, c) in input.iter().zip(&self.inputs) {
            if u >= c.terms.len() {
                return None;
            }
            index += u * stride;
            stride *= c.terms.len();
        }
        Some(index)
    }

    pub fn input_for_mode(&self, mut mode: usize) -> Vec<usize> {
        self.inputs
            .iter()
            .map(|c| {
                let digit = mode % c.terms.len();
                mode /= c.terms.len();
                digit
            })
            .collect()
    }

    /// Every input vector, in mode order.
    pub fn input_alphabet(&self) -> Vec<Vec<usize>> {
        (0..self.mode_count()).map(|q| self.input_for_mode(q)).collect()
    }

    pub fn rhs_into(&self, mode: usize, x: &[f64], out: &mut [f64]) {
        match &self.dynamics {
            Dynamics::MassAction { compiled, .. } => compiled[mode].eval(x, out),
            Dynamics::Osteomyelitis(p) => {
                let u = self.input_for_mode(mode);
                p.rhs(u[0] as f64, u[1] as f64, x, out)
            }
        }
    }

    pub fn rhs(&self, mode: usize, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.rhs_into(mode, x, &mut out);
        out
    }

    /// Symbolic right-hand side of a mode, for mass-action systems.
    pub fn mode_monomials(&self, mode: usize) -> Option<&[Vec<Monomial>]> {
        match &self.dynamics {
            Dynamics::MassAction { rhs, .. } => rhs.get(mode).map(Vec::as_slice),
            Dynamics::Osteomyelitis(_) => None,
        }
    }

    pub fn osteomyelitis_params(&self) -> Option<&OsteomyelitisParams> {
        match &self.dynamics {
            Dynamics::Osteomyelitis(p) => Some(p),
            Dynamics::MassAction { .. } => None,
        }
    }

    pub fn output_names(&self) -> Vec<String> {
        match &self.output {
            OutputMap::Identity => self.state_names.iter().map(|s| format!("y_{s}")).collect(),
            OutputMap::Affine { names, .. } => names.clone(),
        }
    }

    pub fn output_of(&self, _mode: usize, x: &[f64]) -> Vec<f64> {
        match &self.output {
            OutputMap::Identity => x.to_vec(),
            OutputMap::Affine { rows, offset, .. } => {
                rows.iter().zip(offset).map(|(row, c)| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + c).collect()
            }
        }
    }

    /// Human-readable per-mode equations.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for q in 0..self.mode_count() {
            out.push_str(&format!("q{} = ({})\n", q + 1, self.mode_labels[q]));
            match self.mode_monomials(q) {
                Some(rhs) => {
                    for (x, terms) in self.state_names.iter().zip(rhs) {
                        out.push_str(&format!("  d{x}/dt = {}\n", format_sum(terms)));
                    }
                }
                None => {
                    let u = self.input_for_mode(q);
                    out.push_str(&format!(
                        "  dOc/dt = alpha1*Oc^(g11*(1+f11*B/s))*Ob^(g21*(1+{}*k_i-f21*B/s)) - beta1*Oc\n",
                        u[1]
                    ));
                    out.push_str("  dOb/dt = alpha2*Oc^(g12/(1+f12*B/s))*Ob^(g22-f22*B/s) - beta2*Ob\n");
                    out.push_str(&format!("  dB/dt = {}*gamma_B*B*log(s/B)\n", 1 - u[0]));
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let modes: Vec<serde_json::Value> = (0..self.mode_count())
            .map(|q| {
                let rhs = self.mode_monomials(q).map(|rhs| {
                    self.state_names
                        .iter()
                        .zip(rhs)
                        .map(|(x, terms)| (x.clone(), serde_json::to_value(terms).expect("monomials")))
                        .collect::<serde_json::Map<_, _>>()
                });
                serde_json::json!({
                    "index": q,
                    "label": self.mode_labels[q],
                    "input": self.input_for_mode(q),
                    "rhs": rhs,
                })
            })
            .collect();
        serde_json::json!({
            "state": self.state_names,
            "inputs": self.inputs,
            "modes": modes,
            "output": self.output,
            "output_names": self.output_names(),
            "initial_state": self.initial_state,
            "initial_mode": self.mode_labels[self.initial_mode],
            "parameters": self.parameters,
        })
    }
}

fn input_name(terms: &[String], index: usize) -> String {
    let first = &terms[0];
    let mut len = first.len();
    for t in &terms[1..] {
        len = len.min(first.bytes().zip(t.bytes()).take_while(|(a, b)| a == b).count());
    }
    let mut prefix = &first[..len];
    if let Some(cut) = prefix.rfind(['_', '-']) {
        prefix = &prefix[..cut];
    }
    if prefix.is_empty() || terms.len() == 1 {
        format!("u{}", index + 1)
    } else {
        prefix.to_owned()
    }
}

/// Builds `f_q = M|S · φ_q` for every mode of the mode graph.
pub fn build_switched_system(
    matrix: &StoichiometricMatrix,
    phi: &[RateExpression],
    mode_graph: &ModeGraph,
    model: &DcgfModel,
) -> Result<SwitchedSystem, SystemError> {
    let state_names = matrix.species_names().to_vec();
    let mut rhs_all = Vec::with_capacity(mode_graph.modes.len());
    let mut compiled = Vec::with_capacity(mode_graph.modes.len());
    let mut labels = Vec::with_capacity(mode_graph.modes.len());
    for q in 0..mode_graph.modes.len() {
        let label = mode_graph.mode_label(q);
        let specialised = specialize_rate_vector(phi, matrix, &label, &mode_graph.mode_terms(q));
        let rhs: Vec<Vec<Monomial>> = matrix
            .species_rows()
            .iter()
            .map(|row| {
                specialised
                    .entries
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| row[*j] != 0)
                    .filter_map(|(j, e)| match e {
                        ModeRate::Active(ms) => Some(ms.iter().map(move |m| m.scaled(row[j] as f64))),
                        _ => None,
                    })
                    .flatten()
                    .collect()
            })
            .collect();
        compiled.push(CompiledRhs::compile(&rhs, &state_names, &model.parameters)?);
        rhs_all.push(rhs);
        labels.push(label);
    }
    let inputs = mode_graph
        .components
        .iter()
        .enumerate()
        .map(|(i, terms)| InputComponent { name: input_name(terms, i), terms: terms.clone() })
        .collect();
    Ok(SwitchedSystem {
        initial_state: state_names.iter().map(|s| model.initial_population(s)).collect(),
        state_names,
        inputs,
        mode_labels: labels,
        output: OutputMap::Identity,
        parameters: model.parameters.clone(),
        initial_mode: mode_graph.initial,
        dynamics: Dynamics::MassAction { rhs: rhs_all, compiled },
    })
}

pub const OSTEOMYELITIS_PARAMETERS: [&str; 17] = [
    "alpha1", "alpha2", "beta1", "beta2", "g11", "g12", "g21", "g22", "f11", "f12", "f21", "f22", "s", "gamma_B",
    "k_i", "k1", "k2",
];

/// Illustrative defaults (bone-remodelling rates per day, bacterial load
/// relative to carrying capacity `s`) plus initial state `Oc0, Ob0, B0`.
pub fn osteomyelitis_defaults() -> IndexMap<String, f64> {
    [
        ("alpha1", 3.0),
        ("alpha2", 4.0),
        ("beta1", 0.2),
        ("beta2", 0.02),
        ("g11", 0.5),
        ("g12", 1.0),
        ("g21", -0.5),
        ("g22", 0.0),
        ("f11", 0.005),
        ("f12", 0.005),
        ("f21", -0.005),
        ("f22", 0.2),
        ("s", 100.0),
        ("gamma_B", 0.005),
        ("k_i", 0.1),
        ("k1", 0.24),
        ("k2", 0.0017),
        ("Oc0", 11.16),
        ("Ob0", 231.72),
        ("B0", 1.0),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v))
    .collect()
}

/// The three-state, four-mode osteomyelitis plant with inputs
/// `T1` (antibiotic) and `T2` (anti-inflammatory).
pub fn osteomyelitis_system(params: &IndexMap<String, f64>) -> Result<SwitchedSystem, SystemError> {
    let get = |name: &str| params.get(name).copied().ok_or_else(|| SystemError::MissingParameter(name.to_owned()));
    let positive = |name: &str| {
        let v = get(name)?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(SystemError::NonPositive { name: name.to_owned(), value: v })
        }
    };
    let p = OsteomyelitisParams {
        alpha1: get("alpha1")?,
        alpha2: get("alpha2")?,
        beta1: get("beta1")?,
        beta2: get("beta2")?,
        g11: get("g11")?,
        g12: get("g12")?,
        g21: get("g21")?,
        g22: get("g22")?,
        f11: get("f11")?,
        f12: get("f12")?,
        f21: get("f21")?,
        f22: get("f22")?,
        s: positive("s")?,
        gamma_b: get("gamma_B")?,
        k_i: get("k_i")?,
        k1: get("k1")?,
        k2: get("k2")?,
    };
    let initial_state = vec![positive("Oc0")?, positive("Ob0")?, positive("B0")?];
    let onoff = |n: &str| InputComponent { name: n.to_owned(), terms: vec![format!("{n}=0"), format!("{n}=1")] };
    Ok(SwitchedSystem {
        state_names: vec!["Oc".into(), "Ob".into(), "B".into()],
        inputs: vec![onoff("T1"), onoff("T2")],
        mode_labels: vec!["T1=0,T2=0".into(), "T1=1,T2=0".into(), "T1=0,T2=1".into(), "T1=1,T2=1".into()],
        output: OutputMap::Affine { names: vec!["y".into()], rows: vec![vec![-p.k1, p.k2, 0.0]], offset: vec![0.0] },
        parameters: params.clone(),
        initial_state,
        initial_mode: 0,
        dynamics: Dynamics::Osteomyelitis(p),
    })
}
