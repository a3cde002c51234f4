//! Stoichiometric matrix, rate vector and the mass-action ODE `dX/dt = M·φ`.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::ast::{fmt_number, DcgfModel, GlobalAction, Rate, RateTerm};
use crate::error::StoichiometryError;

/// Term × action matrix of net changes. Rows are species (declaration
/// order) followed by therapies; columns follow action elaboration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoichiometricMatrix {
    pub rows: Vec<String>,
    pub species_count: usize,
    pub columns: Vec<String>,
    pub entries: Vec<Vec<i64>>,
}

impl StoichiometricMatrix {
    pub fn row_index(&self, name: &str) -> Option<usize> {
        self.rows.iter().position(|r| r == name)
    }

    pub fn column_index(&self, label: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == label)
    }

    /// Entry by row and column name.
    pub fn get(&self, row: &str, column: &str) -> Option<i64> {
        Some(self.entries[self.row_index(row)?][self.column_index(column)?])
    }

    pub fn species_names(&self) -> &[String] {
        &self.rows[..self.species_count]
    }

    pub fn therapy_names(&self) -> &[String] {
        &self.rows[self.species_count..]
    }

    /// Rows restricted to species (`M|S`).
    pub fn species_rows(&self) -> &[Vec<i64>] {
        &self.entries[..self.species_count]
    }

    /// Rows restricted to therapies (`M|T`).
    pub fn therapy_rows(&self) -> &[Vec<i64>] {
        &self.entries[self.species_count..]
    }

    /// True when column `col` has no species effect.
    pub fn is_species_neutral(&self, col: usize) -> bool {
        self.species_rows().iter().all(|row| row[col] == 0)
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let name_w = self.rows.iter().map(String::len).max().unwrap_or(0);
        let widths: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let w = self.entries.iter().map(|r| r[j].to_string().len()).max().unwrap_or(1);
                w.max(c.len())
            })
            .collect();
        let mut out = format!("{:name_w$}", "");
        for (c, w) in self.columns.iter().zip(&widths) {
            out.push_str(&format!("  {c:>w$}"));
        }
        out.push('\n');
        for (name, row) in self.rows.iter().zip(&self.entries) {
            out.push_str(&format!("{name:name_w$}"));
            for (v, w) in row.iter().zip(&widths) {
                out.push_str(&format!("  {v:>w$}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Builds `M[z, a] = Δ(a, z)` over species then therapies.
pub fn build_matrix(actions: &[GlobalAction], model: &DcgfModel) -> StoichiometricMatrix {
    let rows: Vec<String> = model.species.iter().chain(&model.therapies).map(|d| d.name.clone()).collect();
    let entries = rows.iter().map(|z| actions.iter().map(|a| a.delta(z)).collect()).collect();
    StoichiometricMatrix {
        rows,
        species_count: model.species.len(),
        columns: actions.iter().map(|a| a.label.clone()).collect(),
        entries,
    }
}

/// Shape of a rate-vector entry, keyed on the reactant multiset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum RateForm {
    /// No reactants: `0`.
    Zero,
    /// `{X}`: `r·X`.
    Unary { x: String },
    /// `{X, Y}`: `r·X·Y`.
    Binary { x: String, y: String },
    /// `{X, X}`: `r·X·(X−1)`.
    Homodimer { x: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateExpression {
    pub label: String,
    pub rate: Rate,
    #[serde(flatten)]
    pub form: RateForm,
}

impl RateExpression {
    /// Expansion into signed monomials. The homodimer case expands to
    /// `r·X·X − r·X`.
    pub fn monomials(&self) -> Vec<Monomial> {
        let vars: Vec<Vec<&str>> = match &self.form {
            RateForm::Zero => return Vec::new(),
            RateForm::Unary { x } => vec![vec![x]],
            RateForm::Binary { x, y } => vec![vec![x, y]],
            RateForm::Homodimer { x } => vec![vec![x, x]],
        };
        let mut out = Vec::new();
        for term in &self.rate.terms {
            for v in &vars {
                out.push(Monomial::from_rate_term(term, 1.0, v));
            }
            if let RateForm::Homodimer { x } = &self.form {
                out.push(Monomial::from_rate_term(term, -1.0, &[x]));
            }
        }
        out.retain(|m| m.coeff != 0.0);
        out
    }

    /// Names of the terms the entry multiplies.
    pub fn factors(&self) -> Vec<&str> {
        match &self.form {
            RateForm::Zero => vec![],
            RateForm::Unary { x } | RateForm::Homodimer { x } => vec![x],
            RateForm::Binary { x, y } => vec![x, y],
        }
    }
}

impl fmt::Display for RateExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rate = if self.rate.terms.len() > 1 { format!("({})", self.rate) } else { self.rate.to_string() };
        match &self.form {
            RateForm::Zero => write!(f, "0"),
            RateForm::Unary { x } => write!(f, "{rate}*{x}"),
            RateForm::Binary { x, y } => write!(f, "{rate}*{x}*{y}"),
            RateForm::Homodimer { x } => write!(f, "{rate}*{x}*({x}-1)"),
        }
    }
}

/// Applies the four-case rule to every action's reactant multiset.
pub fn build_rate_vector(actions: &[GlobalAction]) -> Result<Vec<RateExpression>, StoichiometryError> {
    actions
        .iter()
        .map(|a| {
            let reactants: Vec<&str> = a.reactants.elements().collect();
            let form = match reactants.as_slice() {
                [] => RateForm::Zero,
                [x] => RateForm::Unary { x: (*x).to_owned() },
                [x, y] if x == y => RateForm::Homodimer { x: (*x).to_owned() },
                [x, y] => RateForm::Binary { x: (*x).to_owned(), y: (*y).to_owned() },
                _ => {
                    return Err(StoichiometryError::TooManyReactants { label: a.label.clone(), count: reactants.len() })
                }
            };
            Ok(RateExpression { label: a.label.clone(), rate: a.rate.clone(), form })
        })
        .collect()
}

/// `coeff · param · Π vars`; `param` is `None` for literal rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub param: Option<String>,
    /// Sorted, with repetition for powers.
    pub vars: Vec<String>,
}

impl Monomial {
    pub fn new(coeff: f64, param: Option<&str>, vars: &[&str]) -> Self {
        let mut vars: Vec<String> = vars.iter().map(|s| (*s).to_owned()).collect();
        vars.sort();
        Monomial { coeff, param: param.map(str::to_owned), vars }
    }

    fn from_rate_term(term: &RateTerm, sign: f64, vars: &[&str]) -> Self {
        match term {
            RateTerm::Literal(v) => Monomial::new(sign * v, None, vars),
            RateTerm::Param { coeff, name } => Monomial::new(sign * coeff, Some(name), vars),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Monomial { coeff: self.coeff * factor, ..self.clone() }
    }

    /// Canonical key for set comparison: `(coeff bits, param, vars)`.
    pub fn key(&self) -> (u64, Option<String>, Vec<String>) {
        (self.coeff.to_bits(), self.param.clone(), self.vars.clone())
    }

    pub fn evaluate(
        &self,
        value_of: impl Fn(&str) -> Option<f64>,
        params: &IndexMap<String, f64>,
    ) -> Result<f64, StoichiometryError> {
        let mut v = self.coeff;
        if let Some(p) = &self.param {
            v *= params.get(p).ok_or_else(|| StoichiometryError::UnboundSymbol(p.clone()))?;
        }
        for x in &self.vars {
            v *= value_of(x).ok_or_else(|| StoichiometryError::UnboundSymbol(x.clone()))?;
        }
        Ok(v)
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.coeff < 0.0 { '-' } else { '+' };
        let mag = self.coeff.abs();
        let mut factors = Vec::new();
        if mag != 1.0 || (self.param.is_none() && self.vars.is_empty()) {
            factors.push(fmt_number(mag));
        }
        if let Some(p) = &self.param {
            factors.push(p.clone());
        }
        factors.extend(self.vars.iter().cloned());
        write!(f, "{sign}{}", factors.join("*"))
    }
}

/// Writes a signed sum of monomials, or `0` when empty.
pub fn format_sum(monomials: &[Monomial]) -> String {
    if monomials.is_empty() {
        return "0".to_owned();
    }
    let parts: Vec<String> = monomials.iter().map(ToString::to_string).collect();
    let joined = parts.join(" ");
    joined.strip_prefix('+').map(str::to_owned).unwrap_or(joined)
}

/// Plain ODE system over species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeSystem {
    pub state_names: Vec<String>,
    /// One signed monomial list per species.
    pub rhs: Vec<Vec<Monomial>>,
    pub parameters: IndexMap<String, f64>,
}

/// `rhs[X] = Σ_a M|S[X, a]·φ[a]`, dropping zero terms only.
///
/// Fails if a contributing rate entry multiplies a therapy term; therapy
/// models go through the switched-system semantics instead.
pub fn derive_ode(
    matrix: &StoichiometricMatrix,
    phi: &[RateExpression],
    parameters: &IndexMap<String, f64>,
) -> Result<OdeSystem, StoichiometryError> {
    let species = matrix.species_names();
    let mut rhs = Vec::with_capacity(species.len());
    for row in matrix.species_rows() {
        let mut terms = Vec::new();
        for (j, entry) in phi.iter().enumerate() {
            if row[j] == 0 {
                continue;
            }
            if let Some(t) = entry.factors().into_iter().find(|f| !species.iter().any(|s| s == f)) {
                return Err(StoichiometryError::TherapyInRate { label: entry.label.clone(), term: t.to_owned() });
            }
            terms.extend(entry.monomials().iter().map(|m| m.scaled(row[j] as f64)));
        }
        rhs.push(terms);
    }
    Ok(OdeSystem { state_names: species.to_vec(), rhs, parameters: parameters.clone() })
}

impl OdeSystem {
    /// Numeric derivative at `state` under `params`.
    pub fn evaluate_rhs(&self, state: &[f64], params: &IndexMap<String, f64>) -> Result<Vec<f64>, StoichiometryError> {
        if state.len() != self.state_names.len() {
            return Err(StoichiometryError::StateDimension { expected: self.state_names.len(), found: state.len() });
        }
        let value_of = |name: &str| self.state_names.iter().position(|s| s == name).map(|i| state[i]);
        self.rhs.iter().map(|terms| terms.iter().map(|m| m.evaluate(value_of, params)).sum()).collect()
    }

    pub fn to_text(&self) -> String {
        self.state_names.iter().zip(&self.rhs).map(|(x, terms)| format!("d{x}/dt = {}\n", format_sum(terms))).collect()
    }
}

/// Monomials with parameters bound and variables resolved to state indices.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct CompiledRhs {
    rows: Vec<Vec<(f64, Vec<usize>)>>,
}

impl CompiledRhs {
    pub fn compile(
        rhs: &[Vec<Monomial>],
        state_names: &[String],
        params: &IndexMap<String, f64>,
    ) -> Result<Self, StoichiometryError> {
        let rows = rhs
            .iter()
            .map(|terms| {
                terms
                    .iter()
                    .map(|m| {
                        let mut c = m.coeff;
                        if let Some(p) = &m.param {
                            c *= params.get(p).ok_or_else(|| StoichiometryError::UnboundSymbol(p.clone()))?;
                        }
                        let idx = m
                            .vars
                            .iter()
                            .map(|v| {
                                state_names
                                    .iter()
                                    .position(|s| s == v)
                                    .ok_or_else(|| StoichiometryError::UnboundSymbol(v.clone()))
                            })
                            .collect::<Result<Vec<_>, _>>()?;
                        Ok((c, idx))
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CompiledRhs { rows })
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.iter().map(|(c, idx)| idx.iter().fold(*c, |acc, &i| acc * x[i])).sum();
        }
    }
}
