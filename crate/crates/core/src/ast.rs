//! Abstract syntax of D-CGF models and the multiset semantics of actions.
//!
//! A model is the quadruple `(S, P, T, C)`: species definitions, an initial
//! population, therapy definitions and the initial therapy combination.
//! Species and therapies share the same shape (a choice of action-prefixed
//! continuations); they are kept in separate lists because the hybrid
//! semantics treats them differently.

use std::collections::BTreeMap;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// One summand of a rate: a literal, or `coeff * name`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RateTerm {
    Literal(f64),
    Param { coeff: f64, name: String },
}

/// A rate annotation: a sum of literals and (scaled) parameter names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub terms: Vec<RateTerm>,
}

impl Rate {
    pub fn literal(value: f64) -> Self {
        Rate { terms: vec![RateTerm::Literal(value)] }
    }

    pub fn param(name: impl Into<String>) -> Self {
        Rate { terms: vec![RateTerm::Param { coeff: 1.0, name: name.into() }] }
    }

    pub fn sum(terms: Vec<RateTerm>) -> Self {
        Rate { terms }
    }

    /// Parameter names referenced by this rate, in order of appearance.
    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().filter_map(|t| match t {
            RateTerm::Param { name, .. } => Some(name.as_str()),
            RateTerm::Literal(_) => None,
        })
    }

    pub fn evaluate(&self, params: &IndexMap<String, f64>) -> Result<f64, ModelError> {
        let mut total = 0.0;
        for term in &self.terms {
            total += match term {
                RateTerm::Literal(v) => *v,
                RateTerm::Param { coeff, name } => {
                    let v = params.get(name).ok_or_else(|| ModelError::UnboundParameter(name.clone()))?;
                    coeff * v
                }
            };
        }
        Ok(total)
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, term) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, "+")?;
            }
            match term {
                RateTerm::Literal(v) => write!(f, "{}", fmt_number(*v))?,
                RateTerm::Param { coeff, name } if *coeff == 1.0 => write!(f, "{name}")?,
                RateTerm::Param { coeff, name } => write!(f, "{}*{name}", fmt_number(*coeff))?,
            }
        }
        Ok(())
    }
}

/// Formats a float so that it re-parses to the identical value.
pub(crate) fn fmt_number(v: f64) -> String {
    let s = format!("{v:?}");
    s.strip_suffix(".0").map(str::to_owned).unwrap_or(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Internal,
    Input,
    Output,
}

/// An action prefix `tau<r>`, `?x<r>` or `!x<r>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    pub channel: Option<String>,
    pub rate: Rate,
    /// Explicit label for internal actions; generated when absent.
    pub label: Option<String>,
}

impl Action {
    pub fn tau(rate: Rate) -> Self {
        Action { kind: ActionKind::Internal, channel: None, rate, label: None }
    }

    pub fn labelled_tau(label: impl Into<String>, rate: Rate) -> Self {
        Action { kind: ActionKind::Internal, channel: None, rate, label: Some(label.into()) }
    }

    pub fn input(channel: impl Into<String>, rate: Rate) -> Self {
        Action { kind: ActionKind::Input, channel: Some(channel.into()), rate, label: None }
    }

    pub fn output(channel: impl Into<String>, rate: Rate) -> Self {
        Action { kind: ActionKind::Output, channel: Some(channel.into()), rate, label: None }
    }
}

/// A multiset of term names, e.g. the continuation `(S|S)` or the
/// combination `T1_off | T2_off`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Multiset(BTreeMap<String, usize>);

impl Multiset {
    pub fn new() -> Self {
        Multiset::default()
    }

    pub fn insert(&mut self, name: impl Into<String>) {
        *self.0.entry(name.into()).or_insert(0) += 1;
    }

    /// Multiplicity of `name`; zero when absent.
    pub fn count(&self, name: &str) -> usize {
        self.0.get(name).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.0.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Distinct names with their multiplicities, in name order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Each element repeated by multiplicity, in name order.
    pub fn elements(&self) -> impl Iterator<Item = &str> {
        self.0.iter().flat_map(|(k, v)| std::iter::repeat_n(k.as_str(), *v))
    }

    /// Multiset sum `self ⊎ other`.
    pub fn union(&self, other: &Multiset) -> Multiset {
        let mut out = self.clone();
        for (name, n) in other.iter() {
            *out.0.entry(name.to_owned()).or_insert(0) += n;
        }
        out
    }
}

impl<S: Into<String>> FromIterator<S> for Multiset {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut m = Multiset::new();
        for s in iter {
            m.insert(s);
        }
        m
    }
}

impl fmt::Display for Multiset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<&str> = self.elements().collect();
        match items.len() {
            0 => write!(f, "0"),
            1 => write!(f, "{}", items[0]),
            _ => write!(f, "({})", items.join("|")),
        }
    }
}

/// Multiplicity of `name` in `collection`.
pub fn count(name: &str, collection: &Multiset) -> usize {
    collection.count(name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub action: Action,
    pub continuation: Multiset,
}

/// `X = π1.P1 + π2.P2 + ...`; an empty branch list is the nil definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Definition {
    pub name: String,
    pub branches: Vec<Branch>,
}

impl Definition {
    pub fn new(name: impl Into<String>) -> Self {
        Definition { name: name.into(), branches: Vec::new() }
    }

    pub fn branch(mut self, action: Action, continuation: Multiset) -> Self {
        self.branches.push(Branch { action, continuation });
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    Species,
    Therapy,
}

/// Location of a construct inside a model, used to attach diagnostics.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Site {
    Definition { kind: TermKind, index: usize },
    Branch { kind: TermKind, def: usize, branch: usize },
    Continuation { kind: TermKind, def: usize, branch: usize },
    Population(String),
    Init,
    Parameter(String),
}

/// A parsed D-CGF model `(S, P, T, C)` with its parameter table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DcgfModel {
    pub parameters: IndexMap<String, f64>,
    pub species: Vec<Definition>,
    pub population: IndexMap<String, f64>,
    pub therapies: Vec<Definition>,
    pub initial: Multiset,
}

/// Where a global action came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Synthesis {
    Internal { term: String, branch: usize },
    Channel { channel: String, input: (String, usize), output: (String, usize) },
}

/// A reaction obtained from one internal prefix or one input/output pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalAction {
    pub label: String,
    pub reactants: Multiset,
    pub products: Multiset,
    pub rate: Rate,
    pub synthesis: Synthesis,
}

impl GlobalAction {
    pub fn is_internal(&self) -> bool {
        matches!(self.synthesis, Synthesis::Internal { .. })
    }

    /// `#(name, prod) - #(name, react)`, without checking that `name` is declared.
    pub fn delta(&self, name: &str) -> i64 {
        self.products.count(name) as i64 - self.reactants.count(name) as i64
    }
}

impl DcgfModel {
    pub fn definitions(&self) -> impl Iterator<Item = (TermKind, usize, &Definition)> {
        let s = self.species.iter().enumerate().map(|(i, d)| (TermKind::Species, i, d));
        let t = self.therapies.iter().enumerate().map(|(i, d)| (TermKind::Therapy, i, d));
        s.chain(t)
    }

    pub fn species_names(&self) -> Vec<&str> {
        self.species.iter().map(|d| d.name.as_str()).collect()
    }

    pub fn therapy_names(&self) -> Vec<&str> {
        self.therapies.iter().map(|d| d.name.as_str()).collect()
    }

    pub fn kind_of(&self, name: &str) -> Option<TermKind> {
        if self.species.iter().any(|d| d.name == name) {
            Some(TermKind::Species)
        } else if self.therapies.iter().any(|d| d.name == name) {
            Some(TermKind::Therapy)
        } else {
            None
        }
    }

    /// Initial concentration of a species (zero when unlisted).
    pub fn initial_population(&self, name: &str) -> f64 {
        self.population.get(name).copied().unwrap_or(0.0)
    }

    /// Net change of a declared term under an action.
    pub fn net_change(&self, action: &GlobalAction, name: &str) -> Result<i64, ModelError> {
        if self.kind_of(name).is_none() {
            return Err(ModelError::UndeclaredTerm { name: name.to_owned(), site: None });
        }
        Ok(action.delta(name))
    }

    /// Checks name resolution, channel complementarity and channel rate
    /// agreement. Every violation is returned, not just the first.
    pub fn validate(&self) -> Result<(), Vec<ModelError>> {
        let mut errors = Vec::new();

        let mut seen: IndexMap<&str, (TermKind, usize)> = IndexMap::new();
        for (kind, index, def) in self.definitions() {
            match seen.get(def.name.as_str()) {
                Some(&(prev, _)) if prev == kind => errors.push(ModelError::DuplicateDefinition {
                    name: def.name.clone(),
                    site: Site::Definition { kind, index },
                }),
                Some(_) => errors
                    .push(ModelError::NameClash { name: def.name.clone(), site: Site::Definition { kind, index } }),
                None => {
                    seen.insert(&def.name, (kind, index));
                }
            }
        }

        for (kind, def_index, def) in self.definitions() {
            for (b, branch) in def.branches.iter().enumerate() {
                for (name, _) in branch.continuation.iter() {
                    if !seen.contains_key(name) {
                        errors.push(ModelError::UndeclaredTerm {
                            name: name.to_owned(),
                            site: Some(Site::Continuation { kind, def: def_index, branch: b }),
                        });
                    }
                }
                for sym in branch.action.rate.symbols() {
                    if !self.parameters.contains_key(sym) {
                        errors.push(ModelError::UndeclaredParameter {
                            name: sym.to_owned(),
                            site: Site::Branch { kind, def: def_index, branch: b },
                        });
                    }
                }
            }
        }

        for name in self.population.keys() {
            if self.kind_of(name) != Some(TermKind::Species) {
                errors.push(ModelError::UndeclaredTerm {
                    name: name.clone(),
                    site: Some(Site::Population(name.clone())),
                });
            }
        }
        for (name, &value) in &self.population {
            if !(value >= 0.0 && value.is_finite()) {
                errors.push(ModelError::NegativePopulation { name: name.clone(), value });
            }
        }

        for (name, _) in self.initial.iter() {
            if self.kind_of(name) != Some(TermKind::Therapy) {
                errors.push(ModelError::UndeclaredTerm { name: name.to_owned(), site: Some(Site::Init) });
            }
        }

        errors.extend(self.check_channels());

        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    fn check_channels(&self) -> Vec<ModelError> {
        let mut errors = Vec::new();
        for (channel, uses) in self.channel_uses() {
            let has_input = uses.iter().any(|u| u.kind == ActionKind::Input);
            let has_output = uses.iter().any(|u| u.kind == ActionKind::Output);
            if !(has_input && has_output) {
                let missing = if has_input { ActionKind::Output } else { ActionKind::Input };
                errors.push(ModelError::UnmatchedChannel {
                    channel: channel.to_owned(),
                    missing,
                    site: uses[0].site.clone(),
                });
            }
            let first = &uses[0];
            for other in &uses[1..] {
                if other.rate != first.rate {
                    errors.push(ModelError::ChannelRateMismatch {
                        channel: channel.to_owned(),
                        expected: first.rate.to_string(),
                        found: other.rate.to_string(),
                        site: other.site.clone(),
                    });
                }
            }
        }
        errors
    }

    /// Channel occurrences grouped by channel, channels in order of first use.
    pub(crate) fn channel_uses(&self) -> IndexMap<&str, Vec<ChannelUse<'_>>> {
        let mut map: IndexMap<&str, Vec<ChannelUse<'_>>> = IndexMap::new();
        for (kind, def_index, def) in self.definitions() {
            for (b, branch) in def.branches.iter().enumerate() {
                if let Some(channel) = branch.action.channel.as_deref() {
                    map.entry(channel).or_default().push(ChannelUse {
                        kind: branch.action.kind,
                        term: &def.name,
                        branch: b,
                        rate: &branch.action.rate,
                        continuation: &branch.continuation,
                        site: Site::Branch { kind, def: def_index, branch: b },
                    });
                }
            }
        }
        map
    }
}

pub(crate) struct ChannelUse<'a> {
    pub kind: ActionKind,
    pub term: &'a str,
    pub branch: usize,
    pub rate: &'a Rate,
    pub continuation: &'a Multiset,
    pub site: Site,
}

/// Expands every internal prefix and every input/output pairing into a
/// [`GlobalAction`].
///
/// Order: internal actions by definition (species first, then therapies)
/// and branch; then channel actions, channels in order of first use, each
/// channel's pairs as input occurrence × output occurrence.
pub fn elaborate_actions(model: &DcgfModel) -> Result<Vec<GlobalAction>, Vec<ModelError>> {
    model.validate()?;

    let mut actions = Vec::new();
    for (_, _, def) in model.definitions() {
        for (b, branch) in def.branches.iter().enumerate() {
            if branch.action.kind != ActionKind::Internal {
                continue;
            }
            let label = branch.action.label.clone().unwrap_or_else(|| format!("{}_{}", def.name, b + 1));
            actions.push(GlobalAction {
                label,
                reactants: Multiset::from_iter([def.name.as_str()]),
                products: branch.continuation.clone(),
                rate: branch.action.rate.clone(),
                synthesis: Synthesis::Internal { term: def.name.clone(), branch: b },
            });
        }
    }

    for (channel, uses) in model.channel_uses() {
        let inputs: Vec<_> = uses.iter().filter(|u| u.kind == ActionKind::Input).collect();
        let outputs: Vec<_> = uses.iter().filter(|u| u.kind == ActionKind::Output).collect();
        let pairs = inputs.len() * outputs.len();
        let mut n = 0;
        for input in &inputs {
            for output in &outputs {
                n += 1;
                let label = if pairs == 1 { channel.to_owned() } else { format!("{channel}_{n}") };
                actions.push(GlobalAction {
                    label,
                    reactants: Multiset::from_iter([input.term, output.term]),
                    products: input.continuation.union(output.continuation),
                    rate: input.rate.clone(),
                    synthesis: Synthesis::Channel {
                        channel: channel.to_owned(),
                        input: (input.term.to_owned(), input.branch),
                        output: (output.term.to_owned(), output.branch),
                    },
                });
            }
        }
    }

    let mut labels = std::collections::HashSet::new();
    let duplicates: Vec<ModelError> = actions
        .iter()
        .filter(|a| !labels.insert(a.label.clone()))
        .map(|a| ModelError::DuplicateLabel(a.label.clone()))
        .collect();
    if !duplicates.is_empty() {
        return Err(duplicates);
    }
    Ok(actions)
}
