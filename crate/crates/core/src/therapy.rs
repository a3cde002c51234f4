//! Well-formedness of therapy definitions, switching therapies and the
//! mode graph.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ast::{DcgfModel, GlobalAction};
use crate::parser::Diagnostic;
use crate::stoichiometry::StoichiometricMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub term: String,
    pub action: String,
    pub value: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionResult<W> {
    pub pass: bool,
    pub violations: Vec<W>,
}

impl<W> ConditionResult<W> {
    fn from(violations: Vec<W>) -> Self {
        ConditionResult { pass: violations.is_empty(), violations }
    }
}

/// Outcome of the four matrix-level necessary conditions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NecessaryConditionsReport {
    /// Therapy entries lie in {−1, 0, 1}; violating cells.
    pub entries_in_range: ConditionResult<Cell>,
    /// Therapy rows sum to zero in every column; violating actions.
    pub conservation: ConditionResult<String>,
    /// At most one therapy consumed per action; violating actions.
    pub exclusive_switch_single: ConditionResult<String>,
    /// Actions consuming a therapy are internal and species-neutral.
    pub exclusive_switch_internal: ConditionResult<String>,
}

impl NecessaryConditionsReport {
    pub fn pass(&self) -> bool {
        self.entries_in_range.pass
            && self.conservation.pass
            && self.exclusive_switch_single.pass
            && self.exclusive_switch_internal.pass
    }

    pub fn to_text(&self) -> String {
        fn line<W: fmt::Debug>(name: &str, c: &ConditionResult<W>) -> String {
            if c.pass {
                format!("{name}: pass\n")
            } else {
                format!("{name}: FAIL {:?}\n", c.violations)
            }
        }
        let mut out = String::new();
        out.push_str(&line("1 therapy entries in {-1,0,1}", &self.entries_in_range));
        out.push_str(&line("2 conservation of therapy terms", &self.conservation));
        out.push_str(&line("3 exclusive switch (single consumer)", &self.exclusive_switch_single));
        out.push_str(&line("4 exclusive switch (internal, species-neutral)", &self.exclusive_switch_internal));
        out
    }
}

pub fn check_necessary_conditions(
    matrix: &StoichiometricMatrix,
    actions: &[GlobalAction],
) -> NecessaryConditionsReport {
    let therapy_rows = matrix.therapy_rows();
    let therapies = matrix.therapy_names();
    let mut cells = Vec::new();
    let mut conservation = Vec::new();
    let mut single = Vec::new();
    let mut internal = Vec::new();

    for (j, label) in matrix.columns.iter().enumerate() {
        for (name, row) in therapies.iter().zip(therapy_rows) {
            if !(-1..=1).contains(&row[j]) {
                cells.push(Cell { term: name.clone(), action: label.clone(), value: row[j] });
            }
        }
        if therapy_rows.iter().map(|r| r[j]).sum::<i64>() != 0 {
            conservation.push(label.clone());
        }
        let consumed = therapy_rows.iter().filter(|r| r[j] == -1).count();
        if consumed > 1 {
            single.push(label.clone());
        }
        let is_internal = actions.get(j).is_some_and(GlobalAction::is_internal);
        if consumed >= 1 && !(matrix.is_species_neutral(j) && is_internal) {
            internal.push(label.clone());
        }
    }

    NecessaryConditionsReport {
        entries_in_range: ConditionResult::from(cells),
        conservation: ConditionResult::from(conservation),
        exclusive_switch_single: ConditionResult::from(single),
        exclusive_switch_internal: ConditionResult::from(internal),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StEdge {
    pub from: String,
    pub to: String,
    /// Actions witnessing the edge.
    pub actions: Vec<String>,
}

/// Directed graph over therapy terms: `U1 → U2` when some action has
/// `M[U1, a] = −1` and `M|T[U2, a] = +1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StGraph {
    pub vertices: Vec<String>,
    pub edges: Vec<StEdge>,
}

impl StGraph {
    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        self.edges.iter().any(|e| e.from == from && e.to == to)
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph st_graph {\n");
        for v in &self.vertices {
            out.push_str(&format!("  \"{v}\";\n"));
        }
        for e in &self.edges {
            out.push_str(&format!("  \"{}\" -> \"{}\" [label=\"{}\"];\n", e.from, e.to, e.actions.join(",")));
        }
        out.push_str("}\n");
        out
    }
}

pub fn build_st_graph(matrix: &StoichiometricMatrix) -> StGraph {
    let therapies = matrix.therapy_names();
    let rows = matrix.therapy_rows();
    let mut edges: Vec<StEdge> = Vec::new();
    for (j, label) in matrix.columns.iter().enumerate() {
        for (u1, r1) in therapies.iter().zip(rows) {
            if r1[j] != -1 {
                continue;
            }
            for (u2, r2) in therapies.iter().zip(rows) {
                if r2[j] != 1 {
                    continue;
                }
                match edges.iter_mut().find(|e| &e.from == u1 && &e.to == u2) {
                    Some(e) => e.actions.push(label.clone()),
                    None => edges.push(StEdge { from: u1.clone(), to: u2.clone(), actions: vec![label.clone()] }),
                }
            }
        }
    }
    // Stable order: by source then target declaration position.
    let pos = |n: &str| therapies.iter().position(|t| t == n).unwrap_or(usize::MAX);
    edges.sort_by_key(|e| (pos(&e.from), pos(&e.to)));
    StGraph { vertices: therapies.to_vec(), edges }
}

/// A set of therapy terms of which exactly one is active at any time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchingTherapy {
    /// Declaration order.
    pub terms: Vec<String>,
    pub initially_active: String,
    pub switch_actions: Vec<String>,
}

/// A failed condition of the component-level well-formedness check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "condition", rename_all = "snake_case")]
pub enum WellFormednessViolation {
    /// The component does not have exactly one term in the initial combination.
    InitialCount { component: Vec<String>, count: usize },
    /// An action consumes two or more terms of one component.
    MultipleReactants { component: Vec<String>, action: String, count: usize },
}

impl WellFormednessViolation {
    pub fn code(&self) -> &'static str {
        match self {
            WellFormednessViolation::InitialCount { .. } => "E201",
            WellFormednessViolation::MultipleReactants { .. } => "E202",
        }
    }

    pub fn to_diagnostic(&self) -> Diagnostic {
        Diagnostic::error(self.code(), self.to_string(), None)
    }
}

impl fmt::Display for WellFormednessViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WellFormednessViolation::InitialCount { component, count } => write!(
                f,
                "component {{{}}} has initial count {count}; exactly one term must be active",
                component.join(",")
            ),
            WellFormednessViolation::MultipleReactants { component, action, count } => {
                write!(f, "action `{action}` consumes {count} terms of component {{{}}}", component.join(","))
            }
        }
    }
}

/// Weakly connected components of the ST-graph, checked for exactly one
/// initially active term and at most one consumed term per action.
///
/// Components are ordered by their first term's declaration position.
pub fn partition_switching_therapies(
    graph: &StGraph,
    model: &DcgfModel,
    actions: &[GlobalAction],
) -> Result<Vec<SwitchingTherapy>, Vec<WellFormednessViolation>> {
    let n = graph.vertices.len();
    let index = |name: &str| graph.vertices.iter().position(|v| v == name);
    let mut adjacency = vec![Vec::new(); n];
    for e in &graph.edges {
        if let (Some(a), Some(b)) = (index(&e.from), index(&e.to)) {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
    }
    let mut component_of = vec![usize::MAX; n];
    let mut components: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if component_of[start] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut stack = vec![start];
        let mut members = Vec::new();
        component_of[start] = id;
        while let Some(v) = stack.pop() {
            members.push(v);
            for &w in &adjacency[v] {
                if component_of[w] == usize::MAX {
                    component_of[w] = id;
                    stack.push(w);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }

    let mut violations = Vec::new();
    let mut result = Vec::new();
    for members in &components {
        let terms: Vec<String> = members.iter().map(|&i| graph.vertices[i].clone()).collect();
        let count: usize = terms.iter().map(|t| model.initial.count(t)).sum();
        if count != 1 {
            violations.push(WellFormednessViolation::InitialCount { component: terms.clone(), count });
        }
        for a in actions {
            let consumed: usize = terms.iter().map(|t| a.reactants.count(t)).sum();
            if consumed > 1 {
                violations.push(WellFormednessViolation::MultipleReactants {
                    component: terms.clone(),
                    action: a.label.clone(),
                    count: consumed,
                });
            }
        }
        let members_set: BTreeSet<&str> = terms.iter().map(String::as_str).collect();
        let switch_actions = actions
            .iter()
            .filter(|a| {
                a.is_internal()
                    && a.reactants.iter().any(|(r, _)| members_set.contains(r))
                    && a.products.iter().any(|(p, _)| members_set.contains(p))
                    && a.reactants != a.products
            })
            .map(|a| a.label.clone())
            .collect();
        let initially_active = terms.iter().find(|t| model.initial.count(t) > 0).cloned().unwrap_or_default();
        result.push(SwitchingTherapy { terms, initially_active, switch_actions });
    }

    if violations.is_empty() {
        Ok(result)
    } else {
        Err(violations)
    }
}

/// Cartesian product of the switching therapies.
///
/// Modes are enumerated with the first switching therapy varying fastest,
/// so for two on/off therapies the order is
/// `(off,off), (on,off), (off,on), (on,on)`. A mode's coordinates are term
/// indices within each switching therapy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeGraph {
    pub components: Vec<Vec<String>>,
    pub modes: Vec<Vec<usize>>,
    /// Directed edges between mode indices.
    pub edges: Vec<(usize, usize)>,
    pub initial: usize,
}

impl ModeGraph {
    pub fn mode_terms(&self, mode: usize) -> Vec<&str> {
        self.modes[mode].iter().zip(&self.components).map(|(&i, c)| c[i].as_str()).collect()
    }

    pub fn mode_label(&self, mode: usize) -> String {
        let terms = self.mode_terms(mode);
        if terms.is_empty() {
            "0".to_owned()
        } else {
            terms.join("|")
        }
    }

    /// Mode index from per-component term indices.
    pub fn index_of(&self, coords: &[usize]) -> Option<usize> {
        if coords.len() != self.components.len() {
            return None;
        }
        let mut index = 0;
        let mut stride = 1;
        for (&c, comp) in coords.iter().zip(&self.components) {
            if c >= comp.len() {
                return None;
            }
            index += c * stride;
            stride *= comp.len();
        }
        Some(index)
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph mode_graph {\n");
        for q in 0..self.modes.len() {
            let shape = if q == self.initial { ",shape=doublecircle" } else { "" };
            out.push_str(&format!("  q{} [label=\"q{}: {}\"{shape}];\n", q + 1, q + 1, self.mode_label(q)));
        }
        for (a, b) in &self.edges {
            out.push_str(&format!("  q{} -> q{};\n", a + 1, b + 1));
        }
        out.push_str("}\n");
        out
    }
}

pub fn build_mode_graph(partition: &[SwitchingTherapy], graph: &StGraph) -> ModeGraph {
    let components: Vec<Vec<String>> = partition.iter().map(|st| st.terms.clone()).collect();
    let total: usize = components.iter().map(Vec::len).product();
    let modes: Vec<Vec<usize>> = (0..total)
        .map(|mut q| {
            components
                .iter()
                .map(|c| {
                    let digit = q % c.len();
                    q /= c.len();
                    digit
                })
                .collect()
        })
        .collect();

    let mut edges = Vec::new();
    for (a, qa) in modes.iter().enumerate() {
        for (b, qb) in modes.iter().enumerate() {
            let diff: Vec<usize> = (0..components.len()).filter(|&i| qa[i] != qb[i]).collect();
            if let [i] = diff.as_slice() {
                let comp = &components[*i];
                if graph.has_edge(&comp[qa[*i]], &comp[qb[*i]]) {
                    edges.push((a, b));
                }
            }
        }
    }

    let initial_coords: Vec<usize> =
        partition.iter().map(|st| st.terms.iter().position(|t| *t == st.initially_active).unwrap_or(0)).collect();
    let mut mg = ModeGraph { components, modes, edges, initial: 0 };
    mg.initial = mg.index_of(&initial_coords).unwrap_or(0);
    mg
}

/// Everything the therapy analysis derives from a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TherapyAnalysis {
    pub conditions: NecessaryConditionsReport,
    pub st_graph: StGraph,
    pub switching_therapies: Vec<SwitchingTherapy>,
    pub mode_graph: ModeGraph,
    /// Clauses of the switching-therapy definition that an extracted
    /// component fails even though the component checks passed.
    #[serde(default)]
    pub definition_divergences: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnalysisFailure {
    NecessaryConditions(NecessaryConditionsReport),
    Partition(Vec<WellFormednessViolation>),
}

impl AnalysisFailure {
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        match self {
            AnalysisFailure::NecessaryConditions(report) => {
                let mut out = Vec::new();
                for c in &report.entries_in_range.violations {
                    out.push(Diagnostic::error(
                        "E211",
                        format!("M[{}, {}] = {} is outside {{-1,0,1}}", c.term, c.action, c.value),
                        None,
                    ));
                }
                for a in &report.conservation.violations {
                    out.push(Diagnostic::error("E212", format!("action `{a}` does not conserve therapy terms"), None));
                }
                for a in &report.exclusive_switch_single.violations {
                    out.push(Diagnostic::error(
                        "E213",
                        format!("action `{a}` consumes more than one therapy term"),
                        None,
                    ));
                }
                for a in &report.exclusive_switch_internal.violations {
                    out.push(Diagnostic::error(
                        "E214",
                        format!("action `{a}` consumes a therapy term but is not an internal, species-neutral switch"),
                        None,
                    ));
                }
                out
            }
            AnalysisFailure::Partition(v) => v.iter().map(WellFormednessViolation::to_diagnostic).collect(),
        }
    }
}

/// Runs the necessary conditions, builds the ST-graph, partitions it and
/// builds the mode graph.
pub fn analyze(
    model: &DcgfModel,
    matrix: &StoichiometricMatrix,
    actions: &[GlobalAction],
) -> Result<TherapyAnalysis, AnalysisFailure> {
    let conditions = check_necessary_conditions(matrix, actions);
    if !conditions.pass() {
        return Err(AnalysisFailure::NecessaryConditions(conditions));
    }
    let st_graph = build_st_graph(matrix);
    let switching_therapies =
        partition_switching_therapies(&st_graph, model, actions).map_err(AnalysisFailure::Partition)?;
    let mode_graph = build_mode_graph(&switching_therapies, &st_graph);
    let definition_divergences =
        switching_therapies.iter().flat_map(|st| check_switching_therapy(&st.terms, model, actions)).collect();
    Ok(TherapyAnalysis { conditions, st_graph, switching_therapies, mode_graph, definition_divergences })
}

/// Checks `terms` directly against the three clauses defining a switching
/// therapy and describes each failure.
pub fn check_switching_therapy(terms: &[String], model: &DcgfModel, actions: &[GlobalAction]) -> Vec<String> {
    let set = format!("{{{}}}", terms.join(","));
    let count = |m: &crate::ast::Multiset| terms.iter().map(|t| m.count(t)).sum::<usize>();
    let mut out = Vec::new();
    let initial = count(&model.initial);
    if initial != 1 {
        out.push(format!("{set}: clause 1: {initial} terms initially active"));
    }
    for a in actions {
        let (r, p) = (count(&a.reactants), count(&a.products));
        if r != p || r > 1 {
            out.push(format!("{set}: clause 2: action `{}` consumes {r} and produces {p} terms", a.label));
        }
        let only = |m: &crate::ast::Multiset, u: &str| m.len() == 1 && m.count(u) == 1;
        let switch = terms
            .iter()
            .filter(|u1| a.reactants.count(u1) > 0)
            .find_map(|u1| terms.iter().find(|u2| *u2 != u1 && a.products.count(u2) > 0).map(|u2| (u1, u2)));
        if let Some((u1, u2)) = switch {
            if !(only(&a.reactants, u1) && only(&a.products, u2) && a.is_internal()) {
                out.push(format!(
                    "{set}: clause 3: action `{}` switches {u1} to {u2} but is not an internal action of {u1}",
                    a.label
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::elaborate_actions;
    use crate::builtins;
    use crate::parser::parse;
    use crate::stoichiometry::build_matrix;

    fn prepare(model: &DcgfModel) -> (StoichiometricMatrix, Vec<GlobalAction>) {
        let actions = elaborate_actions(model).unwrap();
        (build_matrix(&actions, model), actions)
    }

    #[test]
    fn sir_therapy_passes_all_conditions() {
        let model = builtins::sir_therapy_model();
        let (m, actions) = prepare(&model);
        let report = check_necessary_conditions(&m, &actions);
        assert!(report.pass(), "{}", report.to_text());
    }

    #[test]
    fn no_therapies_is_vacuous() {
        let model = builtins::sir_model();
        let (m, actions) = prepare(&model);
        assert!(check_necessary_conditions(&m, &actions).pass());
        let g = build_st_graph(&m);
        assert!(g.vertices.is_empty() && g.edges.is_empty());
        let p = partition_switching_therapies(&g, &model, &actions).unwrap();
        assert!(p.is_empty());
        let mg = build_mode_graph(&p, &g);
        assert_eq!(mg.modes, vec![Vec::<usize>::new()]);
        assert_eq!(mg.mode_label(0), "0");
    }

    #[test]
    fn sir_st_graph_edges() {
        let (m, _) = prepare(&builtins::sir_therapy_model());
        let g = build_st_graph(&m);
        let pairs: Vec<(&str, &str)> = g.edges.iter().map(|e| (e.from.as_str(), e.to.as_str())).collect();
        assert_eq!(pairs, [("T1_off", "T1_on"), ("T1_on", "T1_off"), ("T2_off", "T2_on"), ("T2_on", "T2_off")]);
        assert_eq!(g.edges[0].actions, ["tau_1on"]);
    }

    #[test]
    fn three_state_cycle() {
        let src = "therapy A = tau<1>.B\ntherapy B = tau<1>.C\ntherapy C = tau<1>.A\ninit A\n";
        let model = parse(src).unwrap().model;
        let (m, actions) = prepare(&model);
        let g = build_st_graph(&m);
        assert_eq!(g.edges.len(), 3);
        assert!(g.has_edge("A", "B") && g.has_edge("B", "C") && g.has_edge("C", "A"));
        let p = partition_switching_therapies(&g, &model, &actions).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].terms, ["A", "B", "C"]);
    }

    #[test]
    fn one_way_chain_is_one_component() {
        let src = "therapy A = tau<1>.B\ntherapy B = tau<1>.C\ntherapy C = 0\ninit A\n";
        let model = parse(src).unwrap().model;
        let (m, actions) = prepare(&model);
        let p = partition_switching_therapies(&build_st_graph(&m), &model, &actions).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].initially_active, "A");
    }

    #[test]
    fn builtin_components_satisfy_the_definition() {
        let model = builtins::sir_therapy_model();
        let (matrix, actions) = prepare(&model);
        let a = analyze(&model, &matrix, &actions).unwrap();
        assert!(a.definition_divergences.is_empty(), "{:?}", a.definition_divergences);
    }

    #[test]
    fn definition_check_reports_each_clause() {
        let model = parse("therapy A = ?c<1>.B + !c<1>.A\ntherapy B = tau<1>.A\ninit A | A").unwrap().model;
        let actions = elaborate_actions(&model).unwrap();
        let found = check_switching_therapy(&["A".into(), "B".into()], &model, &actions);
        for clause in ["clause 1", "clause 2", "clause 3"] {
            assert!(found.iter().any(|f| f.contains(clause)), "{clause} missing from {found:?}");
        }
    }

    #[test]
    fn sir_partition() {
        let model = builtins::sir_therapy_model();
        let (m, actions) = prepare(&model);
        let p = partition_switching_therapies(&build_st_graph(&m), &model, &actions).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].terms, ["T1_off", "T1_on"]);
        assert_eq!(p[1].terms, ["T2_off", "T2_on"]);
        assert_eq!(p[0].initially_active, "T1_off");
        assert_eq!(p[1].initially_active, "T2_off");
        assert_eq!(p[0].switch_actions, ["tau_1on", "tau_1off"]);
    }

    #[test]
    fn isolated_term_is_singleton() {
        let model = parse("therapy U = 0\ninit U\n").unwrap().model;
        let (m, actions) = prepare(&model);
        let g = build_st_graph(&m);
        let p = partition_switching_therapies(&g, &model, &actions).unwrap();
        assert_eq!(p[0].terms, ["U"]);
        let mg = build_mode_graph(&p, &g);
        assert_eq!(mg.modes.len(), 1);
        assert!(mg.edges.is_empty());
    }

    #[test]
    fn double_initial_count_is_attributed() {
        let mut model = builtins::sir_therapy_model();
        model.initial = ["T1_off", "T1_on", "T2_off"].into_iter().collect();
        let (m, actions) = prepare(&model);
        let errs = partition_switching_therapies(&build_st_graph(&m), &model, &actions).unwrap_err();
        assert_eq!(
            errs,
            [WellFormednessViolation::InitialCount { component: vec!["T1_off".into(), "T1_on".into()], count: 2 }]
        );
        assert!(errs[0].to_diagnostic().message.contains("initial count 2"));
    }

    #[test]
    fn sir_mode_graph() {
        let model = builtins::sir_therapy_model();
        let (m, actions) = prepare(&model);
        let g = build_st_graph(&m);
        let p = partition_switching_therapies(&g, &model, &actions).unwrap();
        let mg = build_mode_graph(&p, &g);
        let labels: Vec<String> = (0..4).map(|q| mg.mode_label(q)).collect();
        assert_eq!(labels, ["T1_off|T2_off", "T1_on|T2_off", "T1_off|T2_on", "T1_on|T2_on"]);
        assert_eq!(mg.initial, 0);
        assert_eq!(mg.edges.len(), 8);
        assert!(mg.edges.contains(&(0, 1)) && mg.edges.contains(&(1, 3)));
        assert!(!mg.edges.contains(&(0, 3)), "diagonal moves flip two therapies");
    }

    #[test]
    fn product_of_two_and_three() {
        let src = "therapy A0 = tau<1>.A1\ntherapy A1 = tau<1>.A0\n\
                   therapy B0 = tau<1>.B1\ntherapy B1 = tau<1>.B2\ntherapy B2 = tau<1>.B0\n\
                   init A0 | B0\n";
        let model = parse(src).unwrap().model;
        let (m, actions) = prepare(&model);
        let g = build_st_graph(&m);
        let p = partition_switching_therapies(&g, &model, &actions).unwrap();
        let mg = build_mode_graph(&p, &g);
        assert_eq!(mg.modes.len(), 6);
        // each mode: one neighbour in A (2-cycle) plus one successor in B (3-cycle)
        for q in 0..6 {
            assert_eq!(mg.edges.iter().filter(|(a, _)| *a == q).count(), 2);
        }
    }
}
