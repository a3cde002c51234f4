//! Disease Chemical Ground Form models: parsing, stoichiometry, therapy
//! analysis, switched-system semantics, simulation and receding-horizon
//! therapy scheduling.

pub mod ast;
pub mod builtins;
pub mod error;
pub mod hybrid;
pub mod mpc;
pub mod parser;
pub mod simulator;
pub mod stoichiometry;
pub mod therapy;

use thiserror::Error;

pub use ast::{Action, ActionKind, DcgfModel, Definition, GlobalAction, Multiset, Rate};
pub use error::{ModelError, StoichiometryError, SystemError};
pub use hybrid::SwitchedSystem;
pub use parser::{parse, Diagnostic};
pub use stoichiometry::{RateExpression, StoichiometricMatrix};
pub use therapy::{AnalysisFailure, TherapyAnalysis};

/// All artifacts derived from a validated model.
#[derive(Debug, Clone)]
pub struct CompiledModel {
    pub actions: Vec<GlobalAction>,
    pub matrix: StoichiometricMatrix,
    pub phi: Vec<RateExpression>,
    pub analysis: TherapyAnalysis,
    pub system: SwitchedSystem,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("{}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Model(Vec<ModelError>),
    #[error(transparent)]
    Stoichiometry(#[from] StoichiometryError),
    #[error("therapy analysis failed")]
    Analysis(AnalysisFailure),
    #[error(transparent)]
    System(#[from] SystemError),
}

impl CompileError {
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        match self {
            CompileError::Model(errs) => {
                errs.iter().map(|e| Diagnostic::error(e.code(), e.to_string(), None)).collect()
            }
            CompileError::Stoichiometry(e) => vec![Diagnostic::error("E301", e.to_string(), None)],
            CompileError::Analysis(f) => f.diagnostics(),
            CompileError::System(e) => vec![Diagnostic::error("E302", e.to_string(), None)],
        }
    }
}

/// Validates `model` and runs the whole pipeline up to the switched system.
pub fn compile_model(model: &DcgfModel) -> Result<CompiledModel, CompileError> {
    model.validate().map_err(CompileError::Model)?;
    let actions = ast::elaborate_actions(model).map_err(CompileError::Model)?;
    let matrix = stoichiometry::build_matrix(&actions, model);
    let phi = stoichiometry::build_rate_vector(&actions)?;
    let analysis = therapy::analyze(model, &matrix, &actions).map_err(CompileError::Analysis)?;
    let system = hybrid::build_switched_system(&matrix, &phi, &analysis.mode_graph, model)?;
    Ok(CompiledModel { actions, matrix, phi, analysis, system })
}
