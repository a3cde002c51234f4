use thiserror::Error;

use crate::ast::{ActionKind, Site};

/// Semantic errors in a model: name resolution, channels and rates.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("duplicate definition of `{name}`")]
    DuplicateDefinition { name: String, site: Site },
    #[error("`{name}` is defined both as a species and as a therapy")]
    NameClash { name: String, site: Site },
    #[error("undeclared term `{name}`")]
    UndeclaredTerm { name: String, site: Option<Site> },
    #[error("undeclared parameter `{name}`")]
    UndeclaredParameter { name: String, site: Site },
    #[error("parameter `{0}` is not bound")]
    UnboundParameter(String),
    #[error("initial population of `{name}` must be a nonnegative number, got {value}")]
    NegativePopulation { name: String, value: f64 },
    #[error("unmatched channel {channel}: no {} prefix", kind_word(.missing))]
    UnmatchedChannel { channel: String, missing: ActionKind, site: Site },
    #[error("rate mismatch on channel {channel}: expected <{expected}>, found <{found}>")]
    ChannelRateMismatch { channel: String, expected: String, found: String, site: Site },
    #[error("duplicate action label `{0}`")]
    DuplicateLabel(String),
}

fn kind_word(kind: &ActionKind) -> &'static str {
    match kind {
        ActionKind::Input => "input",
        ActionKind::Output => "output",
        ActionKind::Internal => "internal",
    }
}

impl ModelError {
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::DuplicateDefinition { .. } => "E101",
            ModelError::NameClash { .. } => "E102",
            ModelError::UndeclaredTerm { .. } => "E103",
            ModelError::UndeclaredParameter { .. } => "E104",
            ModelError::UnboundParameter(_) => "E105",
            ModelError::NegativePopulation { .. } => "E106",
            ModelError::UnmatchedChannel { .. } => "E107",
            ModelError::ChannelRateMismatch { .. } => "E108",
            ModelError::DuplicateLabel(_) => "E109",
        }
    }

    pub fn site(&self) -> Option<&Site> {
        match self {
            ModelError::DuplicateDefinition { site, .. }
            | ModelError::NameClash { site, .. }
            | ModelError::UndeclaredParameter { site, .. }
            | ModelError::UnmatchedChannel { site, .. }
            | ModelError::ChannelRateMismatch { site, .. } => Some(site),
            ModelError::UndeclaredTerm { site, .. } => site.as_ref(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StoichiometryError {
    #[error("action `{label}` has {count} reactants; rate expressions support at most two")]
    TooManyReactants { label: String, count: usize },
    #[error("rate of action `{label}` depends on therapy term `{term}`; resolve therapies through the switched-system semantics")]
    TherapyInRate { label: String, term: String },
    #[error("symbol `{0}` is not bound")]
    UnboundSymbol(String),
    #[error("state has {found} entries, expected {expected}")]
    StateDimension { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Stoichiometry(#[from] StoichiometryError),
    #[error("parameter `{0}` is missing")]
    MissingParameter(String),
    #[error("parameter `{name}` must be positive, got {value}")]
    NonPositive { name: String, value: f64 },
    #[error("therapies are not well-formed: {0}")]
    IllFormed(String),
}
