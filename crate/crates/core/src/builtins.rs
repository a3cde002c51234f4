//! Models shipped with the crate.

use crate::ast::DcgfModel;
use crate::parser::parse_named;

pub const SIR_SOURCE: &str = include_str!("../models/sir.dcgf");
pub const SIR_THERAPY_SOURCE: &str = include_str!("../models/sir_therapy.dcgf");

/// Names accepted by [`builtin_source`], plus `osteomyelitis`, which has no
/// textual form.
pub const BUILTIN_NAMES: [&str; 3] = ["sir", "sir-therapy", "osteomyelitis"];

pub fn builtin_source(name: &str) -> Option<&'static str> {
    match name {
        "sir" => Some(SIR_SOURCE),
        "sir-therapy" | "sir_therapy" => Some(SIR_THERAPY_SOURCE),
        _ => None,
    }
}

pub fn sir_model() -> DcgfModel {
    parse_named(SIR_SOURCE, Some("sir.dcgf")).expect("bundled model parses").model
}

pub fn sir_therapy_model() -> DcgfModel {
    parse_named(SIR_THERAPY_SOURCE, Some("sir_therapy.dcgf")).expect("bundled model parses").model
}
