//! Crate-wide error type.
//!
//! Errors cross process boundaries (the HTTP layer serializes them and the
//! clients decode them back), so every variant is serde-friendly and carries
//! plain data rather than source errors.

use serde::{Deserialize, Serialize};

use crate::twin::{Datatype, SemanticId, TwinId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "code", content = "detail")]
pub enum Error {
    #[error("invalid identifier: {0}")]
    InvalidId(String),
    #[error("duplicate element name '{name}' in {scope}")]
    DuplicateElementName { scope: String, name: String },
    #[error("semantic id {0} does not resolve in the vocabulary")]
    UnresolvableSemanticId(SemanticId),
    #[error("element {element} violates its concept: {reason}")]
    ConceptViolation { element: String, reason: String },
    #[error("path not found: {0}")]
    PathNotFound(String),
    #[error("datatype mismatch at {path}: expected {expected:?}, got {actual:?}")]
    DatatypeMismatch {
        path: String,
        expected: Datatype,
        actual: Datatype,
    },
    #[error("unit violation for {semantic_id}: expected '{expected}', got '{actual}'")]
    UnitViolation {
        semantic_id: SemanticId,
        expected: String,
        actual: String,
    },
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("signature mismatch for {operation}: {reason}")]
    SignatureMismatch { operation: String, reason: String },
    #[error("element {0} is not writable")]
    NotWritable(String),
    #[error("downstream system unavailable: {0}")]
    DownstreamUnavailable(String),
    #[error("adapter mapping target missing: {0}")]
    MappingTargetMissing(String),
    #[error("invalid adapter specification: {0}")]
    InvalidAdapter(String),

    #[error("concept already registered: {0}")]
    DuplicateConcept(SemanticId),
    #[error("not found: {0}")]
    NotFound(String),

    #[error("twin id already registered: {0}")]
    DuplicateTwinId(TwinId),
    #[error("twin unavailable: {0}")]
    TwinUnavailable(TwinId),
    #[error("twin {0} is not a field twin")]
    NotAFieldTwin(TwinId),

    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("target {target} is not above current value {current}")]
    TargetNotAboveCurrent { current: f64, target: f64 },
    #[error("concept {0} does not support targets")]
    UnsupportedTargetConcept(SemanticId),

    #[error("invalid exchange command: {0}")]
    InvalidCommand(String),
    #[error("access not granted for {principal} on {twin}")]
    AccessNotGranted { principal: String, twin: TwinId },
    #[error("item {item} not found on source twin {twin}")]
    ItemNotFoundOnSource { twin: TwinId, item: SemanticId },

    #[error("parse error: {0}")]
    ParseError(String),
    #[error("step {step} references undeclared role '{role}'")]
    DanglingRoleReference { step: usize, role: String },
    #[error("twin {twin} does not conform to role '{role}'; missing {missing:?}")]
    NonconformantTwin {
        role: String,
        twin: TwinId,
        missing: Vec<SemanticId>,
    },
    #[error("role '{0}' is not bound")]
    UnboundRole(String),
    #[error("step {step} failed: downstream unavailable: {reason}")]
    StepDownstreamUnavailable { step: usize, reason: String },
    #[error("step {step} argument error: {reason}")]
    StepArgumentError { step: usize, reason: String },
    #[error("no recipe registered for process {0}")]
    NoRecipeForProcess(String),
    #[error("target {target} not reached after {passes} passes")]
    TargetUnreachable { passes: u32, target: f64 },

    #[error("port in use: {0}")]
    PortInUse(String),
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("unknown scenario: {0}")]
    ScenarioUnknown(String),
    #[error("unknown system: {0}")]
    UnknownSystem(String),
    #[error("transport error: {0}")]
    Transport(String),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidId(_) => "InvalidId",
            Error::DuplicateElementName { .. } => "DuplicateElementName",
            Error::UnresolvableSemanticId(_) => "UnresolvableSemanticId",
            Error::ConceptViolation { .. } => "ConceptViolation",
            Error::PathNotFound(_) => "PathNotFound",
            Error::DatatypeMismatch { .. } => "DatatypeMismatch",
            Error::UnitViolation { .. } => "UnitViolation",
            Error::InvalidValue(_) => "InvalidValue",
            Error::SignatureMismatch { .. } => "SignatureMismatch",
            Error::NotWritable(_) => "NotWritable",
            Error::DownstreamUnavailable(_) => "DownstreamUnavailable",
            Error::MappingTargetMissing(_) => "MappingTargetMissing",
            Error::InvalidAdapter(_) => "InvalidAdapter",
            Error::DuplicateConcept(_) => "DuplicateConcept",
            Error::NotFound(_) => "NotFound",
            Error::DuplicateTwinId(_) => "DuplicateTwinId",
            Error::TwinUnavailable(_) => "TwinUnavailable",
            Error::NotAFieldTwin(_) => "NotAFieldTwin",
            Error::InvariantViolation(_) => "InvariantViolation",
            Error::TargetNotAboveCurrent { .. } => "TargetNotAboveCurrent",
            Error::UnsupportedTargetConcept(_) => "UnsupportedTargetConcept",
            Error::InvalidCommand(_) => "InvalidCommand",
            Error::AccessNotGranted { .. } => "AccessNotGranted",
            Error::ItemNotFoundOnSource { .. } => "ItemNotFoundOnSource",
            Error::ParseError(_) => "ParseError",
            Error::DanglingRoleReference { .. } => "DanglingRoleReference",
            Error::NonconformantTwin { .. } => "NonconformantTwin",
            Error::UnboundRole(_) => "UnboundRole",
            Error::StepDownstreamUnavailable { .. } => "DownstreamUnavailable",
            Error::StepArgumentError { .. } => "StepArgumentError",
            Error::NoRecipeForProcess(_) => "NoRecipeForProcess",
            Error::TargetUnreachable { .. } => "TargetUnreachable",
            Error::PortInUse(_) => "PortInUse",
            Error::BadConfig(_) => "BadConfig",
            Error::ScenarioUnknown(_) => "ScenarioUnknown",
            Error::UnknownSystem(_) => "UnknownSystem",
            Error::Transport(_) => "Transport",
        }
    }

    /// HTTP status used when the error leaves a server.
    pub fn http_status(&self) -> u16 {
        match self {
            Error::NotFound(_) | Error::PathNotFound(_) | Error::ScenarioUnknown(_) => 404,
            Error::UnknownSystem(_) | Error::NoRecipeForProcess(_) => 404,
            Error::DuplicateConcept(_) | Error::DuplicateTwinId(_) => 409,
            Error::DuplicateElementName { .. } => 409,
            Error::AccessNotGranted { .. } => 403,
            Error::TwinUnavailable(_) => 503,
            Error::DownstreamUnavailable(_) | Error::StepDownstreamUnavailable { .. } => 502,
            Error::Transport(_) => 502,
            Error::NotWritable(_) => 405,
            _ => 422,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::ParseError(e.to_string())
    }
}
