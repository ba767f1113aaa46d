use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report. Variant names double as the
/// machine-readable error names emitted by the command line front end.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("malformed matrix literal: {0}")]
    MalformedMatrix(String),
    #[error("missing table `{0}`")]
    MissingTable(String),
    #[error("{what} refers to unknown bus {bus}")]
    DanglingReference { what: String, bus: i64 },
    #[error("network graph is disconnected")]
    DisconnectedGraph,
    #[error("branch {from}-{to} has non-positive reactance {reactance}")]
    ZeroReactance { from: i64, to: i64, reactance: f64 },
    #[error("more than one generator on bus {0}")]
    DuplicateGeneratorBus(i64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid tie line: {0}")]
    InvalidTie(String),
    #[error("chained network is disconnected")]
    DisconnectedChain,
    #[error("matrix is singular (pivot {pivot:e} below {threshold:e})")]
    Singular { pivot: f64, threshold: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("optimal power flow is infeasible")]
    Infeasible,
    #[error("optimal power flow is unbounded")]
    Unbounded,
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("load is not a regular point: {found} binding inequalities, expected {expected}")]
    DegeneratePoint { found: usize, expected: usize },
    #[error("binding constraints are linearly dependent")]
    DependentBindings,
    #[error("binding set violates |S_G| + |S_B| = N_G - 1: {0}")]
    CardinalityViolation(String),
    #[error("binding set changes inside the finite-difference stencil for load {load}")]
    RegionBoundary { load: usize },
    #[error("no independent binding set exists")]
    NoValidSet,
    #[error("load set is empty")]
    EmptyLoadSet,
    #[error("index out of range: {0}")]
    InvalidIndex(String),
    #[error("no path between generator {gen} and load {load}")]
    NoPath { gen: usize, load: usize },
}

impl Error {
    /// Stable variant name.
    pub fn name(&self) -> &'static str {
        match self {
            Error::MalformedMatrix(_) => "MalformedMatrix",
            Error::MissingTable(_) => "MissingTable",
            Error::DanglingReference { .. } => "DanglingReference",
            Error::DisconnectedGraph => "DisconnectedGraph",
            Error::ZeroReactance { .. } => "ZeroReactance",
            Error::DuplicateGeneratorBus(_) => "DuplicateGeneratorBus",
            Error::InvalidParams(_) => "InvalidParams",
            Error::InvalidTie(_) => "InvalidTie",
            Error::DisconnectedChain => "DisconnectedChain",
            Error::Singular { .. } => "Singular",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::Infeasible => "Infeasible",
            Error::Unbounded => "Unbounded",
            Error::NumericalFailure(_) => "NumericalFailure",
            Error::DegeneratePoint { .. } => "DegeneratePoint",
            Error::DependentBindings => "DependentBindings",
            Error::CardinalityViolation(_) => "CardinalityViolation",
            Error::RegionBoundary { .. } => "RegionBoundary",
            Error::NoValidSet => "NoValidSet",
            Error::EmptyLoadSet => "EmptyLoadSet",
            Error::InvalidIndex(_) => "InvalidIndex",
            Error::NoPath { .. } => "NoPath",
        }
    }
}
