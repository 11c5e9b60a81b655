//! Error types for the library surface.

use thiserror::Error;

/// Errors from state construction and the named-state registry.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum StateError {
    /// A factor's amplitudes had norm at or below the zero threshold.
    #[error("factor has (near-)zero norm and cannot be canonicalized")]
    ZeroFactor,
    /// Attempt to register a named state under a name that is already taken.
    #[error("named state \"{0}\" is already registered")]
    DuplicateName(String),
    /// A vector that must be unit length was not.
    #[error("vector is not normalized (norm = {norm})")]
    NotNormalized { norm: f64 },
    /// A registered state vector must have length 2^k for some k >= 1.
    #[error("named state \"{name}\" has invalid length {len} (expected a power of two >= 2)")]
    BadDimension { name: String, len: usize },
    /// Registry names must be nonempty and free of ket delimiter characters.
    #[error("invalid state name \"{0}\"")]
    BadName(String),
}

/// Errors from parsing and validating circuits.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum CircuitError {
    /// Syntax error with 1-based line and column.
    #[error("line {line}, column {col}: {msg}")]
    Parse {
        line: usize,
        col: usize,
        msg: String,
    },
    /// Semantic error; carries the offending line when known.
    #[error("{}{msg}", .line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Validation { line: Option<usize>, msg: String },
}

impl CircuitError {
    pub fn validation(line: Option<usize>, msg: impl Into<String>) -> Self {
        CircuitError::Validation {
            line,
            msg: msg.into(),
        }
    }
}

/// Errors from the branch engine.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum EngineError {
    /// A control wire sits inside a multi-wire block factor, so per-assignment
    /// effective actions are not defined; callers fall back to the generic path.
    #[error("control wire {wire} lies inside an entangled block factor")]
    ControlEntangled { wire: usize },
    /// The branch count would exceed the policy budget.
    #[error("branch budget exceeded: {needed} branches needed, limit is {limit}")]
    BranchBudgetExceeded { needed: usize, limit: usize },
}

/// Errors from the dense oracle.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum OracleError {
    #[error("circuit has {0} qubits; the dense oracle supports at most 20")]
    TooManyQubits(usize),
    #[error("states have different wire counts ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error(transparent)]
    Engine(#[from] EngineError),
}
