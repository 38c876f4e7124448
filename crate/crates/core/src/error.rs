//! Error taxonomy shared by every engine module.
//!
//! The variants mirror how callers are expected to react: structural and
//! argument errors are programming or configuration mistakes, numerical
//! errors mean a repair already failed, and inconsistent evidence is a
//! legitimate runtime outcome the controller must surface rather than mask.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    /// The network itself is malformed (cycles, dangling parents, CLG
    /// restriction breaches). Produced by operations that require a valid
    /// network and were handed something `validate` would reject.
    #[error("structural error: {0}")]
    Structural(String),

    /// A caller passed something that does not fit the operation: unknown
    /// node, out-of-range state index, a branch that does not cover the
    /// evidence it was asked to absorb.
    #[error("argument error: {0}")]
    Argument(String),

    /// A variable was used with the wrong kind (discrete where continuous is
    /// required, or the same variable claimed as both).
    #[error("domain error: {0}")]
    Domain(String),

    /// Division of a non-void configuration by a void one. The void/void
    /// case is defined (void); this one is not.
    #[error("undefined division: {0}")]
    UndefinedDivision(String),

    /// Linear algebra gave up after the one permitted floor repair:
    /// a precision block that must be positive definite is not.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Entered evidence has zero likelihood under the model.
    #[error("inconsistent evidence: {0}")]
    InconsistentEvidence(String),

    /// An enumeration would exceed its configured cap.
    #[error("capacity exceeded: {0} configurations (cap {1})")]
    Capacity(u64, u64),

    /// A compiled artifact does not match the network or evidence it is
    /// being used with (hash mismatch, missing file, wrong schema version).
    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, EngineError>;
