use thiserror::Error;

use crate::bobw::CeeiCertificate;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("negative valuation for agent {agent} on good `{good}`")]
    NegativeValuation { agent: usize, good: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("duplicate good id `{0}`")]
    DuplicateGood(String),
    #[error("unknown good id `{0}`")]
    UnknownGood(String),
    #[error("at most {max} goods are supported, got {got}")]
    TooManyGoods { max: usize, got: usize },
    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),
    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),
    #[error("operation not supported for constraint `{0}`")]
    UnsupportedConstraint(String),
    #[error("sets are not bases of the matroid")]
    NotBases,
    #[error("search exceeded the cap of {cap} states")]
    ExplosionGuard { cap: u64 },
    #[error("feasible set is empty")]
    EmptyFeasibleSet,
    #[error("valuations must be strictly positive (agent {agent}, good {good})")]
    NotStrictlyPositive { agent: usize, good: usize },
    #[error("price search did not converge (max residual {max_residual:e})")]
    ConvergenceFailure {
        max_residual: f64,
        certificate: Box<CeeiCertificate>,
    },
    #[error("fractional allocation violates a quota: {0}")]
    ConstraintViolation(String),
    #[error("constraint structure is not a bihierarchy: {0}")]
    NonBihierarchy(String),
    #[error("malformed copies allocation: {0}")]
    MalformedCopiesAllocation(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
