use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid field data: {0}")]
    InvalidField(String),
    #[error("missing splitting data for p = {0}")]
    MissingSplittingData(u64),
    #[error("invalid units: {0}")]
    InvalidUnits(String),
    #[error("an embedding is within tolerance of zero")]
    NearZeroEmbedding,
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("factorization budget exceeded: {0}")]
    FactorizationBudget(String),
    #[error("precondition unmet: {0}")]
    PreconditionUnmet(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("local density not stabilized at level {level} (defect {defect})")]
    NotStabilized { level: u32, defect: String },
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BudgetExceeded(_) | Error::FactorizationBudget(_) => 3,
            Error::InvariantViolation(_) | Error::NotStabilized { .. } => 1,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::InvalidConfig(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
