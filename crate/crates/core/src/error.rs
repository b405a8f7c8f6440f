use thiserror::Error;

/// Errors raised by the simulator, the protocols and the scenario runner.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dense simulation needs {requested} amplitudes but the budget is {limit}; use the branch backend for this size")]
    BudgetExceeded { requested: u128, limit: usize },

    #[error("operator is not unitary (max deviation of U^dag U from identity: {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("register {index} out of range for a layout with {count} registers")]
    InvalidRegister { index: usize, count: usize },

    #[error("duplicate register {0} in target list")]
    DuplicateRegister(usize),

    #[error("invalid projector: {0}")]
    InvalidProjector(String),

    #[error("incomplete measurement: {0}")]
    IncompleteMeasurement(String),

    #[error("register {0} is not in a product state with the rest of the system")]
    NotProduct(usize),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("invalid group: {0}")]
    InvalidGroup(String),

    #[error("representation cannot distinguish group products: {0}")]
    Distinguishability(String),

    #[error("parameters outside the closed-form regime: {0}")]
    OutOfRegime(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
