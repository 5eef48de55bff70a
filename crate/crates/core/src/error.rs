use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("parity mismatch: {0}")]
    ParityMismatch(String),

    #[error("mode index {mode} out of range (dealiased cutoff {cutoff})")]
    ModeOutOfRange { mode: usize, cutoff: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("CFL violation at t={t}: number {number:.3} exceeds 1 (dt={dt})")]
    Cfl { t: f64, dt: f64, number: f64 },

    #[error("non-finite state at t={t}")]
    BlowUp { t: f64 },

    #[error("states out of sync: base at t={base}, perturbation at t={perturbation}")]
    Desynchronized { base: f64, perturbation: f64 },

    #[error("incomplete log: {0}")]
    IncompleteLog(String),

    #[error("missing ledger input: {0}")]
    MissingInput(&'static str),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
