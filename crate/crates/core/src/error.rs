use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (max |A - A^H| = {0:e})")]
    Hermiticity(f64),
    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off:e})")]
    Convergence { sweeps: usize, off: f64 },
    #[error("dimension mismatch: {0}")]
    Dim(String),
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("Kraus set is not complete (max deviation {0:e})")]
    Kraus(f64),
    #[error("zero environment probability for outcome {0}")]
    Support(usize),
    #[error("fixed point of the channel is not unique (gap {gap:e})")]
    NonUniqueStationary { gap: f64 },
    #[error("coupling between levels with different total energy: {0}")]
    Resonance(String),
    #[error("degenerate spectrum: {0}")]
    Degeneracy(String),
    #[error("enumeration needs {needed} trajectories, cap is {cap}; use Monte Carlo sampling")]
    EnumerationCap { needed: u128, cap: u64 },
    #[error("observable check failed: {0}")]
    Observable(String),
    #[error("consistency check failed: {0}")]
    Consistency(String),
    #[error("argument outside domain: {0}")]
    Domain(String),
    #[error("bound violated: {name} margin {margin:e}")]
    BoundViolation { name: String, margin: f64 },
    #[error("matrix is singular: {0}")]
    Singular(String),
    #[error("wrong mode: {0}")]
    Mode(String),
    #[error("accuracy budget exceeded: {0}")]
    Accuracy(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
