use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument is outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("infinite coherence time: no dephasing channel is active")]
    InfiniteCoherence,

    /// Adaptive quadrature ran out of budget. Carries the best estimate.
    #[error("quadrature did not converge: value {value:e}, error estimate {error:e}")]
    Convergence { value: f64, error: f64 },

    #[error("degenerate integration domain: {0}")]
    DegenerateDomain(String),

    #[error("objective is not finite at the starting point")]
    NonFiniteObjective,

    #[error("data does not decay: {0}")]
    NoDecay(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Parameters that cannot be separated by the supplied data.
    #[error("parameters not identifiable ({params}): {reason}")]
    Unidentifiable { params: String, reason: String },
}
