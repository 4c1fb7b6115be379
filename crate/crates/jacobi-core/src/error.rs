use thiserror::Error;

/// Errors produced by the particle-system and moment machinery.
#[derive(Debug, Error)]
pub enum Error {
    /// A named parameter constraint was violated.
    #[error("constraint `{name}` violated: {message}")]
    Constraint { name: &'static str, message: String },

    /// A configuration with coinciding or boundary-touching particles was hit
    /// where a strictly interior one is required.
    #[error("singular configuration at t = {time:.6e}: particles ({i}, {j}): {message}")]
    Singular {
        time: f64,
        i: usize,
        j: usize,
        message: String,
    },

    /// An elementary-symmetric vector has no real ordered preimage.
    #[error("not in image: max |Im root| = {max_imag:.3e} exceeds tolerance {tol:.3e}")]
    NotInImage { max_imag: f64, tol: f64 },

    /// Input lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("not implemented: {0}")]
    NotImplemented(String),

    /// A starting configuration cannot be realized inside the state space.
    #[error("infeasible start: {0}")]
    InfeasibleStart(String),

    /// A scaling-regime hypothesis failed validation against the supplied
    /// parameter sequence.
    #[error("regime hypothesis violated: {0}")]
    Hypothesis(String),

    /// Requested order would overflow in floating point.
    #[error("range error: {0}")]
    Range(String),

    /// Noncompact trajectory exceeded the configured growth bound.
    #[error("growth guard tripped at t = {time:.6e}: coordinate magnitude exceeded {bound:.3e}")]
    GrowthGuard { time: f64, bound: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn constraint(name: &'static str, message: impl Into<String>) -> Self {
        Error::Constraint {
            name,
            message: message.into(),
        }
    }
}
