use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// Population leaked into the top Fock levels of the truncated space.
    #[error("truncation error: population {population:.3e} in the top two Fock levels of n_max = {n_max}")]
    Truncation { population: f64, n_max: usize },

    /// A truncated sum lacks Fock levels above `n`.
    #[error("truncation error: level {n} needs n_max ≥ {required}, have {n_max}")]
    Headroom {
        n: usize,
        required: usize,
        n_max: usize,
    },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("degenerate pulse: reference Rabi rate for Δn = {delta_n}, n = {reference_n} is zero")]
    DegeneratePulse { delta_n: i32, reference_n: usize },

    /// Eigenvector assignment failed; perturbation theory is not applicable.
    #[error("strong coupling: eigenvector {index} has maximal pair overlap {overlap:.3} < 0.5")]
    StrongCoupling { index: usize, overlap: f64 },

    #[error("unidentifiable estimate: {0}")]
    Unidentifiable(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than a failed computation.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Domain(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
