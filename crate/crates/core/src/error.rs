use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A scalar argument fell outside its admissible domain.
    #[error("{name} out of domain: {reason} (got {value})")]
    Domain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// Two per-RIS/per-element layouts disagree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The moderate-SNR closed form needs a positive radicand for every RIS.
    #[error("moderate-SNR allocation infeasible at RIS {ris}: radicand {radicand} <= 0")]
    Infeasible { ris: usize, radicand: f64 },

    /// The numeric solver hit its iteration cap.
    #[error(
        "exact allocation did not converge after {} iterations (projected gradient {:e})",
        .0.iterations,
        .0.projected_gradient_norm
    )]
    NotConverged(Box<NotConverged>),
}

/// Best iterate and diagnostics carried by [`Error::NotConverged`].
#[derive(Debug, Clone, PartialEq)]
pub struct NotConverged {
    pub iterations: usize,
    pub best_powers: Vec<f64>,
    pub residuals: Vec<f64>,
    pub projected_gradient_norm: f64,
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::Domain {
            name,
            value,
            reason,
        }
    }
}
