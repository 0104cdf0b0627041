use thiserror::Error;

/// Errors produced by configuration validation, the numerical kernels, and
/// the simulation engines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NomaError {
    /// A parameter lies outside its documented domain.
    #[error("parameter `{name}` out of domain: {detail}")]
    ParameterDomain { name: &'static str, detail: String },

    /// The power allocation cannot support the requested rates: some
    /// interference-cancellation stage is left with a non-positive decode
    /// margin. Indices are 1-based (stream, then decode stage).
    #[error("infeasible power allocation at stream {stream}, user order {user_order}: {detail}")]
    InfeasibleAllocation {
        stream: usize,
        user_order: usize,
        detail: String,
    },

    /// The effective covariance of the precoded channel is singular, so
    /// per-stream noise amplification is undefined.
    #[error("degenerate precoder: {0}")]
    DegeneratePrecoder(String),

    /// The Friis path-loss model is undefined at zero distance.
    #[error("path loss undefined at zero distance")]
    SingularDistance,

    /// Series argument beyond the trusted range; the quadrature path must be
    /// used instead.
    #[error("series argument {x} exceeds the switch threshold {threshold}; use the quadrature path")]
    SeriesRangeRefused { x: f64, threshold: f64 },

    /// The alternating series failed to converge within its term budget.
    #[error("series did not converge within {max_terms} terms at argument {x}")]
    SeriesNotConverged { x: f64, max_terms: usize },

    /// Adaptive quadrature exhausted its subdivision budget before meeting
    /// the requested tolerances; carries the best estimate found.
    #[error("quadrature accuracy not reached: best estimate {best} with error bound {err_bound}")]
    AccuracyNotReached { best: f64, err_bound: f64 },

    /// A sampled channel realization was numerically rank-deficient.
    #[error("degenerate channel draw (condition estimate {cond:e})")]
    DegenerateDraw { cond: f64 },

    /// Any other domain violation.
    #[error("{0}")]
    Domain(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, NomaError>;
