use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate denominator |G| = {magnitude:e}: decay-free resonance has no stationary solution")]
    DegenerateDenominator { magnitude: f64 },

    #[error("harmonic block system is numerically singular at block {block}")]
    SingularSystem { block: usize },

    #[error("time-domain integration did not reach a periodic steady state: consecutive periods differ by {relative_change:e}")]
    NotConverged { relative_change: f64 },

    #[error("quadrature did not converge: {0}")]
    NonConvergent(String),

    #[error("response curve grid is empty")]
    EmptyGrid,

    #[error("response curve has no normalization reference")]
    NotNormalized,

    #[error("frequency {0:e} rad/s lies outside the curve's grid")]
    OutOfRange(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no interior maximum: optimum sits at the {0} edge of the bracket")]
    NoInteriorMax(&'static str),

    #[error("fit did not converge after {iterations} iterations (residual norm {residual_norm:e})")]
    FitNotConverged { iterations: usize, residual_norm: f64 },

    #[error("initial guess gives a non-finite residual")]
    BadGuess,

    #[error("response slope must be positive")]
    ZeroSlope,
}
