use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the numerical core. Quantities are reported as `f64`
/// whatever the scalar type of the computation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid law: {0}")]
    InvalidLaw(String),

    #[error("moment of order {order} diverges (survival tail does not decay fast enough)")]
    DivergentMoment { order: f64 },

    #[error("moment generating function diverges at rate {beta}: finite only below {threshold}")]
    DivergentMgf { beta: f64, threshold: f64 },

    #[error("integral over [{from}, inf) does not converge")]
    DivergentIntegral { from: f64 },

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("cannot condition on elapsed time {theta}: survival is numerically zero")]
    ConditioningOnNull { theta: f64 },

    #[error("threshold {theta} must exceed the Lorden ratio R = {r}")]
    ThresholdTooSmall { theta: f64, r: f64 },

    #[error("densities have no common part")]
    NoCommonPart,

    #[error("supplied minorant exceeds min(f1, f2) at s = {at}")]
    InvalidMinorant { at: f64 },

    #[error("overlap infimum {kappa} is not positive: no coupling possible")]
    NoCouplingPossible { kappa: f64 },

    #[error("series diverges for q = {q} (requires q < 1)")]
    SeriesDivergent { q: f64 },

    #[error("closed-form and summed series disagree: {summed} vs {closed}")]
    SeriesMismatch { summed: f64, closed: f64 },

    #[error("rate inadmissible: q * M = {q_m} is not below 1")]
    RateInadmissible { q_m: f64 },

    #[error("no admissible exponential rate above {beta_min} (q = {q} too close to 1)")]
    NoExponentialRate { q: f64, beta_min: f64 },

    #[error("empty sample set")]
    EmptySamples,

    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}
