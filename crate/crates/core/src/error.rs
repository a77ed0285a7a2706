use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("evolution time must be positive, got t = {0}")]
    NonPositiveTime(f64),

    #[error("wavenumber must be positive, got k = {0}")]
    NonPositiveWavenumber(f64),

    #[error("asymptotic Moshinsky form not valid at |r - kt|/sqrt(t) = {ratio:.3} (needs >= {threshold})")]
    InsideFrontBand { ratio: f64, threshold: f64 },

    #[error("radius {r} outside the allowed interval ({lo}, {hi})")]
    RadiusOutOfDomain { r: f64, lo: f64, hi: f64 },

    #[error("far-field approximation requested outside its validity region (r = {r}, tau = {tau})")]
    OutsideFarField { r: f64, tau: f64 },

    #[error("invalid physical parameters: {0}")]
    InvalidParams(String),

    #[error("spinor has zero norm")]
    ZeroSpinor,

    #[error("wave function node at r = {r}, tau = {tau}")]
    Node { r: f64, tau: f64 },

    #[error("no detector crossing before t_max = {t_max}")]
    MaxTimeExceeded { t_max: f64 },

    #[error("integration hit a wave-function node at r = {r}, tau = {tau}")]
    NodeEncounter { r: f64, tau: f64 },

    #[error("step size underflow at tau = {tau}")]
    StepUnderflow { tau: f64 },

    #[error("{failed} of {total} trajectories failed, above the abort fraction {limit}")]
    TooManyFailures { failed: usize, total: usize, limit: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
