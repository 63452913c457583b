use thiserror::Error;

/// Failure modes shared by all solver modules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("adaptive step fell below {min:e} at t = {t}")]
    StepUnderflow { t: f64, min: f64 },
    #[error("requested span {span} exceeds max_time {max_time}")]
    MaxTimeExceeded { span: f64, max_time: f64 },
    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },
    #[error("no event before max time {max_time}")]
    NoEventBeforeMaxTime { max_time: f64 },
    #[error("time {t} outside trajectory range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("mode {mode} is resonant (determinant {det:e})")]
    ResonantMode { mode: i64, det: f64 },
    #[error("iteration not contracting after {iterations} iterations (last ratio {ratio})")]
    NotContracting { iterations: usize, ratio: f64 },
    #[error("time map denominator not positive (min {min})")]
    NonMonotone { min: f64 },
    #[error("no crossing of the target plane before t = {max_time}")]
    NoCrossing { max_time: f64 },
    #[error("miss function has no sign change on [{low}, {high}]")]
    NoSignChange { low: f64, high: f64 },
    #[error("root at a = {a} fails simultaneity check (residual {residual:e})")]
    VerificationFailed { a: f64, residual: f64 },
    #[error("heteroclinic index {0} not in 1..=4")]
    BadIndex(i64),
    #[error("no invariant-plane branch at z = {0}")]
    BadBranch(f64),
    #[error("trajectory spans {span} time units, need at least {required}")]
    TooShort { span: f64, required: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
