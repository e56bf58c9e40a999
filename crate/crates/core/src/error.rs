use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite value in component {index}")]
    NonFinite { index: usize },

    #[error("state outside model domain: x[{index}] = {value}")]
    Domain { index: usize, value: f64 },

    #[error("durations do not fit in the period: sum of fractions is {sum}")]
    InfeasiblePartition { sum: f64 },

    #[error("fraction {index} must be positive and finite, got {value}")]
    InvalidFraction { index: usize, value: f64 },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("control channel {channel} out of range (m = {m})")]
    ChannelOutOfRange { channel: usize, m: usize },

    #[error("schedule does not satisfy the structural hypothesis: {0}")]
    Hypothesis(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("time {t} outside [0, {tau}]")]
    TimeOutOfRange { t: f64, tau: f64 },

    #[error("trajectory diverged at t = {time} (|x| = {norm})")]
    Divergence { time: f64, norm: f64 },

    #[error("local error estimate {estimate:e} exceeds tolerance {tolerance:e}")]
    StepTolerance { estimate: f64, tolerance: f64 },

    #[error("adaptive step size underflow at t = {time}")]
    StepUnderflow { time: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("singular Newton matrix (residual {residual:e})")]
    SingularNewton { residual: f64 },

    #[error("expansion Jacobian is singular or ill-conditioned (det {determinant:e}, cond {condition:e})")]
    SingularExpansion { determinant: f64, condition: f64 },

    #[error("quadrature needs at least 3 samples per window (window {window} has {samples})")]
    Quadrature { window: usize, samples: usize },

    #[error("leading coefficient routes disagree: {exact} vs fitted {fitted}")]
    CoefficientMismatch { exact: f64, fitted: f64 },

    #[error("configuration error: {0}")]
    Config(String),
}
