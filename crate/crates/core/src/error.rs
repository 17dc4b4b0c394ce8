use thiserror::Error;

/// Errors produced by the model, spectral, integration and analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("coexistence equilibrium does not exist at delay {tau} (threshold {tau_c})")]
    NoCoexistence { tau: f64, tau_c: f64 },

    #[error("{what} = {value} outside of [{lo}, {hi}]")]
    OutOfDomain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("step {dt} exceeds the delay {tau}")]
    StepExceedsDelay { dt: f64, tau: f64 },

    #[error("state went negative at t = {t}: x = {x}, y = {y}")]
    NegativeState { t: f64, x: f64, y: f64 },

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("too few samples after the transient cut: {0}")]
    TooFewSamples(usize),

    #[error("internal consistency failure: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, Error>;
