//! Shared fixtures for the benchmarks.

use pdelay_core::integrator::{integrate_with, IntegrateOptions};
use pdelay_core::{HistorySpec, Params, Trajectory};

/// Reference parameters with the given delay.
pub fn params(tau: f64) -> Params {
    Params::new(0.02, 0.6, tau).expect("reference parameters are valid")
}

pub fn history() -> HistorySpec {
    HistorySpec::constant(0.1, 0.1)
}

/// A settled stretch of length `record` after `transient`.
pub fn settled(tau: f64, transient: f64, record: f64) -> Trajectory {
    integrate_with(
        &params(tau),
        &history(),
        transient + record,
        IntegrateOptions {
            dt_target: 0.05,
            record_from: transient,
        },
    )
    .expect("reference run integrates")
}
