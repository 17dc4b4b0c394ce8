//! Numerical laboratory for the delayed Gause predator-prey model
//!
//! ```text
//! x' = x (1 - x) - x y
//! y' = -s y + Y e^{-s tau} y(t - tau) x(t - tau)
//! ```
//!
//! in scaled form. Modules, from the bottom up:
//!
//! - [`model`]: parameters, scaling, equilibria and thresholds;
//! - [`spectral`]: the characteristic equation at the coexistence
//!   equilibrium, Hopf candidates and the stability profile in the delay;
//! - [`integrator`]: fixed-step RK4 method of steps with dense output;
//! - [`analysis`]: extrema, periods, embeddings, return maps, divergence;
//! - [`sweep`]: orbit diagrams, bistability windows, period doublings.

// `!(v > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod integrator;
pub mod model;
pub mod spectral;
pub mod sweep;

pub use error::{Error, Result};
pub use integrator::{HistorySpec, Trajectory};
pub use model::{EquilibriumSet, Params, RawParams, State};
pub use spectral::{Crossing, HopfCandidate};
pub use sweep::{OrbitDiagramRow, SweepPlan};
