//! Parameters, scaling, equilibria and the closed-form delay thresholds of the
//! delayed predator-prey model
//!
//! ```text
//! x'(t) = x(t)(1 - x(t)) - y(t)x(t)
//! y'(t) = -s y(t) + Y e^{-s tau} y(t - tau) x(t - tau)
//! ```
//!
//! in scaled units, together with the map from the raw (dimensional) model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the (prey, predator) plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub y: f64,
}

impl State {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &State) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

fn require(name: &'static str, value: f64, ok: bool, reason: &'static str) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason,
        })
    }
}

/// Dimensional model constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawParams {
    /// Intrinsic prey growth rate.
    pub growth_rate: f64,
    /// Prey carrying capacity.
    pub capacity: f64,
    /// Maximal capture rate of the predator.
    pub capture_rate: f64,
    /// Predator death rate.
    pub death_rate: f64,
    /// Conversion yield of captured prey into predator biomass.
    pub yield_coef: f64,
    /// Processing delay between capture and conversion.
    pub delay: f64,
}

impl RawParams {
    pub fn new(
        growth_rate: f64,
        capacity: f64,
        capture_rate: f64,
        death_rate: f64,
        yield_coef: f64,
        delay: f64,
    ) -> Result<Self> {
        let raw = Self {
            growth_rate,
            capacity,
            capture_rate,
            death_rate,
            yield_coef,
            delay,
        };
        raw.validate()?;
        Ok(raw)
    }

    pub fn validate(&self) -> Result<()> {
        require(
            "r",
            self.growth_rate,
            self.growth_rate > 0.0,
            "must be positive",
        )?;
        require("K", self.capacity, self.capacity > 0.0, "must be positive")?;
        require(
            "m",
            self.capture_rate,
            self.capture_rate > 0.0,
            "must be positive",
        )?;
        require(
            "s",
            self.death_rate,
            self.death_rate > 0.0,
            "must be positive",
        )?;
        require(
            "Y",
            self.yield_coef,
            self.yield_coef > 0.0,
            "must be positive",
        )?;
        require("tau", self.delay, self.delay >= 0.0, "must be nonnegative")
    }
}

/// Dimensionless model constants. These fully specify the scaled system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Scaled predator death rate `s`.
    pub death_rate: f64,
    /// Scaled yield `Y`.
    pub yield_coef: f64,
    /// Scaled delay `tau`.
    pub delay: f64,
}

impl Params {
    pub fn new(death_rate: f64, yield_coef: f64, delay: f64) -> Result<Self> {
        let p = Self {
            death_rate,
            yield_coef,
            delay,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        require(
            "s",
            self.death_rate,
            self.death_rate > 0.0,
            "must be positive",
        )?;
        require(
            "Y",
            self.yield_coef,
            self.yield_coef > 0.0,
            "must be positive",
        )?;
        require("tau", self.delay, self.delay >= 0.0, "must be nonnegative")
    }

    /// Same death rate and yield, different delay.
    pub fn with_delay(&self, delay: f64) -> Self {
        Self { delay, ..*self }
    }

    /// Fraction of predators surviving the processing delay, `e^{-s tau}`.
    pub fn survival(&self) -> f64 {
        (-self.death_rate * self.delay).exp()
    }

    /// Effective conversion coefficient `Y e^{-s tau}` of the delayed growth term.
    pub fn effective_yield(&self) -> f64 {
        self.yield_coef * self.survival()
    }

    /// Right-hand side of the scaled system given the current and delayed states.
    #[inline]
    pub fn vector_field(&self, now: State, delayed: State) -> State {
        State {
            x: now.x * (1.0 - now.x) - now.y * now.x,
            y: -self.death_rate * now.y + self.effective_yield() * delayed.y * delayed.x,
        }
    }
}

/// Factors converting scaled quantities back to raw units.
///
/// `t_raw = t / time`, `x_raw = prey * x`, `y_raw = predator * y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleFactors {
    pub time: f64,
    pub prey: f64,
    pub predator: f64,
}

impl ScaleFactors {
    pub const IDENTITY: ScaleFactors = ScaleFactors {
        time: 1.0,
        prey: 1.0,
        predator: 1.0,
    };

    pub fn raw_time(&self, t: f64) -> f64 {
        t / self.time
    }

    pub fn raw_state(&self, s: State) -> State {
        State {
            x: s.x * self.prey,
            y: s.y * self.predator,
        }
    }
}

/// Scaled parameters plus the factors needed to map results back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaled {
    pub params: Params,
    pub factors: ScaleFactors,
}

/// Removes units: `t -> r t`, `x -> x/K`, `y -> m y / r`, giving
/// `(s/r, Y K m / r, r tau)`.
pub fn scale(raw: &RawParams) -> Scaled {
    let r = raw.growth_rate;
    Scaled {
        params: Params {
            death_rate: raw.death_rate / r,
            yield_coef: raw.yield_coef * raw.capacity * raw.capture_rate / r,
            delay: r * raw.delay,
        },
        factors: ScaleFactors {
            time: r,
            prey: raw.capacity,
            predator: r / raw.capture_rate,
        },
    }
}

/// The three candidate equilibria and the two delay thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSet {
    /// Trivial equilibrium (0, 0).
    pub extinction: State,
    /// Prey-only equilibrium (1, 0).
    pub prey_only: State,
    /// Coexistence equilibrium, present iff `0 <= tau < tau_c`.
    pub coexistence: Option<State>,
    /// Delay at which the coexistence equilibrium merges with the prey-only
    /// one. Negative when `Y < s`, i.e. coexistence is never possible.
    pub tau_c: f64,
    /// Delay beyond which no purely imaginary characteristic roots exist.
    pub tau_star: f64,
}

/// `tau_c = ln(Y/s) / s`.
pub fn coexistence_threshold(p: &Params) -> f64 {
    (p.yield_coef / p.death_rate).ln() / p.death_rate
}

/// `tau* = ln(Y/(3s)) / s`.
pub fn hopf_threshold(p: &Params) -> f64 {
    (p.yield_coef / (3.0 * p.death_rate)).ln() / p.death_rate
}

/// Prey component of the coexistence equilibrium, `(s/Y) e^{s tau}`, as an
/// analytic function of `tau` (meaningful only below `tau_c`).
pub fn coexistence_prey(p: &Params, tau: f64) -> f64 {
    p.death_rate / p.yield_coef * (p.death_rate * tau).exp()
}

pub fn equilibria(p: &Params) -> EquilibriumSet {
    let tau_c = coexistence_threshold(p);
    let coexistence = if p.delay < tau_c {
        let x = coexistence_prey(p, p.delay);
        Some(State::new(x, 1.0 - x))
    } else if p.delay == 0.0 && tau_c == 0.0 {
        // Y = s: E+ sits on top of E1.
        Some(State::new(1.0, 0.0))
    } else {
        None
    };
    EquilibriumSet {
        extinction: State::new(0.0, 0.0),
        prey_only: State::new(1.0, 0.0),
        coexistence,
        tau_c,
        tau_star: hopf_threshold(p),
    }
}

/// Basic reproduction number of the predator at prey density `x`:
/// `R(x) = Y e^{-s tau} x / s`.
pub fn reproduction_number(p: &Params, x: f64) -> f64 {
    p.effective_yield() * x / p.death_rate
}

/// Upper bound on the predator density along any solution, obtained by
/// comparison for `w(t) = Y e^{-s tau} x(t - tau) + y(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredatorBound {
    pub initial_mass: f64,
    pub asymptote: f64,
    pub decay_rate: f64,
}

impl PredatorBound {
    /// `w0 e^{-st} + asymptote (1 - e^{-st})`.
    pub fn at(&self, t: f64) -> f64 {
        let decay = (-self.decay_rate * t).exp();
        self.initial_mass * decay + self.asymptote * (1.0 - decay)
    }
}

/// `w0` must be `Y e^{-s tau} x(-tau) + y(0)` for the initial data at hand.
pub fn predator_bound(p: &Params, w0: f64) -> PredatorBound {
    let s = p.death_rate;
    PredatorBound {
        initial_mass: w0,
        asymptote: p.effective_yield() * (s + 1.0).powi(2) / (4.0 * s),
        decay_rate: s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn paper_params(tau: f64) -> Params {
        Params::new(0.02, 0.6, tau).unwrap()
    }

    #[test]
    fn unit_raw_params_scale_to_themselves() {
        let raw = RawParams::new(1.0, 1.0, 1.0, 0.02, 0.6, 90.0).unwrap();
        let scaled = scale(&raw);
        assert_eq!(scaled.params, paper_params(90.0));
        assert_eq!(scaled.factors, ScaleFactors::IDENTITY);

        let raw = RawParams::new(1.0, 1.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        assert_eq!(scale(&raw).params, Params::new(1.0, 1.0, 0.0).unwrap());
    }

    #[test]
    fn doubled_growth_rate_halves_time() {
        let raw = RawParams::new(2.0, 1.0, 1.0, 0.04, 1.2, 45.0).unwrap();
        let p = scale(&raw).params;
        assert_relative_eq!(p.death_rate, 0.02, max_relative = 1e-15);
        assert_relative_eq!(p.yield_coef, 0.6, max_relative = 1e-15);
        assert_relative_eq!(p.delay, 90.0, max_relative = 1e-15);
        let f = scale(&raw).factors;
        assert_eq!(f.raw_time(90.0), 45.0);
        assert_eq!(f.raw_state(State::new(0.5, 0.5)), State::new(0.5, 1.0));
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(Params::new(0.0, 0.6, 1.0).is_err());
        assert!(Params::new(0.02, -1.0, 1.0).is_err());
        assert!(Params::new(0.02, 0.6, -1.0).is_err());
        assert!(Params::new(f64::NAN, 0.6, 1.0).is_err());
        assert!(RawParams::new(0.0, 1.0, 1.0, 0.02, 0.6, 1.0).is_err());
    }

    #[test]
    fn thresholds_for_reference_parameters() {
        let eq = equilibria(&paper_params(0.0));
        assert_relative_eq!(eq.tau_c, 50.0 * 30f64.ln(), epsilon = 1e-9);
        assert_relative_eq!(eq.tau_star, 50.0 * 10f64.ln(), epsilon = 1e-9);
        assert!((eq.tau_c - 170.0).abs() < 0.1);
        assert!((eq.tau_star - 115.0).abs() < 0.2);
        let e = eq.coexistence.unwrap();
        assert_relative_eq!(e.x, 1.0 / 30.0, max_relative = 1e-14);
        assert_relative_eq!(e.y, 29.0 / 30.0, max_relative = 1e-14);
        assert_eq!(eq.extinction, State::new(0.0, 0.0));
        assert_eq!(eq.prey_only, State::new(1.0, 0.0));
    }

    #[test]
    fn coexistence_absent_beyond_threshold() {
        assert!(equilibria(&paper_params(180.0)).coexistence.is_none());
        assert!(equilibria(&paper_params(170.0)).coexistence.is_some());
    }

    #[test]
    fn yield_equal_to_death_rate_degenerates() {
        let eq = equilibria(&Params::new(1.0, 1.0, 0.0).unwrap());
        assert_eq!(eq.tau_c, 0.0);
        assert_eq!(eq.coexistence, Some(eq.prey_only));
    }

    #[test]
    fn negative_threshold_when_yield_below_death_rate() {
        let eq = equilibria(&Params::new(0.5, 0.1, 0.0).unwrap());
        assert!(eq.tau_c < 0.0);
        assert!(eq.coexistence.is_none());
    }

    #[test]
    fn reproduction_number_examples() {
        let p = paper_params(0.0);
        assert_relative_eq!(
            reproduction_number(&p, 1.0 / 30.0),
            1.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(reproduction_number(&p, 1.0), 30.0, max_relative = 1e-14);
        assert_eq!(reproduction_number(&p, 0.0), 0.0);
    }

    #[test]
    fn predator_bound_examples() {
        let b = predator_bound(&paper_params(0.0), 0.0);
        assert_relative_eq!(
            b.asymptote,
            0.6 * 1.02f64.powi(2) / 0.08,
            max_relative = 1e-14
        );
        assert_relative_eq!(b.asymptote, 7.803, max_relative = 1e-12);
        assert_eq!(b.at(0.0), 0.0);
        let b2 = predator_bound(&paper_params(0.0), 100.0);
        assert_relative_eq!(b2.at(1e5), b.asymptote, max_relative = 1e-12);
        assert_eq!(b2.at(0.0), 100.0);
    }

    proptest! {
        #[test]
        fn coexistence_sums_to_one(s in 0.001f64..1.0, ratio in 1.01f64..100.0, frac in 0.0f64..0.999) {
            let y = s * ratio;
            let tau_c = coexistence_threshold(&Params::new(s, y, 0.0).unwrap());
            let p = Params::new(s, y, frac * tau_c).unwrap();
            let eq = equilibria(&p);
            let e = eq.coexistence.unwrap();
            prop_assert!(e.x > 0.0 && e.x <= 1.0);
            prop_assert!((e.x + e.y - 1.0).abs() < 1e-12);
            prop_assert!((reproduction_number(&p, e.x) - 1.0).abs() < 1e-9);
            if eq.tau_star > 0.0 {
                prop_assert!(eq.tau_star < eq.tau_c);
            }
        }

        #[test]
        fn coexistence_merges_with_prey_only_at_threshold(s in 0.001f64..1.0, ratio in 1.01f64..100.0) {
            let p = Params::new(s, s * ratio, 0.0).unwrap();
            let tau_c = coexistence_threshold(&p);
            let e = equilibria(&p.with_delay(tau_c * (1.0 - 1e-9))).coexistence.unwrap();
            prop_assert!((e.x - 1.0).abs() < 1e-6);
            prop_assert!(e.y.abs() < 1e-6);
            prop_assert!(equilibria(&p.with_delay(tau_c * (1.0 + 1e-9))).coexistence.is_none());
        }

        #[test]
        fn scaled_threshold_is_growth_rate_times_raw(
            r in 0.1f64..10.0, k in 0.1f64..10.0, m in 0.1f64..10.0,
            s in 0.01f64..1.0, y in 0.01f64..10.0,
        ) {
            let raw = RawParams::new(r, k, m, s, y, 1.0).unwrap();
            let raw_tau_c = (y * k * m / s).ln() / s;
            let scaled_tau_c = coexistence_threshold(&scale(&raw).params);
            prop_assert!((scaled_tau_c - r * raw_tau_c).abs() <= 1e-9 * (1.0 + scaled_tau_c.abs()));
        }
    }
}
