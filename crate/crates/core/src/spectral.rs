//! Linear stability of the coexistence equilibrium.
//!
//! At `E+` the characteristic function reduces to
//!
//! ```text
//! P(lambda) = lambda^2 + a lambda + (b lambda + c) e^{-lambda tau} + d
//! ```
//!
//! with delay-dependent coefficients. Purely imaginary roots `i omega` exist
//! exactly where the curve `tau * omega_plus(tau)` meets one of the shifted
//! angle curves `theta(tau) + 2 n pi`; the relative slopes at the meeting
//! point give the crossing direction.

use std::f64::consts::PI;

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{coexistence_prey, coexistence_threshold, hopf_threshold, Params};

/// Default number of grid points used by the Hopf scan.
pub const DEFAULT_SCAN_POINTS: usize = 10_000;
/// Bisection stops once the scan function is below this magnitude.
pub const ROOT_TOLERANCE: f64 = 1e-9;
/// Slope gaps smaller than this are reported as suspected tangencies.
pub const TANGENCY_TOLERANCE: f64 = 1e-6;

/// Coefficients of the characteristic function at `E+`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharCoeffs {
    /// Coefficient of `lambda`: `s (1 + e^{s tau}/Y)`.
    pub linear: f64,
    /// Coefficient of `lambda e^{-lambda tau}`: always `-s`.
    pub delayed_linear: f64,
    /// Coefficient of `e^{-lambda tau}`: `s (1 - 2 s e^{s tau}/Y)`.
    pub delayed_const: f64,
    /// Constant term: `s^2 e^{s tau}/Y`.
    pub constant: f64,
}

pub fn coeffs(p: &Params, tau: f64) -> CharCoeffs {
    let s = p.death_rate;
    let x = coexistence_prey(p, tau);
    CharCoeffs {
        linear: s + x,
        delayed_linear: -s,
        delayed_const: s * (1.0 - 2.0 * x),
        constant: s * x,
    }
}

fn require_coexistence(p: &Params, tau: f64) -> Result<()> {
    let tau_c = coexistence_threshold(p);
    if tau >= 0.0 && tau < tau_c {
        Ok(())
    } else {
        Err(Error::NoCoexistence { tau, tau_c })
    }
}

/// Evaluates the characteristic function at `E+` for delay `tau`.
pub fn char_eval(p: &Params, tau: f64, lambda: Complex64) -> Result<Complex64> {
    require_coexistence(p, tau)?;
    let k = coeffs(p, tau);
    let delayed = (k.delayed_linear * lambda + k.delayed_const) * (-lambda * tau).exp();
    Ok(lambda * lambda + k.linear * lambda + delayed + k.constant)
}

/// Both roots `z = omega^2` of `z^2 + b z + c = 0`, larger first, computed
/// without cancellation. `None` when the discriminant is negative.
pub fn quadratic_roots(b: f64, c: f64) -> Option<(f64, f64)> {
    let disc = b * b - 4.0 * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    if q == 0.0 {
        return Some((0.0, 0.0));
    }
    let (r1, r2) = (q, c / q);
    Some(if r1 >= r2 { (r1, r2) } else { (r2, r1) })
}

/// The quartic in `omega` obtained by requiring `P(i omega) = 0`, written as a
/// quadratic in `omega^2`: returns `(p^2 - q^2 - 2 alpha, alpha^2 - c^2)`.
pub fn quartic_coeffs(k: &CharCoeffs) -> (f64, f64) {
    (
        k.linear * k.linear - k.delayed_linear * k.delayed_linear - 2.0 * k.constant,
        k.constant * k.constant - k.delayed_const * k.delayed_const,
    )
}

/// Residual of the quartic relative to the magnitude of its terms.
pub fn quartic_residual(k: &CharCoeffs, omega: f64) -> f64 {
    let (b, c) = quartic_coeffs(k);
    let w2 = omega * omega;
    let terms = [w2 * w2, b * w2, c];
    let scale = terms.iter().map(|t| t.abs()).fold(0.0, f64::max);
    let sum: f64 = terms.iter().sum();
    if scale == 0.0 {
        0.0
    } else {
        sum.abs() / scale
    }
}

/// Squared frequencies on both branches, `(omega_plus^2, omega_minus^2)`.
/// For this model the minus branch is never positive, but the split is
/// kept available for characteristic functions of the same form.
pub fn omega_squared_branches(k: &CharCoeffs) -> Option<(f64, f64)> {
    let (b, c) = quartic_coeffs(k);
    quadratic_roots(b, c)
}

/// `omega_plus` extended continuously to `[0, tau*]` (zero at `tau*`).
fn omega_plus_closed(p: &Params, tau: f64) -> f64 {
    let s = p.death_rate;
    let x = coexistence_prey(p, tau);
    // omega^2 = 2 s^2 (1-3x)(1-x) / (x^2 + sqrt(x^4 + 4 s^2 (3x-1)(x-1)))
    let num = 2.0 * s * s * (1.0 - 3.0 * x) * (1.0 - x);
    let disc = x.powi(4) + 4.0 * s * s * (3.0 * x - 1.0) * (x - 1.0);
    let den = x * x + disc.max(0.0).sqrt();
    (num / den).max(0.0).sqrt()
}

/// The unique positive root of the quartic for `0 <= tau < tau*`.
pub fn omega_plus(p: &Params, tau: f64) -> Option<f64> {
    let tau_star = hopf_threshold(p);
    if !(tau >= 0.0 && tau < tau_star) {
        return None;
    }
    let w = omega_plus_closed(p, tau);
    (w > 0.0).then_some(w)
}

/// `sin(tau omega)` required by `P(i omega) = 0`.
pub fn h1(p: &Params, omega: f64, tau: f64) -> f64 {
    let s = p.death_rate;
    let x = coexistence_prey(p, tau);
    let w2 = omega * omega;
    let den = (1.0 - 2.0 * x).powi(2) + w2;
    omega / s * (s + x - s * x - 2.0 * x * x - w2) / den
}

/// `cos(tau omega)` required by `P(i omega) = 0`.
pub fn h2(p: &Params, omega: f64, tau: f64) -> f64 {
    let s = p.death_rate;
    let x = coexistence_prey(p, tau);
    let w2 = omega * omega;
    let den = (1.0 - 2.0 * x).powi(2) + w2;
    (w2 * (1.0 + s - x) - (1.0 - 2.0 * x) * s * x) / (s * den)
}

/// `theta(tau) = arccos h2(omega_plus(tau), tau)` on `[0, tau*]`.
pub fn theta(p: &Params, tau: f64) -> Result<f64> {
    let tau_star = hopf_threshold(p);
    if !(tau >= 0.0 && tau <= tau_star) {
        return Err(Error::OutOfDomain {
            what: "tau",
            value: tau,
            lo: 0.0,
            hi: tau_star.max(0.0),
        });
    }
    Ok(theta_unchecked(p, tau))
}

fn theta_unchecked(p: &Params, tau: f64) -> f64 {
    let w = omega_plus_closed(p, tau);
    h2(p, w, tau).clamp(-1.0, 1.0).acos()
}

/// `tau omega_plus(tau) - theta(tau)`; roots of this minus `2 n pi` are the
/// delays with a purely imaginary pair.
fn phase_gap(p: &Params, tau: f64) -> f64 {
    tau * omega_plus_closed(p, tau) - theta_unchecked(p, tau)
}

/// Direction in which a root pair crosses the imaginary axis as the delay
/// increases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Crossing {
    /// Into the right half plane (destabilizing).
    LeftToRight,
    /// Back into the left half plane (stabilizing).
    RightToLeft,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfCandidate {
    /// Winding index `n` of the curve `theta + 2 n pi`.
    pub n: u32,
    /// 1-based ordinal among the roots sharing `n`, in increasing delay.
    pub j: u32,
    pub tau: f64,
    pub omega: f64,
    pub crossing: Crossing,
    /// `d/dtau [tau omega_plus - theta]` at the root.
    pub slope_gap: f64,
    pub tangency_suspected: bool,
}

impl HopfCandidate {
    /// `|sin(tau omega) - h1|` and `|cos(tau omega) - h2|`.
    pub fn trig_residuals(&self, p: &Params) -> (f64, f64) {
        let arg = self.tau * self.omega;
        (
            (arg.sin() - h1(p, self.omega, self.tau)).abs(),
            (arg.cos() - h2(p, self.omega, self.tau)).abs(),
        )
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut flo: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.abs() < ROOT_TOLERANCE || hi - lo <= f64::EPSILON * mid.abs() {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Samples of the scan function on the open interval `(0, tau*)`.
struct ScanGrid {
    taus: Vec<f64>,
    gaps: Vec<f64>,
    tau_omega_max: f64,
}

fn scan_grid(p: &Params, points: usize) -> ScanGrid {
    let tau_star = hopf_threshold(p);
    let points = points.max(3);
    let step = tau_star / (points - 1) as f64;
    let mut taus = Vec::with_capacity(points - 2);
    let mut gaps = Vec::with_capacity(points - 2);
    let mut tau_omega_max: f64 = 0.0;
    for i in 1..points - 1 {
        let tau = step * i as f64;
        tau_omega_max = tau_omega_max.max(tau * omega_plus_closed(p, tau));
        taus.push(tau);
        gaps.push(phase_gap(p, tau));
    }
    ScanGrid {
        taus,
        gaps,
        tau_omega_max,
    }
}

/// All delays in `(0, tau*)` at which `E+` has a purely imaginary pair of
/// characteristic roots, ordered by `(n, tau)`.
pub fn hopf_candidates(p: &Params) -> Vec<HopfCandidate> {
    hopf_candidates_with_grid(p, DEFAULT_SCAN_POINTS)
}

pub fn hopf_candidates_with_grid(p: &Params, points: usize) -> Vec<HopfCandidate> {
    let tau_star = hopf_threshold(p);
    if !(tau_star > 0.0) || coexistence_threshold(p) <= 0.0 {
        return Vec::new();
    }
    let grid = scan_grid(p, points);
    let h = 1e-4 * tau_star;
    let mut out = Vec::new();
    let mut n = 0u32;
    while 2.0 * PI * n as f64 <= grid.tau_omega_max {
        let shift = 2.0 * PI * n as f64;
        let f = |tau: f64| phase_gap(p, tau) - shift;
        let mut j = 0;
        for i in 0..grid.taus.len().saturating_sub(1) {
            let (a, b) = (grid.gaps[i] - shift, grid.gaps[i + 1] - shift);
            if i > 0 {
                let prev = grid.gaps[i - 1] - shift;
                // Same sign on both sides of a local extremum that nearly
                // touches zero: two roots may hide in one cell.
                if a.signum() == b.signum()
                    && a.signum() == prev.signum()
                    && (a - prev).signum() != (b - a).signum()
                    && a.abs() < (b - a).abs().max((a - prev).abs())
                {
                    warn!(
                        "possible double root near tau = {:.6} for n = {n}; refine the scan grid",
                        grid.taus[i]
                    );
                }
            }
            let root = if a == 0.0 {
                grid.taus[i]
            } else if a.signum() != b.signum() && b != 0.0 {
                bisect(f, grid.taus[i], grid.taus[i + 1], a)
            } else {
                continue;
            };
            j += 1;
            let lo = (root - h).max(0.0);
            let hi = (root + h).min(tau_star);
            let slope_gap = (f(hi) - f(lo)) / (hi - lo);
            let tangency_suspected = slope_gap.abs() < TANGENCY_TOLERANCE;
            if tangency_suspected {
                warn!("tangential intersection suspected at tau = {root:.9} (n = {n})");
            }
            out.push(HopfCandidate {
                n,
                j,
                tau: root,
                omega: omega_plus_closed(p, root),
                crossing: if slope_gap > 0.0 {
                    Crossing::LeftToRight
                } else {
                    Crossing::RightToLeft
                },
                slope_gap,
                tangency_suspected,
            });
        }
        n += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityLabel {
    StableEPlus,
    UnstableEPlus,
    NoEPlus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityInterval {
    pub start: f64,
    /// `f64::INFINITY` for the last interval.
    pub end: f64,
    pub label: StabilityLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityProfile {
    pub intervals: Vec<StabilityInterval>,
    pub hopf: Vec<HopfCandidate>,
}

impl StabilityProfile {
    pub fn label_at(&self, tau: f64) -> Option<StabilityLabel> {
        self.intervals
            .iter()
            .find(|iv| tau >= iv.start && tau < iv.end)
            .map(|iv| iv.label)
    }
}

/// Partitions `[0, inf)` by the stability of `E+`, starting from the
/// Routh-Hurwitz stable configuration at zero delay and counting root pairs
/// in the right half plane across each Hopf candidate.
pub fn stability_profile(p: &Params) -> Result<StabilityProfile> {
    stability_profile_with_grid(p, DEFAULT_SCAN_POINTS)
}

pub fn stability_profile_with_grid(p: &Params, points: usize) -> Result<StabilityProfile> {
    let tau_c = coexistence_threshold(p);
    let hopf = hopf_candidates_with_grid(p, points);
    if tau_c <= 0.0 {
        return Ok(StabilityProfile {
            intervals: vec![StabilityInterval {
                start: 0.0,
                end: f64::INFINITY,
                label: StabilityLabel::NoEPlus,
            }],
            hopf,
        });
    }

    let k0 = coeffs(p, 0.0);
    if !(k0.linear + k0.delayed_linear > 0.0 && k0.constant + k0.delayed_const > 0.0) {
        return Err(Error::Inconsistent(
            "Routh-Hurwitz conditions fail at zero delay".into(),
        ));
    }

    let mut events: Vec<&HopfCandidate> = hopf.iter().collect();
    events.sort_by(|a, b| a.tau.total_cmp(&b.tau));

    let mut intervals = Vec::new();
    let mut start = 0.0;
    let mut unstable_pairs: i64 = 0;
    let mut label = StabilityLabel::StableEPlus;
    for ev in events {
        unstable_pairs += match ev.crossing {
            Crossing::LeftToRight => 1,
            Crossing::RightToLeft => -1,
        };
        if unstable_pairs < 0 {
            return Err(Error::Inconsistent(format!(
                "negative count of unstable root pairs after tau = {}",
                ev.tau
            )));
        }
        let next = if unstable_pairs > 0 {
            StabilityLabel::UnstableEPlus
        } else {
            StabilityLabel::StableEPlus
        };
        if next != label {
            intervals.push(StabilityInterval {
                start,
                end: ev.tau,
                label,
            });
            start = ev.tau;
            label = next;
        }
    }
    if unstable_pairs != 0 {
        return Err(Error::Inconsistent(format!(
            "{unstable_pairs} root pairs remain unstable past tau*"
        )));
    }
    intervals.push(StabilityInterval {
        start,
        end: tau_c,
        label,
    });
    intervals.push(StabilityInterval {
        start: tau_c,
        end: f64::INFINITY,
        label: StabilityLabel::NoEPlus,
    });
    Ok(StabilityProfile { intervals, hopf })
}

/// Sampled curves `tau omega_plus(tau)` and `theta(tau) + 2 n pi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfCurves {
    pub tau: Vec<f64>,
    pub tau_omega: Vec<f64>,
    pub theta: Vec<f64>,
    /// Number of shifted angle curves (`n = 0 .. windings`).
    pub windings: u32,
}

/// Samples both curves on `points` uniformly spaced delays over `[0, tau*]`.
/// One more winding than the last one with an intersection is included.
pub fn hopf_curves(p: &Params, points: usize) -> HopfCurves {
    let tau_star = hopf_threshold(p);
    let points = points.max(2);
    let mut curves = HopfCurves {
        tau: Vec::new(),
        tau_omega: Vec::new(),
        theta: Vec::new(),
        windings: 0,
    };
    if !(tau_star > 0.0) {
        return curves;
    }
    let mut max_phase: f64 = 0.0;
    for i in 0..points {
        let tau = tau_star * i as f64 / (points - 1) as f64;
        let tw = tau * omega_plus_closed(p, tau);
        max_phase = max_phase.max(tw);
        curves.tau.push(tau);
        curves.tau_omega.push(tw);
        curves.theta.push(theta_unchecked(p, tau));
    }
    curves.windings = (max_phase / (2.0 * PI)).floor() as u32 + 2;
    curves
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(s: f64) -> Params {
        Params::new(s, 0.6, 0.0).unwrap()
    }

    #[test]
    fn coefficients_at_zero_delay() {
        let k = coeffs(&params(0.02), 0.0);
        assert_relative_eq!(k.linear, 0.02 * (1.0 + 1.0 / 0.6), max_relative = 1e-14);
        assert_relative_eq!(k.linear, 0.053_333_333_333_333, max_relative = 1e-12);
        assert_eq!(k.delayed_linear, -0.02);
        assert_relative_eq!(k.delayed_const, 0.018_666_666_666_667, max_relative = 1e-12);
        assert_relative_eq!(k.constant, 0.000_666_666_666_667, max_relative = 1e-11);
    }

    #[test]
    fn delayed_constant_vanishes_at_half_prey() {
        let p = params(0.02);
        let tau_half = (0.6f64 / (2.0 * 0.02)).ln() / 0.02;
        assert!(coeffs(&p, tau_half).delayed_const.abs() < 1e-15);
        assert!(coeffs(&p, tau_half - 1.0).delayed_const > 0.0);
        assert!(coeffs(&p, tau_half + 1.0).delayed_const < 0.0);
    }

    #[test]
    fn delayed_constant_at_tau_star() {
        let p = params(0.02);
        let k = coeffs(&p, hopf_threshold(&p));
        assert_relative_eq!(k.delayed_const, 0.02 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn char_eval_at_zero_is_death_rate_times_predator() {
        let p = params(0.02);
        for tau in [0.0, 10.0, 100.0, 160.0] {
            let y_plus = 1.0 - coexistence_prey(&p, tau);
            let v = char_eval(&p, tau, Complex64::new(0.0, 0.0)).unwrap();
            assert_relative_eq!(v.re, 0.02 * y_plus, max_relative = 1e-12);
            assert_eq!(v.im, 0.0);
        }
    }

    #[test]
    fn char_eval_zero_delay_factors_as_quadratic() {
        let p = params(0.02);
        let k = coeffs(&p, 0.0);
        let b = k.linear + k.delayed_linear;
        let c = k.constant + k.delayed_const;
        let disc = Complex64::new(b * b - 4.0 * c, 0.0).sqrt();
        for root in [(-b + disc) / 2.0, (-b - disc) / 2.0] {
            assert!(char_eval(&p, 0.0, root).unwrap().norm() < 1e-15);
            assert!(root.re < 0.0);
        }
    }

    #[test]
    fn char_eval_requires_coexistence() {
        assert!(matches!(
            char_eval(&params(0.02), 180.0, Complex64::new(0.0, 1.0)),
            Err(Error::NoCoexistence { .. })
        ));
    }

    #[test]
    fn omega_plus_domain() {
        let p = params(0.02);
        let tau_star = hopf_threshold(&p);
        assert!(omega_plus(&p, tau_star).is_none());
        assert!(omega_plus(&p, tau_star + 1.0).is_none());
        assert!(omega_plus_closed(&p, tau_star) < 1e-7);
        for i in 0..100 {
            let tau = tau_star * i as f64 / 100.0;
            assert!(omega_plus(&p, tau).unwrap() > 0.0);
        }
        for s in [0.2, 0.25, 0.5] {
            let p = params(s);
            for tau in [0.0, 1.0, 10.0] {
                assert!(omega_plus(&p, tau).is_none());
            }
        }
    }

    #[test]
    fn closed_form_matches_generic_quadratic() {
        let p = params(0.02);
        for tau in [0.0, 1.0, 50.0, 100.0, 114.0] {
            let k = coeffs(&p, tau);
            let (plus, minus) = omega_squared_branches(&k).unwrap();
            assert!(minus < 0.0, "minus branch must not be a positive root");
            let w = omega_plus(&p, tau).unwrap();
            assert_relative_eq!(w * w, plus, max_relative = 1e-9);
        }
    }

    #[test]
    fn h_functions_at_tau_star() {
        let p = params(0.02);
        let ts = hopf_threshold(&p);
        assert_eq!(h1(&p, 0.0, ts), 0.0);
        assert_relative_eq!(h2(&p, 0.0, ts), -1.0, epsilon = 1e-12);
        assert_relative_eq!(theta(&p, ts).unwrap(), PI, epsilon = 1e-5);
    }

    #[test]
    fn h1_positive_and_pythagorean_below_tau_star() {
        let p = params(0.02);
        let ts = hopf_threshold(&p);
        for i in 0..500 {
            let tau = ts * i as f64 / 500.0;
            let w = omega_plus(&p, tau).unwrap();
            let (a, b) = (h1(&p, w, tau), h2(&p, w, tau));
            assert!(a > 0.0);
            assert!(b > -1.0 && b < 1.0);
            assert!((a * a + b * b - 1.0).abs() < 1e-12);
        }
        let w = omega_plus(&p, 50.0).unwrap();
        assert!((h1(&p, w, 50.0).powi(2) + h2(&p, w, 50.0).powi(2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn theta_range_and_sine_identity() {
        let p = params(0.02);
        let ts = hopf_threshold(&p);
        assert!(theta(&p, -1.0).is_err());
        assert!(theta(&p, ts + 1.0).is_err());
        let mut prev = theta(&p, 0.0).unwrap();
        for i in 1..2000 {
            let tau = ts * i as f64 / 2000.0;
            let th = theta(&p, tau).unwrap();
            assert!(th > 0.0 && th < PI);
            let w = omega_plus(&p, tau).unwrap();
            assert!((th.sin() - h1(&p, w, tau)).abs() < 1e-9);
            assert!((th - prev).abs() < 0.05, "theta jumps at tau = {tau}");
            prev = th;
        }
    }

    #[test]
    fn reference_hopf_pair() {
        let p = params(0.02);
        let c = hopf_candidates(&p);
        assert_eq!(c.len(), 2);
        assert!((c[0].tau - 1.917).abs() < 0.01, "{}", c[0].tau);
        assert!((c[1].tau - 108.365).abs() < 0.01, "{}", c[1].tau);
        assert_eq!(c[0].crossing, Crossing::LeftToRight);
        assert_eq!(c[1].crossing, Crossing::RightToLeft);
        assert_eq!((c[0].n, c[0].j, c[1].n, c[1].j), (0, 1, 0, 2));
    }

    #[test]
    fn smaller_death_rate_gives_six_candidates() {
        let c = hopf_candidates(&params(0.007));
        assert_eq!(c.len(), 6);
        for n in 0..3 {
            assert_eq!(c.iter().filter(|h| h.n == n).count(), 2);
        }
    }

    #[test]
    fn no_candidates_when_death_rate_large() {
        assert!(hopf_candidates(&params(0.25)).is_empty());
        assert!(hopf_candidates(&params(1.0)).is_empty());
    }

    #[test]
    fn candidates_satisfy_both_trig_equations() {
        for s in [0.02, 0.007] {
            let p = params(s);
            for c in hopf_candidates(&p) {
                let (rs, rc) = c.trig_residuals(&p);
                assert!(rs < 1e-8 && rc < 1e-8, "{c:?}");
                let v = char_eval(&p, c.tau, Complex64::new(0.0, c.omega)).unwrap();
                assert!(v.norm() < 1e-6);
                assert!(quartic_residual(&coeffs(&p, c.tau), c.omega) < 1e-10);
            }
        }
    }

    /// Newton iteration on `P(lambda) = 0` with the derivative taken directly
    /// from the characteristic function.
    fn track_root(p: &Params, tau: f64, mut lam: Complex64) -> Complex64 {
        let k = coeffs(p, tau);
        for _ in 0..60 {
            let e = (-lam * tau).exp();
            let f = lam * lam
                + k.linear * lam
                + (k.delayed_linear * lam + k.delayed_const) * e
                + k.constant;
            let df = 2.0 * lam + k.linear + k.delayed_linear * e
                - tau * (k.delayed_linear * lam + k.delayed_const) * e;
            let step = f / df;
            lam -= step;
            if step.norm() < 1e-15 {
                break;
            }
        }
        lam
    }

    #[test]
    fn crossing_direction_agrees_with_root_tracking() {
        for s in [0.02, 0.007] {
            let p = params(s);
            for c in hopf_candidates(&p) {
                let d = 1e-3;
                let before = track_root(&p, c.tau - d, Complex64::new(0.0, c.omega));
                let after = track_root(&p, c.tau + d, Complex64::new(0.0, c.omega));
                let moved_right = after.re > before.re;
                assert_eq!(moved_right, c.crossing == Crossing::LeftToRight, "{c:?}");
                assert!((before.im - c.omega).abs() < 1e-2);
            }
        }
    }

    #[test]
    fn crossing_counts_balance() {
        for s in [0.02, 0.007, 0.004] {
            let mut c = hopf_candidates(&params(s));
            c.sort_by(|a, b| a.tau.total_cmp(&b.tau));
            let mut count = 0i32;
            for h in &c {
                count += if h.crossing == Crossing::LeftToRight {
                    1
                } else {
                    -1
                };
                assert!(count >= 0);
            }
            assert_eq!(count, 0);
        }
    }

    #[test]
    fn profile_for_reference_parameters() {
        let prof = stability_profile(&params(0.02)).unwrap();
        let labels: Vec<_> = prof.intervals.iter().map(|i| i.label).collect();
        assert_eq!(
            labels,
            [
                StabilityLabel::StableEPlus,
                StabilityLabel::UnstableEPlus,
                StabilityLabel::StableEPlus,
                StabilityLabel::NoEPlus
            ]
        );
        assert_eq!(prof.intervals[0].start, 0.0);
        assert!((prof.intervals[1].start - 1.917).abs() < 0.01);
        assert!((prof.intervals[2].start - 108.365).abs() < 0.01);
        assert!((prof.intervals[3].start - 170.06).abs() < 0.01);
        assert_eq!(prof.label_at(90.0), Some(StabilityLabel::UnstableEPlus));
        assert_eq!(prof.label_at(1e6), Some(StabilityLabel::NoEPlus));
    }

    #[test]
    fn profile_without_hopf() {
        let prof = stability_profile(&params(0.25)).unwrap();
        assert_eq!(prof.intervals.len(), 2);
        assert_eq!(prof.intervals[0].label, StabilityLabel::StableEPlus);
        assert_relative_eq!(prof.intervals[0].end, (0.6f64 / 0.25).ln() / 0.25);
        assert!(prof.hopf.is_empty());
    }

    #[test]
    fn profile_nested_windings_merge() {
        let prof = stability_profile(&params(0.007)).unwrap();
        let labels: Vec<_> = prof.intervals.iter().map(|i| i.label).collect();
        assert_eq!(
            labels,
            [
                StabilityLabel::StableEPlus,
                StabilityLabel::UnstableEPlus,
                StabilityLabel::StableEPlus,
                StabilityLabel::NoEPlus
            ]
        );
        let n0: Vec<_> = prof.hopf.iter().filter(|h| h.n == 0).collect();
        assert_eq!(prof.intervals[1].start, n0[0].tau);
        assert_eq!(prof.intervals[2].start, n0[1].tau);
    }

    #[test]
    fn curves_cover_all_windings() {
        let curves = hopf_curves(&params(0.02), 200);
        assert_eq!(curves.tau.len(), 200);
        assert_eq!(curves.windings, 2);
        assert!(hopf_curves(&params(0.25), 200).tau.is_empty());
    }
}
