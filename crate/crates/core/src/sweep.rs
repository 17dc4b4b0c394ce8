//! Orbit diagrams over the delay, with continuation, bistability windows and
//! period-doubling detection.

use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    estimate_period_with, extrema, filter_kinks, tail_amplitude, Component, Extremum, ExtremumKind,
    PeriodOptions,
};
use crate::error::{Error, Result};
use crate::integrator::{
    integrate_continued, integrate_with, HistorySpec, IntegrateOptions, Trajectory, DEFAULT_DT,
};
use crate::model::{Params, State};
use crate::spectral::hopf_candidates;

/// Peak-to-peak amplitude below which the attractor counts as a fixed point.
pub const DEFAULT_EQUILIBRIUM_AMPLITUDE: f64 = 1e-5;
/// Relative envelope gap above which two branches are considered distinct.
pub const DEFAULT_BISTABILITY_GAP: f64 = 0.05;
/// Transient multiplier applied near a predicted Hopf delay.
pub const NEAR_HOPF_FACTOR: f64 = 5.0;
/// Length of the stored seed, in delays.
const SEED_DELAYS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
    Both,
}

/// Direction of the pass that produced a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pass {
    Forward,
    Backward,
}

impl Pass {
    pub fn as_str(self) -> &'static str {
        match self {
            Pass::Forward => "forward",
            Pass::Backward => "backward",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Continuation {
    /// Every delay starts from the same data.
    ColdStart(HistorySpec),
    /// The first delay starts from the given data, each later one from the
    /// last delay-length stretch of its predecessor's solution.
    WarmStart(HistorySpec),
}

impl Continuation {
    pub fn initial(&self) -> HistorySpec {
        match *self {
            Continuation::ColdStart(h) | Continuation::WarmStart(h) => h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub tau_min: f64,
    pub tau_max: f64,
    pub steps: usize,
    pub direction: Direction,
    pub continuation: Continuation,
    pub t_transient: f64,
    pub t_record: f64,
    pub dt_target: f64,
    pub equilibrium_amplitude: f64,
    pub recurrence_eps: f64,
    pub kappa: f64,
}

impl SweepPlan {
    pub fn new(tau_min: f64, tau_max: f64, steps: usize) -> Self {
        Self {
            tau_min,
            tau_max,
            steps,
            direction: Direction::Forward,
            continuation: Continuation::ColdStart(HistorySpec::constant(0.1, 0.1)),
            t_transient: 50_000.0,
            t_record: 10_000.0,
            dt_target: DEFAULT_DT,
            equilibrium_amplitude: DEFAULT_EQUILIBRIUM_AMPLITUDE,
            recurrence_eps: crate::analysis::DEFAULT_RECURRENCE_EPS,
            kappa: crate::analysis::DEFAULT_KINK_FRACTION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, value, reason| {
            Err(Error::InvalidParameter {
                name,
                value,
                reason,
            })
        };
        if !(self.tau_min >= 0.0 && self.tau_min < self.tau_max && self.tau_max.is_finite()) {
            return bad("tau_min", self.tau_min, "need 0 <= tau_min < tau_max");
        }
        if self.steps < 2 {
            return bad("steps", self.steps as f64, "need at least two grid points");
        }
        if !(self.t_record > 0.0) {
            return bad("t_record", self.t_record, "must be positive");
        }
        if !(self.t_transient >= 0.0) {
            return bad("t_transient", self.t_transient, "must be nonnegative");
        }
        if !(self.dt_target > 0.0) {
            return bad("dt", self.dt_target, "must be positive");
        }
        self.continuation.initial().validate()
    }

    pub fn grid(&self) -> Vec<f64> {
        let h = (self.tau_max - self.tau_min) / (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| {
                if i + 1 == self.steps {
                    self.tau_max
                } else {
                    self.tau_min + i as f64 * h
                }
            })
            .collect()
    }

    pub fn spacing(&self) -> f64 {
        (self.tau_max - self.tau_min) / (self.steps - 1) as f64
    }

    fn period_options(&self) -> PeriodOptions {
        PeriodOptions {
            eps: self.recurrence_eps,
            kappa: self.kappa,
            ..PeriodOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttractorClass {
    Equilibrium,
    Periodic,
    Aperiodic,
    /// Integration failed; see the row's `error`.
    Failed,
}

impl AttractorClass {
    pub fn as_str(self) -> &'static str {
        match self {
            AttractorClass::Equilibrium => "equilibrium",
            AttractorClass::Periodic => "periodic",
            AttractorClass::Aperiodic => "aperiodic",
            AttractorClass::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitDiagramRow {
    pub tau: f64,
    pub direction: Pass,
    /// Extrema of `y` on the recorded window, kinks flagged.
    pub extrema: Vec<Extremum>,
    pub period: Option<f64>,
    pub loops: Option<usize>,
    pub class: AttractorClass,
    /// Peak-to-peak amplitude of `y` on the recorded window.
    pub amplitude: f64,
    /// Range `(min, max)` of `y` on the recorded window.
    pub y_range: (f64, f64),
    pub final_state: State,
    pub error: Option<String>,
    /// End of the solution, long enough to continue from at a nearby delay.
    #[serde(skip)]
    pub seed: Option<Arc<Trajectory>>,
}

impl OrbitDiagramRow {
    fn failed(tau: f64, direction: Pass, err: &Error, last: State) -> Self {
        Self {
            tau,
            direction,
            extrema: Vec::new(),
            period: None,
            loops: None,
            class: AttractorClass::Failed,
            amplitude: f64::NAN,
            y_range: (f64::NAN, f64::NAN),
            final_state: last,
            error: Some(err.to_string()),
            seed: None,
        }
    }

    /// Genuine (non-kink) extrema.
    pub fn genuine(&self) -> impl Iterator<Item = &Extremum> + '_ {
        self.extrema.iter().filter(|e| !e.kink)
    }
}

/// Integrates one delay value and fingerprints its attractor.
pub fn analyze_point(
    p: &Params,
    h: &HistorySpec,
    plan: &SweepPlan,
    tau: f64,
    transient: f64,
    direction: Pass,
) -> Result<OrbitDiagramRow> {
    let tr = integrate_with(
        &p.with_delay(tau),
        h,
        transient + plan.t_record,
        IntegrateOptions {
            dt_target: plan.dt_target,
            record_from: transient,
        },
    )?;
    fingerprint(&tr, plan, direction)
}

/// Attractor fingerprint of the recorded window of `tr`.
pub fn fingerprint(tr: &Trajectory, plan: &SweepPlan, direction: Pass) -> Result<OrbitDiagramRow> {
    let t_cut = tr.t_start();
    let amp_y = tail_amplitude(tr, Component::Y, t_cut);
    let amp_x = tail_amplitude(tr, Component::X, t_cut);
    let (lo, hi) = tr
        .states
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            (lo.min(s.y), hi.max(s.y))
        });
    let mut row = OrbitDiagramRow {
        tau: tr.params.delay,
        direction,
        extrema: Vec::new(),
        period: None,
        loops: None,
        class: AttractorClass::Equilibrium,
        amplitude: amp_y,
        y_range: (lo, hi),
        final_state: tr.final_state(),
        error: None,
        seed: Some(Arc::new(tr.tail(SEED_DELAYS * tr.params.delay))),
    };
    if amp_y.max(amp_x) < plan.equilibrium_amplitude {
        return Ok(row);
    }
    let es = filter_kinks(&extrema(tr, Component::Y, t_cut)?, plan.kappa);
    row.extrema = es.events;
    match estimate_period_with(tr, t_cut, &plan.period_options()) {
        Some(est) => {
            row.class = AttractorClass::Periodic;
            row.period = Some(est.period);
            row.loops = Some(est.loops);
        }
        None => row.class = AttractorClass::Aperiodic,
    }
    Ok(row)
}

fn near_hopf(tau: f64, hopf: &[f64], spacing: f64) -> bool {
    hopf.iter()
        .any(|&h| (tau - h).abs() <= 2.0 * spacing + 1e-12)
}

fn transient_at(plan: &SweepPlan, tau: f64, hopf: &[f64]) -> f64 {
    if near_hopf(tau, hopf, plan.spacing()) {
        NEAR_HOPF_FACTOR * plan.t_transient
    } else {
        plan.t_transient
    }
}

fn continue_point(
    p: &Params,
    plan: &SweepPlan,
    seed: &Trajectory,
    tau: f64,
    transient: f64,
    direction: Pass,
) -> Result<OrbitDiagramRow> {
    let tr = integrate_continued(
        &p.with_delay(tau),
        seed,
        transient + plan.t_record,
        IntegrateOptions {
            dt_target: plan.dt_target,
            record_from: transient,
        },
    )?;
    fingerprint(&tr, plan, direction)
}

fn warm_pass(
    p: &Params,
    plan: &SweepPlan,
    taus: &[f64],
    start: HistorySpec,
    hopf: &[f64],
    pass: Pass,
) -> Vec<OrbitDiagramRow> {
    let mut seed: Option<Arc<Trajectory>> = None;
    let mut last = start.initial();
    let mut rows = Vec::with_capacity(taus.len());
    for &tau in taus {
        let transient = transient_at(plan, tau, hopf);
        let run = match &seed {
            Some(prev) => continue_point(p, plan, prev, tau, transient, pass),
            None => analyze_point(p, &start, plan, tau, transient, pass),
        };
        let row = run.unwrap_or_else(|e| {
            log::warn!("tau={tau}: {e}");
            OrbitDiagramRow::failed(tau, pass, &e, last)
        });
        if row.seed.is_some() {
            seed = row.seed.clone();
            last = row.final_state;
        }
        rows.push(row);
    }
    rows
}

fn cold_pass(
    p: &Params,
    plan: &SweepPlan,
    taus: &[f64],
    h: HistorySpec,
    hopf: &[f64],
    pass: Pass,
) -> Vec<OrbitDiagramRow> {
    taus.par_iter()
        .map(|&tau| {
            analyze_point(p, &h, plan, tau, transient_at(plan, tau, hopf), pass).unwrap_or_else(
                |e| {
                    log::warn!("tau={tau}: {e}");
                    OrbitDiagramRow::failed(tau, pass, &e, h.initial())
                },
            )
        })
        .collect()
}

/// Runs the plan for the family `p` with the delay varied over the grid.
///
/// Backward rows are returned in execution order (decreasing delay), after
/// any forward rows. Cold-start passes run in parallel on the current rayon
/// pool; warm-start passes are sequential, but the two directions of a
/// `Both` plan run concurrently.
pub fn run_sweep(p: &Params, plan: &SweepPlan) -> Result<Vec<OrbitDiagramRow>> {
    plan.validate()?;
    let hopf: Vec<f64> = hopf_candidates(p).iter().map(|c| c.tau).collect();
    let fwd: Vec<f64> = plan.grid();
    let bwd: Vec<f64> = fwd.iter().rev().copied().collect();
    let run = |taus: &[f64], pass: Pass| match plan.continuation {
        Continuation::ColdStart(h) => cold_pass(p, plan, taus, h, &hopf, pass),
        Continuation::WarmStart(h) => warm_pass(p, plan, taus, h, &hopf, pass),
    };
    Ok(match plan.direction {
        Direction::Forward => run(&fwd, Pass::Forward),
        Direction::Backward => run(&bwd, Pass::Backward),
        Direction::Both => {
            let (mut a, b) = rayon::join(|| run(&fwd, Pass::Forward), || run(&bwd, Pass::Backward));
            a.extend(b);
            a
        }
    })
}

/// Writes one row per extremum plus a summary row (`kind = summary`) per delay.
pub fn write_orbit_csv<W: Write>(w: &mut W, rows: &[OrbitDiagramRow]) -> io::Result<()> {
    writeln!(w, "tau,direction,kind,value,kink,period,loops,class")?;
    for r in rows {
        let dir = r.direction.as_str();
        for e in &r.extrema {
            let kind = match e.kind {
                ExtremumKind::Max => "max",
                ExtremumKind::Min => "min",
            };
            writeln!(w, "{},{dir},{kind},{},{},,,", r.tau, e.value, e.kink as u8)?;
        }
        let value = if r.class == AttractorClass::Equilibrium {
            r.final_state.y
        } else {
            r.amplitude
        };
        let period = r.period.map(|v| v.to_string()).unwrap_or_default();
        let loops = r.loops.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{dir},summary,{value},,{period},{loops},{}",
            r.tau,
            r.class.as_str()
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BistabilityWindow {
    pub tau_low: f64,
    pub tau_high: f64,
    /// Largest relative envelope gap seen inside the window.
    pub gap: f64,
}

pub fn write_bistability_csv<W: Write>(w: &mut W, windows: &[BistabilityWindow]) -> io::Result<()> {
    writeln!(w, "tau_low,tau_high,gap")?;
    for b in windows {
        writeln!(w, "{},{},{}", b.tau_low, b.tau_high, b.gap)?;
    }
    Ok(())
}

/// Relative gap between the `y` envelopes of two rows.
pub fn envelope_gap(a: &OrbitDiagramRow, b: &OrbitDiagramRow) -> f64 {
    let (alo, ahi) = a.y_range;
    let (blo, bhi) = b.y_range;
    let scale = (ahi - alo)
        .max(bhi - blo)
        .max(ahi.abs().max(bhi.abs()) * 1e-3);
    if !(scale > 0.0) {
        return 0.0;
    }
    ((ahi - bhi).abs().max((alo - blo).abs())) / scale
}

fn sorted_by_tau(rows: &[OrbitDiagramRow]) -> Vec<&OrbitDiagramRow> {
    let mut v: Vec<&OrbitDiagramRow> = rows.iter().collect();
    v.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    v
}

/// Grid-level windows where forward and backward branches disagree by more
/// than `gap` (relative). Endpoints are the outermost disagreeing grid points.
pub fn detect_bistability(
    fwd: &[OrbitDiagramRow],
    bwd: &[OrbitDiagramRow],
    gap: f64,
) -> Result<Vec<BistabilityWindow>> {
    let f = sorted_by_tau(fwd);
    let b = sorted_by_tau(bwd);
    if f.len() != b.len() || f.iter().zip(&b).any(|(x, y)| (x.tau - y.tau).abs() > 1e-9) {
        return Err(Error::Inconsistent(
            "forward and backward sweeps must share a grid".into(),
        ));
    }
    let mut out = Vec::new();
    let mut open: Option<BistabilityWindow> = None;
    for (x, y) in f.iter().zip(&b) {
        let failed = x.class == AttractorClass::Failed || y.class == AttractorClass::Failed;
        let g = if failed { 0.0 } else { envelope_gap(x, y) };
        if g > gap {
            let w = open.get_or_insert(BistabilityWindow {
                tau_low: x.tau,
                tau_high: x.tau,
                gap: 0.0,
            });
            w.tau_high = x.tau;
            w.gap = w.gap.max(g);
        } else if let Some(w) = open.take() {
            out.push(w);
        }
    }
    out.extend(open);
    Ok(out)
}

/// Whether two attractors coexist at `tau`: continuing from `a` and from
/// `b` ends on envelopes differing by more than `gap`.
fn coexist(
    p: &Params,
    plan: &SweepPlan,
    tau: f64,
    a: &Trajectory,
    b: &Trajectory,
    gap: f64,
) -> Result<bool> {
    let (ra, rb) = rayon::join(
        || continue_point(p, plan, a, tau, plan.t_transient, Pass::Forward),
        || continue_point(p, plan, b, tau, plan.t_transient, Pass::Backward),
    );
    Ok(envelope_gap(&ra?, &rb?) > gap)
}

/// Moves each grid window endpoint outward by bisection between it and its
/// agreeing neighbour, continuing both branches from their solutions at the
/// endpoint. Endpoints on the edge of the grid are left unchanged.
pub fn refine_bistability(
    p: &Params,
    plan: &SweepPlan,
    window: &BistabilityWindow,
    fwd: &[OrbitDiagramRow],
    bwd: &[OrbitDiagramRow],
    gap: f64,
    iterations: usize,
) -> Result<BistabilityWindow> {
    let f = sorted_by_tau(fwd);
    let b = sorted_by_tau(bwd);
    let idx = |t: f64| f.iter().position(|r| (r.tau - t).abs() < 1e-9);
    let (Some(lo), Some(hi)) = (idx(window.tau_low), idx(window.tau_high)) else {
        return Err(Error::Inconsistent(
            "window endpoints not on the grid".into(),
        ));
    };
    let seeds = |k: usize| match (&f[k].seed, &b[k].seed) {
        (Some(a), Some(c)) => Ok((a.clone(), c.clone())),
        _ => Err(Error::Inconsistent(format!(
            "no stored solution at tau={}",
            f[k].tau
        ))),
    };
    let bisect = |k: usize, neighbour: usize| -> Result<f64> {
        let (a, c) = seeds(k)?;
        let (mut inside, mut outside) = (f[k].tau, f[neighbour].tau);
        for _ in 0..iterations {
            let mid = 0.5 * (inside + outside);
            if coexist(p, plan, mid, &a, &c, gap)? {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        Ok(0.5 * (inside + outside))
    };
    let mut out = *window;
    if lo > 0 {
        out.tau_low = bisect(lo, lo - 1)?;
    }
    if hi + 1 < f.len() {
        out.tau_high = bisect(hi, hi + 1)?;
    }
    Ok(out)
}

/// Side a doubling is approached from: `Left` when the loop count doubles
/// as the delay increases, `Right` when it doubles as the delay decreases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodDoubling {
    pub tau: f64,
    pub side: Side,
    /// Loops before (`from`) and after (`to = 2 from`) the doubling.
    pub from: usize,
    pub to: usize,
    /// Grid bracket containing the transition.
    pub bracket: (f64, f64),
}

/// Grid-level `k -> 2k` transitions in loop count between adjacent
/// periodic rows. The estimate is the bracket midpoint.
pub fn detect_period_doublings(rows: &[OrbitDiagramRow]) -> Vec<PeriodDoubling> {
    let r = sorted_by_tau(rows);
    let mut out = Vec::new();
    for w in r.windows(2) {
        let (Some(a), Some(b)) = (w[0].loops, w[1].loops) else {
            continue;
        };
        let side = if b == 2 * a {
            Side::Left
        } else if a == 2 * b {
            Side::Right
        } else {
            continue;
        };
        let (from, to) = if side == Side::Left { (a, b) } else { (b, a) };
        out.push(PeriodDoubling {
            tau: 0.5 * (w[0].tau + w[1].tau),
            side,
            from,
            to,
            bracket: (w[0].tau, w[1].tau),
        });
    }
    out
}

/// Bisects the bracket on the loop count, starting each probe from the
/// plan's initial data. Probes that are not periodic, or give a count that
/// is neither `from` nor `to`, stop the refinement.
pub fn refine_period_doubling(
    p: &Params,
    plan: &SweepPlan,
    d: &PeriodDoubling,
    iterations: usize,
) -> Result<PeriodDoubling> {
    let h = plan.continuation.initial();
    let (mut lo, mut hi) = d.bracket;
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        let row = analyze_point(p, &h, plan, mid, plan.t_transient, Pass::Forward)?;
        let Some(loops) = row.loops else { break };
        // `lo` carries the count found at the lower end of the bracket.
        let low_count = if d.side == Side::Left { d.from } else { d.to };
        let high_count = if d.side == Side::Left { d.to } else { d.from };
        if loops == low_count {
            lo = mid;
        } else if loops == high_count {
            hi = mid;
        } else {
            break;
        }
    }
    Ok(PeriodDoubling {
        tau: 0.5 * (lo + hi),
        bracket: (lo, hi),
        ..*d
    })
}

/// Chains of doublings `1 -> 2 -> 4 -> ...` for one side, ordered along the
/// direction of approach (increasing delay for `Left`).
pub fn cascade(doublings: &[PeriodDoubling], side: Side) -> Vec<PeriodDoubling> {
    let mut of_side: Vec<PeriodDoubling> = doublings
        .iter()
        .copied()
        .filter(|d| d.side == side)
        .collect();
    of_side.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    if side == Side::Right {
        of_side.reverse();
    }
    let mut chain: Vec<PeriodDoubling> = Vec::new();
    let mut want = 1;
    for d in of_side {
        if d.from == want {
            chain.push(d);
            want *= 2;
        }
    }
    chain
}
