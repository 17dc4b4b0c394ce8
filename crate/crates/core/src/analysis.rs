//! Post-transient attractor diagnostics.
//!
//! Everything here is a pure function of one or two [`Trajectory`] values:
//! local extrema with kink removal, recurrence-based period detection in the
//! embedded state `(x(t), y(t), y(t - tau))`, delay embeddings, successive
//! minima return maps and the separation of nearby solutions.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{integrate, HistorySpec, Trajectory};
use crate::model::{Params, State};

/// Default relative gap below which a max/min pair counts as a kink.
pub const DEFAULT_KINK_FRACTION: f64 = 0.2;
/// Default recurrence tolerance, relative to the attractor amplitude.
pub const DEFAULT_RECURRENCE_EPS: f64 = 1e-3;
/// Shortest admissible period.
pub const DEFAULT_MIN_PERIOD: f64 = 10.0;
/// Tail amplitudes below this are treated as a constant signal.
pub const FLAT_AMPLITUDE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Component {
    X,
    Y,
}

impl Component {
    #[inline]
    pub fn of(self, s: State) -> f64 {
        match self {
            Component::X => s.x,
            Component::Y => s.y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtremumKind {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub t: f64,
    pub value: f64,
    pub kind: ExtremumKind,
    pub kink: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremaSeries {
    pub component: Component,
    pub events: Vec<Extremum>,
}

impl ExtremaSeries {
    /// Events not flagged as kinks.
    pub fn genuine(&self) -> impl Iterator<Item = &Extremum> + '_ {
        self.events.iter().filter(|e| !e.kink)
    }

    pub fn maxima(&self) -> impl Iterator<Item = &Extremum> + '_ {
        self.genuine().filter(|e| e.kind == ExtremumKind::Max)
    }

    pub fn minima(&self) -> impl Iterator<Item = &Extremum> + '_ {
        self.genuine().filter(|e| e.kind == ExtremumKind::Min)
    }

    pub fn kink_count(&self) -> usize {
        self.events.iter().filter(|e| e.kink).count()
    }

    /// Writes `t,value,kind,kink` rows.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "t,value,kind,kink")?;
        for e in &self.events {
            let kind = match e.kind {
                ExtremumKind::Max => "max",
                ExtremumKind::Min => "min",
            };
            writeln!(w, "{},{},{kind},{}", e.t, e.value, e.kink as u8)?;
        }
        Ok(())
    }
}

/// Range of `component` over stored nodes at or after `t_cut`.
fn tail_range(tr: &Trajectory, component: Component, t_cut: f64) -> (f64, f64) {
    let from = tr.index_at_or_after(t_cut);
    tr.states[from.min(tr.len())..]
        .iter()
        .map(|s| component.of(*s))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
}

/// Peak-to-peak amplitude of `component` after `t_cut`.
pub fn tail_amplitude(tr: &Trajectory, component: Component, t_cut: f64) -> f64 {
    let (lo, hi) = tail_range(tr, component, t_cut);
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

/// Local extrema of one component on nodes after `t_cut`, each refined by a
/// parabola through the extremal node and its two neighbours.
pub fn extrema(tr: &Trajectory, component: Component, t_cut: f64) -> Result<ExtremaSeries> {
    let from = tr.index_at_or_after(t_cut);
    if tr.len().saturating_sub(from) < 3 {
        return Err(Error::TooFewSamples(tr.len().saturating_sub(from)));
    }
    let mut events = Vec::new();
    if tail_amplitude(tr, component, t_cut) < FLAT_AMPLITUDE {
        return Ok(ExtremaSeries { component, events });
    }
    let v = |i: usize| component.of(tr.states[i]);
    for i in from.max(1)..tr.len() - 1 {
        let (a, b, c) = (v(i - 1), v(i), v(i + 1));
        let kind = if a < b && b >= c {
            ExtremumKind::Max
        } else if a > b && b <= c {
            ExtremumKind::Min
        } else {
            continue;
        };
        let curvature = a - 2.0 * b + c;
        let (shift, value) = if curvature != 0.0 {
            let delta = (0.5 * (a - c) / curvature).clamp(-0.5, 0.5);
            (delta, b - 0.25 * (a - c) * delta)
        } else {
            (0.0, b)
        };
        events.push(Extremum {
            t: tr.time(i) + shift * tr.dt,
            value,
            kind,
            kink: false,
        });
    }
    Ok(ExtremaSeries { component, events })
}

/// Flags small wiggles: repeatedly removes the adjacent max/min pair with the
/// smallest vertical gap while that gap is below `kappa` times the series'
/// amplitude. Surviving events alternate between maxima and minima.
pub fn filter_kinks(es: &ExtremaSeries, kappa: f64) -> ExtremaSeries {
    let mut out = es.clone();
    let (lo, hi) = out
        .events
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
            (lo.min(e.value), hi.max(e.value))
        });
    if out.events.len() < 2 {
        return out;
    }
    let threshold = kappa * (hi - lo);
    let mut alive: Vec<usize> = (0..out.events.len()).collect();
    loop {
        let mut best: Option<(usize, f64)> = None;
        for w in 0..alive.len().saturating_sub(1) {
            let (a, b) = (&out.events[alive[w]], &out.events[alive[w + 1]]);
            if a.kind == b.kind {
                continue;
            }
            let gap = (a.value - b.value).abs();
            if gap < threshold && best.is_none_or(|(_, g)| gap < g) {
                best = Some((w, gap));
            }
        }
        let Some((w, _)) = best else { break };
        out.events[alive[w]].kink = true;
        out.events[alive[w + 1]].kink = true;
        alive.drain(w..w + 2);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodEstimate {
    pub period: f64,
    /// Genuine maxima of `y` per period.
    pub loops: usize,
    /// Normalized recurrence distance achieved at one period.
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodOptions {
    pub eps: f64,
    pub min_period: f64,
    pub kappa: f64,
}

impl Default for PeriodOptions {
    fn default() -> Self {
        Self {
            eps: DEFAULT_RECURRENCE_EPS,
            min_period: DEFAULT_MIN_PERIOD,
            kappa: DEFAULT_KINK_FRACTION,
        }
    }
}

/// Embedded state `(x(t), y(t), y(t - tau))`.
fn embedded(tr: &Trajectory, t: f64) -> Option<[f64; 3]> {
    let now = tr.sample(t).ok()?;
    let lagged = tr.sample(t - tr.params.delay).ok()?;
    Some([now.x, now.y, lagged.y])
}

struct Recurrence<'a> {
    tr: &'a Trajectory,
    scale: [f64; 3],
}

impl Recurrence<'_> {
    fn distance(&self, a: &[f64; 3], t: f64) -> Option<f64> {
        let b = embedded(self.tr, t)?;
        Some(
            (0..3)
                .map(|i| (a[i] - b[i]).abs() / self.scale[i])
                .fold(0.0, f64::max),
        )
    }
}

pub fn estimate_period(tr: &Trajectory, t_cut: f64, eps: f64) -> Option<PeriodEstimate> {
    estimate_period_with(
        tr,
        t_cut,
        &PeriodOptions {
            eps,
            ..PeriodOptions::default()
        },
    )
}

/// Smallest recurrence time of the embedded state, anchored at the last
/// genuine maximum of `y`. A candidate period `P` is accepted only when the
/// state returns (within `2 eps`) at every earlier multiple `2P, 3P, ...`
/// covered by the record, and at least at `2P`. `None` means no
/// recurrence was found in the tail: the attractor is not periodic, or the
/// tail is too short to tell.
pub fn estimate_period_with(
    tr: &Trajectory,
    t_cut: f64,
    opts: &PeriodOptions,
) -> Option<PeriodEstimate> {
    let raw = extrema(tr, Component::Y, t_cut).ok()?;
    let es = filter_kinks(&raw, opts.kappa);
    let earliest = t_cut.max(tr.t_start() + tr.params.delay);
    let maxima: Vec<f64> = es
        .maxima()
        .map(|e| e.t)
        .filter(|&t| t >= earliest)
        .collect();
    if maxima.is_empty() {
        return None;
    }
    let ax = tail_amplitude(tr, Component::X, t_cut);
    let ay = tail_amplitude(tr, Component::Y, t_cut);
    if ax < FLAT_AMPLITUDE || ay < FLAT_AMPLITUDE {
        return None;
    }
    let rec = Recurrence {
        tr,
        scale: [ax, ay, ay],
    };
    // A kink cut off by the end of the record cannot be filtered, so a few
    // earlier anchors are tried as well.
    let first_anchor = maxima.len().saturating_sub(ANCHOR_TRIES);
    (first_anchor..maxima.len())
        .rev()
        .find_map(|a| recurrence_from(&rec, &maxima[..=a], opts))
}

const ANCHOR_TRIES: usize = 3;

/// Period search anchored at the last entry of `maxima`.
fn recurrence_from(
    rec: &Recurrence<'_>,
    maxima: &[f64],
    opts: &PeriodOptions,
) -> Option<PeriodEstimate> {
    let (&anchor_t, older) = maxima.split_last()?;
    let anchor = embedded(rec.tr, anchor_t)?;
    for (k, &tm) in older.iter().enumerate().rev() {
        let period = anchor_t - tm;
        if period < opts.min_period {
            continue;
        }
        let d1 = rec.distance(&anchor, tm)?;
        if d1 >= opts.eps {
            continue;
        }
        // Confirm at every earlier multiple of the period the record holds;
        // chaotic near-returns do not survive more than a couple.
        let mut confirmed = 0;
        let mut first_back = None;
        for m in 2.. {
            let target = anchor_t - m as f64 * period;
            if target < older[0] - 0.01 * period {
                break;
            }
            let Some(tm) = older[..k]
                .iter()
                .copied()
                .min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
            else {
                break;
            };
            let Some(d) = rec.distance(&anchor, tm) else {
                break;
            };
            if (tm - target).abs() > 0.01 * period || d >= 2.0 * opts.eps {
                confirmed = 0;
                break;
            }
            first_back.get_or_insert(tm);
            confirmed += 1;
        }
        let Some(tm2) = first_back.filter(|_| confirmed > 0) else {
            continue;
        };
        return Some(PeriodEstimate {
            period: 0.5 * (anchor_t - tm2),
            loops: older[k..].len(),
            confidence: d1,
        });
    }
    None
}

/// Pairs `(y(t), y(t - lag))` at every stored node after `t_cut`.
pub fn delay_embed(tr: &Trajectory, lag: f64, t_cut: f64) -> Result<Vec<(f64, f64)>> {
    if !(lag > 0.0) {
        return Err(Error::InvalidParameter {
            name: "lag",
            value: lag,
            reason: "must be positive",
        });
    }
    let earliest = tr.t_start() + lag;
    if t_cut < earliest - 1e-9 && tr.start_index > 0 {
        return Err(Error::OutOfDomain {
            what: "t_cut",
            value: t_cut,
            lo: earliest,
            hi: tr.t_end,
        });
    }
    let from = tr.index_at_or_after(t_cut);
    (from..tr.len())
        .map(|k| {
            let t = tr.time(k);
            Ok((tr.states[k].y, tr.sample(t - lag)?.y))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnMap {
    pub threshold: f64,
    /// `(min_k, min_{k+1})` in chronological order.
    pub pairs: Vec<(f64, f64)>,
}

impl ReturnMap {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "min_k,min_k1")?;
        for (a, b) in &self.pairs {
            writeln!(w, "{a},{b}")?;
        }
        Ok(())
    }

    /// Number of distinct first coordinates, merging values within `tol`.
    pub fn distinct_points(&self, tol: f64) -> usize {
        let mut xs: Vec<f64> = self.pairs.iter().map(|p| p.0).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|a, b| (*a - *b).abs() <= tol);
        xs.len()
    }

    /// Largest jump in the second coordinate between pairs adjacent in the
    /// first coordinate, relative to the second coordinate's range. Small
    /// values mean the points lie on a single-valued curve.
    pub fn max_vertical_spread(&self) -> f64 {
        let mut pts = self.pairs.clone();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (lo, hi) = pts
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.1), hi.max(p.1))
            });
        if pts.len() < 2 || hi <= lo {
            return 0.0;
        }
        pts.windows(2)
            .map(|w| (w[1].1 - w[0].1).abs())
            .fold(0.0, f64::max)
            / (hi - lo)
    }
}

/// Successive genuine minima of `y`, keeping pairs where both are below
/// `threshold`.
pub fn return_map(es: &ExtremaSeries, threshold: f64) -> ReturnMap {
    let minima: Vec<f64> = es.minima().map(|e| e.value).collect();
    let pairs = minima
        .windows(2)
        .filter(|w| w[0] < threshold && w[1] < threshold)
        .map(|w| (w[0], w[1]))
        .collect();
    ReturnMap { threshold, pairs }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    /// Sample times (every node).
    pub times: Vec<f64>,
    /// Natural log of the Euclidean separation; `-inf` where identical.
    pub log_sep: Vec<f64>,
    /// Least-squares growth rate of the separation envelope.
    pub slope: f64,
    /// End of the window used for the fit.
    pub fit_end: f64,
}

impl Divergence {
    pub fn write_csv<W: Write>(&self, w: &mut W, decimate: usize) -> io::Result<()> {
        writeln!(w, "t,log_sep")?;
        for (t, l) in self
            .times
            .iter()
            .zip(&self.log_sep)
            .step_by(decimate.max(1))
        {
            writeln!(w, "{t},{l}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceOptions {
    pub dt_target: f64,
    /// The fit stops once the envelope reaches this fraction of the
    /// attractor amplitude.
    pub saturation: f64,
}

impl Default for DivergenceOptions {
    fn default() -> Self {
        Self {
            dt_target: crate::integrator::DEFAULT_DT,
            saturation: 0.5,
        }
    }
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return 0.0;
    }
    let (mt, mv) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + p.0 / n, b + p.1 / n));
    let (num, den) = pts.iter().fold((0.0, 0.0), |(num, den), p| {
        (num + (p.0 - mt) * (p.1 - mv), den + (p.0 - mt).powi(2))
    });
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Runs `h` and `h` with `x_hist + delta` side by side and measures how fast
/// they separate.
pub fn divergence(p: &Params, h: &HistorySpec, delta: f64, t_end: f64) -> Result<Divergence> {
    divergence_with(p, h, delta, t_end, &DivergenceOptions::default())
}

/// The envelope is the running block maximum of the separation over blocks of
/// one delay (or 100 time units without delay); its logarithm is fitted by
/// least squares from the start up to the first block whose maximum exceeds
/// `saturation` times the reference attractor amplitude.
pub fn divergence_with(
    p: &Params,
    h: &HistorySpec,
    delta: f64,
    t_end: f64,
    opts: &DivergenceOptions,
) -> Result<Divergence> {
    let mut perturbed = *h;
    perturbed.x_hist += delta;
    let a = integrate(p, h, t_end, opts.dt_target)?;
    let b = integrate(p, &perturbed, t_end, opts.dt_target)?;
    let times: Vec<f64> = (0..a.len()).map(|k| a.time(k)).collect();
    let seps: Vec<f64> = a
        .states
        .iter()
        .zip(&b.states)
        .map(|(u, v)| u.distance(v))
        .collect();
    let log_sep = seps.iter().map(|s| s.ln()).collect();

    let amplitude = tail_amplitude(&a, Component::Y, 0.5 * a.t_end);
    let limit = opts.saturation * amplitude;
    let block_len = if p.delay > 0.0 { p.delay } else { 100.0 };
    let per_block = ((block_len / a.dt).round() as usize).max(1);
    let mut envelope = Vec::new();
    let mut fit_end = a.t_end;
    for (chunk_idx, chunk) in seps.chunks(per_block).enumerate() {
        let peak = chunk.iter().copied().fold(0.0, f64::max);
        if peak <= 0.0 {
            continue;
        }
        let t_mid = a.time(chunk_idx * per_block + chunk.len() / 2);
        envelope.push((t_mid, peak.ln()));
        if peak >= limit && envelope.len() >= 3 {
            fit_end = t_mid;
            break;
        }
    }
    Ok(Divergence {
        times,
        log_sep,
        slope: least_squares_slope(&envelope),
        fit_end,
    })
}
