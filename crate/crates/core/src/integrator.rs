//! Fixed-step method-of-steps integration of the scaled delayed system.
//!
//! Classic RK4 with the step chosen so that an integer number of steps spans
//! one delay. The delayed arguments needed at the start and end of a step are
//! then past grid nodes; the midpoint stage uses cubic Hermite interpolation
//! of stored (state, derivative) pairs.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{coexistence_threshold, predator_bound, Params, State};

/// Default target step.
pub const DEFAULT_DT: f64 = 0.05;
/// Undershoots below zero smaller than this are clamped; larger ones abort.
pub const NEGATIVE_TOLERANCE: f64 = 1e-12;

/// Piecewise-constant initial data on `[-tau, 0]`, optionally with a
/// different value at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistorySpec {
    pub x_hist: f64,
    pub y_hist: f64,
    pub x0: Option<f64>,
    pub y0: Option<f64>,
}

impl HistorySpec {
    pub fn constant(x: f64, y: f64) -> Self {
        Self {
            x_hist: x,
            y_hist: y,
            x0: None,
            y0: None,
        }
    }

    pub fn with_initial(mut self, x0: f64, y0: f64) -> Self {
        self.x0 = Some(x0);
        self.y0 = Some(y0);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [
            ("x_hist", Some(self.x_hist)),
            ("y_hist", Some(self.y_hist)),
            ("x0", self.x0),
            ("y0", self.y0),
        ];
        for (name, v) in vals {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::InvalidParameter {
                        name,
                        value: v,
                        reason: "initial data must be finite and nonnegative",
                    });
                }
            }
        }
        Ok(())
    }

    /// State on `[-tau, 0)`.
    pub fn past(&self) -> State {
        State::new(self.x_hist, self.y_hist)
    }

    /// State at `t = 0`.
    pub fn initial(&self) -> State {
        State::new(
            self.x0.unwrap_or(self.x_hist),
            self.y0.unwrap_or(self.y_hist),
        )
    }

    /// Whether the data lies in the set from which both species persist:
    /// positive prey at `t = 0` and a time where both are positive.
    pub fn is_persistent_class(&self, tau: f64) -> bool {
        let now = self.initial();
        let both_now = now.x * now.y > 0.0;
        let both_past = tau > 0.0 && self.x_hist * self.y_hist > 0.0;
        now.x > 0.0 && (both_now || both_past)
    }

    /// `Y e^{-s tau} x(-tau) + y(0)`, the starting value of the comparison
    /// function behind [`predator_bound`].
    pub fn initial_mass(&self, p: &Params) -> f64 {
        let x_lag = if p.delay > 0.0 {
            self.x_hist
        } else {
            self.initial().x
        };
        p.effective_yield() * x_lag + self.initial().y
    }
}

/// Number of steps per delay such that `tau / n <= dt_target`.
pub fn steps_per_delay(tau: f64, dt_target: f64) -> usize {
    let ratio = tau / dt_target;
    let n = ratio.ceil();
    // Absorb round-off such as 90 / (90 / 1800 / 2) = 3600.0000000001.
    let n = if n - ratio > 1.0 - 1e-9 { n - 1.0 } else { n };
    (n as usize).max(1)
}

/// Actual step used for a given delay and target.
pub fn effective_dt(tau: f64, dt_target: f64) -> f64 {
    if tau > 0.0 {
        tau / steps_per_delay(tau, dt_target) as f64
    } else {
        dt_target
    }
}

#[inline]
fn hermite(s0: State, d0: State, s1: State, d1: State, dt: f64, u: f64) -> State {
    let u2 = u * u;
    let u3 = u2 * u;
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    State {
        x: h00 * s0.x + h10 * dt * d0.x + h01 * s1.x + h11 * dt * d1.x,
        y: h00 * s0.y + h10 * dt * d0.y + h01 * s1.y + h11 * dt * d1.y,
    }
}

#[inline]
fn axpy(a: State, h: f64, b: State) -> State {
    State {
        x: a.x + h * b.x,
        y: a.y + h * b.y,
    }
}

/// Streaming stepper retaining only the last delay's worth of nodes.
///
/// Use [`integrate`] to keep a full [`Trajectory`]; use this directly for
/// long transients where only the final state matters.
#[derive(Debug, Clone)]
pub struct Integrator {
    params: Params,
    history: HistorySpec,
    dt: f64,
    /// Steps per delay; zero for the undelayed system.
    lag: usize,
    death_rate: f64,
    conversion: f64,
    ring_states: Vec<State>,
    ring_derivs: Vec<State>,
    /// Nodes `-lag..=0` with derivatives when continuing a stored solution.
    segment: Option<Vec<(State, State)>>,
    index: usize,
    state: State,
}

impl Integrator {
    pub fn new(p: &Params, h: &HistorySpec, dt_target: f64) -> Result<Self> {
        p.validate()?;
        h.validate()?;
        if !(dt_target > 0.0 && dt_target.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                value: dt_target,
                reason: "must be positive",
            });
        }
        if p.delay > 0.0 && dt_target > p.delay {
            return Err(Error::StepExceedsDelay {
                dt: dt_target,
                tau: p.delay,
            });
        }
        let lag = if p.delay > 0.0 {
            steps_per_delay(p.delay, dt_target)
        } else {
            0
        };
        let cap = lag + 1;
        Ok(Self {
            params: *p,
            history: *h,
            dt: effective_dt(p.delay, dt_target),
            lag,
            death_rate: p.death_rate,
            conversion: p.effective_yield(),
            ring_states: vec![State::default(); cap],
            ring_derivs: vec![State::default(); cap],
            segment: None,
            index: 0,
            state: h.initial(),
        })
    }

    /// Starts from the final delay-length stretch of `seed`, which may have
    /// been computed with a different delay. The new history is the seed
    /// resampled on the new grid, with derivatives from the seed's own
    /// vector field.
    pub fn continue_from(p: &Params, seed: &Trajectory, dt_target: f64) -> Result<Self> {
        let last = seed.final_state();
        let mut integ = Self::new(p, &HistorySpec::constant(last.x, last.y), dt_target)?;
        if integ.lag == 0 {
            return Ok(integ);
        }
        let t0 = seed.t_end;
        let nodes = (0..=integ.lag)
            .map(|i| {
                let t = t0 - (integ.lag - i) as f64 * integ.dt;
                let now = seed.sample(t)?;
                let lagged = seed.sample(t - seed.params.delay)?;
                Ok((now, seed.params.vector_field(now, lagged)))
            })
            .collect::<Result<Vec<_>>>()?;
        integ.segment = Some(nodes);
        Ok(integ)
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn lag_steps(&self) -> usize {
        self.lag
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn time(&self) -> f64 {
        self.index as f64 * self.dt
    }

    pub fn state(&self) -> State {
        self.state
    }

    #[inline]
    fn rhs(&self, now: State, delayed: State) -> State {
        State {
            x: now.x * (1.0 - now.x - now.y),
            y: -self.death_rate * now.y + self.conversion * delayed.y * delayed.x,
        }
    }

    /// Stored node `i`, which must lie within the last delay.
    #[inline]
    fn node(&self, i: usize) -> (State, State) {
        let slot = i % self.ring_states.len();
        (self.ring_states[slot], self.ring_derivs[slot])
    }

    /// Delayed state at signed node index `i` (negative means history).
    #[inline]
    fn lagged(&self, i: isize) -> State {
        if i < 0 {
            match &self.segment {
                Some(seg) => seg[(i + self.lag as isize) as usize].0,
                None => self.history.past(),
            }
        } else {
            self.node(i as usize).0
        }
    }

    /// Derivative at the current node.
    pub fn derivative(&self) -> State {
        if self.lag == 0 {
            self.rhs(self.state, self.state)
        } else {
            let back = self.index as isize - self.lag as isize;
            self.rhs(self.state, self.lagged(back))
        }
    }

    /// Advances one step and returns the derivative at the node just left.
    pub fn step(&mut self) -> Result<State> {
        let dt = self.dt;
        let s = self.state;
        let d0;
        let next = if self.lag == 0 {
            d0 = self.rhs(s, s);
            let a = axpy(s, 0.5 * dt, d0);
            let k2 = self.rhs(a, a);
            let b = axpy(s, 0.5 * dt, k2);
            let k3 = self.rhs(b, b);
            let c = axpy(s, dt, k3);
            let k4 = self.rhs(c, c);
            combine(s, dt, d0, k2, k3, k4)
        } else {
            let back = self.index as isize - self.lag as isize;
            d0 = self.rhs(s, self.lagged(back));
            let slot = self.index % self.ring_states.len();
            self.ring_states[slot] = s;
            self.ring_derivs[slot] = d0;

            let (mid, end) = if let (true, Some(seg)) = (back < 0, &self.segment) {
                let k = (back + self.lag as isize) as usize;
                let ((s0, q0), (s1, q1)) = (seg[k], seg[k + 1]);
                (hermite(s0, q0, s1, q1, dt, 0.5), s1)
            } else if back < 0 {
                let past = self.history.past();
                (past, self.lagged(back + 1))
            } else {
                let (s0, q0) = self.node(back as usize);
                let (s1, q1) = self.node(back as usize + 1);
                (hermite(s0, q0, s1, q1, dt, 0.5), s1)
            };
            let k2 = self.rhs(axpy(s, 0.5 * dt, d0), mid);
            let k3 = self.rhs(axpy(s, 0.5 * dt, k2), mid);
            let k4 = self.rhs(axpy(s, dt, k3), end);
            combine(s, dt, d0, k2, k3, k4)
        };
        self.index += 1;
        self.state = guard(next, self.time())?;
        Ok(d0)
    }

    /// Steps until the clock reaches `t` (rounded up to the grid).
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        let target = steps_for(t, self.dt);
        while self.index < target {
            self.step()?;
        }
        Ok(())
    }
}

#[inline]
fn combine(s: State, dt: f64, k1: State, k2: State, k3: State, k4: State) -> State {
    let w = dt / 6.0;
    State {
        x: s.x + w * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
        y: s.y + w * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
    }
}

fn guard(mut s: State, t: f64) -> Result<State> {
    if !(s.x.is_finite() && s.y.is_finite()) {
        return Err(Error::NonFinite { t });
    }
    if s.x < -NEGATIVE_TOLERANCE || s.y < -NEGATIVE_TOLERANCE {
        return Err(Error::NegativeState { t, x: s.x, y: s.y });
    }
    s.x = s.x.max(0.0);
    s.y = s.y.max(0.0);
    Ok(s)
}

fn steps_for(t: f64, dt: f64) -> usize {
    let r = t / dt;
    let n = r.round();
    if (r - n).abs() < 1e-9 * r.max(1.0) {
        n as usize
    } else {
        r.ceil() as usize
    }
}

/// Stored solution on a uniform grid, `t_i = i * dt`, for `i` from
/// `start_index` to the final node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: Params,
    pub history: HistorySpec,
    pub dt: f64,
    pub t_end: f64,
    pub start_index: usize,
    pub states: Vec<State>,
    pub derivs: Vec<State>,
    /// Set when the run continued another trajectory; the initial data is
    /// then not a [`HistorySpec`] and times before zero cannot be sampled.
    #[serde(default)]
    pub continued: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub dt_target: f64,
    /// Nodes earlier than this time are discarded.
    pub record_from: f64,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            dt_target: DEFAULT_DT,
            record_from: 0.0,
        }
    }
}

/// Integrates on `[0, t_end]` and keeps every node.
pub fn integrate(p: &Params, h: &HistorySpec, t_end: f64, dt_target: f64) -> Result<Trajectory> {
    integrate_with(
        p,
        h,
        t_end,
        IntegrateOptions {
            dt_target,
            record_from: 0.0,
        },
    )
}

/// Integrates on `[0, t_end]`, keeping nodes from `opts.record_from` on.
pub fn integrate_with(
    p: &Params,
    h: &HistorySpec,
    t_end: f64,
    opts: IntegrateOptions,
) -> Result<Trajectory> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "t_end",
            value: t_end,
            reason: "must be positive",
        });
    }
    let integ = Integrator::new(p, h, opts.dt_target)?;
    record(integ, *h, t_end, opts.record_from, false)
}

/// Like [`integrate_with`], but the initial data is the last delay of `seed`
/// (see [`Integrator::continue_from`]). Nodes before `t = dt` are never kept.
pub fn integrate_continued(
    p: &Params,
    seed: &Trajectory,
    t_end: f64,
    opts: IntegrateOptions,
) -> Result<Trajectory> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "t_end",
            value: t_end,
            reason: "must be positive",
        });
    }
    let integ = Integrator::continue_from(p, seed, opts.dt_target)?;
    let last = seed.final_state();
    let from = opts.record_from.max(integ.dt());
    record(
        integ,
        HistorySpec::constant(last.x, last.y),
        t_end,
        from,
        true,
    )
}

fn record(
    mut integ: Integrator,
    h: HistorySpec,
    t_end: f64,
    record_from: f64,
    continued: bool,
) -> Result<Trajectory> {
    let dt = integ.dt();
    let last = steps_for(t_end, dt);
    let start = steps_for(record_from.clamp(0.0, t_end), dt).min(last);
    integ.advance_to(start as f64 * dt)?;
    let n = last - start + 1;
    let mut states = Vec::with_capacity(n);
    let mut derivs = Vec::with_capacity(n);
    while integ.index() < last {
        let s = integ.state();
        let d = integ.step()?;
        states.push(s);
        derivs.push(d);
    }
    states.push(integ.state());
    derivs.push(integ.derivative());
    Ok(Trajectory {
        params: integ.params,
        history: h,
        dt,
        t_end: last as f64 * dt,
        start_index: start,
        states,
        derivs,
        continued,
    })
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Time of the `k`-th stored node.
    pub fn time(&self, k: usize) -> f64 {
        (self.start_index + k) as f64 * self.dt
    }

    pub fn t_start(&self) -> f64 {
        self.time(0)
    }

    /// Copy of the last `span` time units (at least two nodes).
    pub fn tail(&self, span: f64) -> Trajectory {
        let keep = ((span / self.dt).ceil() as usize + 1).clamp(2, self.len().max(2));
        let from = self.len().saturating_sub(keep);
        Trajectory {
            start_index: self.start_index + from,
            states: self.states[from..].to_vec(),
            derivs: self.derivs[from..].to_vec(),
            continued: self.continued || from > 0,
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> Trajectory {
        Trajectory {
            params: self.params,
            history: self.history,
            dt: self.dt,
            t_end: self.t_end,
            start_index: self.start_index,
            states: Vec::new(),
            derivs: Vec::new(),
            continued: self.continued,
        }
    }

    pub fn final_state(&self) -> State {
        *self
            .states
            .last()
            .expect("trajectory has at least one node")
    }

    /// Stored nodes as `(t, state)`.
    pub fn nodes(&self) -> impl Iterator<Item = (f64, State)> + '_ {
        self.states
            .iter()
            .enumerate()
            .map(move |(k, s)| (self.time(k), *s))
    }

    /// Index of the first stored node with time `>= t`.
    pub fn index_at_or_after(&self, t: f64) -> usize {
        let r = t / self.dt - self.start_index as f64;
        if r <= 0.0 {
            0
        } else {
            (r - 1e-9).ceil() as usize
        }
    }

    /// Solution at `t`: history for `t < 0`, stored nodes exactly, cubic
    /// Hermite in between.
    pub fn sample(&self, t: f64) -> Result<State> {
        let delay = self.params.delay;
        if t < 0.0 {
            if t >= -delay - 1e-12 && !self.continued {
                return Ok(self.history.past());
            }
        } else if t >= self.t_start() - 1e-12 * self.t_end.max(1.0)
            && t <= self.t_end + 1e-9 * self.t_end.max(1.0)
        {
            let r = (t / self.dt - self.start_index as f64).max(0.0);
            let k = r.floor() as usize;
            if k + 1 >= self.states.len() {
                return Ok(self.final_state());
            }
            let u = r - k as f64;
            if u < 1e-9 {
                return Ok(self.states[k]);
            }
            return Ok(hermite(
                self.states[k],
                self.derivs[k],
                self.states[k + 1],
                self.derivs[k + 1],
                self.dt,
                u,
            ));
        }
        let lo = if self.start_index == 0 {
            -delay
        } else {
            self.t_start()
        };
        Err(Error::OutOfDomain {
            what: "t",
            value: t,
            lo,
            hi: self.t_end,
        })
    }

    /// Writes `t,x,y` rows, keeping every `decimate`-th node.
    pub fn write_csv<W: Write>(&self, w: &mut W, decimate: usize) -> io::Result<()> {
        writeln!(w, "t,x,y")?;
        for (t, s) in self.nodes().step_by(decimate.max(1)) {
            writeln!(w, "{t},{},{}", s.x, s.y)?;
        }
        Ok(())
    }
}

/// Outcome of the Richardson step-halving experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Step of the coarsest run.
    pub dt: f64,
    /// Max difference between the `dt` and `dt/2` runs on the window.
    pub coarse_diff: f64,
    /// Max difference between the `dt/2` and `dt/4` runs on the window.
    pub fine_diff: f64,
    pub order: f64,
}

/// Observed order of accuracy from runs at `dt`, `dt/2` and `dt/4`, measured
/// on the nodes of the coarsest run inside `window`.
pub fn convergence_check(
    p: &Params,
    h: &HistorySpec,
    t_end: f64,
    dt: f64,
    window: (f64, f64),
) -> Result<ConvergenceReport> {
    let dt = effective_dt(p.delay, dt);
    let runs = [
        integrate(p, h, t_end, dt)?,
        integrate(p, h, t_end, dt / 2.0)?,
        integrate(p, h, t_end, dt / 4.0)?,
    ];
    let (lo, hi) = (window.0.max(0.0), window.1.min(runs[0].t_end));
    let mut coarse_diff: f64 = 0.0;
    let mut fine_diff: f64 = 0.0;
    for (k, s0) in runs[0].states.iter().enumerate() {
        let t = runs[0].time(k);
        if t < lo || t > hi {
            continue;
        }
        let s1 = runs[1].states[2 * k];
        let s2 = runs[2].states[4 * k];
        coarse_diff = coarse_diff.max(s0.distance(&s1));
        fine_diff = fine_diff.max(s1.distance(&s2));
    }
    Ok(ConvergenceReport {
        dt,
        coarse_diff,
        fine_diff,
        order: (coarse_diff / fine_diff).log2(),
    })
}

/// Checks of the qualitative bounds every solution must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub min_x: f64,
    pub min_y: f64,
    /// Largest prey value at or after the transient cut.
    pub max_x_after_transient: f64,
    /// Largest `y(t) - bound(t)` over stored nodes (negative when satisfied).
    pub predator_bound_excess: f64,
    /// Minima of both components over the final 20% of the record.
    pub tail_min_x: f64,
    pub tail_min_y: f64,
    /// Whether the run is one where both species must persist.
    pub persistence_expected: bool,
}

impl InvariantReport {
    pub fn nonnegative(&self) -> bool {
        self.min_x >= -NEGATIVE_TOLERANCE && self.min_y >= -NEGATIVE_TOLERANCE
    }

    pub fn prey_bounded(&self) -> bool {
        self.max_x_after_transient <= 1.0 + 1e-3
    }

    pub fn predator_bounded(&self) -> bool {
        self.predator_bound_excess <= 1e-6
    }

    pub fn persistent(&self) -> bool {
        !self.persistence_expected || (self.tail_min_x > 1e-6 && self.tail_min_y > 1e-6)
    }

    pub fn all_hold(&self) -> bool {
        self.nonnegative() && self.prey_bounded() && self.predator_bounded() && self.persistent()
    }
}

/// Predator envelope `t -> bound` for a trajectory's initial data.
///
/// The comparison argument needs the delayed prey to obey the prey equation.
/// A constant history does not, so when it feeds more biomass than the
/// asymptotic rate allows the envelope is restarted at `t = tau`, using the
/// exact predator solution on `[0, tau]`.
pub fn predator_envelope(p: &Params, h: &HistorySpec) -> impl Fn(f64) -> f64 {
    let s = p.death_rate;
    let tau = p.delay;
    let conv = p.effective_yield();
    let from_zero = predator_bound(p, h.initial_mass(p));
    let past = h.past();
    let start = h.initial();
    let inflow = conv * past.x * past.y;
    let restart = tau > 0.0 && past.x * (s + past.y) > (1.0 + s).powi(2) / 4.0;
    let early = move |t: f64| {
        let decay = (-s * t).exp();
        start.y * decay + inflow / s * (1.0 - decay)
    };
    let late = predator_bound(p, conv * start.x + early(tau));
    move |t: f64| {
        if !restart {
            from_zero.at(t)
        } else if t <= tau {
            early(t)
        } else {
            late.at(t - tau)
        }
    }
}

pub fn check_invariants(tr: &Trajectory, transient: f64) -> InvariantReport {
    let p = &tr.params;
    let bound = predator_envelope(p, &tr.history);
    let tail_from = tr.t_start() + 0.8 * (tr.t_end - tr.t_start());
    let mut r = InvariantReport {
        min_x: f64::INFINITY,
        min_y: f64::INFINITY,
        max_x_after_transient: f64::NEG_INFINITY,
        predator_bound_excess: f64::NEG_INFINITY,
        tail_min_x: f64::INFINITY,
        tail_min_y: f64::INFINITY,
        persistence_expected: p.delay < coexistence_threshold(p)
            && tr.history.is_persistent_class(p.delay),
    };
    for (t, s) in tr.nodes() {
        r.min_x = r.min_x.min(s.x);
        r.min_y = r.min_y.min(s.y);
        if t >= transient {
            r.max_x_after_transient = r.max_x_after_transient.max(s.x);
        }
        r.predator_bound_excess = r.predator_bound_excess.max(s.y - bound(t));
        if t >= tail_from {
            r.tail_min_x = r.tail_min_x.min(s.x);
            r.tail_min_y = r.tail_min_y.min(s.y);
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::equilibria;
    use proptest::prelude::*;

    fn paper(tau: f64) -> Params {
        Params::new(0.02, 0.6, tau).unwrap()
    }

    #[test]
    fn step_divides_delay() {
        assert_eq!(steps_per_delay(90.0, 0.05), 1800);
        assert_eq!(steps_per_delay(90.0, 0.025), 3600);
        assert_eq!(steps_per_delay(90.7, 0.05), 1814);
        assert_eq!(steps_per_delay(1.0, 0.3), 4);
        assert!((effective_dt(86.3, 0.05) - 86.3 / 1726.0).abs() < 1e-15);
        assert_eq!(effective_dt(0.0, 0.05), 0.05);
        let dt = effective_dt(90.0, 0.05);
        assert_eq!(steps_per_delay(90.0, dt / 2.0), 3600);
        assert_eq!(steps_per_delay(90.0, dt / 4.0), 7200);
    }

    #[test]
    fn rejects_step_longer_than_delay() {
        let h = HistorySpec::constant(0.1, 0.1);
        assert!(matches!(
            integrate(&paper(0.5), &h, 10.0, 1.0),
            Err(Error::StepExceedsDelay { .. })
        ));
        assert!(integrate(&paper(0.0), &h, 10.0, 1.0).is_ok());
        assert!(integrate(&paper(1.0), &h, -1.0, 0.1).is_err());
        assert!(integrate(&paper(1.0), &HistorySpec::constant(-0.1, 0.1), 1.0, 0.1).is_err());
    }

    #[test]
    fn zero_prey_decouples_predator_decay() {
        let p = paper(30.0);
        let h = HistorySpec::constant(0.0, 0.5);
        let tr = integrate(&p, &h, 30.0, 0.05).unwrap();
        for (t, s) in tr.nodes() {
            assert_eq!(s.x, 0.0);
            let exact = 0.5 * (-0.02 * t).exp();
            assert!((s.y - exact).abs() < 1e-12, "t = {t}");
        }
        for t in [0.01f64, 3.333, 17.77, 29.99] {
            let exact = 0.5 * (-0.02 * t).exp();
            assert!((tr.sample(t).unwrap().y - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_nodes_history_and_bounds() {
        let p = paper(5.0);
        let h = HistorySpec::constant(0.1, 0.2).with_initial(0.3, 0.4);
        let tr = integrate(&p, &h, 20.0, 0.1).unwrap();
        assert_eq!(tr.sample(-2.5).unwrap(), State::new(0.1, 0.2));
        assert_eq!(tr.sample(-5.0).unwrap(), State::new(0.1, 0.2));
        assert_eq!(tr.sample(0.0).unwrap(), State::new(0.3, 0.4));
        assert_eq!(tr.sample(tr.time(37)).unwrap(), tr.states[37]);
        assert!(tr.sample(-5.1).is_err());
        assert!(tr.sample(20.5).is_err());
    }

    #[test]
    fn recorded_window_rejects_earlier_times() {
        let p = paper(5.0);
        let h = HistorySpec::constant(0.1, 0.1);
        let full = integrate(&p, &h, 50.0, 0.1).unwrap();
        let tail = integrate_with(
            &p,
            &h,
            50.0,
            IntegrateOptions {
                dt_target: 0.1,
                record_from: 30.0,
            },
        )
        .unwrap();
        assert!((tail.t_start() - 30.0).abs() < 1e-9);
        assert!(tail.sample(29.0).is_err());
        assert_eq!(tail.final_state(), full.final_state());
        assert_eq!(tail.sample(41.234).unwrap(), full.sample(41.234).unwrap());
    }

    #[test]
    fn deterministic() {
        let p = paper(90.0);
        let h = HistorySpec::constant(0.1, 0.1);
        let a = integrate(&p, &h, 2000.0, 0.05).unwrap();
        let b = integrate(&p, &h, 2000.0, 0.05).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_delay_converges_to_coexistence() {
        let p = paper(0.0);
        let tr = integrate(&p, &HistorySpec::constant(0.1, 0.1), 5000.0, 0.05).unwrap();
        let e = equilibria(&p).coexistence.unwrap();
        assert!(tr.final_state().distance(&e) < 1e-6);
    }

    #[test]
    fn short_delay_converges_to_coexistence() {
        let p = paper(1.0);
        let tr = integrate(&p, &HistorySpec::constant(0.1, 0.1), 8000.0, 0.05).unwrap();
        let e = equilibria(&p).coexistence.unwrap();
        assert!(
            tr.final_state().distance(&e) < 1e-6,
            "{:?}",
            tr.final_state()
        );
    }

    #[test]
    fn logistic_order_is_four() {
        let p = paper(0.0);
        let h = HistorySpec::constant(0.05, 0.0);
        let r = convergence_check(&p, &h, 20.0, 0.4, (0.0, 20.0)).unwrap();
        assert!((r.order - 4.0).abs() < 0.3, "{r:?}");
    }

    #[test]
    fn chaotic_regime_short_horizon_order() {
        let p = paper(90.0);
        let h = HistorySpec::constant(0.1, 0.1);
        let r = convergence_check(&p, &h, 50.0, 0.5, (0.0, 50.0)).unwrap();
        assert!(r.order >= 3.0, "{r:?}");
    }

    #[test]
    fn invariant_report_flags_persistence_class() {
        let tr = integrate(
            &paper(100.0),
            &HistorySpec::constant(0.1, 0.1),
            6000.0,
            0.05,
        )
        .unwrap();
        let r = check_invariants(&tr, 2000.0);
        assert!(r.persistence_expected);
        assert!(r.all_hold(), "{r:?}");
        let tr = integrate(&paper(20.0), &HistorySpec::constant(0.1, 0.0), 300.0, 0.05).unwrap();
        assert!(!check_invariants(&tr, 100.0).persistence_expected);
    }

    #[test]
    fn continuation_with_same_delay_matches_direct_run() {
        let p = paper(40.0);
        let h = HistorySpec::constant(0.1, 0.1);
        let direct = integrate(&p, &h, 3000.0, 0.05).unwrap();
        let seed = integrate(&p, &h, 1000.0, 0.05).unwrap();
        let cont = integrate_continued(&p, &seed, 2000.0, IntegrateOptions::default()).unwrap();
        let a = direct.final_state();
        let b = cont.final_state();
        assert!(a.distance(&b) < 1e-9, "{a:?} {b:?}");
        assert!(cont.continued);
        assert!(cont.sample(-1.0).is_err());
        assert_eq!(cont.start_index, 1);
    }

    #[test]
    fn persistent_class_membership() {
        assert!(HistorySpec::constant(0.1, 0.1).is_persistent_class(5.0));
        assert!(!HistorySpec::constant(0.0, 0.1).is_persistent_class(5.0));
        assert!(HistorySpec::constant(0.1, 0.0)
            .with_initial(0.1, 0.2)
            .is_persistent_class(5.0));
        assert!(!HistorySpec::constant(0.1, 0.0).is_persistent_class(5.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn solutions_respect_bounds(
            tau in 0.0f64..120.0,
            xh in 0.0f64..2.0,
            yh in 0.0f64..3.0,
        ) {
            let p = paper(tau);
            let h = HistorySpec::constant(xh, yh);
            let tr = integrate(&p, &h, 1500.0, 0.1).unwrap();
            let r = check_invariants(&tr, 600.0);
            prop_assert!(r.nonnegative());
            prop_assert!(r.predator_bounded(), "{:?}", r);
            prop_assert!(r.prey_bounded(), "{:?}", r);
        }
    }
}
