//! Attractor diagnostics on long simulated runs.

use pdelay_core::analysis::{
    delay_embed, estimate_period, extrema, filter_kinks, return_map, Component, ExtremumKind,
    DEFAULT_KINK_FRACTION,
};
use pdelay_core::integrator::{integrate_with, IntegrateOptions};
use pdelay_core::sweep::{run_sweep, AttractorClass, SweepPlan};
use pdelay_core::{HistorySpec, Params, Trajectory};

fn tail(tau: f64, transient: f64, record: f64) -> Trajectory {
    integrate_with(
        &Params::new(0.02, 0.6, tau).unwrap(),
        &HistorySpec::constant(0.1, 0.1),
        transient + record,
        IntegrateOptions {
            dt_target: 0.05,
            record_from: transient,
        },
    )
    .unwrap()
}

fn per_period(tr: &Trajectory, kappa: Option<f64>) -> (f64, f64) {
    let period = estimate_period(tr, tr.t_start(), 1e-3).unwrap().period;
    let raw = extrema(tr, Component::Y, tr.t_start()).unwrap();
    let es = match kappa {
        Some(k) => filter_kinks(&raw, k),
        None => raw,
    };
    let cycles = (tr.t_end - tr.t_start()) / period;
    let max = es.maxima().count() as f64 / cycles;
    let min = es.minima().count() as f64 / cycles;
    (max, min)
}

#[test]
fn tau_70_has_kinks_that_filter_away() {
    let tr = tail(70.0, 30_000.0, 5_000.0);
    let (max, min) = per_period(&tr, None);
    assert!(
        (max - 2.0).abs() < 0.4 && (min - 2.0).abs() < 0.4,
        "{max} {min}"
    );
    let (max, min) = per_period(&tr, Some(DEFAULT_KINK_FRACTION));
    assert!(
        (max - 1.0).abs() < 0.4 && (min - 1.0).abs() < 0.4,
        "{max} {min}"
    );
}

#[test]
fn tau_60_kink_filter_halves_the_count() {
    let tr = tail(60.0, 30_000.0, 5_000.0);
    let raw = extrema(&tr, Component::Y, tr.t_start()).unwrap();
    let es = filter_kinks(&raw, DEFAULT_KINK_FRACTION);
    let ratio = es.genuine().count() as f64 / raw.events.len() as f64;
    assert!((ratio - 0.5).abs() < 0.1, "{ratio}");
}

#[test]
fn tau_50_single_max_and_min_per_period() {
    let tr = tail(50.0, 30_000.0, 5_000.0);
    let (max, min) = per_period(&tr, None);
    assert!(
        (max - 1.0).abs() < 0.4 && (min - 1.0).abs() < 0.4,
        "{max} {min}"
    );
    let raw = extrema(&tr, Component::Y, tr.t_start()).unwrap();
    assert_eq!(raw.kink_count(), 0);
}

#[test]
fn filtered_extrema_alternate() {
    for tau in [60.0, 70.0, 90.0] {
        let tr = tail(tau, 20_000.0, 5_000.0);
        let es = filter_kinks(&extrema(&tr, Component::Y, tr.t_start()).unwrap(), 0.2);
        let kinds: Vec<ExtremumKind> = es.genuine().map(|e| e.kind).collect();
        assert!(kinds.windows(2).all(|w| w[0] != w[1]), "tau={tau}");
        let times: Vec<f64> = es.events.iter().map(|e| e.t).collect();
        assert!(times.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn period_is_self_consistent() {
    for tau in [82.0, 85.0, 100.0] {
        let tr = tail(tau, 50_000.0, 4_000.0);
        let est = estimate_period(&tr, tr.t_start(), 1e-3).unwrap();
        let amp_x = pdelay_core::analysis::tail_amplitude(&tr, Component::X, tr.t_start());
        let amp_y = pdelay_core::analysis::tail_amplitude(&tr, Component::Y, tr.t_start());
        let t_a = tr.t_start() + tr.params.delay + 1.0;
        let e = |t: f64| {
            let now = tr.sample(t).unwrap();
            let lag = tr.sample(t - tau).unwrap();
            [now.x / amp_x, now.y / amp_y, lag.y / amp_y]
        };
        for k in 1..=2 {
            let a = e(t_a);
            let b = e(t_a + k as f64 * est.period);
            let d = (0..3).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max);
            assert!(d < 2e-3, "tau={tau} k={k} d={d}");
        }
    }
}

/// Closed loops traced by the embedding over one period: distinct maxima of
/// `y(t)` within a period.
#[test]
fn embedding_loops_match_period_loops() {
    for (tau, loops) in [(82.0, 1), (85.0, 2), (86.3, 4)] {
        let tr = tail(tau, 50_000.0, 6_000.0);
        let est = estimate_period(&tr, tr.t_start(), 1e-3).unwrap();
        assert_eq!(est.loops, loops, "tau={tau}");
        let es = filter_kinks(&extrema(&tr, Component::Y, tr.t_start()).unwrap(), 0.2);
        let mut peaks: Vec<f64> = es.maxima().map(|e| e.value).collect();
        peaks.sort_by(f64::total_cmp);
        peaks.dedup_by(|a, b| (*a - *b).abs() < 1e-4);
        assert_eq!(peaks.len(), loops, "tau={tau}: {peaks:?}");
        let pts = delay_embed(&tr, tau, tr.t_start() + tau).unwrap();
        assert!(pts.len() > 1000);
    }
}

#[test]
fn chaotic_window_has_no_closed_loop() {
    let tr = tail(90.0, 240_000.0, 20_000.0);
    assert!(estimate_period(&tr, tr.t_start(), 1e-3).is_none());
    let pts = delay_embed(&tr, 90.0, tr.t_start() + 90.0).unwrap();
    assert_eq!(
        pts.len(),
        tr.len() - tr.index_at_or_after(tr.t_start() + 90.0)
    );
}

#[test]
fn return_map_of_period_one_is_fixed_point() {
    let tr = tail(100.0, 50_000.0, 5_000.0);
    let es = filter_kinks(&extrema(&tr, Component::Y, tr.t_start()).unwrap(), 0.2);
    let rm = return_map(&es, 10.0);
    assert!(rm.pairs.len() >= 10);
    for (a, b) in &rm.pairs {
        assert!((a - b).abs() < 1e-4);
    }
    assert_eq!(rm.distinct_points(1e-4), 1);
}

#[test]
fn return_map_of_period_two_is_two_cycle() {
    let tr = tail(85.0, 50_000.0, 6_000.0);
    let es = filter_kinks(&extrema(&tr, Component::Y, tr.t_start()).unwrap(), 0.2);
    let rm = return_map(&es, 10.0);
    assert_eq!(rm.distinct_points(1e-4), 2);
    for w in rm.pairs.windows(2) {
        assert!((w[0].1 - w[1].0).abs() < 1e-12);
        assert!((w[0].0 - w[1].1).abs() < 1e-4);
    }
}

#[test]
fn orbit_diagram_ends_are_equilibria_and_tau_30_oscillates() {
    let p = Params::new(0.02, 0.6, 0.0).unwrap();
    let mut plan = SweepPlan::new(110.0, 160.0, 6);
    plan.t_transient = 30_000.0;
    plan.t_record = 3_000.0;
    let rows = run_sweep(&p, &plan).unwrap();
    for r in &rows {
        assert_eq!(
            r.class,
            AttractorClass::Equilibrium,
            "tau={} amplitude={}",
            r.tau,
            r.amplitude
        );
    }

    let mut plan = SweepPlan::new(29.0, 30.0, 2);
    plan.t_transient = 20_000.0;
    plan.t_record = 4_000.0;
    let rows = run_sweep(&p, &plan).unwrap();
    let row = rows.iter().find(|r| r.tau == 30.0).unwrap();
    assert_eq!(row.class, AttractorClass::Periodic);
    assert_eq!(row.loops, Some(1));
}

#[test]
fn periodic_range_is_bracketed_by_hopf_points() {
    let p = Params::new(0.02, 0.6, 0.0).unwrap();
    let mut plan = SweepPlan::new(0.0, 120.0, 121);
    plan.t_transient = 20_000.0;
    plan.t_record = 3_000.0;
    let rows = run_sweep(&p, &plan).unwrap();
    let oscillating: Vec<f64> = rows
        .iter()
        .filter(|r| r.class != AttractorClass::Equilibrium)
        .map(|r| r.tau)
        .collect();
    let first = oscillating.first().copied().unwrap();
    let last = oscillating.last().copied().unwrap();
    assert!((first - 1.917).abs() <= 1.0 + 1e-9, "{first}");
    assert!((last - 108.365).abs() <= 1.0 + 1e-9, "{last}");
}
