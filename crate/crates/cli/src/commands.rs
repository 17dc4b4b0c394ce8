//! One function per subcommand. Results are computed first and written
//! afterwards, so the config echo covers every default that was used.

use std::f64::consts::PI;
use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use pdelay_core::analysis::{
    delay_embed, divergence_with, estimate_period, extrema, filter_kinks, return_map, Component,
    DivergenceOptions, DEFAULT_KINK_FRACTION, DEFAULT_RECURRENCE_EPS,
};
use pdelay_core::integrator::{integrate_with, IntegrateOptions, DEFAULT_DT};
use pdelay_core::model::{equilibria, reproduction_number, Scaled};
use pdelay_core::spectral::{
    hopf_candidates_with_grid, hopf_curves, stability_profile_with_grid, StabilityLabel,
    DEFAULT_SCAN_POINTS,
};
use pdelay_core::sweep::{
    cascade, detect_bistability, detect_period_doublings, refine_bistability,
    refine_period_doubling, run_sweep, write_bistability_csv, write_orbit_csv, Continuation,
    Direction, Pass, PeriodDoubling, Side, DEFAULT_BISTABILITY_GAP,
};
use pdelay_core::{Crossing, Error, SweepPlan, Trajectory};
use serde_json::{json, Value};

use crate::config::{self, ConfigError, Settings};

#[derive(Debug)]
pub enum Failure {
    /// Bad settings or parameters, or an output path that cannot be created.
    Config(String),
    /// The computation itself failed.
    Numeric(String),
    /// Writing output failed midway.
    Output(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numeric(_) => 3,
            Failure::Output(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "invalid configuration: {m}"),
            Failure::Numeric(m) => write!(f, "numerical failure: {m}"),
            Failure::Output(m) => write!(f, "output error: {m}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. }
            | Error::NoCoexistence { .. }
            | Error::OutOfDomain { .. }
            | Error::StepExceedsDelay { .. } => Failure::Config(e.to_string()),
            _ => Failure::Numeric(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Output(e.to_string())
    }
}

type Res = Result<(), Failure>;

/// Keys that do not affect the numbers and stay out of the echo.
const UNECHOED: [&str; 8] = [
    "config",
    "out",
    "jobs",
    "format",
    "curves",
    "profile",
    "bistability",
    "doublings",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

struct Emitter<'a> {
    command: &'a str,
    cfg: &'a Settings,
    format: Format,
}

impl<'a> Emitter<'a> {
    fn new(command: &'a str, cfg: &'a Settings) -> Result<Self, Failure> {
        let format = match cfg.get_or("format", "csv".to_string())?.as_str() {
            "csv" => Format::Csv,
            "json" => Format::Json,
            other => return Err(Failure::Config(format!("unknown format `{other}`"))),
        };
        for key in ["out", "curves", "profile", "bistability", "doublings"] {
            if let Some(path) = cfg.raw(key).map(Path::new) {
                let dir = match path.parent() {
                    Some(d) if !d.as_os_str().is_empty() => d,
                    _ => Path::new("."),
                };
                if !dir.is_dir() {
                    return Err(Failure::Config(format!(
                        "cannot write {}: no directory {}",
                        path.display(),
                        dir.display()
                    )));
                }
            }
        }
        Ok(Self {
            command,
            cfg,
            format,
        })
    }

    fn open(path: Option<&PathBuf>) -> Result<Box<dyn Write>, Failure> {
        Ok(match path {
            Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
                Failure::Config(format!("cannot write {}: {e}", p.display()))
            })?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }

    fn header(&self) -> String {
        format!("# pdelay {} {}", self.command, self.cfg.echo(&UNECHOED))
    }

    /// A CSV file with the echo line, at the path stored under `key`.
    fn side_csv(&self, key: &str, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Res {
        let Some(path) = self.cfg.raw(key).map(PathBuf::from) else {
            return Ok(());
        };
        let mut w = Self::open(Some(&path))?;
        writeln!(w, "{}", self.header())?;
        body(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// The main output, as CSV or as one JSON document.
    fn main(
        &self,
        csv: impl FnOnce(&mut dyn Write) -> io::Result<()>,
        json: impl FnOnce() -> Value,
    ) -> Res {
        let path = self.cfg.raw("out").map(PathBuf::from);
        let mut w = Self::open(path.as_ref())?;
        match self.format {
            Format::Csv => {
                writeln!(w, "{}", self.header())?;
                csv(&mut w)?;
            }
            Format::Json => {
                let doc = json!({
                    "command": self.command,
                    "config": self.cfg.effective(&UNECHOED),
                    "data": json(),
                });
                serde_json::to_writer_pretty(&mut w, &doc).map_err(io::Error::from)?;
                writeln!(w)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn dispatch(command: &str, cfg: &Settings) -> Res {
    let out = Emitter::new(command, cfg)?;
    match command {
        "equilibria" => cmd_equilibria(cfg, &out),
        "hopf" => cmd_hopf(cfg, &out),
        "simulate" => cmd_simulate(cfg, &out),
        "embed" => cmd_embed(cfg, &out),
        "extrema" => cmd_extrema(cfg, &out),
        "returnmap" => cmd_returnmap(cfg, &out),
        "sensitivity" => cmd_sensitivity(cfg, &out),
        "sweep" => cmd_sweep(cfg, &out),
        other => Err(Failure::Config(format!("unknown command `{other}`"))),
    }
}

fn table_csv(w: &mut dyn Write, rows: &[(String, Value)]) -> io::Result<()> {
    writeln!(w, "key,value")?;
    for (k, v) in rows {
        match v {
            Value::String(s) => writeln!(w, "{k},{s}")?,
            Value::Null => writeln!(w, "{k},")?,
            other => writeln!(w, "{k},{other}")?,
        }
    }
    Ok(())
}

fn table_json(rows: Vec<(String, Value)>) -> Value {
    Value::Object(rows.into_iter().collect())
}

fn cmd_equilibria(cfg: &Settings, out: &Emitter) -> Res {
    let Scaled { params: p, factors } = config::params(cfg)?;
    let eq = equilibria(&p);
    let mut rows: Vec<(String, Value)> = vec![
        ("E0_x".into(), json!(eq.extinction.x)),
        ("E0_y".into(), json!(eq.extinction.y)),
        ("E1_x".into(), json!(eq.prey_only.x)),
        ("E1_y".into(), json!(eq.prey_only.y)),
    ];
    match eq.coexistence {
        Some(e) => {
            rows.push(("Eplus_x".into(), json!(e.x)));
            rows.push(("Eplus_y".into(), json!(e.y)));
        }
        None => {
            rows.push(("Eplus_x".into(), json!("none")));
            rows.push(("Eplus_y".into(), json!("none")));
            eprintln!(
                "no coexistence equilibrium at tau={} (tau_c={})",
                p.delay, eq.tau_c
            );
        }
    }
    rows.push(("tau_c".into(), json!(eq.tau_c)));
    rows.push(("tau_star".into(), json!(eq.tau_star)));
    rows.push(("R1".into(), json!(reproduction_number(&p, 1.0))));
    let hopf_possible = eq.tau_star > 0.0;
    rows.push(("hopf_possible".into(), json!(hopf_possible)));
    if !hopf_possible {
        eprintln!("no Hopf possible: tau* = {} < 0", eq.tau_star);
    }
    if cfg.flag("raw")? {
        rows.push(("time_scale".into(), json!(factors.time)));
        rows.push(("prey_scale".into(), json!(factors.prey)));
        rows.push(("predator_scale".into(), json!(factors.predator)));
    }
    out.main(|w| table_csv(w, &rows), || table_json(rows.clone()))
}

fn crossing_name(c: Crossing) -> &'static str {
    match c {
        Crossing::LeftToRight => "left_to_right",
        Crossing::RightToLeft => "right_to_left",
    }
}

fn label_name(l: StabilityLabel) -> &'static str {
    match l {
        StabilityLabel::StableEPlus => "stable",
        StabilityLabel::UnstableEPlus => "unstable",
        StabilityLabel::NoEPlus => "absent",
    }
}

fn cmd_hopf(cfg: &Settings, out: &Emitter) -> Res {
    let p = config::params(cfg)?.params;
    let grid: usize = cfg.get_or("grid", DEFAULT_SCAN_POINTS)?;
    if grid < 2 {
        return Err(Failure::Config("`grid` must be at least 2".into()));
    }
    let cands = hopf_candidates_with_grid(&p, grid);
    let eq = equilibria(&p);
    if eq.tau_star <= 0.0 {
        eprintln!("no Hopf possible: tau* = {} <= 0", eq.tau_star);
    }
    for c in cands.iter().filter(|c| c.tangency_suspected) {
        log::warn!(
            "near-tangent intersection at tau={} (slope gap {})",
            c.tau,
            c.slope_gap
        );
    }
    info!("{} Hopf candidates", cands.len());

    if cfg.contains("curves") {
        let curves = hopf_curves(&p, grid);
        out.side_csv("curves", |w| {
            write!(w, "tau,tau_omega")?;
            for n in 0..curves.windings {
                write!(w, ",theta_plus_2npi_{n}")?;
            }
            writeln!(w)?;
            for i in 0..curves.tau.len() {
                write!(w, "{},{}", curves.tau[i], curves.tau_omega[i])?;
                for n in 0..curves.windings {
                    write!(w, ",{}", curves.theta[i] + 2.0 * PI * f64::from(n))?;
                }
                writeln!(w)?;
            }
            Ok(())
        })?;
    }
    if cfg.contains("profile") {
        let profile = stability_profile_with_grid(&p, grid)?;
        out.side_csv("profile", |w| {
            writeln!(w, "start,end,label")?;
            for iv in &profile.intervals {
                writeln!(w, "{},{},{}", iv.start, iv.end, label_name(iv.label))?;
            }
            Ok(())
        })?;
    }

    out.main(
        |w| {
            writeln!(
                w,
                "n,j,tau,omega,crossing,slope_gap,tangency,residual_cos,residual_sin"
            )?;
            for c in &cands {
                let (rc, rs) = c.trig_residuals(&p);
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{rc},{rs}",
                    c.n,
                    c.j,
                    c.tau,
                    c.omega,
                    crossing_name(c.crossing),
                    c.slope_gap,
                    c.tangency_suspected
                )?;
            }
            Ok(())
        },
        || json!(cands),
    )
}

/// Integrates with the shared settings; `t_end` defaults to `default_end`
/// and recording starts at `record_from`.
fn simulate(cfg: &Settings, default_end: f64, record_from: f64) -> Result<Trajectory, Failure> {
    let p = config::params(cfg)?.params;
    let h = config::history(cfg)?;
    let t_end: f64 = cfg.get_or("t_end", default_end)?;
    let dt: f64 = cfg.get_or("dt", DEFAULT_DT)?;
    if record_from > t_end {
        return Err(Failure::Config(format!(
            "recording would start at {record_from}, after t_end = {t_end}"
        )));
    }
    Ok(integrate_with(
        &p,
        &h,
        t_end,
        IntegrateOptions {
            dt_target: dt,
            record_from,
        },
    )?)
}

fn cmd_simulate(cfg: &Settings, out: &Emitter) -> Res {
    let from: f64 = cfg.get_or("from", 0.0)?;
    let decimate: usize = cfg.get_or("decimate", 1)?;
    let raw_units = cfg.flag("raw_units")?;
    let factors = config::params(cfg)?.factors;
    let traj = simulate(cfg, 10_000.0, from)?;

    let half = traj.t_start() + 0.5 * (traj.t_end - traj.t_start());
    let period = estimate_period(&traj, half, DEFAULT_RECURRENCE_EPS);
    match &period {
        Some(e) => eprintln!("period={} loops={}", e.period, e.loops),
        None => eprintln!("period=none"),
    }

    let rows: Vec<(f64, f64, f64)> = traj
        .nodes()
        .step_by(decimate.max(1))
        .map(|(t, s)| {
            if raw_units {
                let r = factors.raw_state(s);
                (factors.raw_time(t), r.x, r.y)
            } else {
                (t, s.x, s.y)
            }
        })
        .collect();
    out.main(
        |w| {
            writeln!(w, "t,x,y")?;
            for (t, x, y) in &rows {
                writeln!(w, "{t},{x},{y}")?;
            }
            Ok(())
        },
        || {
            json!({
                "period": period.map(|e| e.period),
                "loops": period.map(|e| e.loops),
                "t": rows.iter().map(|r| r.0).collect::<Vec<_>>(),
                "x": rows.iter().map(|r| r.1).collect::<Vec<_>>(),
                "y": rows.iter().map(|r| r.2).collect::<Vec<_>>(),
            })
        },
    )
}

fn cmd_embed(cfg: &Settings, out: &Emitter) -> Res {
    let tau = config::params(cfg)?.params.delay;
    let lag: f64 = cfg.get_or("lag", tau)?;
    if !(lag > 0.0) {
        return Err(Failure::Config(format!(
            "`lag` must be positive, got {lag}"
        )));
    }
    let from: f64 = cfg.get_or("from", 0.0)?;
    let decimate: usize = cfg.get_or("decimate", 1)?;
    let traj = simulate(cfg, 10_000.0, (from - lag).max(0.0))?;
    let t_cut = from.max(traj.t_start() + lag);
    let pts = delay_embed(&traj, lag, t_cut)?;
    let pts: Vec<(f64, f64)> = pts.into_iter().step_by(decimate.max(1)).collect();
    out.main(
        |w| {
            writeln!(w, "y_t,y_lag")?;
            for (a, b) in &pts {
                writeln!(w, "{a},{b}")?;
            }
            Ok(())
        },
        || json!({ "lag": lag, "points": pts }),
    )
}

fn component(cfg: &Settings) -> Result<Component, Failure> {
    match cfg.get_or("component", "y".to_string())?.as_str() {
        "x" => Ok(Component::X),
        "y" => Ok(Component::Y),
        other => Err(Failure::Config(format!("unknown component `{other}`"))),
    }
}

fn cmd_extrema(cfg: &Settings, out: &Emitter) -> Res {
    let comp = component(cfg)?;
    let kappa: f64 = cfg.get_or("kappa", DEFAULT_KINK_FRACTION)?;
    let from: f64 = cfg.get_or("from", 0.0)?;
    let traj = simulate(cfg, 10_000.0, from)?;
    let es = filter_kinks(&extrema(&traj, comp, traj.t_start())?, kappa);
    eprintln!("extrema={} kinks={}", es.events.len(), es.kink_count());
    out.main(|w| es.write_csv(&mut { w }), || json!(es))
}

fn cmd_returnmap(cfg: &Settings, out: &Emitter) -> Res {
    let threshold: f64 = cfg.get_or("threshold", 0.7)?;
    let kappa: f64 = cfg.get_or("kappa", DEFAULT_KINK_FRACTION)?;
    let from: f64 = cfg.get_or("from", 0.0)?;
    let traj = simulate(cfg, 10_000.0, from)?;
    let es = filter_kinks(&extrema(&traj, Component::Y, traj.t_start())?, kappa);
    let rm = return_map(&es, threshold);
    eprintln!("pairs={}", rm.pairs.len());
    out.main(|w| rm.write_csv(&mut { w }), || json!(rm))
}

fn cmd_sensitivity(cfg: &Settings, out: &Emitter) -> Res {
    let p = config::params(cfg)?.params;
    let h = config::history(cfg)?;
    let delta: f64 = cfg.get_or("delta", 0.01)?;
    let t_end: f64 = cfg.get_or("t_end", 20_000.0)?;
    let opts = DivergenceOptions {
        dt_target: cfg.get_or("dt", DEFAULT_DT)?,
        saturation: cfg.get_or("saturation", DivergenceOptions::default().saturation)?,
    };
    let decimate: usize = cfg.get_or("decimate", 1)?;
    let d = divergence_with(&p, &h, delta, t_end, &opts)?;
    eprintln!("slope={} fit_end={}", d.slope, d.fit_end);
    out.main(
        |w| d.write_csv(&mut { w }, decimate),
        || {
            let keep = |v: &[f64]| {
                v.iter()
                    .copied()
                    .step_by(decimate.max(1))
                    .collect::<Vec<_>>()
            };
            json!({
                "slope": d.slope,
                "fit_end": d.fit_end,
                "t": keep(&d.times),
                "log_sep": keep(&d.log_sep),
            })
        },
    )
}

fn plan(cfg: &Settings) -> Result<SweepPlan, Failure> {
    let (lo, hi) = cfg
        .pair("range")?
        .ok_or_else(|| Failure::Config("sweep needs `range = a,b`".into()))?;
    let mut plan = SweepPlan::new(lo, hi, cfg.get_or("steps", 121)?);
    let h = config::history(cfg)?;
    plan.continuation = if cfg.flag("warm")? {
        if cfg.flag("cold")? {
            return Err(Failure::Config(
                "`cold` and `warm` are mutually exclusive".into(),
            ));
        }
        Continuation::WarmStart(h)
    } else {
        Continuation::ColdStart(h)
    };
    plan.direction = match cfg.get_or("direction", "forward".to_string())?.as_str() {
        "forward" => Direction::Forward,
        "backward" => Direction::Backward,
        "both" => Direction::Both,
        other => return Err(Failure::Config(format!("unknown direction `{other}`"))),
    };
    plan.t_transient = cfg.get_or("transient", plan.t_transient)?;
    plan.t_record = cfg.get_or("record", plan.t_record)?;
    plan.dt_target = cfg.get_or("dt", plan.dt_target)?;
    plan.kappa = cfg.get_or("kappa", plan.kappa)?;
    plan.recurrence_eps = cfg.get_or("eps", plan.recurrence_eps)?;
    plan.validate()?;
    Ok(plan)
}

fn side_name(s: Side) -> &'static str {
    match s {
        Side::Left => "left",
        Side::Right => "right",
    }
}

fn cmd_sweep(cfg: &Settings, out: &Emitter) -> Res {
    let p = config::params(cfg)?.params;
    let plan = plan(cfg)?;
    let refine: usize = cfg.get_or("refine", 4)?;
    let gap: f64 = cfg.get_or("gap", DEFAULT_BISTABILITY_GAP)?;
    let want_bistability = cfg.contains("bistability");
    if want_bistability && plan.direction != Direction::Both {
        return Err(Failure::Config(
            "`bistability` needs `direction = both`".into(),
        ));
    }

    let rows = run_sweep(&p, &plan)?;
    for r in rows.iter().filter(|r| r.error.is_some()) {
        log::warn!("tau={}: {}", r.tau, r.error.as_deref().unwrap_or(""));
    }
    let of_pass = |pass: Pass| {
        rows.iter()
            .filter(|r| r.direction == pass)
            .cloned()
            .collect::<Vec<_>>()
    };

    if want_bistability {
        let (fwd, bwd) = (of_pass(Pass::Forward), of_pass(Pass::Backward));
        let mut windows = detect_bistability(&fwd, &bwd, gap)?;
        if refine > 0 {
            windows = windows
                .iter()
                .map(|w| refine_bistability(&p, &plan, w, &fwd, &bwd, gap, refine))
                .collect::<Result<_, _>>()?;
        }
        for w in &windows {
            eprintln!("bistability tau_low={} tau_high={}", w.tau_low, w.tau_high);
        }
        out.side_csv("bistability", |w| {
            write_bistability_csv(&mut { w }, &windows)
        })?;
    }

    if cfg.contains("doublings") {
        let mut found: Vec<(Pass, PeriodDoubling, bool)> = Vec::new();
        for pass in [Pass::Forward, Pass::Backward] {
            let pass_rows = of_pass(pass);
            if pass_rows.is_empty() {
                continue;
            }
            let mut ds = detect_period_doublings(&pass_rows);
            if refine > 0 {
                ds = ds
                    .iter()
                    .map(|d| refine_period_doubling(&p, &plan, d, refine))
                    .collect::<Result<_, _>>()?;
            }
            let chained: Vec<PeriodDoubling> = [Side::Left, Side::Right]
                .into_iter()
                .flat_map(|s| cascade(&ds, s))
                .collect();
            found.extend(ds.into_iter().map(|d| (pass, d, chained.contains(&d))));
        }
        out.side_csv("doublings", |w| {
            writeln!(
                w,
                "direction,tau,side,from,to,bracket_low,bracket_high,cascade"
            )?;
            for (pass, d, chained) in &found {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{chained}",
                    pass.as_str(),
                    d.tau,
                    side_name(d.side),
                    d.from,
                    d.to,
                    d.bracket.0,
                    d.bracket.1
                )?;
            }
            Ok(())
        })?;
    }

    out.main(|w| write_orbit_csv(&mut { w }, &rows), || json!(rows))
}
