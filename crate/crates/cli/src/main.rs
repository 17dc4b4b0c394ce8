//! `pdelay`: command-line front end for the delayed predator-prey model.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, Command, CommandFactory, Parser, Subcommand};

use crate::commands::Failure;
use crate::config::{normalize, Settings};

/// Simulate and analyse x' = x(1-x) - xy, y' = -s y + Y e^{-s tau} y(t-tau) x(t-tau).
///
/// Every option may also be given in a `--config` file of `key = value` lines
/// (`#` starts a comment); command-line flags win.
#[derive(Parser)]
#[command(name = "pdelay", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Flat key=value settings file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Predator death rate (scaled, or raw with --raw).
    #[arg(long, global = true, allow_negative_numbers = true)]
    s: Option<f64>,
    /// Yield coefficient (scaled, or raw with --raw).
    #[arg(
        long = "Y",
        value_name = "Y",
        global = true,
        allow_negative_numbers = true
    )]
    yield_coef: Option<f64>,
    /// Maturation delay.
    #[arg(long, global = true, allow_negative_numbers = true)]
    tau: Option<f64>,
    /// Read r, K, m, s, Y, tau as dimensional parameters and rescale them.
    #[arg(long, global = true, conflicts_with = "scaled")]
    raw: bool,
    /// Parameters are already dimensionless (the default).
    #[arg(long, global = true)]
    scaled: bool,
    /// Prey growth rate (with --raw).
    #[arg(long, global = true, allow_negative_numbers = true)]
    r: Option<f64>,
    /// Carrying capacity (with --raw).
    #[arg(
        long = "K",
        value_name = "K",
        global = true,
        allow_negative_numbers = true
    )]
    capacity: Option<f64>,
    /// Capture rate (with --raw).
    #[arg(long, global = true, allow_negative_numbers = true)]
    m: Option<f64>,
    /// Constant history x,y on [-tau, 0).
    #[arg(long, global = true, value_name = "X,Y", allow_hyphen_values = true)]
    hist: Option<String>,
    /// Initial value x0,y0 at t = 0 (defaults to the history).
    #[arg(long, global = true, value_name = "X0,Y0", allow_hyphen_values = true)]
    at0: Option<String>,
    /// End of the integration.
    #[arg(long, global = true)]
    t_end: Option<f64>,
    /// Target step; the effective step divides tau.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Output file (stdout when absent).
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long, global = true)]
    format: Option<String>,
    /// Keep every n-th sample in time series output.
    #[arg(long, global = true)]
    decimate: Option<usize>,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Equilibria, delay thresholds and R(1).
    Equilibria,
    /// Hopf candidates from the intersection scan.
    Hopf {
        /// Scan points over (0, tau*).
        #[arg(long)]
        grid: Option<usize>,
        /// Write the intersecting curves to this file.
        #[arg(long, value_name = "FILE")]
        curves: Option<PathBuf>,
        /// Write the stability intervals of the coexistence equilibrium.
        #[arg(long, value_name = "FILE")]
        profile: Option<PathBuf>,
    },
    /// Time series t,x,y.
    Simulate {
        /// First recorded time.
        #[arg(long)]
        from: Option<f64>,
        /// Write times and densities in dimensional units.
        #[arg(long)]
        raw_units: bool,
    },
    /// Delay embedding y(t), y(t - lag).
    Embed {
        /// Embedding lag (defaults to tau).
        #[arg(long)]
        lag: Option<f64>,
        #[arg(long)]
        from: Option<f64>,
    },
    /// Local extrema of one component, kinks flagged.
    Extrema {
        /// x or y.
        #[arg(long)]
        component: Option<String>,
        /// Kink size as a fraction of the amplitude.
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        from: Option<f64>,
    },
    /// Pairs of successive predator minima.
    Returnmap {
        /// Keep pairs whose minima are both below this value.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        from: Option<f64>,
    },
    /// Log separation of two runs whose prey histories differ by delta.
    Sensitivity {
        #[arg(long)]
        delta: Option<f64>,
        /// Fraction of the amplitude at which the slope fit stops.
        #[arg(long)]
        saturation: Option<f64>,
    },
    /// Orbit diagram over a range of delays.
    Sweep {
        /// Delay range a,b.
        #[arg(long, value_name = "A,B", allow_hyphen_values = true)]
        range: Option<String>,
        /// Grid points including both ends.
        #[arg(long)]
        steps: Option<usize>,
        /// Every delay starts from the history (the default).
        #[arg(long, conflicts_with = "warm")]
        cold: bool,
        /// Each delay continues from the previous one.
        #[arg(long)]
        warm: bool,
        /// forward, backward or both.
        #[arg(long)]
        direction: Option<String>,
        /// Discarded time per delay.
        #[arg(long)]
        transient: Option<f64>,
        /// Analysed time per delay.
        #[arg(long)]
        record: Option<f64>,
        #[arg(long)]
        kappa: Option<f64>,
        /// Recurrence tolerance for the period test.
        #[arg(long)]
        eps: Option<f64>,
        /// Write bistability windows (needs --direction both).
        #[arg(long, value_name = "FILE")]
        bistability: Option<PathBuf>,
        /// Relative envelope gap marking bistability.
        #[arg(long)]
        gap: Option<f64>,
        /// Write period doublings to this file.
        #[arg(long, value_name = "FILE")]
        doublings: Option<PathBuf>,
        /// Bisection steps for window ends and doublings.
        #[arg(long)]
        refine: Option<usize>,
    },
}

/// Long names of every argument in the command tree.
fn known_keys(cmd: &Command, out: &mut BTreeSet<String>) {
    for a in cmd.get_arguments() {
        if let Some(l) = a.get_long() {
            out.insert(normalize(l));
        }
    }
    for sub in cmd.get_subcommands() {
        known_keys(sub, out);
    }
}

/// Copies every flag given on the command line into `cfg`, keyed by its long
/// name.
fn overlay(cmd: &Command, m: &ArgMatches, cfg: &mut Settings) {
    for a in cmd.get_arguments() {
        let (Some(long), id) = (a.get_long(), a.get_id().as_str()) else {
            continue;
        };
        if m.value_source(id) != Some(ValueSource::CommandLine) {
            continue;
        }
        if let Some(raw) = m.get_raw(id) {
            let vals: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
            cfg.set(long, vals.join(","));
        }
    }
}

fn settings(cmd: &Command, m: &ArgMatches) -> Result<(String, Settings), Failure> {
    let (name, sub) = m.subcommand().expect("subcommand is required");
    let mut cfg = match m.get_one::<PathBuf>("config") {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let mut known = BTreeSet::new();
    known_keys(cmd, &mut known);
    if let Some(k) = cfg.keys().find(|k| !known.contains(*k)) {
        return Err(Failure::Config(format!(
            "unknown setting `{k}` in config file"
        )));
    }
    overlay(cmd, m, &mut cfg);
    let sub_cmd = cmd.find_subcommand(name).expect("subcommand is defined");
    overlay(sub_cmd, sub, &mut cfg);
    if cfg.flag("raw")? && cfg.flag("scaled")? {
        return Err(Failure::Config(
            "`raw` and `scaled` are mutually exclusive".into(),
        ));
    }
    Ok((name.to_string(), cfg))
}

fn run(cmd: &Command, m: &ArgMatches) -> Result<(), Failure> {
    let (name, cfg) = settings(cmd, m)?;
    let jobs: usize = cfg.get_or("jobs", 0)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::Config(format!("cannot start {jobs} workers: {e}")))?;
    pool.install(|| commands::dispatch(&name, &cfg))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cmd = Cli::command();
    let m = match cmd.clone().try_get_matches() {
        Ok(m) => m,
        Err(e) => e.exit(),
    };
    match run(&cmd, &m) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("pdelay: {f}");
            ExitCode::from(f.code())
        }
    }
}
