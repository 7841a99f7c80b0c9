//! Command-line front end. Results are rendered in memory and only written
//! once a command has fully succeeded, so failures never leave output files.

pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::keyrate::{key_rate, BlockSize, Scenario};
use crate::optimize::{
    optimize_rate, tolerable_attenuation, tolerable_noise_curve, Protocol, RateReport, RateTarget,
};
use crate::pass::{pass_key_rate, simulate_pass, PassReport};

pub use config::{OutputFormat, RunConfig};
pub use output::{Cell, Table};

pub const EXIT_SECURE: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INSECURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "satqkd",
    version,
    about = "Key rates of Gaussian CV-QKD over satellite downlinks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Key rate over a fixed channel.
    Keyrate(CommonArgs),
    /// Tolerable attenuation for every scenario, protocol and clock rate.
    Table(CommonArgs),
    /// Key rate of a full pass on each configured altitude.
    Pass(CommonArgs),
    /// Tolerable attenuation for the configured scenario.
    TolerableLoss(CommonArgs),
    /// Tolerable excess noise on each configured altitude.
    TolerableNoise(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub segments: Option<usize>,
    #[arg(long)]
    pub asymptotic: bool,
}

impl Command {
    fn args(&self) -> &CommonArgs {
        match self {
            Command::Keyrate(a)
            | Command::Table(a)
            | Command::Pass(a)
            | Command::TolerableLoss(a)
            | Command::TolerableNoise(a) => a,
        }
    }
}

/// Rendered result of a command.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub table: Table,
    pub secure: bool,
}

pub fn load_config(args: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(k) = args.segments {
        cfg.pass.segments = k;
    }
    if args.asymptotic {
        cfg.asymptotic = true;
    }
    if let Some(f) = args.format {
        cfg.output.format = f;
    }
    if let Some(out) = &args.out {
        cfg.output.path = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn protocol_label(p: Protocol) -> &'static str {
    match p {
        Protocol::Coherent => "coherent",
        Protocol::Squeezed => "squeezed",
    }
}

fn block_size(cfg: &RunConfig) -> BlockSize {
    if cfg.asymptotic {
        BlockSize::Asymptotic
    } else {
        BlockSize::Finite((cfg.clock_rate * cfg.block_duration).round() as u64)
    }
}

pub fn cmd_keyrate(cfg: &RunConfig) -> Result<Outcome> {
    let channel = cfg.fixed_channel()?;
    let block = block_size(cfg);
    let (vs, vm, report) = match cfg.fixed_variances() {
        Some((vs, vm)) => (
            vs,
            vm,
            key_rate(&cfg.protocol_params(vs, vm), &channel, block)?,
        ),
        None => {
            let target = RateTarget::Fixed { channel, block };
            let opt = optimize_rate(
                &cfg.protocol_params(1.0, 1.0),
                cfg.protocol,
                &target,
                &cfg.bounds(),
            )?;
            match opt.report {
                RateReport::Fixed(r) => (opt.signal_variance, opt.modulation_variance, r),
                RateReport::Pass(_) => unreachable!("fixed target yields a fixed report"),
            }
        }
    };
    let report = report.with_clock_rate(cfg.clock_rate);
    let mut table = Table::new([
        "scenario",
        "protocol",
        "attenuation_db",
        "excess_noise",
        "signal_variance",
        "modulation_variance",
        "mutual_info",
        "leakage",
        "delta",
        "key_rate_per_use",
        "key_rate_per_s",
    ]);
    table.push(vec![
        cfg.scenario().label().into(),
        protocol_label(cfg.protocol).into(),
        channel.attenuation_db().into(),
        channel.excess_noise.into(),
        vs.into(),
        vm.into(),
        report.mutual_info.into(),
        report.leakage.into(),
        report.delta.into(),
        report.key_rate.into(),
        report.key_rate_per_second.unwrap_or(0.0).into(),
    ]);
    Ok(Outcome {
        table,
        secure: report.key_rate > 0.0,
    })
}

pub fn cmd_table(cfg: &RunConfig) -> Result<Outcome> {
    let mut cells = Vec::new();
    for sc in Scenario::ALL {
        for protocol in [Protocol::Coherent, Protocol::Squeezed] {
            for &f in &cfg.table.clock_rates {
                cells.push((sc, protocol, f));
            }
        }
    }
    let bounds = cfg.bounds();
    let results = cells
        .par_iter()
        .map(|&(sc, protocol, f)| {
            let p = cfg.protocol_params(1.0, 1.0).with_scenario(sc);
            tolerable_attenuation(&p, protocol, &cfg.attenuation_search(f), &bounds)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new([
        "scenario",
        "protocol",
        "clock_rate_hz",
        "tolerable_db",
        "tolerable_db_rounded",
    ]);
    for ((sc, protocol, f), t) in cells.iter().zip(&results) {
        table.push(vec![
            sc.label().into(),
            protocol_label(*protocol).into(),
            (*f).into(),
            t.db.into(),
            Cell::Int(t.rounded.max(0) as u64),
        ]);
    }
    Ok(Outcome {
        table,
        secure: true,
    })
}

struct PassRow {
    altitude_km: f64,
    mean_loss_db: f64,
    mean_eta: f64,
    mean_sqrt_eta: f64,
    signal_variance: f64,
    modulation_variance: f64,
    report: PassReport,
    segment_loss_db: Vec<f64>,
    segment_blocks: Vec<u64>,
}

fn pass_row(cfg: &RunConfig, altitude_km: f64) -> Result<PassRow> {
    let g = cfg.link_geometry(altitude_km)?;
    let stats = simulate_pass(&g, &cfg.receiver_params(), &cfg.pass_config(), cfg.seed)?;
    let (vs, vm, report) = match cfg.fixed_variances() {
        Some((vs, vm)) => (
            vs,
            vm,
            pass_key_rate(
                &cfg.protocol_params(vs, vm),
                &stats,
                cfg.excess_noise,
                cfg.asymptotic,
            )?,
        ),
        None => {
            let target = RateTarget::Pass {
                stats: &stats,
                excess_noise: cfg.excess_noise,
                asymptotic: cfg.asymptotic,
            };
            let opt = optimize_rate(
                &cfg.protocol_params(1.0, 1.0),
                cfg.protocol,
                &target,
                &cfg.bounds(),
            )?;
            match opt.report {
                RateReport::Pass(r) => (opt.signal_variance, opt.modulation_variance, r),
                RateReport::Fixed(_) => unreachable!("pass target yields a pass report"),
            }
        }
    };
    let overall = stats.overall();
    Ok(PassRow {
        altitude_km,
        mean_loss_db: overall.mean_loss_db(),
        mean_eta: overall.mean_eta,
        mean_sqrt_eta: overall.mean_sqrt_eta,
        signal_variance: vs,
        modulation_variance: vm,
        report: report.with_clock_rate(cfg.clock_rate),
        segment_loss_db: stats
            .segments()
            .iter()
            .map(|s| s.stats.mean_loss_db())
            .collect(),
        segment_blocks: stats.segments().iter().map(|s| s.block_size).collect(),
    })
}

pub fn cmd_pass(cfg: &RunConfig) -> Result<Outcome> {
    let rows = cfg
        .geometry
        .altitudes_km
        .par_iter()
        .map(|&h| pass_row(cfg, h))
        .collect::<Result<Vec<_>>>()?;
    let k = cfg.pass.segments;
    let mut headers: Vec<String> = [
        "H_km",
        "mean_loss_db",
        "mean_eta",
        "mean_sqrt_eta",
        "signal_variance",
        "modulation_variance",
        "K_per_use",
        "K_per_s",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    if k > 1 {
        for i in 0..k {
            headers.push(format!("seg{i}_mean_loss_db"));
            headers.push(format!("seg{i}_block"));
            headers.push(format!("seg{i}_K_per_use"));
        }
    }
    let mut table = Table::new(headers);
    for r in &rows {
        let mut row: Vec<Cell> = vec![
            r.altitude_km.into(),
            r.mean_loss_db.into(),
            r.mean_eta.into(),
            r.mean_sqrt_eta.into(),
            r.signal_variance.into(),
            r.modulation_variance.into(),
            r.report.key_rate.into(),
            r.report.key_rate_per_second.unwrap_or(0.0).into(),
        ];
        if k > 1 {
            for i in 0..k {
                row.push(r.segment_loss_db[i].into());
                row.push(r.segment_blocks[i].into());
                row.push(r.report.segments[i].key_rate.into());
            }
        }
        table.push(row);
    }
    Ok(Outcome {
        secure: rows.iter().any(|r| r.report.key_rate > 0.0),
        table,
    })
}

pub fn cmd_tolerable_loss(cfg: &RunConfig) -> Result<Outcome> {
    let t = tolerable_attenuation(
        &cfg.protocol_params(1.0, 1.0),
        cfg.protocol,
        &cfg.attenuation_search(cfg.clock_rate),
        &cfg.bounds(),
    )?;
    let mut table = Table::new([
        "scenario",
        "protocol",
        "clock_rate_hz",
        "tolerable_db",
        "tolerable_db_rounded",
        "never_secure",
        "capped",
    ]);
    table.push(vec![
        cfg.scenario().label().into(),
        protocol_label(cfg.protocol).into(),
        cfg.clock_rate.into(),
        t.db.into(),
        Cell::Int(t.rounded.max(0) as u64),
        t.never_secure.into(),
        t.capped.into(),
    ]);
    Ok(Outcome {
        table,
        secure: !t.never_secure,
    })
}

pub fn cmd_tolerable_noise(cfg: &RunConfig) -> Result<Outcome> {
    let altitudes: Vec<f64> = cfg.geometry.altitudes_km.iter().map(|h| h * 1e3).collect();
    let curve = tolerable_noise_curve(
        &altitudes,
        &cfg.receiver_params(),
        &cfg.pass_config(),
        cfg.seed,
        &cfg.protocol_params(1.0, 1.0),
        cfg.protocol,
        cfg.asymptotic,
        &cfg.bounds(),
    )?;
    let mut table = Table::new(["H_km", "max_excess_noise", "never_secure", "capped"]);
    for (h, t) in &curve {
        table.push(vec![
            (h / 1e3).into(),
            t.excess_noise.into(),
            t.never_secure.into(),
            t.capped.into(),
        ]);
    }
    Ok(Outcome {
        secure: curve.iter().any(|(_, t)| !t.never_secure),
        table,
    })
}

pub fn execute(command: &Command, cfg: &RunConfig) -> Result<Outcome> {
    match command {
        Command::Keyrate(_) => cmd_keyrate(cfg),
        Command::Table(_) => cmd_table(cfg),
        Command::Pass(_) => cmd_pass(cfg),
        Command::TolerableLoss(_) => cmd_tolerable_loss(cfg),
        Command::TolerableNoise(_) => cmd_tolerable_noise(cfg),
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match try_run(cli) {
        Ok(true) => EXIT_SECURE,
        Ok(false) => EXIT_INSECURE,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn try_run(cli: &Cli) -> Result<bool> {
    let cfg = load_config(cli.command.args())?;
    let outcome = execute(&cli.command, &cfg)?;
    let text = outcome.table.render(cfg.output.format)?;
    match &cfg.output.path {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    Ok(outcome.secure)
}
