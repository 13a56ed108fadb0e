//! Command-line front end; the `sea` binary is a thin wrapper over [`execute`].

mod overrides;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use sea_core::harness::diversity::diversity_profile;
use sea_core::harness::persist;
use sea_core::harness::{estimate_real_boundary, train_full, Experiment, MetricSplit};
use sea_core::theory::BoundReport;
use sea_core::{gradcheck, ExperimentConfig};

pub use overrides::{load_config, Overrides, UsageError};

/// Adjustable ensemble experiments.
#[derive(Debug, Parser)]
#[command(name = "sea", version, arg_required_else_help = true)]
struct Cli {
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one configuration on the full dataset and save a checkpoint.
    Train(ConfigArgs),
    /// Cross-validated sweep over the parameter grid and ensemble sizes.
    Sweep(ConfigArgs),
    /// Closed-form parameter bounds for a range of ensemble sizes.
    Bounds {
        /// Ensemble sizes, `lo..hi` (inclusive) or a single value.
        #[arg(long, default_value = "2..20", value_parser = parse_size_range)]
        m: (usize, usize),
        /// Output directory (default: $SEA_OUTPUT_DIR, then `results`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep, then estimate the empirical parameter boundary.
    Boundary(ConfigArgs),
    /// Prediction std against the method parameter, per ensemble size.
    Diversity(ConfigArgs),
    /// Run the finite-difference gradient suites.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// JSON experiment configuration.
    #[arg(long, short)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

fn parse_size_range(s: &str) -> Result<(usize, usize), String> {
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    let (lo, hi) = match s.split_once("..") {
        Some((lo, hi)) => (parse(lo)?, parse(hi.trim_start_matches('='))?),
        None => {
            let m = parse(s)?;
            (m, m)
        }
    };
    if lo < 2 || hi < lo {
        return Err(format!("need 2 <= lo <= hi, got {lo}..{hi}"));
    }
    Ok((lo, hi))
}

fn default_out() -> PathBuf {
    std::env::var_os("SEA_OUTPUT_DIR").map_or_else(|| PathBuf::from("results"), PathBuf::from)
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit status.
pub fn execute<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    EXIT_OK
                }
                _ => EXIT_USAGE,
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .try_init();

    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            if e.is::<UsageError>() {
                EXIT_USAGE
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

/// The error chain joined by `: `, skipping causes already quoted by the
/// message above them.
fn describe(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    let mut last = out.clone();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !last.contains(&text) {
            out.push_str(": ");
            out.push_str(&text);
        }
        last = text;
    }
    out
}

fn run(command: Command) -> anyhow::Result<u8> {
    match command {
        Command::Train(a) => train(&load_config(&a.config, &a.overrides)?),
        Command::Sweep(a) => sweep(&load_config(&a.config, &a.overrides)?),
        Command::Bounds { m, out } => bounds(m, &out.unwrap_or_else(default_out)),
        Command::Boundary(a) => boundary(&load_config(&a.config, &a.overrides)?),
        Command::Diversity(a) => diversity(&load_config(&a.config, &a.overrides)?),
        Command::Gradcheck { seed } => Ok(gradcheck_cmd(seed)),
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn train(cfg: &ExperimentConfig) -> anyhow::Result<u8> {
    let trained = train_full(cfg)?;
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    let model = cfg.output_dir.join("model.json");
    write_json(
        &model,
        &json!({
            "fingerprint": cfg.fingerprint(),
            "normalization": trained.stats,
            "train_metric": trained.train_metric,
            "ensemble": trained.model.to_checkpoint(),
        }),
    )?;
    let trace = cfg.output_dir.join("train.csv");
    let mut text = String::from("epoch,ensemble_error\n");
    for (e, v) in trained.trace.iter().enumerate() {
        text.push_str(&format!("{e},{v}\n"));
    }
    fs::write(&trace, text).with_context(|| format!("writing {}", trace.display()))?;
    log::info!(
        "training metric {:.6}; wrote {}",
        trained.train_metric,
        model.display()
    );
    Ok(EXIT_OK)
}

fn sweep(cfg: &ExperimentConfig) -> anyhow::Result<u8> {
    let result = Experiment::new(cfg)?.run_sweep()?;
    let path = persist::persist_sweep(&result, &cfg.output_dir)?;
    let diverged = result.rows.iter().filter(|r| r.diverged).count();
    if diverged > 0 {
        log::warn!("{diverged} of {} runs diverged", result.rows.len());
    }
    log::info!("wrote {}", path.display());
    Ok(EXIT_OK)
}

fn bounds((lo, hi): (usize, usize), out: &Path) -> anyhow::Result<u8> {
    let reports = (lo..=hi)
        .map(BoundReport::for_size)
        .collect::<Result<Vec<_>, _>>()?;
    let path = persist::persist_bounds(&reports, out)?;
    log::info!("wrote {}", path.display());
    Ok(EXIT_OK)
}

fn boundary(cfg: &ExperimentConfig) -> anyhow::Result<u8> {
    let result = Experiment::new(cfg)?.run_sweep()?;
    persist::persist_sweep(&result, &cfg.output_dir)?;
    let curve = result.curve(cfg.method, None, cfg.boundary_metric);
    let est = estimate_real_boundary(&curve, result.kind())?;
    let path = persist::persist_boundary(&est, &result.fingerprint, &cfg.output_dir)?;
    match est.boundary {
        Some(b) => log::info!("estimated boundary {b} (plateau {:?})", est.plateau),
        None => log::warn!("no parameter beats the low-performance plateau"),
    }
    log::info!("wrote {}", path.display());
    Ok(EXIT_OK)
}

fn diversity(cfg: &ExperimentConfig) -> anyhow::Result<u8> {
    if cfg.boundary_metric != MetricSplit::Test {
        log::warn!("diversity always uses test-set predictions");
    }
    let exp = Experiment::new(cfg)?;
    let profiles = cfg
        .sizes
        .iter()
        .map(|&m| diversity_profile(&exp, cfg.method, &cfg.grid, m))
        .collect::<Result<Vec<_>, _>>()?;
    for p in &profiles {
        log::info!(
            "{} M={}: R^2 {:.4}, fitted C {:.4}, relative RMS {:.4}",
            p.method,
            p.m,
            p.linearity,
            p.prediction.scale,
            p.relative_rms
        );
    }
    let path = persist::persist_diversity(&profiles, &cfg.fingerprint(), &cfg.output_dir)?;
    log::info!("wrote {}", path.display());
    Ok(EXIT_OK)
}

fn gradcheck_cmd(seed: u64) -> u8 {
    let reports = gradcheck::run_all(seed);
    let mut stdout = std::io::stdout().lock();
    for r in &reports {
        let _ = writeln!(stdout, "{r}");
    }
    if reports.iter().all(|r| r.passed()) {
        EXIT_OK
    } else {
        EXIT_RUNTIME
    }
}
