//! `noma` — outage and goodput of a downlink multi-antenna NOMA cell,
//! computed by closed forms and by link simulation.
//!
//! Exit codes: 0 success, 1 validation failure, 2 configuration or I/O
//! error.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use noma_cli::config::load_config;
use noma_cli::sweep::{run_sweep, to_csv, to_json, Axis, Engine, Query, SweepSpec};
use noma_cli::validate::run_validation;
use noma_core::model::{Scenario, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Parser)]
#[command(
    name = "noma",
    version,
    about = "Average outage and goodput of a downlink multi-antenna NOMA cell, \
             by closed-form analysis and cross-validated link simulation"
)]
struct Cli {
    /// Configuration file (flat `key = value` lines); defaults when absent.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Write output to this file instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Table output format.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,

    /// Monte Carlo trial count per evaluation point.
    #[arg(long, global = true, default_value_t = 100_000)]
    trials: u64,

    /// Master seed for all Monte Carlo draws.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Worker thread count (overrides the NOMA_THREADS environment
    /// variable; defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Average outage probability of one (stream, user order) pair.
    Outage {
        /// Spatial stream, 1-based.
        #[arg(long, default_value_t = 1)]
        stream: usize,
        /// Distance rank of the user, 1-based (1 = nearest).
        #[arg(long = "user-order", default_value_t = 1)]
        user_order: usize,
        /// Engines to evaluate (comma-separated); analytic-exact if omitted.
        #[arg(long, value_delimiter = ',')]
        engines: Option<Vec<Engine>>,
    },
    /// Average goodput of the whole cell.
    Goodput {
        /// Engines to evaluate (comma-separated); analytic-exact if omitted.
        #[arg(long, value_delimiter = ',')]
        engines: Option<Vec<Engine>>,
    },
    /// Sweep one parameter over a grid and tabulate every query x engine.
    Sweep {
        /// Swept parameter.
        #[arg(long, value_enum)]
        axis: Axis,
        /// Grid: `start:step:end` (end inclusive) or a comma list.
        #[arg(long)]
        grid: String,
        /// Query: `M,K` for outage or `goodput`; repeatable.
        #[arg(long = "query", required = true)]
        queries: Vec<String>,
        /// Engines to evaluate (comma-separated).
        #[arg(long, value_delimiter = ',', required = true)]
        engines: Vec<Engine>,
    },
    /// Run the full cross-engine validation suite and report PASS/FAIL.
    Validate,
    /// Outage vs SNR (30..80 dB) for the nearest user: exact, high-SNR
    /// asymptote, and simulation.
    Fig1,
    /// Goodput vs SNR (30..80 dB): exact and simulation.
    Fig2,
    /// Goodput vs cell radius (5..200 m): exact and both asymptotic laws.
    Fig3,
    /// Goodput vs transmit correlation (0..0.9): exact and simulation.
    Fig4,
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = Cli::parse();

    match resolve_threads(cli.threads) {
        Ok(Some(n)) => {
            if let Err(err) = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
            {
                eprintln!("noma: cannot size the thread pool: {err}");
                return 2;
            }
        }
        Ok(None) => {}
        Err(msg) => {
            eprintln!("noma: {msg}");
            return 2;
        }
    }

    let cfg = match &cli.config {
        Some(path) => match load_config(path) {
            Ok(cfg) => cfg,
            Err(err) => {
                eprintln!("noma: {err}");
                return 2;
            }
        },
        None => SystemConfig::default(),
    };

    match &cli.command {
        Command::Validate => {
            let outcome = run_validation(&cfg, cli.trials, cli.seed);
            if let Err(err) = write_output(&cli.out, &outcome.report) {
                eprintln!("noma: {err}");
                return 2;
            }
            if outcome.passed {
                0
            } else {
                1
            }
        }
        command => {
            // Every other subcommand needs a feasible scenario up front.
            if let Err(err) = Scenario::from_config(cfg.clone()) {
                eprintln!("noma: configuration is not usable: {err}");
                return 2;
            }
            let spec = match build_spec(command, &cfg, cli.trials, cli.seed) {
                Ok(spec) => spec,
                Err(msg) => {
                    eprintln!("noma: {msg}");
                    return 2;
                }
            };
            let (rows, warnings) = match run_sweep(&spec, &cfg) {
                Ok(out) => out,
                Err(msg) => {
                    eprintln!("noma: {msg}");
                    return 2;
                }
            };
            for warning in &warnings {
                eprintln!("noma: warning: {warning}");
            }
            let text = match cli.format {
                OutputFormat::Csv => to_csv(&rows),
                OutputFormat::Json => to_json(&rows),
            };
            if let Err(err) = write_output(&cli.out, &text) {
                eprintln!("noma: {err}");
                return 2;
            }
            0
        }
    }
}

fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>, String> {
    if let Some(n) = flag {
        if n == 0 {
            return Err("--threads must be at least 1".to_string());
        }
        return Ok(Some(n));
    }
    match std::env::var("NOMA_THREADS") {
        Ok(text) => {
            let n = text
                .trim()
                .parse::<usize>()
                .map_err(|e| format!("cannot parse NOMA_THREADS=`{text}`: {e}"))?;
            if n == 0 {
                return Err("NOMA_THREADS must be at least 1".to_string());
            }
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

fn dedup_engines(engines: Vec<Engine>) -> Vec<Engine> {
    let mut seen = Vec::new();
    for engine in engines {
        if !seen.contains(&engine) {
            seen.push(engine);
        }
    }
    seen
}

fn build_spec(
    command: &Command,
    cfg: &SystemConfig,
    trials: u64,
    seed: u64,
) -> Result<SweepSpec, String> {
    let spec = match command {
        Command::Outage {
            stream,
            user_order,
            engines,
        } => SweepSpec {
            axis: Axis::SnrDb,
            grid: vec![Axis::SnrDb.read(cfg)],
            queries: vec![Query::Outage {
                stream: *stream,
                user_order: *user_order,
            }],
            engines: dedup_engines(
                engines
                    .clone()
                    .unwrap_or_else(|| vec![Engine::AnalyticExact]),
            ),
            mc_trials: trials,
            seed,
        },
        Command::Goodput { engines } => SweepSpec {
            axis: Axis::SnrDb,
            grid: vec![Axis::SnrDb.read(cfg)],
            queries: vec![Query::Goodput],
            engines: dedup_engines(
                engines
                    .clone()
                    .unwrap_or_else(|| vec![Engine::AnalyticExact]),
            ),
            mc_trials: trials,
            seed,
        },
        Command::Sweep {
            axis,
            grid,
            queries,
            engines,
        } => SweepSpec {
            axis: *axis,
            grid: parse_grid(grid)?,
            queries: queries
                .iter()
                .map(|q| Query::parse(q))
                .collect::<Result<Vec<_>, _>>()?,
            engines: dedup_engines(engines.clone()),
            mc_trials: trials,
            seed,
        },
        Command::Fig1 => SweepSpec {
            axis: Axis::SnrDb,
            grid: db_grid(),
            queries: vec![Query::Outage {
                stream: 1,
                user_order: 1,
            }],
            engines: vec![
                Engine::AnalyticExact,
                Engine::AnalyticAsymptoticHigh,
                Engine::Montecarlo,
            ],
            mc_trials: trials,
            seed,
        },
        Command::Fig2 => SweepSpec {
            axis: Axis::SnrDb,
            grid: db_grid(),
            queries: vec![Query::Goodput],
            engines: vec![Engine::AnalyticExact, Engine::Montecarlo],
            mc_trials: trials,
            seed,
        },
        Command::Fig3 => SweepSpec {
            axis: Axis::Radius,
            grid: (1..=40).map(|i| 5.0 * f64::from(i)).collect(),
            queries: vec![Query::Goodput],
            engines: vec![
                Engine::AnalyticExact,
                Engine::AnalyticAsymptoticHigh,
                Engine::AnalyticAsymptoticLow,
            ],
            mc_trials: trials,
            seed,
        },
        Command::Fig4 => SweepSpec {
            axis: Axis::CorrCoeff,
            grid: (0..=9).map(|i| f64::from(i) / 10.0).collect(),
            queries: vec![Query::Goodput],
            engines: vec![Engine::AnalyticExact, Engine::Montecarlo],
            mc_trials: trials,
            seed,
        },
        Command::Validate => unreachable!("validate is dispatched separately"),
    };
    Ok(spec)
}

/// 30, 35, ..., 80 dB.
fn db_grid() -> Vec<f64> {
    (0..=10).map(|i| 30.0 + 5.0 * f64::from(i)).collect()
}

/// Parse `start:step:end` (end inclusive, within a small tolerance) or a
/// comma-separated list.
fn parse_grid(text: &str) -> Result<Vec<f64>, String> {
    let t = text.trim();
    if t.contains(':') {
        let parts: Vec<&str> = t.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("grid range must be start:step:end, got `{t}`"));
        }
        let nums: Vec<f64> = parts
            .iter()
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("bad grid number `{p}`: {e}"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let (start, step, end) = (nums[0], nums[1], nums[2]);
        if !(step > 0.0) || !step.is_finite() {
            return Err(format!("grid step must be positive, got {step}"));
        }
        if end < start {
            return Err(format!("grid end {end} is below start {start}"));
        }
        let count = ((end - start) / step * (1.0 + 1e-12) + 1e-9).floor() as usize;
        let mut grid: Vec<f64> = (0..=count).map(|i| start + step * i as f64).collect();
        // Snap an endpoint that only missed `end` through accumulated
        // rounding, so `0:0.3:0.9` really ends at 0.9.
        if let Some(last) = grid.last_mut() {
            if *last != end && (*last - end).abs() < step * 1e-6 {
                *last = end;
            }
        }
        Ok(grid)
    } else {
        t.split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("bad grid number `{p}`: {e}"))
            })
            .collect()
    }
}

fn write_output(out: &Option<PathBuf>, text: &str) -> Result<(), String> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
