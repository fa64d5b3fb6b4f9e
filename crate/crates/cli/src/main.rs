//! Experiment runner CLI: single runs, sweep suites, plot-data export, and
//! invariant verification.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dfl_core::analysis::{self, AnalysisSummary};
use dfl_core::config::{self, ConfigFile, RunConfig};
use dfl_core::engine::{self, Channel, StalenessPolicy};
use dfl_core::experiment::{self, FigureSpec};
use dfl_core::trace::{self, RunDump};

#[derive(Parser)]
#[command(name = "dfl", version, about = "Decentralized federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunFlags {
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for trace and dump artifacts.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Enforce that the learning rate lies inside the admissible window.
    #[arg(long)]
    strict_eta: bool,
    /// Record realized staleness instead of aborting on a bound violation.
    #[arg(long)]
    observe_gamma: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single simulation from a config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
        /// Replay message transport from a previously written dump.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Run an experiment suite (sweeps × replications).
    Suite {
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Reshape trace CSVs into tidy long-format plot data.
    Plotdata {
        /// Trace CSV files (shell-expanded glob).
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Metric column to export.
        #[arg(long, default_value = "global_loss")]
        metric: String,
        /// X column (iteration or slot).
        #[arg(long, default_value = "iteration")]
        x: String,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a config and check its invariants and bound assertions only.
    Verify {
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = dispatch() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn load_run(path: &Path, flags: &RunFlags) -> Result<RunConfig> {
    let file = config::load_config(path)?;
    let mut run = match file {
        ConfigFile::Run(run) => run,
        ConfigFile::Suite(_) => bail!("{} is a suite config; use `dfl suite`", path.display()),
    };
    if let Some(seed) = flags.seed {
        run.seed = seed;
    }
    run.strict_eta |= flags.strict_eta;
    run.observe_gamma |= flags.observe_gamma;
    Ok(run)
}

fn dispatch() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            flags,
            replay,
        } => {
            let run = load_run(&config, &flags)?;
            let resolved = config::build_setup(&run)?;
            let mut setup = resolved.setup;
            if let Some(dump_path) = &replay {
                let bytes = std::fs::read(dump_path)
                    .with_context(|| format!("reading dump {}", dump_path.display()))?;
                let dump = RunDump::decode(&bytes)?;
                if dump.seed != setup.seed {
                    bail!(
                        "dump was recorded with seed {}, config resolves to {}",
                        dump.seed,
                        setup.seed
                    );
                }
                setup.channel = Channel::Replay(dump);
            }
            let result = engine::run(&setup)?;
            std::fs::create_dir_all(&flags.out_dir)?;
            let stem = config
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| "run".into());
            let suffix = if replay.is_some() { "_replay" } else { "" };
            let trace_path = flags.out_dir.join(format!("{stem}{suffix}.csv"));
            let dump_path = flags.out_dir.join(format!("{stem}{suffix}.dump"));
            std::fs::write(&trace_path, trace::write_csv(&result.records))?;
            std::fs::write(&dump_path, result.dump.encode())?;
            let last = result.records.last();
            println!(
                "{} iterations, final loss {:.6e}, realized staleness max {}, artifacts in {}",
                result.records.len(),
                last.map(|r| r.global_loss).unwrap_or(f64::NAN),
                result.realized_staleness_max,
                flags.out_dir.display()
            );
            Ok(())
        }
        Command::Suite { config, flags } => {
            let file = config::load_config(&config)?;
            let mut suite = match file {
                ConfigFile::Suite(s) => s,
                ConfigFile::Run(_) => {
                    bail!("{} is a single-run config; use `dfl run`", config.display())
                }
            };
            if let Some(seed) = flags.seed {
                suite.base.seed = seed;
            }
            suite.base.strict_eta |= flags.strict_eta;
            suite.base.observe_gamma |= flags.observe_gamma;
            let summary = experiment::run_suite(&suite, &flags.out_dir)?;
            for point in &summary.points {
                println!(
                    "{}: final loss mean {:.6e} (min {:.6e}, max {:.6e})",
                    point.label,
                    point.final_loss_mean,
                    point.final_loss_min,
                    point.final_loss_max
                );
            }
            let failed: Vec<_> = summary.runs.iter().filter(|r| !r.ok).collect();
            for run in &failed {
                eprintln!(
                    "run {} rep {} failed: {}",
                    run.label,
                    run.replication,
                    run.error.as_deref().unwrap_or("unknown")
                );
            }
            if !summary.all_ok {
                bail!("{} of {} runs failed", failed.len(), summary.runs.len());
            }
            Ok(())
        }
        Command::Plotdata {
            traces,
            metric,
            x,
            out,
        } => {
            let csv = experiment::emit_plotdata(&traces, &FigureSpec { metric, x })?;
            match out {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
            Ok(())
        }
        Command::Verify { config, flags } => {
            let run = load_run(&config, &flags)?;
            let resolved = config::build_setup(&run)?;
            let result = engine::run(&resolved.setup)?;

            let gamma = match &resolved.setup.channel {
                Channel::Ideal { gamma } => *gamma,
                _ => resolved.setup.gamma_max,
            };
            let bound = analysis::bound_trace(
                &result.records,
                &resolved.constants,
                resolved.setup.tasks.len(),
                resolved.setup.eta,
                gamma,
            );
            let mut ok = true;

            let window = resolved.eta_window;
            println!(
                "learning rate η = {} | admissible window ({}, {}){}",
                resolved.setup.eta,
                window.lower,
                window.upper,
                if window.is_empty() { " [empty]" } else { "" }
            );
            println!(
                "constants: L1 = {}, L2 = {}, L3 = {}, δ = {}{}",
                resolved.constants.l1,
                resolved.constants.l2,
                resolved.constants.l3,
                resolved.constants.delta,
                if resolved.constants_heuristic {
                    " [heuristic: non-quadratic task]"
                } else {
                    ""
                }
            );

            let bound_line = if bound.vacuous {
                "bound: u(η) <= 0, vacuous (no assertion)".to_string()
            } else if bound.violations == 0 {
                format!("bound: u(η) = {:.6} held at every iteration", bound.u_eta)
            } else {
                ok = false;
                format!(
                    "bound: u(η) = {:.6} VIOLATED {} times",
                    bound.u_eta, bound.violations
                )
            };
            println!("{bound_line}");

            let staleness_ok = resolved.setup.staleness_policy == StalenessPolicy::Observe
                || result.realized_staleness_max <= resolved.setup.gamma_max.max(1);
            println!(
                "staleness: realized max {} vs Γ = {} -> {}",
                result.realized_staleness_max,
                resolved.setup.gamma_max,
                if staleness_ok { "ok" } else { "VIOLATED" }
            );
            ok &= staleness_ok;

            println!(
                "messages: {} enqueued, {} delivered, {} dropped, {} superseded",
                result.stats.enqueued,
                result.stats.delivered,
                result.stats.dropped,
                result.stats.superseded
            );

            std::fs::create_dir_all(&flags.out_dir)?;
            let summary = AnalysisSummary::from_bound_trace(&bound, None);
            let summary_path = flags.out_dir.join("verify_summary.json");
            std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;
            let bound_path = flags.out_dir.join("bound_trace.csv");
            std::fs::write(&bound_path, analysis::bound_trace_csv(&bound))?;

            if ok {
                println!("verify: PASS");
                Ok(())
            } else {
                bail!("verify: FAIL");
            }
        }
    }
}
