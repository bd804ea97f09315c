use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use safexp::sim::{self, plots, Mode, Outcome, RunLog, ScenarioConfig};
use safexp::Error;

#[derive(Parser)]
#[command(name = "safexp", version, about = "Safe exploration of unknown environments with tracking guarantees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Optimistic,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write run.jsonl, plots and metrics.json.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_ticks: Option<usize>,
        /// Replace the planner with a comparison baseline.
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Value grid cache file, overriding the scenario's.
        #[arg(long)]
        hj_cache: Option<PathBuf>,
    },
    /// Render plots and metrics from an existing run log.
    Plot {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn config_error(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run {
            scenario,
            out,
            seed,
            max_ticks,
            baseline,
            epsilon,
            hj_cache,
        } => {
            let mut cfg = match ScenarioConfig::load(&scenario) {
                Ok(c) => c,
                Err(e) => return config_error(&e),
            };
            if let Some(s) = seed {
                cfg.planner.seed = s;
            }
            if let Some(m) = max_ticks {
                cfg.termination.max_ticks = m;
            }
            if let Some(eps) = epsilon {
                cfg.planner.epsilon = eps;
            }
            if hj_cache.is_some() {
                cfg.hj.cache = hj_cache;
            }
            if let Err(e) = cfg.validate() {
                return config_error(&e);
            }
            let mode = match baseline {
                Some(Baseline::Optimistic) => Mode::Optimistic,
                None => Mode::Framework,
            };
            if let Some(dir) = cfg.hj.cache.as_ref().and_then(|p| p.parent()) {
                let _ = std::fs::create_dir_all(dir);
            }
            let result = sim::run(&cfg, mode).and_then(|r| {
                std::fs::create_dir_all(&out).map_err(|e| Error::Io {
                    path: out.clone(),
                    source: e,
                })?;
                r.log.save(&out.join("run.jsonl"))?;
                plots::emit_plots(&r.log, &out)?;
                Ok(r)
            });
            let r = match result {
                Ok(r) => r,
                Err(e) => return config_error(&e),
            };
            let violations = r.violations().len();
            let outcome = match r.outcome {
                Outcome::Success => "success",
                Outcome::Timeout => "timeout",
                Outcome::Collision => "collision",
            };
            println!(
                "{outcome} after {} ticks ({:.1} s), {violations} violations, max tracking error {:.4} m",
                r.ticks, r.end_time, r.max_distance
            );
            if violations > 0 {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Command::Plot { log, out } => match RunLog::load(&log).and_then(|l| plots::emit_plots(&l, &out)) {
            Ok(files) => {
                println!("wrote {} files to {}", files.len(), out.display());
                ExitCode::SUCCESS
            }
            Err(e) => config_error(&e),
        },
    }
}
