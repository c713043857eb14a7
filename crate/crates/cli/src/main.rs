use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rangeloc_cli::commands::{
    estimate_cmd, observability_cmd, plan_jobs, reproduce_cmd, run_batch, simulate_cmd, Outcome,
    Overrides, Preset,
};
use rangeloc_cli::error::CliError;

#[derive(Parser)]
#[command(
    name = "rangeloc",
    version,
    about = "Localization from range measurements to a single beacon"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct BatchArgs {
    /// Scenario file (TOML); repeat to run several.
    #[arg(long = "config", required = true)]
    configs: Vec<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads when several configs are given.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct FilterArgs {
    /// Re-anchor the derived output every N steps (0 disables).
    #[arg(long)]
    reanchor_every: Option<usize>,
    /// Use the Joseph covariance update instead of the information form.
    #[arg(long)]
    joseph_update: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Free,
    Current,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate ground truth and measurements; writes trace.csv.
    Simulate {
        #[command(flatten)]
        batch: BatchArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Rank, conditioning and Gramian analysis of a scenario.
    Observability {
        #[command(flatten)]
        batch: BatchArgs,
        /// Relative rank tolerance (fraction of the largest singular value).
        #[arg(long)]
        rank_tol: Option<f64>,
        /// Also write gramian.csv (and g11.csv for the current model) here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the Kalman filter; writes estimate.csv.
    Estimate {
        #[command(flatten)]
        batch: BatchArgs,
        #[command(flatten)]
        filter: FilterArgs,
        /// Measurements from a previous `simulate` run instead of a fresh simulation.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Regenerate a built-in experiment's truth, estimate and error tables.
    Reproduce {
        #[arg(value_enum)]
        which: PresetArg,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn report(results: Vec<Result<Outcome, CliError>>, labels: &[PathBuf]) -> ExitCode {
    let mut code = 0;
    let many = labels.len() > 1;
    for (res, label) in results.into_iter().zip(labels) {
        match res {
            Ok(outcome) => {
                if many {
                    println!("== {}", label.display());
                }
                print!("{}", outcome.report);
                code = code.max(outcome.code);
            }
            Err(e) => {
                eprintln!("error: {}: {e}", label.display());
                code = code.max(e.exit_code());
            }
        }
    }
    ExitCode::from(code as u8)
}

fn overrides(seed: Option<u64>, rank_tol: Option<f64>, filter: Option<&FilterArgs>) -> Overrides {
    Overrides {
        seed,
        rank_tol,
        reanchor_every: filter.and_then(|f| f.reanchor_every),
        joseph_update: filter.is_some_and(|f| f.joseph_update),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { batch, out } => {
            let jobs = plan_jobs(&batch.configs, Some(&out));
            let ov = overrides(batch.seed, None, None);
            let res = run_batch(&jobs, batch.jobs, &ov, |cfg, base, out| {
                simulate_cmd(cfg, base, out.expect("planned"))
            });
            report(res, &batch.configs)
        }
        Command::Observability {
            batch,
            rank_tol,
            out,
        } => {
            let jobs = plan_jobs(&batch.configs, out.as_deref());
            let ov = overrides(batch.seed, rank_tol, None);
            let res = run_batch(&jobs, batch.jobs, &ov, observability_cmd);
            report(res, &batch.configs)
        }
        Command::Estimate {
            batch,
            filter,
            trace,
            out,
        } => {
            if trace.is_some() && batch.configs.len() > 1 {
                eprintln!("error: --trace takes a single --config");
                return ExitCode::from(2);
            }
            let jobs = plan_jobs(&batch.configs, Some(&out));
            let ov = overrides(batch.seed, None, Some(&filter));
            let res = run_batch(&jobs, batch.jobs, &ov, |cfg, base, out| {
                estimate_cmd(cfg, base, out.expect("planned"), trace.as_deref())
            });
            report(res, &batch.configs)
        }
        Command::Reproduce {
            which,
            seed,
            filter,
            out,
        } => {
            let preset = match which {
                PresetArg::Free => Preset::Free,
                PresetArg::Current => Preset::Current,
            };
            let res = reproduce_cmd(preset, &out, &overrides(seed, None, Some(&filter)));
            report(vec![res], &[Path::new("reproduce").to_path_buf()])
        }
    }
}
