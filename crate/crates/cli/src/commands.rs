use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rangeloc::estimators::UpdateForm;
use rangeloc::experiment::{
    current_experiment, free_experiment, run_current, run_free, EstimateRow,
};
use rangeloc::observability::{
    build_regression, continuous_estimate, g11_condition, gramian_current, gramian_free,
    offdiag_ratio, solve_ls, GramianReport, LsMethod, LsSolution, Verdict,
};
use rangeloc::signals::SampledSignal;
use rangeloc::truth::{simulate, Model, ScenarioConfig, TruthError, TruthTrace};
use rayon::prelude::*;

use crate::config::Config;
use crate::error::{io_error, CliError};
use crate::io;
use crate::manifest::RunManifest;

pub const EXIT_NOT_OBSERVABLE: i32 = 3;

/// Command-line values that take precedence over the scenario file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub rank_tol: Option<f64>,
    pub reanchor_every: Option<usize>,
    pub joseph_update: bool,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut Config) {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(tol) = self.rank_tol {
            cfg.rank_tol = Some(tol);
        }
        if let Some(f) = cfg.filter.as_mut() {
            if let Some(every) = self.reanchor_every {
                f.settings.reanchor.every = every;
            }
            if self.joseph_update {
                f.settings.update = UpdateForm::Joseph;
            }
        }
    }
}

/// What a command prints to stdout and the exit status it asks for.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: String,
    pub code: i32,
}

impl Outcome {
    fn ok(report: String) -> Self {
        Self { report, code: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Free,
    Current,
}

fn scenario_error(e: TruthError) -> CliError {
    CliError::Config {
        field: "scenario".into(),
        message: e.to_string(),
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn fmt_list(v: impl IntoIterator<Item = f64>) -> String {
    let items: Vec<String> = v.into_iter().map(|x| format!("{x:.6e}")).collect();
    format!("[{}]", items.join(", "))
}

fn finish_manifest(
    dir: &Path,
    command: &str,
    cfg: &Config,
    artifacts: &[&str],
    started: Instant,
) -> Result<(), CliError> {
    let mut m = RunManifest::new(command, &cfg.to_toml(), cfg.seed);
    m.artifacts = artifacts.iter().map(|s| s.to_string()).collect();
    m.wall_clock_seconds = started.elapsed().as_secs_f64();
    m.write(&dir.join("manifest.json"))
}

pub fn simulate_cmd(cfg: &Config, base_dir: &Path, out: &Path) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let scenario = cfg.scenario(base_dir)?;
    let sim = simulate(&scenario).map_err(scenario_error)?;
    create_dir(out)?;
    io::write_trace(&out.join("trace.csv"), cfg.model, &sim.trace)?;
    finish_manifest(out, "simulate", cfg, &["trace.csv"], started)?;
    let mut report = format!(
        "wrote {} samples to {}\n",
        sim.trace.len(),
        out.join("trace.csv").display()
    );
    if sim.trace.clamped > 0 {
        let _ = writeln!(
            report,
            "clamped {} negative noisy ranges to zero",
            sim.trace.clamped
        );
    }
    Ok(Outcome::ok(report))
}

fn gramian_lines(report: &mut String, title: &str, g: &GramianReport) {
    let _ = writeln!(report, "{title}");
    let _ = writeln!(
        report,
        "  eigenvalues: {}",
        fmt_list(g.eigenvalues.iter().copied())
    );
    let _ = writeln!(
        report,
        "  rank: {}/{} (tol {:.3e}), condition number: {:.6e}",
        g.numerical_rank,
        g.dim(),
        g.tolerance_used,
        g.condition_number
    );
    for v in g.kernel() {
        let _ = writeln!(
            report,
            "  unobservable direction: {}",
            fmt_list(v.iter().copied())
        );
    }
}

fn worse(a: Verdict, b: Verdict) -> Verdict {
    if !a.observable || a.rank < b.rank {
        a
    } else {
        b
    }
}

pub fn observability_cmd(
    cfg: &Config,
    base_dir: &Path,
    out: Option<&Path>,
) -> Result<Outcome, CliError> {
    let scenario = cfg.scenario(base_dir)?;
    let sim = simulate(&scenario).map_err(scenario_error)?;
    let t_end = scenario.t_end();
    let mut report = format!(
        "model: {:?}, {} samples, ts = {}, t_end = {}\n",
        cfg.model,
        scenario.len(),
        scenario.ts,
        t_end
    );
    let mut matrices = Vec::new();
    let verdict = match cfg.model {
        Model::Free => {
            let sys =
                build_regression(&sim.trace, &sim.integral).map_err(|e| CliError::Config {
                    field: "steps".into(),
                    message: e.to_string(),
                })?;
            let ls = solve_ls(&sys, cfg.rank_tol, LsMethod::Orthogonal).map_err(|e| {
                CliError::Config {
                    field: "scenario".into(),
                    message: e.to_string(),
                }
            })?;
            let (h_rank, h_tol) = sys.rank(cfg.rank_tol);
            let _ = writeln!(report, "regression H ({} x 3)", sys.rows());
            let _ = writeln!(
                report,
                "  singular values: {}",
                fmt_list(sys.singular_values())
            );
            let _ = writeln!(report, "  rank: {h_rank}/3 (tol {h_tol:.3e})");
            let _ = writeln!(
                report,
                "  H^T H off-diagonal ratio: {:.6e}",
                offdiag_ratio(&sys.normal_matrix())
            );
            match &ls {
                LsSolution::Identified {
                    x0,
                    condition_number,
                    ..
                } => {
                    let _ = writeln!(report, "  condition number: {condition_number:.6e}");
                    let _ = writeln!(
                        report,
                        "  least-squares x0: {}",
                        fmt_list(x0.iter().copied())
                    );
                }
                LsSolution::RankDeficient { kernel, .. } => {
                    for v in kernel {
                        let _ = writeln!(
                            report,
                            "  kernel direction: {}",
                            fmt_list(v.iter().copied())
                        );
                    }
                }
            }
            let g = gramian_free(&sim.integral, t_end, cfg.rank_tol);
            gramian_lines(&mut report, &format!("Gramian G(0, {t_end})"), &g);
            if let Some(x0) = continuous_estimate(&sim.integral, sys.ybar().as_slice(), t_end) {
                let _ = writeln!(report, "  G^-1 mu: {}", fmt_list(x0.iter().copied()));
            }
            let h_verdict = Verdict {
                observable: h_rank == 3,
                rank: h_rank,
                dim: 3,
            };
            matrices.push(("gramian.csv", g.g.clone()));
            worse(h_verdict, g.verdict())
        }
        Model::Current => {
            let g = gramian_current(&sim.integral, t_end, cfg.rank_tol);
            gramian_lines(
                &mut report,
                &format!("Gramian W(0, {t_end}) of the 8-state model"),
                &g,
            );
            let g11 = g11_condition(&sim.integral, t_end, cfg.rank_tol);
            gramian_lines(&mut report, "necessary condition: G11 block", &g11);
            let _ = writeln!(
                report,
                "  G11 {}",
                if g11.observable {
                    "full rank"
                } else {
                    "rank-deficient"
                }
            );
            matrices.push(("gramian.csv", g.g.clone()));
            matrices.push(("g11.csv", g11.g.clone()));
            g.verdict()
        }
    };
    let _ = writeln!(report, "verdict: {verdict}");
    if let Some(out) = out {
        create_dir(out)?;
        for (name, m) in &matrices {
            io::write_matrix(&out.join(name), m)?;
        }
    }
    Ok(Outcome {
        report,
        code: if verdict.observable {
            0
        } else {
            EXIT_NOT_OBSERVABLE
        },
    })
}

fn run_filter(
    cfg: &Config,
    scenario: &ScenarioConfig,
    signal: &SampledSignal,
    trace: &TruthTrace,
) -> Result<Vec<EstimateRow>, CliError> {
    let setup = cfg.filter.as_ref().ok_or_else(|| CliError::Config {
        field: "filter".into(),
        message: "required for estimation".into(),
    })?;
    let rows = match cfg.model {
        Model::Free => run_free(signal, trace, setup)?,
        Model::Current => run_current(signal, trace, &scenario.beacon, &scenario.current, setup)?,
    };
    Ok(rows)
}

fn estimate_summary(rows: &[EstimateRow]) -> String {
    let first = &rows[0];
    let last = rows.last().expect("at least one row");
    let mut s = format!(
        "position error: {:.6} m at t = 0, {:.6} m at t = {}\n",
        first.err_norm, last.err_norm, last.t
    );
    if let Some(e) = last.vf_err {
        let _ = writeln!(s, "current error: {e:.6} m/s at t = {}", last.t);
    }
    let _ = writeln!(s, "final sqrt(trace P): {:.6e}", last.trace_p.sqrt());
    s
}

pub fn estimate_cmd(
    cfg: &Config,
    base_dir: &Path,
    out: &Path,
    trace_path: Option<&Path>,
) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let scenario = cfg.scenario(base_dir)?;
    let signal = scenario.velocity_signal().map_err(scenario_error)?;
    let trace = match trace_path {
        Some(p) => {
            let (model, trace) = io::read_trace(p, scenario.ts)?;
            if model != cfg.model || trace.len() != scenario.len() {
                return Err(CliError::Csv {
                    path: p.display().to_string(),
                    message: format!(
                        "trace is {:?} with {} rows; scenario expects {:?} with {}",
                        model,
                        trace.len(),
                        cfg.model,
                        scenario.len()
                    ),
                });
            }
            trace
        }
        None => simulate(&scenario).map_err(scenario_error)?.trace,
    };
    let rows = run_filter(cfg, &scenario, &signal, &trace)?;
    create_dir(out)?;
    io::write_estimates(&out.join("estimate.csv"), cfg.model, &rows)?;
    finish_manifest(out, "estimate", cfg, &["estimate.csv"], started)?;
    Ok(Outcome::ok(estimate_summary(&rows)))
}

pub fn preset_config(preset: Preset) -> Config {
    let (scenario, setup) = match preset {
        Preset::Free => free_experiment(),
        Preset::Current => current_experiment(),
    };
    Config::from_experiment(&scenario, &setup)
}

/// Runs a built-in scenario end to end and writes truth, estimate and error tables.
pub fn reproduce_cmd(
    preset: Preset,
    out: &Path,
    overrides: &Overrides,
) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let mut cfg = preset_config(preset);
    overrides.apply(&mut cfg);
    let scenario = cfg.scenario(Path::new("."))?;
    let sim = simulate(&scenario).map_err(scenario_error)?;
    let rows = run_filter(&cfg, &scenario, &sim.signal, &sim.trace)?;
    create_dir(out)?;
    io::write_trace(&out.join("truth.csv"), cfg.model, &sim.trace)?;
    io::write_estimates(&out.join("estimate.csv"), cfg.model, &rows)?;
    io::write_errors(&out.join("error.csv"), cfg.model, &rows)?;
    let config_path = out.join("config.toml");
    std::fs::write(&config_path, cfg.to_toml()).map_err(|e| io_error(&config_path, e))?;
    let name = match preset {
        Preset::Free => "reproduce free",
        Preset::Current => "reproduce current",
    };
    finish_manifest(
        out,
        name,
        &cfg,
        &["truth.csv", "estimate.csv", "error.csv", "config.toml"],
        started,
    )?;
    let mid = &rows[rows.len() / 2];
    let mut report = estimate_summary(&rows);
    let _ = writeln!(
        report,
        "position error at t = {}: {:.6} m",
        mid.t, mid.err_norm
    );
    let _ = writeln!(report, "artifacts in {}", out.display());
    Ok(Outcome::ok(report))
}

/// One scenario file from a batch.
#[derive(Debug, Clone)]
pub struct Job {
    pub config_path: PathBuf,
    pub out: Option<PathBuf>,
}

/// Output directory per config: `out` itself for a single file, `out/<stem>` for several.
pub fn plan_jobs(configs: &[PathBuf], out: Option<&Path>) -> Vec<Job> {
    configs
        .iter()
        .map(|p| Job {
            config_path: p.clone(),
            out: out.map(|o| {
                if configs.len() == 1 {
                    o.to_path_buf()
                } else {
                    o.join(p.file_stem().unwrap_or_default())
                }
            }),
        })
        .collect()
}

/// Runs `f` on every job on a pool of `jobs` threads. Results keep input order.
pub fn run_batch<F>(
    batch: &[Job],
    jobs: usize,
    overrides: &Overrides,
    f: F,
) -> Vec<Result<Outcome, CliError>>
where
    F: Fn(&Config, &Path, Option<&Path>) -> Result<Outcome, CliError> + Sync,
{
    let one = |job: &Job| {
        let mut cfg = Config::load(&job.config_path)?;
        overrides.apply(&mut cfg);
        let base = job.config_path.parent().unwrap_or(Path::new("."));
        f(&cfg, base, job.out.as_deref())
    };
    match rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
    {
        Ok(pool) => pool.install(|| batch.par_iter().map(one).collect()),
        Err(_) => batch.iter().map(one).collect(),
    }
}
