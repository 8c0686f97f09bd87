use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::time::Instant;

use fracheat::chaos::{chaos_second_moment, existence_check, ChaosOptions, ChaosSecondMoment, ExistenceReport};
use fracheat::direct_solver::{ensemble_moment, solve, NoiseModel, TorusGrid};
use fracheat::exponent::MollifierParams;
use fracheat::feynman_kac::{moment_with_samples, strat_moment_mollified, Flavor, MomentEstimate, PathSample};
use fracheat::rng::{purpose, RngStream};
use fracheat::stable_path::sample_path;
use serde::{Deserialize, Serialize};

use crate::config::{CommandKind, RunConfig};
use crate::validation::{run_suite, CheckResult, Scale};
use crate::CliError;

/// Where optional side outputs go. None of these affect results.
#[derive(Debug, Clone, Default)]
pub struct OutputOptions {
    /// Per-sample exponents and weights of a moment run.
    pub samples_csv: Option<PathBuf>,
    /// First path of the first sample of a moment run.
    pub path_csv: Option<PathBuf>,
    /// Field snapshots of realization 0 of a solve run; files are named
    /// `<prefix>_t<time>.csv`.
    pub snapshot_prefix: Option<PathBuf>,
    pub snapshot_times: Vec<f64>,
    /// Record wall time (makes records differ between runs).
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunResult {
    Moment {
        estimate: MomentEstimate,
    },
    Chaos {
        series: ChaosSecondMoment,
    },
    Check {
        report: ExistenceReport,
    },
    Solve {
        estimate: MomentEstimate,
        half_length: f64,
        boundary_mass: f64,
    },
    Validate {
        checks: Vec<CheckResult>,
        all_passed: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: String,
    pub config: RunConfig,
    pub result: RunResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl RunRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("records are always serializable")
    }
}

pub fn execute_with_workers(cfg: &RunConfig, out: &OutputOptions, workers: Option<usize>) -> Result<RunRecord, CliError> {
    match workers {
        None => execute(cfg, out),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| CliError::Config(format!("cannot start {n} workers: {e}")))?;
            pool.install(|| execute(cfg, out))
        }
    }
}

pub fn execute(cfg: &RunConfig, out: &OutputOptions) -> Result<RunRecord, CliError> {
    let start = Instant::now();
    let result = match cfg.command {
        CommandKind::Moment => cmd_moment(cfg, out)?,
        CommandKind::Chaos => cmd_chaos(cfg)?,
        CommandKind::Check => cmd_check(cfg)?,
        CommandKind::Solve => cmd_solve(cfg, out)?,
        CommandKind::Validate => cmd_validate(cfg, out)?,
    };
    Ok(RunRecord {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        result,
        wall_time_s: out.timing.then(|| start.elapsed().as_secs_f64()),
    })
}

fn moll(cfg: &RunConfig, default_delta: f64) -> Result<Option<MollifierParams>, CliError> {
    match cfg.epsilon {
        None => Ok(None),
        Some(e) => Ok(Some(MollifierParams::new(e, cfg.delta.unwrap_or(default_delta))?)),
    }
}

fn create(path: &PathBuf) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

fn write_samples_csv(path: &PathBuf, samples: &[PathSample], flavor: Flavor) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let io = |e: csv::Error| CliError::Output(e.to_string());
    w.write_record(["sample", "u0_product", "self_sum", "cross_sum", "weight"]).map_err(io)?;
    for (i, s) in samples.iter().enumerate() {
        w.write_record([
            i.to_string(),
            s.u0_product.to_string(),
            s.self_sum.to_string(),
            s.cross_sum.to_string(),
            s.weight(flavor).to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Output(e.to_string()))
}

fn cmd_moment(cfg: &RunConfig, out: &OutputOptions) -> Result<RunResult, CliError> {
    let params = cfg.params()?;
    let grid = cfg.time_grid()?;
    if let Some(m) = moll(cfg, grid.max_step())? {
        if cfg.flavor != Flavor::Stratonovich {
            return Err(CliError::Config("epsilon applies to Stratonovich moments only".into()));
        }
        let estimate = strat_moment_mollified(cfg.p, &params, m, cfg.samples, &grid, cfg.seed)?;
        return Ok(RunResult::Moment { estimate });
    }
    let (estimate, samples) = moment_with_samples(cfg.flavor, cfg.p, &params, cfg.samples, &grid, cfg.seed)?;
    if let Some(path) = &out.samples_csv {
        write_samples_csv(path, &samples, cfg.flavor)?;
    }
    if let Some(path) = &out.path_csv {
        // same stream as path 0 of sample 0
        let mut rng = RngStream::family(cfg.seed, purpose::PATHS, 0).generator();
        sample_path(cfg.alpha, &grid, &cfg.x, &mut rng).write_csv(create(path)?)?;
    }
    Ok(RunResult::Moment { estimate })
}

fn cmd_chaos(cfg: &RunConfig) -> Result<RunResult, CliError> {
    if !cfg.u0.is_constant() {
        return Err(CliError::Config("chaos series needs a constant u0".into()));
    }
    let opts = ChaosOptions {
        n_samples: cfg.samples,
        seed: cfg.seed,
        method: cfg.method,
    };
    let mut series = chaos_second_moment(cfg.alpha, cfg.d, cfg.t, cfg.nmax, opts)?;
    let c2 = cfg.u0.sup_norm().powi(2);
    if c2 != 1.0 {
        series.value *= c2;
        series.mc_error *= c2;
        series.tail_bound *= c2;
        for term in &mut series.terms {
            term.value *= c2;
            term.mc_error *= c2;
        }
    }
    Ok(RunResult::Chaos { series })
}

fn cmd_check(cfg: &RunConfig) -> Result<RunResult, CliError> {
    Ok(RunResult::Check {
        report: existence_check(cfg.alpha, cfg.d)?,
    })
}

fn cmd_solve(cfg: &RunConfig, out: &OutputOptions) -> Result<RunResult, CliError> {
    let params = cfg.params()?;
    let grid = match cfg.half_length {
        Some(l) => TorusGrid::new(cfg.t, l, cfg.nspace, cfg.ntime)?,
        None => TorusGrid::with_default_length(cfg.t, cfg.nspace, cfg.ntime)?,
    };
    let epsilon = cfg.epsilon.unwrap_or(0.1);
    let estimate = ensemble_moment(&grid, &params, epsilon, cfg.p, cfg.realizations, cfg.seed)?;
    if let Some(prefix) = &out.snapshot_prefix {
        let steps: Vec<usize> = out
            .snapshot_times
            .iter()
            .map(|s| ((s / grid.dt()).round() as usize).clamp(1, grid.n_time))
            .collect();
        let model = NoiseModel::new(&grid, epsilon)?;
        let noise = model.sample(&mut RngStream::family(cfg.seed, purpose::NOISE, 0).generator());
        let (last, snaps) = solve(&grid, cfg.alpha, &cfg.u0, &noise, &steps);
        let all = if snaps.is_empty() { vec![last] } else { snaps };
        for state in &all {
            let name = format!("{}_t{:.6}.csv", prefix.display(), state.time);
            state.write_csv(&grid, create(&PathBuf::from(name))?)?;
        }
    }
    Ok(RunResult::Solve {
        estimate,
        half_length: grid.half_length,
        boundary_mass: grid.boundary_mass(cfg.alpha),
    })
}

fn cmd_validate(cfg: &RunConfig, out: &OutputOptions) -> Result<RunResult, CliError> {
    let scale = if cfg.quick { Scale::Quick } else { Scale::Full };
    let checks = run_suite(scale, out.timing);
    let all_passed = checks.iter().all(|c| c.passed);
    Ok(RunResult::Validate { checks, all_passed })
}
