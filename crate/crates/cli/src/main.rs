use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fracheat::kernel::InitialCondition;
use fracheat_cli::config::{parse_flavor, parse_method, SEED_ENV};
use fracheat_cli::{execute_with_workers, resolve, CliError, CommandKind, OutputOptions, RunRecord, RunResult, Settings};

#[derive(Parser)]
#[command(name = "fracheat", version, about = "Moments, chaos series and direct solves for the stochastic fractional heat equation")]
struct Cli {
    /// Flat `key = value` file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the JSON record here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Include wall time in the record.
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct ModelArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    t: Option<f64>,
    /// Evaluation point, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    /// `const:<c>`, `gauss:<amp>,<width>` or `cos:<k>`.
    #[arg(long)]
    u0: Option<InitialCondition>,
    /// Master seed (default: $FRACHEAT_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo p-th moment from the Feynman-Kac formulas.
    Moment {
        #[command(flatten)]
        model: ModelArgs,
        /// `strat` or `sko`.
        #[arg(long, value_parser = parse_flavor)]
        flavor: Option<fracheat::feynman_kac::Flavor>,
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        /// Use the mollified exponent with this spatial scale.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        /// Per-sample exponents and weights as CSV.
        #[arg(long)]
        samples_csv: Option<PathBuf>,
        /// One sampled path as CSV.
        #[arg(long)]
        path_csv: Option<PathBuf>,
    },
    /// Chaos-series second moment for constant initial data.
    Chaos {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        nmax: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        /// `closed` (alpha = 2) or `fourier`.
        #[arg(long, value_parser = parse_method)]
        method: Option<fracheat::chaos::ChaosMethod>,
    },
    /// Existence report for (alpha, d).
    Check {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Ensemble moment from the periodic direct solver (d = 1).
    Solve {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        nspace: Option<usize>,
        #[arg(long)]
        ntime: Option<usize>,
        #[arg(long)]
        half_length: Option<f64>,
        #[arg(long)]
        realizations: Option<usize>,
        /// Prefix for field snapshots of realization 0.
        #[arg(long)]
        snapshot_prefix: Option<PathBuf>,
        /// Snapshot times, comma separated (default: final time).
        #[arg(long, value_delimiter = ',')]
        snapshot_times: Vec<f64>,
    },
    /// Run the validation suite.
    Validate {
        #[arg(long)]
        quick: bool,
    },
    /// Re-execute the configuration embedded in a JSON record.
    Rerun { record: PathBuf },
}

fn overlay_model(s: &mut Settings, m: ModelArgs) {
    s.set("alpha", m.alpha);
    s.set("d", m.d);
    s.set("t", m.t);
    s.set("x", m.x);
    s.set("u0", m.u0);
    s.set("seed", m.seed);
}

fn run(cli: Cli) -> Result<RunRecord, CliError> {
    let mut settings = match &cli.config {
        Some(p) => Settings::from_file(p)?,
        None => Settings::default(),
    };
    let mut out = OutputOptions {
        timing: cli.timing,
        ..Default::default()
    };
    let kind = match cli.command {
        Command::Moment { model, flavor, p, samples, steps, epsilon, delta, samples_csv, path_csv } => {
            overlay_model(&mut settings, model);
            settings.set("flavor", flavor.map(|f| format!("{f:?}")));
            settings.set("p", p);
            settings.set("samples", samples);
            settings.set("steps", steps);
            settings.set("epsilon", epsilon);
            settings.set("delta", delta);
            out.samples_csv = samples_csv;
            out.path_csv = path_csv;
            CommandKind::Moment
        }
        Command::Chaos { model, nmax, samples, method } => {
            overlay_model(&mut settings, model);
            settings.set("nmax", nmax);
            settings.set("samples", samples);
            settings.set(
                "method",
                method.map(|m| match m {
                    fracheat::chaos::ChaosMethod::ClosedFormAlpha2 => "closed",
                    fracheat::chaos::ChaosMethod::FourierMc => "fourier",
                }),
            );
            CommandKind::Chaos
        }
        Command::Check { model } => {
            overlay_model(&mut settings, model);
            CommandKind::Check
        }
        Command::Solve { model, p, epsilon, nspace, ntime, half_length, realizations, snapshot_prefix, snapshot_times } => {
            overlay_model(&mut settings, model);
            settings.set("p", p);
            settings.set("epsilon", epsilon);
            settings.set("nspace", nspace);
            settings.set("ntime", ntime);
            settings.set("half_length", half_length);
            settings.set("realizations", realizations);
            out.snapshot_prefix = snapshot_prefix;
            out.snapshot_times = snapshot_times;
            CommandKind::Solve
        }
        Command::Validate { quick } => {
            if quick {
                settings.set("quick", Some(true));
            }
            CommandKind::Validate
        }
        Command::Rerun { record } => {
            let text = std::fs::read_to_string(&record)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", record.display())))?;
            let old: RunRecord = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{} is not a run record: {e}", record.display())))?;
            return execute_with_workers(&old.config, &out, cli.workers);
        }
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    let cfg = resolve(kind, &settings, env_seed.as_deref())?;
    execute_with_workers(&cfg, &out, cli.workers)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let output = cli.output.clone();
    let record = match run(cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let json = record.to_json();
    match &output {
        Some(path) => {
            if let Err(e) = std::fs::write(path, json + "\n") {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(4);
            }
        }
        None => println!("{json}"),
    }
    if let RunResult::Validate { checks, all_passed } = &record.result {
        for c in checks {
            eprintln!("{}", c.line());
        }
        if !all_passed {
            return ExitCode::from(4);
        }
    }
    ExitCode::SUCCESS
}
