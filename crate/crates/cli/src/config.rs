//! Run configuration: a flat `key = value` file overlaid by command-line
//! flags, resolved into a fully explicit [`RunConfig`].

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use fracheat::chaos::ChaosMethod;
use fracheat::feynman_kac::Flavor;
use fracheat::kernel::{InitialCondition, ModelParams};
use fracheat::stable_path::TimeGrid;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable consulted for the master seed when neither the
/// flags nor the config file set one.
pub const SEED_ENV: &str = "FRACHEAT_SEED";

pub const KEYS: &[&str] = &[
    "alpha",
    "d",
    "t",
    "x",
    "u0",
    "flavor",
    "p",
    "samples",
    "steps",
    "epsilon",
    "delta",
    "seed",
    "nmax",
    "method",
    "nspace",
    "ntime",
    "half_length",
    "realizations",
    "quick",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Moment,
    Chaos,
    Check,
    Solve,
    Validate,
}

/// Every input that can influence a result. Output locations and the
/// worker count are deliberately absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub alpha: f64,
    pub d: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub u0: InitialCondition,
    pub flavor: Flavor,
    pub p: usize,
    pub samples: usize,
    pub steps: usize,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub seed: u64,
    pub nmax: usize,
    pub method: Option<ChaosMethod>,
    pub nspace: usize,
    pub ntime: usize,
    pub half_length: Option<f64>,
    pub realizations: usize,
    pub quick: bool,
}

impl RunConfig {
    pub fn params(&self) -> Result<ModelParams, CliError> {
        Ok(ModelParams::new(self.alpha, self.d, self.t)?
            .with_u0(self.u0)
            .with_point(self.x.clone()))
    }

    pub fn time_grid(&self) -> Result<TimeGrid, CliError> {
        Ok(TimeGrid::uniform(self.t, self.steps)?)
    }
}

/// Raw key/value pairs; later layers override earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", no + 1)))?;
            let key = k.trim().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                return Err(CliError::Config(format!("line {}: unknown key `{key}`", no + 1)));
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set<T: Display>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.values.insert(key.to_string(), v.to_string());
        }
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| CliError::Config(format!("{key} = `{v}`: {e}"))))
            .transpose()
    }

    fn get_or<T>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| CliError::Config(format!("x = `{s}`: {e}"))))
        .collect()
}

pub fn parse_flavor(s: &str) -> Result<Flavor, String> {
    match s.to_ascii_lowercase().as_str() {
        "strat" | "stratonovich" => Ok(Flavor::Stratonovich),
        "sko" | "skorohod" => Ok(Flavor::Skorohod),
        _ => Err(format!("unknown flavor `{s}` (expected strat or sko)")),
    }
}

pub fn parse_method(s: &str) -> Result<ChaosMethod, String> {
    match s.to_ascii_lowercase().as_str() {
        "closed" | "closed_form" => Ok(ChaosMethod::ClosedFormAlpha2),
        "fourier" | "fourier_mc" => Ok(ChaosMethod::FourierMc),
        _ => Err(format!("unknown chaos method `{s}` (expected closed or fourier)")),
    }
}

/// Fills every field, preferring explicit settings, then the seed
/// environment variable, then built-in defaults.
pub fn resolve(command: CommandKind, s: &Settings, env_seed: Option<&str>) -> Result<RunConfig, CliError> {
    let alpha: f64 = s.get_or("alpha", 2.0)?;
    let d = s.get_or("d", 1usize)?;
    let t: f64 = s.get_or("t", 1.0)?;
    let x = match s.get::<String>("x")? {
        Some(v) => parse_list(&v)?,
        None => vec![0.0; d],
    };
    if x.len() != d {
        return Err(CliError::Config(format!("x has {} coordinates but d = {d}", x.len())));
    }
    let u0 = s.get::<InitialCondition>("u0")?.unwrap_or_default();
    let flavor = match s.get::<String>("flavor")? {
        Some(v) => parse_flavor(&v).map_err(CliError::Config)?,
        None => Flavor::Skorohod,
    };
    let method = match s.get::<String>("method")? {
        Some(v) => Some(parse_method(&v).map_err(CliError::Config)?),
        None => None,
    };
    let seed = match s.get::<u64>("seed")? {
        Some(v) => v,
        None => match env_seed {
            Some(v) => v
                .trim()
                .parse()
                .map_err(|e| CliError::Config(format!("{SEED_ENV} = `{v}`: {e}")))?,
            None => 0,
        },
    };
    let default_samples = match command {
        CommandKind::Chaos => 1 << 17,
        _ => 10_000,
    };
    let default_steps = if t > 0.0 && t.is_finite() {
        TimeGrid::default_for(t)?.n_steps()
    } else {
        1
    };
    let cfg = RunConfig {
        command,
        alpha,
        d,
        t,
        x,
        u0,
        flavor,
        p: s.get_or("p", 1)?,
        samples: s.get_or("samples", default_samples)?,
        steps: s.get_or("steps", default_steps)?,
        epsilon: s.get("epsilon")?,
        delta: s.get("delta")?,
        seed,
        nmax: s.get_or("nmax", 4)?,
        method,
        nspace: s.get_or("nspace", 64)?,
        ntime: s.get_or("ntime", 64)?,
        half_length: s.get("half_length")?,
        realizations: s.get_or("realizations", 500)?,
        quick: s.get_or("quick", false)?,
    };
    if cfg.p == 0 || cfg.samples == 0 || cfg.steps == 0 {
        return Err(CliError::Config("p, samples and steps must be positive".into()));
    }
    if cfg.delta.is_some() && cfg.epsilon.is_none() {
        return Err(CliError::Config("delta given without epsilon".into()));
    }
    Ok(cfg)
}
