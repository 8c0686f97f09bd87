//! Monte Carlo moments from the path-only Feynman-Kac formulas and
//! single-realization solution samplers.
//!
//! For `p` independent paths `X^{(1..p)}` started at `x`:
//!
//! ```text
//! Stratonovich:  E Π u0(X^j_t) exp(½ Σ_j V_jj + Σ_{j<k} V_jk)
//! Skorohod:      E Π u0(X^j_t) exp(Σ_{j<k} V_jk)
//! ```
//!
//! Sample `i` draws its `p` paths from streams `p·i .. p·i + p - 1` of the
//! path family, so estimates are independent of how samples are scheduled.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponent::{cross_value, deterministic_bound, mollified_value, self_value, MollifierParams};
use crate::gaussian_field::{sample_wick_weights, WickWeights};
use crate::kernel::{radial_fourier_inverse, stable_kernel_ft, InitialCondition, ModelParams, C_ALPHA};
use crate::rng::{purpose, RngStream};
use crate::stable_path::{sample_path, Path, TimeGrid};
use crate::chaos::existence_check;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Stratonovich,
    Skorohod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub p_order: usize,
    pub flavor: Flavor,
    pub seed: u64,
    pub grid_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionSample {
    pub value: f64,
    pub inner_paths: usize,
    pub moll: MollifierParams,
    pub flavor: Flavor,
}

/// Per-sample ingredients shared by both flavors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    /// `Π_j u0(X^j_t)`
    pub u0_product: f64,
    /// `Σ_j V_jj` (zero when not requested)
    pub self_sum: f64,
    /// `Σ_{j<k} V_jk`
    pub cross_sum: f64,
}

impl PathSample {
    pub fn weight(&self, flavor: Flavor) -> f64 {
        match flavor {
            Flavor::Stratonovich => self.u0_product * (0.5 * self.self_sum + self.cross_sum).exp(),
            Flavor::Skorohod => self.u0_product * self.cross_sum.exp(),
        }
    }
}

fn paths_for_sample(params: &ModelParams, grid: &TimeGrid, p: usize, seed: u64, i: usize) -> Vec<Path> {
    (0..p)
        .map(|j| {
            let stream = RngStream::family(seed, purpose::PATHS, (p * i + j) as u64);
            sample_path(params.alpha, grid, &params.x_point, &mut stream.generator())
        })
        .collect()
}

fn check_grid(params: &ModelParams, grid: &TimeGrid) -> Result<()> {
    if (grid.t_horizon() - params.t_horizon).abs() > 1e-12 * params.t_horizon.max(1.0) {
        return Err(Error::MismatchedGrid(format!(
            "grid ends at {} but t = {}",
            grid.t_horizon(),
            params.t_horizon
        )));
    }
    Ok(())
}

/// Draws the `n_samples` path groups and evaluates their exponents.
///
/// Self exponents are only computed when `with_self` is set; the
/// Stratonovich weight needs them, the Skorohod one does not.
pub fn moment_samples(
    p: usize,
    params: &ModelParams,
    n_samples: usize,
    grid: &TimeGrid,
    seed: u64,
    with_self: bool,
) -> Result<Vec<PathSample>> {
    params.validate()?;
    check_grid(params, grid)?;
    if p == 0 || n_samples == 0 {
        return Err(Error::domain("p and n_samples must be positive"));
    }
    let bound = deterministic_bound(params.t_horizon, params.d).value();
    (0..n_samples)
        .into_par_iter()
        .map(|i| {
            if p == 1 && !with_self && params.u0.is_constant() {
                return Ok(PathSample {
                    u0_product: params.u0.eval(&params.x_point),
                    self_sum: 0.0,
                    cross_sum: 0.0,
                });
            }
            let paths = paths_for_sample(params, grid, p, seed, i);
            let u0_product = paths.iter().map(|q| params.u0.eval(q.endpoint())).product();
            let mut self_sum = 0.0;
            if with_self {
                for q in &paths {
                    let v = self_value(q);
                    // pathwise bound by the constant path
                    if let Some(b) = bound {
                        if v > b * (1.0 + 1e-9) {
                            return Err(Error::domain(format!("self exponent {v} exceeds the bound {b}")));
                        }
                    }
                    self_sum += v;
                }
            }
            let mut cross_sum = 0.0;
            for j in 0..p {
                for k in j + 1..p {
                    cross_sum += cross_value(&paths[j], &paths[k]);
                }
            }
            Ok(PathSample {
                u0_product,
                self_sum,
                cross_sum,
            })
        })
        .collect()
}

/// Pairwise summation, fixed association order.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

pub(crate) fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn estimate_from_samples(
    samples: &[PathSample],
    flavor: Flavor,
    p: usize,
    seed: u64,
    grid: &TimeGrid,
) -> MomentEstimate {
    let w: Vec<f64> = samples.iter().map(|s| s.weight(flavor)).collect();
    let (value, std_error) = mean_and_se(&w);
    MomentEstimate {
        value,
        std_error,
        n_samples: samples.len(),
        p_order: p,
        flavor,
        seed,
        grid_steps: grid.n_steps(),
    }
}

fn require_strat(params: &ModelParams) -> Result<()> {
    if params.d != 1 {
        return Err(Error::stratonovich_needs_d1(params.d));
    }
    Ok(())
}

fn require_sko(params: &ModelParams) -> Result<()> {
    if !existence_check(params.alpha, params.d)?.exists {
        return Err(Error::skorohod_existence(params.alpha, params.d));
    }
    Ok(())
}

pub fn strat_moment(p: usize, params: &ModelParams, n_samples: usize, grid: &TimeGrid, seed: u64) -> Result<MomentEstimate> {
    require_strat(params)?;
    let s = moment_samples(p, params, n_samples, grid, seed, true)?;
    Ok(estimate_from_samples(&s, Flavor::Stratonovich, p, seed, grid))
}

pub fn sko_moment(p: usize, params: &ModelParams, n_samples: usize, grid: &TimeGrid, seed: u64) -> Result<MomentEstimate> {
    require_sko(params)?;
    let s = moment_samples(p, params, n_samples, grid, seed, false)?;
    Ok(estimate_from_samples(&s, Flavor::Skorohod, p, seed, grid))
}

/// One flavor's estimate together with the per-sample ingredients.
pub fn moment_with_samples(
    flavor: Flavor,
    p: usize,
    params: &ModelParams,
    n_samples: usize,
    grid: &TimeGrid,
    seed: u64,
) -> Result<(MomentEstimate, Vec<PathSample>)> {
    let with_self = match flavor {
        Flavor::Stratonovich => {
            require_strat(params)?;
            true
        }
        Flavor::Skorohod => {
            require_sko(params)?;
            false
        }
    };
    let s = moment_samples(p, params, n_samples, grid, seed, with_self)?;
    Ok((estimate_from_samples(&s, flavor, p, seed, grid), s))
}

/// Both flavors from the same path draws.
pub fn shared_moments(
    p: usize,
    params: &ModelParams,
    n_samples: usize,
    grid: &TimeGrid,
    seed: u64,
) -> Result<(MomentEstimate, MomentEstimate, Vec<PathSample>)> {
    require_strat(params)?;
    require_sko(params)?;
    let s = moment_samples(p, params, n_samples, grid, seed, true)?;
    let strat = estimate_from_samples(&s, Flavor::Stratonovich, p, seed, grid);
    let sko = estimate_from_samples(&s, Flavor::Skorohod, p, seed, grid);
    Ok((strat, sko, s))
}

/// Stratonovich moment with the exponent replaced by its mollified
/// version: `E Π u0(X^j_t) exp(½ Σ_{j,k} ⟨A_j, A_k⟩)`.
pub fn strat_moment_mollified(
    p: usize,
    params: &ModelParams,
    moll: MollifierParams,
    n_samples: usize,
    grid: &TimeGrid,
    seed: u64,
) -> Result<MomentEstimate> {
    require_strat(params)?;
    moll.validate()?;
    params.validate()?;
    check_grid(params, grid)?;
    if p == 0 || n_samples == 0 {
        return Err(Error::domain("p and n_samples must be positive"));
    }
    let w: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let paths = paths_for_sample(params, grid, p, seed, i);
            let u0: f64 = paths.iter().map(|q| params.u0.eval(q.endpoint())).product();
            let mut e = 0.0;
            for j in 0..p {
                e += 0.5 * mollified_value(&paths[j], &paths[j], moll);
                for k in j + 1..p {
                    e += mollified_value(&paths[j], &paths[k], moll);
                }
            }
            u0 * e.exp()
        })
        .collect();
    let (value, std_error) = mean_and_se(&w);
    Ok(MomentEstimate {
        value,
        std_error,
        n_samples,
        p_order: p,
        flavor: Flavor::Stratonovich,
        seed,
        grid_steps: grid.n_steps(),
    })
}

/// `(g_α(t, ·) * u0)(x)`, the mean of the Skorohod solution.
pub fn sko_mean_exact(params: &ModelParams) -> Result<f64> {
    params.validate()?;
    let (alpha, t, x) = (params.alpha, params.t_horizon, &params.x_point);
    match params.u0 {
        InitialCondition::Constant { value } => Ok(value),
        InitialCondition::Cosine { frequency } => {
            let mut xi = vec![0.0; params.d];
            xi[0] = frequency;
            Ok(stable_kernel_ft(alpha, t, &xi) * (frequency * x[0]).cos())
        }
        InitialCondition::GaussianBump { amplitude, width } => {
            // inverse transform of e^{-c t ρ^α} × the bump's transform
            let d = params.d as f64;
            let pref = amplitude * (2.0 * std::f64::consts::PI * width * width).powf(d / 2.0);
            let profile = |rho: f64| {
                let s = if alpha == 2.0 { rho * rho } else { rho.powf(alpha) };
                pref * (-C_ALPHA * t * s - 0.5 * width * width * rho * rho).exp()
            };
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let cutoff = (80.0f64).sqrt() / width;
            Ok(radial_fourier_inverse(params.d, r, profile, 1.0 / width, cutoff, 1e-10).value)
        }
    }
}

/// `(1/M) Σ_m u0(X^m_t) exp(G_m)` (Stratonovich) or
/// `exp(G_m - ½ gram_mm)` (Skorohod) for given endpoint values and weights.
pub fn solution_value(u0_at_endpoints: &[f64], weights: &WickWeights, flavor: Flavor) -> f64 {
    let terms: Vec<f64> = u0_at_endpoints
        .iter()
        .enumerate()
        .map(|(m, u)| {
            let g = weights.gaussians[m];
            match flavor {
                Flavor::Stratonovich => u * g.exp(),
                Flavor::Skorohod => u * (g - 0.5 * weights.gram_diag(m)).exp(),
            }
        })
        .collect();
    pairwise_sum(&terms) / terms.len() as f64
}

/// Inner paths and one joint Wick-weight draw for a solution realization.
/// Paths come from the path family at offset `M · realization`, the weights
/// from the conditional family at index `realization`.
pub fn solution_draw(
    params: &ModelParams,
    m_inner: usize,
    moll: MollifierParams,
    grid: &TimeGrid,
    seed: u64,
    realization: u64,
) -> Result<(Vec<f64>, WickWeights)> {
    params.validate()?;
    check_grid(params, grid)?;
    if m_inner == 0 {
        return Err(Error::domain("need at least one inner path"));
    }
    let paths: Vec<Path> = (0..m_inner)
        .map(|m| {
            let stream = RngStream::family(seed, purpose::PATHS, realization * m_inner as u64 + m as u64);
            sample_path(params.alpha, grid, &params.x_point, &mut stream.generator())
        })
        .collect();
    let u0: Vec<f64> = paths.iter().map(|q| params.u0.eval(q.endpoint())).collect();
    let mut g = RngStream::family(seed, purpose::CONDITIONAL, realization).generator();
    let w = sample_wick_weights(&paths, moll, params.d, &mut g)?;
    Ok((u0, w))
}

pub fn strat_solution_sample(
    params: &ModelParams,
    m_inner: usize,
    moll: MollifierParams,
    grid: &TimeGrid,
    seed: u64,
    realization: u64,
) -> Result<SolutionSample> {
    require_strat(params)?;
    let (u0, w) = solution_draw(params, m_inner, moll, grid, seed, realization)?;
    Ok(SolutionSample {
        value: solution_value(&u0, &w, Flavor::Stratonovich),
        inner_paths: m_inner,
        moll,
        flavor: Flavor::Stratonovich,
    })
}

pub fn sko_solution_sample(
    params: &ModelParams,
    m_inner: usize,
    moll: MollifierParams,
    grid: &TimeGrid,
    seed: u64,
    realization: u64,
) -> Result<SolutionSample> {
    if params.d != 1 {
        return Err(Error::fk_solution_needs_d1(params.d));
    }
    let (u0, w) = solution_draw(params, m_inner, moll, grid, seed, realization)?;
    Ok(SolutionSample {
        value: solution_value(&u0, &w, Flavor::Skorohod),
        inner_paths: m_inner,
        moll,
        flavor: Flavor::Skorohod,
    })
}
