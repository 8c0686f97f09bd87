//! Wiener chaos terms of the second moment and the existence classifier.
//!
//! With `u0 ≡ 1` the n-th chaos contribution to `E[u(t,x)²]` equals
//! `E[V^n] / n!`, where `V = ∫∫ p_{|s-r|}(X_s - Y_r) ds dr` is the cross
//! exponent of two independent stable paths. Expanding the product of heat
//! kernels gives a `2n`-dimensional time integral.
//!
//! * `α = 2`: the spatial expectation is Gaussian and collapses to
//!   `(2π)^{-nd/2} det(T + Σ)^{-d/2}` with `T = diag|s_j - r_j|` and
//!   `Σ_jk = min(s_j, s_k) + min(r_j, r_k)`.
//! * `α < 2`: each kernel is written as a Fourier integral, the path
//!   expectation becomes a product of stable characteristic functions and
//!   the frequencies are sampled from the Gaussian kernel factors.
//!
//! Both routes draw each time pair `(s_j, r_j)` from the density
//! `∝ |s - r|^{-1/2}` on `[0,t]²`, which cancels the lag singularity in
//! `d = 1`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::kernel::{sphere_area, InitialCondition, C_ALPHA};
use crate::rng::{purpose, RngStream};

/// Largest chaos order evaluated.
pub const MAX_ORDER: usize = 6;
/// Independent random shifts used for the randomized QMC error.
const RQMC_SHIFTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChaosMethod {
    ClosedFormAlpha2,
    FourierMc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChaosOptions {
    pub n_samples: usize,
    pub seed: u64,
    /// Forces a route; `None` picks the closed form at `α = 2`.
    pub method: Option<ChaosMethod>,
}

impl Default for ChaosOptions {
    fn default() -> Self {
        Self {
            n_samples: 1 << 17,
            seed: 0,
            method: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChaosTerm {
    pub n: usize,
    pub value: f64,
    pub mc_error: f64,
    pub method: ChaosMethod,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosSecondMoment {
    pub value: f64,
    pub mc_error: f64,
    pub tail_bound: f64,
    pub terms: Vec<ChaosTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExistenceReport {
    pub alpha: f64,
    pub d: usize,
    pub p_choice: f64,
    pub q_choice: f64,
    pub cond_d_lt_2q: bool,
    pub cond_d_lt_4pqa: bool,
    pub cond_d_lt_pa2: bool,
    pub exists: bool,
}

/// Hölder exponents `p = (4 + 2α)/α`, `q = 1 + α/2`.
pub fn holder_pair(alpha: f64) -> (f64, f64) {
    ((4.0 + 2.0 * alpha) / alpha, 1.0 + 0.5 * alpha)
}

/// Strict `a < b` that treats values within rounding of `b` as equal.
fn strictly_below(a: f64, b: f64) -> bool {
    a < b - 1e-9 * b.abs().max(1.0)
}

pub fn existence_check(alpha: f64, d: usize) -> Result<ExistenceReport> {
    if !(alpha > 0.0 && alpha <= 2.0) || d == 0 {
        return Err(Error::domain(format!("need alpha in (0, 2] and d >= 1 (alpha = {alpha}, d = {d})")));
    }
    let (p, q) = holder_pair(alpha);
    let df = d as f64;
    let c1 = strictly_below(df, 2.0 * q);
    let c2 = strictly_below(df, 4.0 * p * q * alpha / (4.0 * q + p * alpha));
    let c3 = strictly_below(df, p * alpha / 2.0);
    Ok(ExistenceReport {
        alpha,
        d,
        p_choice: p,
        q_choice: q,
        cond_d_lt_2q: c1,
        cond_d_lt_4pqa: c2,
        cond_d_lt_pa2: c3,
        exists: c1 && c2 && c3,
    })
}

fn require_existence(alpha: f64, d: usize) -> Result<()> {
    if !existence_check(alpha, d)?.exists {
        return Err(Error::skorohod_existence(alpha, d));
    }
    Ok(())
}

/// Constant `C` of the term bound: `(2π)^{-d} C_stable^{2/p} C_gauss^{1/q}`
/// with `C_stable = ∫ e^{-p c_α |ξ|^α} dξ`, `C_gauss = ∫ e^{-q|ξ|²} dξ`,
/// and the Hölder step taken with constant one.
pub fn series_constant(alpha: f64, d: usize) -> f64 {
    let (p, q) = holder_pair(alpha);
    let df = d as f64;
    let c_stable = (C_ALPHA * p).powf(-df / alpha) * sphere_area(d) * ln_gamma(df / alpha).exp() / alpha;
    let c_gauss = (PI / q).powf(df / 2.0);
    (2.0 * PI).powf(-df) * c_stable.powf(2.0 / p) * c_gauss.powf(1.0 / q)
}

/// `ln b(n)` for the term bound
/// `b(n) = C^n (n!)^{1 - d/2q} [t^{n(1-θ)} Γ(1-θ)^n / Γ(n(1-θ)+1)]^κ`
/// with `κ = 2 - d/2q`, `θ = 2d/(pακ)`.
pub fn ln_series_term_bound(n: usize, alpha: f64, d: usize, t: f64) -> Result<f64> {
    require_existence(alpha, d)?;
    if !(t > 0.0) {
        return Err(Error::domain("t must be positive"));
    }
    let (p, q) = holder_pair(alpha);
    let df = d as f64;
    let kappa = 2.0 - df / (2.0 * q);
    let theta = 2.0 * df / (p * alpha * kappa);
    if !(theta < 1.0) {
        return Err(Error::domain(format!("Gamma pole: 1 - theta = {} <= 0", 1.0 - theta)));
    }
    let nf = n as f64;
    let a = 1.0 - theta;
    let ln_c = series_constant(alpha, d).ln();
    Ok(nf * ln_c
        + (1.0 - df / (2.0 * q)) * ln_gamma(nf + 1.0)
        + kappa * (nf * a * t.ln() + nf * ln_gamma(a) - ln_gamma(nf * a + 1.0)))
}

pub fn series_term_bound(n: usize, alpha: f64, d: usize, t: f64) -> Result<f64> {
    Ok(ln_series_term_bound(n, alpha, d, t)?.exp())
}

/// `Σ_{m > n} b(m) / b(n)`, summed until the terms are negligible.
pub fn series_tail_ratio(n: usize, alpha: f64, d: usize, t: f64) -> Result<f64> {
    let base = ln_series_term_bound(n, alpha, d, t)?;
    let mut sum = 0.0;
    let mut m = n + 1;
    loop {
        let r = (ln_series_term_bound(m, alpha, d, t)? - base).exp();
        sum += r;
        if !sum.is_finite() {
            return Ok(f64::INFINITY);
        }
        if (r < 1e-16 * sum && m > n + 5) || m > n + 10_000 {
            break;
        }
        m += 1;
    }
    Ok(sum)
}

/// `n`-th chaos contribution to `E[u(t,x)²]` for a constant initial
/// condition.
pub fn chaos_term(n: usize, alpha: f64, d: usize, t: f64, u0: &InitialCondition, opts: ChaosOptions) -> Result<ChaosTerm> {
    let c = match u0 {
        InitialCondition::Constant { value } => *value,
        _ => return Err(Error::domain("chaos terms are implemented for constant u0 only")),
    };
    if !(alpha > 0.0 && alpha <= 2.0) || d == 0 || !(t > 0.0) {
        return Err(Error::domain(format!("bad parameters alpha = {alpha}, d = {d}, t = {t}")));
    }
    if n > MAX_ORDER {
        return Err(Error::Budget(format!("chaos order {n} exceeds {MAX_ORDER}")));
    }
    let method = match opts.method {
        Some(m) => m,
        None if alpha == 2.0 => ChaosMethod::ClosedFormAlpha2,
        None => ChaosMethod::FourierMc,
    };
    if method == ChaosMethod::ClosedFormAlpha2 && alpha != 2.0 {
        return Err(Error::domain("the closed-form route needs alpha = 2"));
    }
    if n == 0 {
        return Ok(ChaosTerm {
            n,
            value: c * c,
            mc_error: 0.0,
            method,
            n_samples: 0,
        });
    }
    if opts.n_samples < 2 * RQMC_SHIFTS {
        return Err(Error::domain(format!("need at least {} samples", 2 * RQMC_SHIFTS)));
    }
    let (mean, err) = match method {
        ChaosMethod::ClosedFormAlpha2 => rqmc_det(n, d, t, opts),
        ChaosMethod::FourierMc => fourier_mc(n, alpha, d, t, opts),
    };
    let scale = c * c / factorial(n);
    Ok(ChaosTerm {
        n,
        value: scale * mean,
        mc_error: scale * err,
        method,
        n_samples: opts.n_samples,
    })
}

pub fn chaos_second_moment(alpha: f64, d: usize, t: f64, n_max: usize, opts: ChaosOptions) -> Result<ChaosSecondMoment> {
    require_existence(alpha, d)?;
    let one = InitialCondition::Constant { value: 1.0 };
    let terms = (0..=n_max)
        .map(|n| {
            let o = ChaosOptions {
                seed: opts.seed.wrapping_add(n as u64),
                ..opts
            };
            chaos_term(n, alpha, d, t, &one, o)
        })
        .collect::<Result<Vec<_>>>()?;
    let value = terms.iter().map(|k| k.value).sum();
    let mc_error = terms.iter().map(|k| k.mc_error * k.mc_error).sum::<f64>().sqrt();
    let last = terms.last().unwrap();
    let tail_bound = if n_max == 0 {
        // No computed term to scale from; fall back to the first term's
        // ratio against the bound.
        let first = chaos_term(1, alpha, d, t, &one, opts)?;
        first.value * (1.0 + series_tail_ratio(1, alpha, d, t)?)
    } else {
        last.value * series_tail_ratio(n_max, alpha, d, t)?
    };
    Ok(ChaosSecondMoment {
        value,
        mc_error,
        tail_bound,
        terms,
    })
}

/// Closed form of the first term with `u0 ≡ 1`, valid for `d < 4`.
pub fn first_term_alpha2(d: usize, t: f64) -> f64 {
    let e = 2.0 - d as f64 / 2.0;
    2.0 * (4.0 * PI).powf(-(d as f64) / 2.0) * t.powf(e) / e
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// One time pair `(s, r)` drawn from `∝ |s - r|^{-1/2}` on `[0,t]²` from
/// three uniforms; returns the pair and `1/q = Z |s - r|^{1/2}`.
#[inline]
fn pair_from_uniforms(u: [f64; 3], t: f64) -> (f64, f64, f64) {
    let y = 2.0 * (u[0].asin() / 3.0).sin();
    let tau = t * y * y;
    let lo = u[1] * (t - tau);
    let (s, r) = if u[2] < 0.5 { (lo, lo + tau) } else { (lo + tau, lo) };
    let z = 8.0 / 3.0 * t.powf(1.5);
    (s, r, z * tau.sqrt())
}

/// Fractional parts of square roots of primes, a Kronecker lattice.
fn kronecker_alphas(dim: usize) -> Vec<f64> {
    let mut primes = Vec::new();
    let mut k = 2u64;
    while primes.len() < dim {
        if (2..k).take_while(|p| p * p <= k).all(|p| k % p != 0) {
            primes.push(k);
        }
        k += 1;
    }
    primes.iter().map(|&p| (p as f64).sqrt().fract()).collect()
}

fn rqmc_det(n: usize, d: usize, t: f64, opts: ChaosOptions) -> (f64, f64) {
    let dim = 3 * n;
    let alphas = kronecker_alphas(dim);
    let per = opts.n_samples / RQMC_SHIFTS;
    let means: Vec<f64> = (0..RQMC_SHIFTS)
        .into_par_iter()
        .map(|k| {
            let mut g = RngStream::family(opts.seed, purpose::CHAOS, k as u64).generator();
            let shift: Vec<f64> = (0..dim).map(|_| g.random::<f64>()).collect();
            let mut s = vec![0.0; n];
            let mut r = vec![0.0; n];
            let mut m = vec![0.0; n * n];
            let mut acc = 0.0;
            for i in 1..=per {
                let mut weight = 1.0;
                for j in 0..n {
                    let mut u = [0.0; 3];
                    for (c, uc) in u.iter_mut().enumerate() {
                        let idx = 3 * j + c;
                        *uc = (shift[idx] + i as f64 * alphas[idx]).fract();
                    }
                    let (sj, rj, w) = pair_from_uniforms(u, t);
                    s[j] = sj;
                    r[j] = rj;
                    weight *= w;
                }
                for a in 0..n {
                    for b in 0..n {
                        m[a * n + b] = s[a].min(s[b]) + r[a].min(r[b]);
                    }
                    m[a * n + a] += (s[a] - r[a]).abs();
                }
                let det = small_det_spd(&mut m, n);
                acc += weight * (2.0 * PI).powf(-((n * d) as f64) / 2.0) * det.powf(-(d as f64) / 2.0);
            }
            acc / per as f64
        })
        .collect();
    mean_and_se(&means)
}

/// Determinant of a symmetric positive definite matrix by in-place
/// Cholesky.
fn small_det_spd(m: &mut [f64], n: usize) -> f64 {
    let mut det = 1.0;
    for j in 0..n {
        let mut piv = m[j * n + j];
        for k in 0..j {
            piv -= m[j * n + k] * m[j * n + k];
        }
        let lj = piv.max(0.0).sqrt();
        m[j * n + j] = lj;
        det *= piv.max(0.0);
        for i in j + 1..n {
            let mut v = m[i * n + j];
            for k in 0..j {
                v -= m[i * n + k] * m[j * n + k];
            }
            m[i * n + j] = if lj > 0.0 { v / lj } else { 0.0 };
        }
    }
    det
}

fn fourier_mc(n: usize, alpha: f64, d: usize, t: f64, opts: ChaosOptions) -> (f64, f64) {
    let per = opts.n_samples / RQMC_SHIFTS;
    let sums: Vec<(f64, f64)> = (0..RQMC_SHIFTS)
        .into_par_iter()
        .map(|k| {
            let mut g = RngStream::family(opts.seed, purpose::CHAOS, (1 << 32) + k as u64).generator();
            let mut s = vec![0.0; n];
            let mut r = vec![0.0; n];
            let mut xi = vec![0.0; n * d];
            let (mut acc, mut acc2) = (0.0, 0.0);
            for _ in 0..per {
                let mut weight = 1.0;
                for j in 0..n {
                    let u = [g.random::<f64>(), g.random::<f64>(), g.random::<f64>()];
                    let (sj, rj, w) = pair_from_uniforms(u, t);
                    let tau = (sj - rj).abs();
                    s[j] = sj;
                    r[j] = rj;
                    // (2π)^{-d} e^{-τ|ξ|²/2} = (2πτ)^{-d/2} × N(0, I/τ) density
                    weight *= w * (2.0 * PI * tau).powf(-(d as f64) / 2.0);
                    let sd = 1.0 / tau.sqrt();
                    for c in 0..d {
                        let z: f64 = StandardNormal.sample(&mut g);
                        xi[j * d + c] = sd * z;
                    }
                }
                let v = weight * stable_cf(&s, &xi, alpha, d) * stable_cf(&r, &xi, alpha, d);
                acc += v;
                acc2 += v * v;
            }
            (acc, acc2)
        })
        .collect();
    // plain Monte Carlo: pooled per-sample standard error
    let total = (per * RQMC_SHIFTS) as f64;
    let s1: f64 = sums.iter().map(|x| x.0).sum();
    let s2: f64 = sums.iter().map(|x| x.1).sum();
    let mean = s1 / total;
    let var = (s2 / total - mean * mean).max(0.0) * total / (total - 1.0);
    (mean, (var / total).sqrt())
}

/// `E exp(i Σ_j ξ_j · X_{s_j})` for an isotropic stable process.
fn stable_cf(times: &[f64], xi: &[f64], alpha: f64, d: usize) -> f64 {
    let n = times.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[b].partial_cmp(&times[a]).unwrap());
    // walk from the latest time back, accumulating the frequency sum
    let mut sum = vec![0.0; d];
    let mut expo = 0.0;
    for (k, &j) in order.iter().enumerate() {
        for c in 0..d {
            sum[c] += xi[j * d + c];
        }
        let prev = order.get(k + 1).map_or(0.0, |&i| times[i]);
        let gap = times[j] - prev;
        let norm2: f64 = sum.iter().map(|v| v * v).sum();
        expo += gap * if alpha == 2.0 { norm2 } else { norm2.powf(0.5 * alpha) };
    }
    (-C_ALPHA * expo).exp()
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}
