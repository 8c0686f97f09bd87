//! Singular double time integrals `∫∫ p_{|s-r|}(X_s - Y_r) ds dr` over
//! sampled paths, and their mollified counterparts.
//!
//! The scheme works on the tensor grid of path cells. With `X̄_i` the mean of
//! the two endpoint positions of cell `i`:
//!
//! * cells at least two steps off the diagonal use the exact integral of
//!   `(2π|s-r|)^{-d/2}` over the cell times `exp(-|X̄_i - Ȳ_l|² / 2|m_i - m_l|)`
//!   at the cell-midpoint lag, which is exact for constant paths;
//! * the diagonal and its two neighbours integrate the lag exactly with
//!   the spatial difference frozen at `X̄_i - Ȳ_l`.
//!
//! In `d = 1` every cell is then integrable in closed form. For `d ≥ 2`
//! the diagonal (and, for `d ≥ 4`, the neighbours) diverge when the frozen
//! difference vanishes; those cells fall back to the kernel at the mean lag
//! of the cell and the result is flagged as divergent by design.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::kernel::{heat_kernel_unchecked, rectangle};
use crate::quad;
use crate::stable_path::{Path, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    MidpointExactDiagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentValue {
    pub value: f64,
    pub grid_steps: usize,
    pub scheme: Scheme,
    /// `|V_h - V_{2h}| / (√2 - 1)`, the error estimate for an `O(h^{1/2})`
    /// scheme.
    pub refinement_estimate: f64,
    /// Set for `d ≥ 2`, where the continuum integral is infinite.
    pub divergent_by_design: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierParams {
    pub epsilon: f64,
    pub delta: f64,
}

impl MollifierParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        let m = Self { epsilon, delta };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) || !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::domain(format!(
                "mollifier needs epsilon, delta > 0 (got {}, {})",
                self.epsilon, self.delta
            )));
        }
        Ok(())
    }
}

/// Closed-form value of `∫₀ᵗ∫₀ᵗ (2π|s-r|)^{-d/2} ds dr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bound {
    Finite { value: f64 },
    Divergent,
}

impl Bound {
    pub fn value(&self) -> Option<f64> {
        match self {
            Bound::Finite { value } => Some(*value),
            Bound::Divergent => None,
        }
    }
}

pub fn deterministic_bound(t: f64, d: usize) -> Bound {
    if d == 1 {
        Bound::Finite {
            value: 8.0 / 3.0 / (2.0 * PI).sqrt() * t.powf(1.5),
        }
    } else {
        Bound::Divergent
    }
}

pub fn self_exponent(path: &Path, d: usize) -> Result<ExponentValue> {
    check_dim(path, d)?;
    let value = self_value(path);
    let refinement_estimate = match coarsen(path) {
        Some(c) => (value - self_value(&c)).abs() / (2f64.sqrt() - 1.0),
        None => value,
    };
    Ok(ExponentValue {
        value,
        grid_steps: path.grid().n_steps(),
        scheme: Scheme::MidpointExactDiagonal,
        refinement_estimate,
        divergent_by_design: d >= 2,
    })
}

pub fn cross_exponent(path_j: &Path, path_k: &Path, d: usize) -> Result<ExponentValue> {
    check_dim(path_j, d)?;
    check_dim(path_k, d)?;
    check_same_grid(path_j, path_k)?;
    let value = cross_value(path_j, path_k);
    let refinement_estimate = match (coarsen(path_j), coarsen(path_k)) {
        (Some(a), Some(b)) => (value - cross_value(&a, &b)).abs() / (2f64.sqrt() - 1.0),
        _ => value,
    };
    Ok(ExponentValue {
        value,
        grid_steps: path_j.grid().n_steps(),
        scheme: Scheme::MidpointExactDiagonal,
        refinement_estimate,
        divergent_by_design: d >= 2,
    })
}

/// Self exponents of a batch of paths, in input order.
pub fn self_exponents(paths: &[Path], d: usize) -> Result<Vec<ExponentValue>> {
    paths.par_iter().map(|p| self_exponent(p, d)).collect()
}

/// `⟨A_j, A_k⟩ = ∫_{[0,t]⁴} ψ_δ(u-s) ψ_δ(v-r) p_{|u-v|+2ε}(X_s - Y_r) du dv ds dr`
/// with `ψ_δ = δ^{-1} 1_{[0,δ]}`.
///
/// The window integrals over `(u, v)` are done exactly; the outer `(s, r)`
/// integral uses the midpoint rule on the path cells.
pub fn mollified_inner(path_j: &Path, path_k: &Path, moll: MollifierParams, d: usize) -> Result<f64> {
    moll.validate()?;
    check_dim(path_j, d)?;
    check_dim(path_k, d)?;
    check_same_grid(path_j, path_k)?;
    Ok(mollified_value(path_j, path_k, moll))
}

pub(crate) fn mollified_value(path_j: &Path, path_k: &Path, moll: MollifierParams) -> f64 {
    let grid = path_j.grid();
    let d = path_j.d();
    let n = grid.n_steps();
    let t = grid.t_horizon();
    let times = grid.times();
    let x = cell_means(path_j);
    let y = cell_means(path_k);
    let sigma = 2.0 * moll.epsilon;
    let inv_d2 = 1.0 / (moll.delta * moll.delta);
    let mids: Vec<f64> = times.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let widths: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let win_end: Vec<f64> = mids.iter().map(|m| (m + moll.delta).min(t)).collect();
    let symmetric = std::ptr::eq(path_j, path_k) || path_j.positions() == path_k.positions();
    let mut total = 0.0;
    for i in 0..n {
        let xi = &x[i * d..(i + 1) * d];
        let l_end = if symmetric { i + 1 } else { n };
        let mut row = 0.0;
        for l in 0..l_end {
            let r2 = dist2(xi, &y[l * d..(l + 1) * d]);
            let k = if d == 1 {
                let h = TimeH1::new(0.5 * r2, sigma);
                rectangle(mids[i], win_end[i], mids[l], win_end[l], |a| h.eval(a))
            } else {
                rectangle(mids[i], win_end[i], mids[l], win_end[l], |a| time_h_numeric(a, r2, sigma, d))
            };
            let w = widths[l] * k;
            row += if symmetric && l != i { 2.0 * w } else { w };
        }
        total += widths[i] * row;
    }
    total * inv_d2
}

fn check_dim(path: &Path, d: usize) -> Result<()> {
    if path.d() != d {
        return Err(Error::domain(format!(
            "path has dimension {} but d = {d} was requested",
            path.d()
        )));
    }
    Ok(())
}

fn check_same_grid(a: &Path, b: &Path) -> Result<()> {
    if a.grid() != b.grid() {
        return Err(Error::MismatchedGrid("paths do not share a time grid".into()));
    }
    Ok(())
}

#[inline]
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// Every other grid point (plus the endpoint when the step count is odd).
fn coarsen(path: &Path) -> Option<Path> {
    let grid = path.grid();
    let n = grid.n_steps();
    if n < 2 {
        return None;
    }
    let d = path.d();
    let mut idx: Vec<usize> = (0..=n).step_by(2).collect();
    if n % 2 == 1 {
        idx.push(n);
    }
    let times = idx.iter().map(|&i| grid.times()[i]).collect();
    let positions = idx.iter().flat_map(|&i| path.position(i).to_vec()).collect();
    Path::new(TimeGrid::new(times).ok()?, d, positions).ok()
}

/// Mean of the two endpoint positions of every cell, row-major `n × d`.
fn cell_means(path: &Path) -> Vec<f64> {
    let d = path.d();
    let n = path.grid().n_steps();
    let p = path.positions();
    (0..n * d).map(|k| 0.5 * (p[k] + p[k + d])).collect()
}

pub(crate) fn self_value(path: &Path) -> f64 {
    let m = cell_means(path);
    pair_sum(path.grid(), path.d(), &m, &m, true)
}

pub(crate) fn cross_value(a: &Path, b: &Path) -> f64 {
    let x = cell_means(a);
    let y = cell_means(b);
    pair_sum(a.grid(), a.d(), &x, &y, false)
}

/// Even second antiderivative of `(2π|x|)^{-d/2}` (up to affine terms,
/// which cancel in [`rectangle`]). Valid for cells whose lag range avoids
/// zero, or touches it where the kernel is integrable against the cell's
/// triangular lag weight.
fn zero_shift_k2(x: f64, d: usize) -> f64 {
    let x = x.abs();
    let c = (2.0 * PI).powf(-(d as f64) / 2.0);
    let v = match d {
        2 => {
            if x == 0.0 {
                0.0
            } else {
                x * x.ln() - x
            }
        }
        4 => -x.ln(),
        _ => {
            let e = 2.0 - d as f64 / 2.0;
            x.powf(e) / ((e - 1.0) * e)
        }
    };
    c * v
}

/// `∫_cell ∫_cell (2π|s-r|)^{-d/2}` for a pair of cells, with regularization
/// for the non-integrable touching cases.
fn zero_shift_weight(a: f64, b: f64, c: f64, e: f64, d: usize) -> f64 {
    let touching = b >= c && e >= a;
    let diagonal = a == c && b == e;
    if d == 1 || !touching || (!diagonal && d <= 3) {
        return rectangle(a, b, c, e, |x| zero_shift_k2(x, d));
    }
    // kernel at the mean lag of the cell pair
    let mean_lag = if diagonal {
        (b - a) / 3.0
    } else {
        (0.5 * (a + b) - 0.5 * (c + e)).abs()
    };
    (b - a) * (e - c) * heat_kernel_unchecked(mean_lag, 0.0, d)
}

/// `H(a) = ∫₀^{|a|} (|a| - z) p_{z+σ}(D) dz` in `d = 1`, `c = |D|²/2`.
struct TimeH1 {
    c: f64,
    sigma: f64,
    f0_sigma: f64,
    f1_sigma: f64,
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

impl TimeH1 {
    fn new(c: f64, sigma: f64) -> Self {
        let (f0, f1) = Self::f01(c, sigma);
        Self {
            c,
            sigma,
            f0_sigma: f0,
            f1_sigma: f1,
        }
    }

    /// Antiderivatives in `w` of `(2πw)^{-1/2} e^{-c/w}` and `w` times it,
    /// both vanishing at `w = 0`.
    #[inline]
    fn f01(c: f64, w: f64) -> (f64, f64) {
        if w <= 0.0 {
            return (0.0, 0.0);
        }
        let sw = w.sqrt();
        let e = if c == 0.0 { 1.0 } else { (-c / w).exp() };
        let g0 = 2.0 * sw * e - if c == 0.0 { 0.0 } else { 2.0 * (PI * c).sqrt() * erfc((c / w).sqrt()) };
        let g1 = 2.0 / 3.0 * w * sw * e - 2.0 * c / 3.0 * g0;
        (INV_SQRT_2PI * g0, INV_SQRT_2PI * g1)
    }

    #[inline]
    fn eval(&self, a: f64) -> f64 {
        let a = a.abs();
        if a == 0.0 {
            return 0.0;
        }
        let w = a + self.sigma;
        let (f0, f1) = Self::f01(self.c, w);
        w * (f0 - self.f0_sigma) - (f1 - self.f1_sigma)
    }
}

/// Same integral in general `d` by tanh-sinh; finite whenever `D ≠ 0` or
/// `σ > 0`.
fn time_h_numeric(a: f64, r2: f64, sigma: f64, d: usize) -> f64 {
    let a = a.abs();
    if a == 0.0 {
        return 0.0;
    }
    quad::tanh_sinh(0.0, a, 1e-11, |z| {
        let tau = z + sigma;
        if tau <= 0.0 {
            0.0
        } else {
            (a - z) * heat_kernel_unchecked(tau, r2, d)
        }
    })
    .value
}

/// Exact lag integral over a touching cell pair with the spatial difference
/// frozen (`r2 = |D|²`).
fn touching_cell(a: f64, b: f64, c: f64, e: f64, r2: f64, d: usize) -> f64 {
    if d == 1 {
        let h = TimeH1::new(0.5 * r2, 0.0);
        return rectangle(a, b, c, e, |x| h.eval(x));
    }
    if r2 == 0.0 {
        return zero_shift_weight(a, b, c, e, d);
    }
    rectangle(a, b, c, e, |x| time_h_numeric(x, r2, 0.0, d))
}

fn pair_sum(grid: &TimeGrid, d: usize, x: &[f64], y: &[f64], symmetric: bool) -> f64 {
    let n = grid.n_steps();
    let t = grid.times();
    let mids: Vec<f64> = t.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let row = |i: usize| &x[i * d..(i + 1) * d];
    let col = |l: usize| &y[l * d..(l + 1) * d];
    let touching = |i: usize, l: usize| touching_cell(t[i], t[i + 1], t[l], t[l + 1], dist2(row(i), col(l)), d);

    let mut total = 0.0;
    if grid.is_uniform() {
        let h = grid.max_step();
        // W[k]: zero-shift weight of a cell pair at lag k; inv[k] = 1/(2kh)
        let weights: Vec<f64> = (0..n)
            .map(|k| {
                if k < 2 {
                    0.0
                } else {
                    let kf = k as f64;
                    rectangle(kf * h, (kf + 1.0) * h, 0.0, h, |z| zero_shift_k2(z, d))
                }
            })
            .collect();
        let inv: Vec<f64> = (0..n).map(|k| if k == 0 { 0.0 } else { 0.5 / (k as f64 * h) }).collect();
        for i in 0..n {
            let mut acc = 0.0;
            if d == 1 {
                let xi = x[i];
                let far_lo = if i >= 2 { i - 2 } else { 0 };
                // l < i - 1
                if i >= 2 {
                    for l in 0..=far_lo {
                        let dx = xi - y[l];
                        acc += weights[i - l] * (-dx * dx * inv[i - l]).exp();
                    }
                }
                if !symmetric {
                    for l in i + 2..n {
                        let dx = xi - y[l];
                        acc += weights[l - i] * (-dx * dx * inv[l - i]).exp();
                    }
                }
            } else {
                let far = |l: usize, k: usize| weights[k] * (-dist2(row(i), col(l)) * inv[k]).exp();
                if i >= 2 {
                    for l in 0..=i - 2 {
                        acc += far(l, i - l);
                    }
                }
                if !symmetric {
                    for l in i + 2..n {
                        acc += far(l, l - i);
                    }
                }
            }
            if symmetric {
                acc *= 2.0;
                acc += touching(i, i);
                if i >= 1 {
                    acc += 2.0 * touching(i, i - 1);
                }
            } else {
                acc += touching(i, i);
                if i >= 1 {
                    acc += touching(i, i - 1);
                }
                if i + 1 < n {
                    acc += touching(i, i + 1);
                }
            }
            total += acc;
        }
        return total;
    }

    for i in 0..n {
        let l_end = if symmetric { i + 1 } else { n };
        for l in 0..l_end {
            let v = if i.abs_diff(l) <= 1 {
                touching(i, l)
            } else {
                let w = zero_shift_weight(t[i], t[i + 1], t[l], t[l + 1], d);
                w * (-dist2(row(i), col(l)) / (2.0 * (mids[i] - mids[l]).abs())).exp()
            };
            total += if symmetric && l != i { 2.0 * v } else { v };
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::heat_kernel;
    use crate::rng::RngStream;
    use crate::stable_path::sample_path;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const BOUND_T1: f64 = 1.063_846_081_070_487;

    fn constant(t: f64, n: usize, d: usize) -> Path {
        Path::constant(TimeGrid::uniform(t, n).unwrap(), &vec![0.0; d])
    }

    fn brownian(seed: u64, idx: u64, n: usize) -> Path {
        let grid = TimeGrid::uniform(1.0, n).unwrap();
        sample_path(2.0, &grid, &[0.0], &mut RngStream::new(seed, idx).generator())
    }

    #[test]
    fn closed_form_time_integral_matches_quadrature() {
        for &(c, sigma, a) in &[(0.0, 0.0, 0.3), (0.02, 0.0, 0.01), (0.5, 0.1, 2.0), (1e-6, 0.05, 0.004)] {
            let h = TimeH1::new(c, sigma);
            let num = time_h_numeric(a, 2.0 * c, sigma, 1);
            assert_abs_diff_eq!(h.eval(a), num, epsilon = 1e-12 * num.abs().max(1.0));
        }
        // zero shift: (2π)^{-1/2} (4/3) a^{3/2}
        let h = TimeH1::new(0.0, 0.0);
        assert_abs_diff_eq!(h.eval(0.5), INV_SQRT_2PI * 4.0 / 3.0 * 0.5f64.powf(1.5), epsilon = 1e-15);
    }

    #[test]
    fn constant_path_oracle() {
        let v = self_exponent(&constant(1.0, 512, 1), 1).unwrap();
        assert_abs_diff_eq!(v.value, BOUND_T1, epsilon = 1e-3);
        assert!(!v.divergent_by_design);
        assert_eq!(v.grid_steps, 512);
        for &t in &[0.25, 4.0] {
            let v = self_exponent(&constant(t, 512, 1), 1).unwrap();
            assert_abs_diff_eq!(v.value, BOUND_T1 * t.powf(1.5), epsilon = 1e-3);
        }
        // non-uniform grid, still exact for constant paths
        let g = TimeGrid::new(vec![0.0, 0.1, 0.15, 0.4, 0.41, 0.8, 1.0]).unwrap();
        let v = self_exponent(&Path::constant(g, &[2.0]), 1).unwrap();
        assert_abs_diff_eq!(v.value, BOUND_T1, epsilon = 1e-9);
    }

    #[test]
    fn deterministic_bound_values() {
        assert_abs_diff_eq!(deterministic_bound(1.0, 1).value().unwrap(), BOUND_T1, epsilon = 1e-7);
        assert_abs_diff_eq!(deterministic_bound(4.0, 1).value().unwrap(), 8.510_770_5, epsilon = 1e-5);
        assert_eq!(deterministic_bound(1.0, 2), Bound::Divergent);
    }

    #[test]
    fn brownian_paths_respect_pathwise_bound() {
        for i in 0..200 {
            let p = brownian(1, i, 256);
            let v = self_exponent(&p, 1).unwrap();
            assert!(v.value <= BOUND_T1 + 1e-12, "{}", v.value);
            assert!(v.value > 0.0 && v.refinement_estimate.is_finite());
        }
    }

    #[test]
    fn cross_with_itself_is_self() {
        let p = brownian(2, 0, 128);
        let s = self_exponent(&p, 1).unwrap().value;
        let c = cross_exponent(&p, &p, 1).unwrap().value;
        assert_abs_diff_eq!(s, c, epsilon = 1e-12);
        let p2 = Path::new(
            TimeGrid::uniform(1.0, 3).unwrap(),
            2,
            vec![0.0, 0.0, 0.1, -0.3, 0.5, 0.2, 0.4, 0.4],
        )
        .unwrap();
        assert_abs_diff_eq!(
            self_exponent(&p2, 2).unwrap().value,
            cross_exponent(&p2, &p2, 2).unwrap().value,
            epsilon = 1e-10
        );
    }

    #[test]
    fn cross_rejects_mismatched_grids() {
        let a = brownian(3, 0, 64);
        let b = brownian(3, 1, 32);
        assert!(matches!(cross_exponent(&a, &b, 1), Err(Error::MismatchedGrid(_))));
        assert!(self_exponent(&a, 2).is_err());
    }

    #[test]
    fn cross_mean_oracle_brownian() {
        // E p_{|s-r|}(B_s - B'_r) = p_{|s-r|+s+r}(0)
        let oracle = {
            let inner = |s: f64| {
                let k = |r: f64| heat_kernel(f64::abs(s - r) + s + r, &[0.0]).unwrap();
                quad::tanh_sinh(0.0, s, 1e-12, k).value + quad::tanh_sinh(s, 1.0, 1e-12, k).value
            };
            quad::tanh_sinh(0.0, 1.0, 1e-12, inner).value
        };
        assert_abs_diff_eq!(oracle, 2.0 * 2f64.sqrt() / (3.0 * (2.0 * PI).sqrt()), epsilon = 1e-9);
        let n = 10_000u64;
        let (mut s1, mut s2) = (0.0, 0.0);
        for i in 0..n {
            let a = brownian(4, 2 * i, 64);
            let b = brownian(4, 2 * i + 1, 64);
            let v = cross_exponent(&a, &b, 1).unwrap().value;
            s1 += v;
            s2 += v * v;
        }
        let mean = s1 / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - oracle).abs() < 3.0 * se, "{mean} vs {oracle} (se {se})");
    }

    #[test]
    fn refinement_convergence_rate() {
        // differences between successive refinements shrink like h^{1/2}
        let fine = brownian(5, 0, 2048);
        let mut vals = Vec::new();
        let mut p = fine.clone();
        vals.push(self_value(&p));
        for _ in 0..4 {
            p = coarsen(&p).unwrap();
            vals.push(self_value(&p));
        }
        vals.reverse(); // coarse to fine: 128, 256, ..., 2048
        let diffs: Vec<f64> = vals.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let x: Vec<f64> = (0..diffs.len()).map(|k| -((128 << k) as f64).ln()).collect();
        let y: Vec<f64> = diffs.iter().map(|v| v.ln()).collect();
        let mx = x.iter().sum::<f64>() / x.len() as f64;
        let my = y.iter().sum::<f64>() / y.len() as f64;
        let slope = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>()
            / x.iter().map(|a| (a - mx) * (a - mx)).sum::<f64>();
        assert!(slope >= 0.4, "slope {slope}, diffs {diffs:?}");
    }

    #[test]
    fn divergence_in_two_dimensions() {
        let mut prev = 0.0;
        for k in 0..5 {
            let v = self_exponent(&constant(1.0, 32 << k, 2), 2).unwrap();
            assert!(v.divergent_by_design);
            assert!(v.value > prev + 0.05, "step {k}: {} after {prev}", v.value);
            prev = v.value;
        }
        let mut prev = 0.0;
        for k in 0..5 {
            let v = self_exponent(&constant(1.0, 32 << k, 1), 1).unwrap().value;
            if k > 0 {
                assert!((v - prev).abs() < 1e-9);
            }
            prev = v;
        }
    }

    #[test]
    fn mollified_constant_path_ladder() {
        let p = constant(1.0, 256, 1);
        let ladder: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&e| mollified_inner(&p, &p, MollifierParams::new(e, e).unwrap(), 1).unwrap())
            .collect();
        assert!(ladder[0] > 0.0);
        assert!(ladder[0] < ladder[1] && ladder[1] < ladder[2] && ladder[2] < BOUND_T1, "{ladder:?}");
    }

    #[test]
    fn mollified_large_epsilon_limit() {
        let p = constant(1.0, 128, 1);
        let (eps, delta) = (400.0, 0.1);
        let v = mollified_inner(&p, &p, MollifierParams::new(eps, delta).unwrap(), 1).unwrap();
        let limit = (4.0 * PI * eps).powf(-0.5) * (1.0 - delta / 2.0).powi(2);
        assert_abs_diff_eq!(v / limit, 1.0, epsilon = 2e-3);
    }

    #[test]
    fn mollified_general_d_matches_closed_form() {
        let p = brownian(6, 0, 16);
        let q = brownian(6, 1, 16);
        let m = MollifierParams::new(0.05, 0.1).unwrap();
        let closed = mollified_value(&p, &q, m);
        let x = cell_means(&p);
        let y = cell_means(&q);
        // recompute with the numeric time integral
        let t = p.grid().times();
        let mut num = 0.0;
        for i in 0..16 {
            for l in 0..16 {
                let (si, rl) = (0.5 * (t[i] + t[i + 1]), 0.5 * (t[l] + t[l + 1]));
                let r2 = (x[i] - y[l]).powi(2);
                num += (t[i + 1] - t[i]) * (t[l + 1] - t[l])
                    * rectangle(si, (si + 0.1).min(1.0), rl, (rl + 0.1).min(1.0), |a| time_h_numeric(a, r2, 0.1, 1));
            }
        }
        assert_abs_diff_eq!(closed, num / 0.01, epsilon = 1e-9);
    }

    #[test]
    fn mollified_approaches_cross_exponent() {
        let a = brownian(7, 0, 256);
        let b = brownian(7, 1, 256);
        let target = cross_exponent(&a, &b, 1).unwrap().value;
        let gaps: Vec<f64> = [0.1, 0.05, 0.025, 0.0125]
            .iter()
            .map(|&e| (mollified_inner(&a, &b, MollifierParams::new(e, e).unwrap(), 1).unwrap() - target).abs())
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    }

    #[test]
    fn mollifier_rejects_nonpositive() {
        assert!(MollifierParams::new(0.0, 0.1).is_err());
        assert!(MollifierParams::new(0.1, -1.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn cross_and_mollified_are_symmetric(seed in 0u64..1000, eps in 0.01f64..0.5) {
            let a = brownian(seed, 0, 32);
            let b = brownian(seed, 1, 32);
            let ab = cross_exponent(&a, &b, 1).unwrap().value;
            let ba = cross_exponent(&b, &a, 1).unwrap().value;
            prop_assert!((ab - ba).abs() < 1e-12);
            let m = MollifierParams::new(eps, eps).unwrap();
            let mab = mollified_inner(&a, &b, m, 1).unwrap();
            let mba = mollified_inner(&b, &a, m, 1).unwrap();
            prop_assert!((mab - mba).abs() < 1e-12 * mab.abs().max(1.0));
            prop_assert!(mab > 0.0);
        }

        #[test]
        fn self_exponent_bounded_by_constant_path(seed in 0u64..1000, alpha in 0.5f64..2.0) {
            let grid = TimeGrid::uniform(1.0, 64).unwrap();
            let p = sample_path(alpha, &grid, &[0.0], &mut RngStream::new(seed, 0).generator());
            let v = self_exponent(&p, 1).unwrap().value;
            prop_assert!(v > 0.0 && v <= BOUND_T1 + 1e-12);
        }
    }
}
