//! Exact-in-law sampling of isotropic α-stable paths on arbitrary time
//! grids.
//!
//! For α < 2 an increment over `dt` is `sqrt(2 S) Z` with `Z` a standard
//! d-dimensional Gaussian and `S` a positive (α/2)-stable variate with
//! Laplace transform `exp(-dt λ^{α/2} / 2)`. Conditioning on `S` shows the
//! characteristic function is `exp(-dt |ξ|^α / 2)` in every dimension, so
//! the increments are exactly isotropic.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::C_ALPHA;

/// Default number of grid steps per unit time.
pub const STEPS_PER_UNIT_TIME: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
    max_step: f64,
    uniform: bool,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::domain("time grid needs at least one step"));
        }
        if times[0] != 0.0 {
            return Err(Error::domain("time grid must start at 0"));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("time grid must be finite and strictly increasing"));
        }
        let steps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        let max_step = steps.iter().copied().fold(0.0, f64::max);
        let min_step = steps.iter().copied().fold(f64::INFINITY, f64::min);
        let uniform = (max_step - min_step) <= 1e-12 * max_step;
        Ok(Self {
            times,
            max_step,
            uniform,
        })
    }

    pub fn uniform(t_horizon: f64, n_steps: usize) -> Result<Self> {
        if !(t_horizon > 0.0) || n_steps == 0 {
            return Err(Error::domain(format!(
                "uniform grid needs t > 0 and n > 0 (t = {t_horizon}, n = {n_steps})"
            )));
        }
        let h = t_horizon / n_steps as f64;
        let mut times: Vec<f64> = (0..=n_steps).map(|i| i as f64 * h).collect();
        times[n_steps] = t_horizon;
        Ok(Self {
            times,
            max_step: h,
            uniform: true,
        })
    }

    /// Uniform grid with [`STEPS_PER_UNIT_TIME`] steps per unit time.
    pub fn default_for(t_horizon: f64) -> Result<Self> {
        let n = ((t_horizon * STEPS_PER_UNIT_TIME as f64).ceil() as usize).max(1);
        Self::uniform(t_horizon, n)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn t_horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn max_step(&self) -> f64 {
        self.max_step
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn step(&self, i: usize) -> f64 {
        self.times[i + 1] - self.times[i]
    }

    /// Inserts the midpoint of every step.
    pub fn refine_midpoints(&self) -> Self {
        let mut times = Vec::with_capacity(2 * self.times.len() - 1);
        for w in self.times.windows(2) {
            times.push(w[0]);
            times.push(0.5 * (w[0] + w[1]));
        }
        times.push(self.t_horizon());
        Self {
            times,
            max_step: 0.5 * self.max_step,
            uniform: self.uniform,
        }
    }
}

/// `X^x_s = X_s + x` sampled on a grid; row `i` of `positions` is the
/// position at `grid.times()[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    grid: TimeGrid,
    d: usize,
    positions: Vec<f64>,
}

impl Path {
    pub fn new(grid: TimeGrid, d: usize, positions: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::domain("path dimension must be positive"));
        }
        if positions.len() != (grid.n_steps() + 1) * d {
            return Err(Error::domain("path length does not match its grid"));
        }
        if positions.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("path positions must be finite"));
        }
        Ok(Self { grid, d, positions })
    }

    /// The path sitting at `x0` for all times.
    pub fn constant(grid: TimeGrid, x0: &[f64]) -> Self {
        let n = grid.n_steps() + 1;
        let positions = x0.iter().copied().cycle().take(n * x0.len()).collect();
        Self {
            grid,
            d: x0.len(),
            positions,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.d..(i + 1) * self.d]
    }

    pub fn start(&self) -> &[f64] {
        self.position(0)
    }

    pub fn endpoint(&self) -> &[f64] {
        self.position(self.grid.n_steps())
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// Shifts every position by `x`.
    pub fn translated(&self, x: &[f64]) -> Self {
        let mut out = self.clone();
        for row in out.positions.chunks_mut(self.d) {
            for (v, s) in row.iter_mut().zip(x) {
                *v += s;
            }
        }
        out
    }

    /// Writes `time,x_1,...,x_d` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["time".to_string()];
        header.extend((1..=self.d).map(|k| format!("x_{k}")));
        wr.write_record(&header)?;
        for (i, t) in self.grid.times().iter().enumerate() {
            let mut rec = vec![format!("{t}")];
            rec.extend(self.position(i).iter().map(|v| format!("{v}")));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Positive (α/2)-stable variate `S` with `E exp(-λ S) = exp(-dt λ^{α/2} / 2)`,
/// generated by the Chambers-Mallows-Stuck (Kanter) transform.
///
/// Only `α ∈ (0, 2)`; at α = 2 the subordinator degenerates to the
/// deterministic `dt/2` and callers sample the Gaussian directly.
pub fn sample_subordinator_increment<R: Rng + ?Sized>(alpha: f64, dt: f64, rng: &mut R) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::domain(format!(
            "subordination needs alpha in (0, 2), got {alpha}"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::domain(format!("subordinator step dt = {dt} must be positive")));
    }
    Ok(subordinator_unchecked(alpha, dt, rng))
}

#[inline]
fn subordinator_unchecked<R: Rng + ?Sized>(alpha: f64, dt: f64, rng: &mut R) -> f64 {
    let beta = 0.5 * alpha;
    let u = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break PI * u;
        }
    };
    let e: f64 = Exp1.sample(rng);
    // Kanter: E exp(-λ S1) = exp(-λ^β)
    let s1 = (beta * u).sin() / u.sin().powf(1.0 / beta)
        * ((((1.0 - beta) * u).sin()) / e).powf((1.0 - beta) / beta);
    (C_ALPHA * dt).powf(1.0 / beta) * s1
}

/// Fills `out` with one increment whose characteristic function is
/// `exp(-dt |ξ|^α / 2)`.
pub fn sample_increment_into<R: Rng + ?Sized>(alpha: f64, dt: f64, rng: &mut R, out: &mut [f64]) {
    if dt == 0.0 {
        out.fill(0.0);
        return;
    }
    let scale = if alpha == 2.0 {
        dt.sqrt()
    } else {
        (2.0 * subordinator_unchecked(alpha, dt, rng)).sqrt()
    };
    for v in out.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = scale * z;
    }
}

pub fn sample_increment<R: Rng + ?Sized>(alpha: f64, d: usize, dt: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::domain(format!("alpha = {alpha} not in (0, 2]")));
    }
    if !(dt >= 0.0) {
        return Err(Error::domain(format!("negative step dt = {dt}")));
    }
    let mut out = vec![0.0; d];
    sample_increment_into(alpha, dt, rng, &mut out);
    Ok(out)
}

/// Cumulative sum of independent increments over the grid, started at `x0`.
pub fn sample_path<R: Rng + ?Sized>(alpha: f64, grid: &TimeGrid, x0: &[f64], rng: &mut R) -> Path {
    let d = x0.len();
    let n = grid.n_steps();
    let mut positions = Vec::with_capacity((n + 1) * d);
    positions.extend_from_slice(x0);
    let mut inc = vec![0.0; d];
    for i in 0..n {
        sample_increment_into(alpha, grid.step(i), rng, &mut inc);
        let base = i * d;
        for k in 0..d {
            let v = positions[base + k] + inc[k];
            positions.push(v);
        }
    }
    Path {
        grid: grid.clone(),
        d,
        positions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    /// Two-sample Kolmogorov-Smirnov distance.
    fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
        let a = sorted(a.to_vec());
        let b = sorted(b.to_vec());
        let (mut i, mut j, mut dmax) = (0usize, 0usize, 0.0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            let fa = i as f64 / a.len() as f64;
            let fb = j as f64 / b.len() as f64;
            dmax = dmax.max((fa - fb).abs());
        }
        dmax
    }

    #[test]
    fn grid_validation_and_refinement() {
        assert!(TimeGrid::new(vec![0.0]).is_err());
        assert!(TimeGrid::new(vec![0.1, 0.2]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.2, 0.2]).is_err());
        let g = TimeGrid::new(vec![0.0, 0.1, 0.5, 1.0]).unwrap();
        assert!(!g.is_uniform());
        assert_eq!(g.max_step(), 0.5);
        let r = g.refine_midpoints();
        assert_eq!(r.times(), &[0.0, 0.05, 0.1, 0.3, 0.5, 0.75, 1.0]);
        let d = TimeGrid::default_for(1.0).unwrap();
        assert_eq!(d.n_steps(), 256);
        assert!(d.is_uniform());
    }

    #[test]
    fn zero_step_gives_zero_increment() {
        let mut g = RngStream::new(1, 0).generator();
        assert_eq!(sample_increment(1.3, 3, 0.0, &mut g).unwrap(), vec![0.0; 3]);
        assert!(sample_subordinator_increment(2.0, 1.0, &mut g).is_err());
    }

    #[test]
    fn subordinator_median_matches_levy_law() {
        // α = 1: S is Lévy with E e^{-λS} = e^{-√λ/2}, i.e. S = (1/8)/Z².
        let n = 100_000;
        let mut g = RngStream::new(11, 0).generator();
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_subordinator_increment(1.0, 1.0, &mut g).unwrap())
            .collect();
        let mut h = RngStream::new(12, 0).generator();
        let reference: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut h);
                0.125 / (z * z)
            })
            .collect();
        let med = sorted(draws.clone())[n / 2];
        let med_ref = sorted(reference)[n / 2];
        // analytic: c / (2 erfcinv(1/2)^2) with c = 1/8
        let analytic = 0.125 / (2.0 * 0.476_936_276_204_469_9f64.powi(2));
        // SE of a sample median: 1 / (2 f(m) sqrt(n)); Lévy density at the median
        let c: f64 = 0.125;
        let f_med = (c / (2.0 * PI)).sqrt() * (-c / (2.0 * analytic)).exp() / analytic.powf(1.5);
        let se = 1.0 / (2.0 * f_med * (n as f64).sqrt());
        assert!((med - analytic).abs() < 3.0 * se, "{med} vs {analytic} (se {se})");
        assert!((med - med_ref).abs() < 3.0 * se * 2f64.sqrt());
    }

    #[test]
    fn subordinator_self_similarity() {
        for &alpha in &[0.6, 1.0, 1.5, 1.9] {
            let n = 10_000;
            let dt = 0.37;
            let mut g = RngStream::new(3, 1).generator();
            let a: Vec<f64> = (0..n)
                .map(|_| sample_subordinator_increment(alpha, dt, &mut g).unwrap())
                .collect();
            let mut g = RngStream::new(3, 2).generator();
            let b: Vec<f64> = (0..n)
                .map(|_| dt.powf(2.0 / alpha) * sample_subordinator_increment(alpha, 1.0, &mut g).unwrap())
                .collect();
            let ks = ks_distance(&a, &b);
            assert!(ks < 0.02, "alpha {alpha}: KS {ks}");
        }
    }

    #[test]
    fn gaussian_increment_variance() {
        let n = 100_000;
        let mut g = RngStream::new(5, 0).generator();
        let xs: Vec<f64> = (0..n).map(|_| sample_increment(2.0, 1, 0.25, &mut g).unwrap()[0]).collect();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        let se = 0.25 * (2.0 / n as f64).sqrt();
        assert!((var - 0.25).abs() < 3.0 * se, "{var}");
    }

    #[test]
    fn cauchy_increment_characteristic_function() {
        let n = 100_000;
        for &(d, xi) in &[(1usize, 1.0f64), (3, 1.0)] {
            let mut g = RngStream::new(6, d as u64).generator();
            let ecf = (0..n)
                .map(|_| (xi * sample_increment(1.0, d, 1.0, &mut g).unwrap()[0]).cos())
                .sum::<f64>()
                / n as f64;
            assert!((ecf - (-0.5f64).exp()).abs() < 0.01, "d {d}: {ecf}");
        }
    }

    #[test]
    fn endpoint_characteristic_function_one_step() {
        let n = 50_000;
        for &alpha in &[0.7, 1.3, 2.0] {
            let t = 0.8;
            let grid = TimeGrid::uniform(t, 1).unwrap();
            let mut g = RngStream::new(9, 0).generator();
            for &xi in &[0.5, 1.5] {
                let ecf = (0..n)
                    .map(|_| (xi * sample_path(alpha, &grid, &[0.0], &mut g).endpoint()[0]).cos())
                    .sum::<f64>()
                    / n as f64;
                let target = crate::kernel::stable_kernel_ft(alpha, t, &[xi]);
                let se = (0.5 / n as f64).sqrt();
                assert!((ecf - target).abs() < 4.0 * se, "alpha {alpha} xi {xi}: {ecf} vs {target}");
            }
        }
    }

    #[test]
    fn start_shift_is_translation() {
        let grid = TimeGrid::uniform(1.0, 16).unwrap();
        let a = sample_path(1.2, &grid, &[0.0, 0.0], &mut RngStream::new(1, 3).generator());
        let b = sample_path(1.2, &grid, &[0.5, -2.0], &mut RngStream::new(1, 3).generator());
        assert_eq!(b.start(), &[0.5, -2.0]);
        let shifted = a.translated(&[0.5, -2.0]);
        for (u, v) in shifted.positions().iter().zip(b.positions()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn independent_streams_uncorrelated() {
        let n = 20_000;
        let grid = TimeGrid::uniform(1.0, 8).unwrap();
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let x = sample_path(2.0, &grid, &[0.0], &mut RngStream::new(77, 2 * i).generator()).endpoint()[0];
            let y = sample_path(2.0, &grid, &[0.0], &mut RngStream::new(77, 2 * i + 1).generator()).endpoint()[0];
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
        let corr = sxy / (sxx * syy).sqrt();
        assert!(corr.abs() < 3.0 / (n as f64).sqrt(), "{corr}");
    }

    #[test]
    fn refinement_preserves_marginals() {
        let n = 10_000;
        let coarse = TimeGrid::uniform(1.0, 4).unwrap();
        let fine = coarse.refine_midpoints();
        for &alpha in &[1.0, 1.7] {
            let a: Vec<f64> = (0..n)
                .map(|i| sample_path(alpha, &coarse, &[0.0], &mut RngStream::new(21, i).generator()).position(2)[0])
                .collect();
            let b: Vec<f64> = (0..n)
                .map(|i| sample_path(alpha, &fine, &[0.0], &mut RngStream::new(21, i).generator()).position(4)[0])
                .collect();
            let ks = ks_distance(&a, &b);
            assert!(ks < 0.02, "alpha {alpha}: KS {ks}");
        }
    }

    #[test]
    fn brownian_endpoint_is_normal() {
        // Anderson-Darling against N(0, 1) with known parameters; 1% critical
        // value 3.857.
        let n = 10_000usize;
        let grid = TimeGrid::uniform(1.0, 32).unwrap();
        let xs = sorted(
            (0..n as u64)
                .map(|i| sample_path(2.0, &grid, &[0.0], &mut RngStream::new(4, i).generator()).endpoint()[0])
                .collect(),
        );
        let cdf = |x: f64| 0.5 * statrs::function::erf::erfc(-x / 2f64.sqrt());
        let mut s = 0.0;
        for (i, x) in xs.iter().enumerate() {
            let k = (2 * i + 1) as f64;
            s += k * (cdf(*x).ln() + (1.0 - cdf(xs[n - 1 - i])).ln());
        }
        let a2 = -(n as f64) - s / n as f64;
        assert!(a2 < 3.857, "A² = {a2}");
    }

    #[test]
    fn reproducible_paths() {
        let grid = TimeGrid::uniform(2.0, 50).unwrap();
        let a = sample_path(0.9, &grid, &[0.1], &mut RngStream::new(99, 5).generator());
        let b = sample_path(0.9, &grid, &[0.1], &mut RngStream::new(99, 5).generator());
        assert_eq!(a, b);
    }

    #[test]
    fn csv_export() {
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        let p = Path::constant(grid, &[1.0, 2.0]);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "time,x_1,x_2\n0,1,2\n0.5,1,2\n1,1,2\n");
    }
}
