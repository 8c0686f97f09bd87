//! Finite-dimensional Gaussian sampling: the space-mollified noise on a set
//! of space-time nodes, joint Wick weights for a path ensemble, and the
//! conditional law of the Feynman-Kac exponent given one path.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponent::{mollified_value, self_exponent, MollifierParams};
use crate::kernel::heat_kernel_unchecked;
use crate::stable_path::Path;

/// Relative diagonal jitter added once before factorization.
pub const JITTER: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub time: f64,
    pub x: Vec<f64>,
}

impl SpaceTimePoint {
    pub fn new(time: f64, x: Vec<f64>) -> Self {
        Self { time, x }
    }
}

/// Covariance `p_{|t_i - t_j| + 2ε}(x_i - x_j)` of the space-mollified noise.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    pub points: Vec<SpaceTimePoint>,
    pub epsilon: f64,
    pub n: usize,
    /// Row-major `n × n`.
    pub entries: Vec<f64>,
}

impl CovarianceMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn factor(&self) -> Result<Cholesky> {
        Cholesky::factor(&self.entries, self.n)
    }
}

pub fn build_covariance(points: &[SpaceTimePoint], epsilon: f64) -> Result<CovarianceMatrix> {
    build_with_kernel(points, epsilon, |tau, a, b| {
        let r2 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
        heat_kernel_unchecked(tau, r2, a.len())
    })
}

/// Same covariance for noise on the torus `[-L, L)^d`: the heat kernel
/// summed over all periodic images.
pub fn build_periodic_covariance(points: &[SpaceTimePoint], epsilon: f64, half_length: f64) -> Result<CovarianceMatrix> {
    if !(half_length > 0.0 && half_length.is_finite()) {
        return Err(Error::domain("torus half-length must be positive"));
    }
    let period = 2.0 * half_length;
    build_with_kernel(points, epsilon, move |tau, a, b| {
        a.iter()
            .zip(b)
            .map(|(u, v)| periodized_heat_1d(tau, (u - v).rem_euclid(period), period))
            .product()
    })
}

/// `Σ_n p_τ(r + nP)` in one dimension, `0 ≤ r < P`.
pub(crate) fn periodized_heat_1d(tau: f64, r: f64, period: f64) -> f64 {
    if tau > period * period / (2.0 * std::f64::consts::PI) {
        // theta series: (1/P) Σ_m exp(-τ k_m² / 2) cos(k_m r), k_m = 2πm/P
        let k = 2.0 * std::f64::consts::PI / period;
        let mut sum = 1.0;
        let mut m = 1.0;
        loop {
            let a = (-0.5 * tau * (m * k) * (m * k)).exp();
            sum += 2.0 * a * (m * k * r).cos();
            if a <= 1e-18 {
                break;
            }
            m += 1.0;
        }
        return sum / period;
    }
    let norm = (2.0 * std::f64::consts::PI * tau).sqrt();
    let term = |y: f64| (-0.5 * y * y / tau).exp() / norm;
    let mut sum = term(r) + term(r - period);
    let mut n = 1.0;
    loop {
        let a = term(r + n * period);
        let b = term(r - (n + 1.0) * period);
        sum += a + b;
        if a + b <= 1e-18 * sum {
            break;
        }
        n += 1.0;
    }
    sum
}

fn build_with_kernel<K>(points: &[SpaceTimePoint], epsilon: f64, kernel: K) -> Result<CovarianceMatrix>
where
    K: Fn(f64, &[f64], &[f64]) -> f64 + Sync,
{
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::domain(format!("covariance needs epsilon > 0, got {epsilon}")));
    }
    let n = points.len();
    if n == 0 {
        return Err(Error::domain("covariance needs at least one point"));
    }
    let d = points[0].x.len();
    if points.iter().any(|p| p.x.len() != d || !p.time.is_finite() || p.x.iter().any(|v| !v.is_finite())) {
        return Err(Error::domain("points must be finite and share one dimension"));
    }
    let mut entries = vec![0.0; n * n];
    entries.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let pi = &points[i];
        for (j, e) in row.iter_mut().enumerate() {
            let pj = &points[j];
            let tau = (pi.time - pj.time).abs() + 2.0 * epsilon;
            *e = kernel(tau, &pi.x, &pj.x);
        }
    });
    Ok(CovarianceMatrix {
        points: points.to_vec(),
        epsilon,
        n,
        entries,
    })
}

/// Lower-triangular factor `L` with `L Lᵀ = A + jitter·I`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    pub n: usize,
    pub l: Vec<f64>,
    pub jitter: f64,
}

impl Cholesky {
    /// Adds `JITTER · trace / n` to the diagonal and factors; a non-positive
    /// pivot after that is reported with the matrix's smallest eigenvalue.
    pub fn factor(a: &[f64], n: usize) -> Result<Self> {
        if a.len() != n * n || n == 0 {
            return Err(Error::domain("matrix shape mismatch"));
        }
        let trace: f64 = (0..n).map(|i| a[i * n + i]).sum();
        let jitter = JITTER * trace / n as f64;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                let dot = dot(ri, rj);
                if i == j {
                    let pivot = a[i * n + i] + jitter - dot;
                    if !(pivot > 0.0) || !pivot.is_finite() {
                        return Err(Error::Factorization {
                            min_eigenvalue: min_eigenvalue(a, n),
                            trace,
                        });
                    }
                    l[i * n + i] = pivot.sqrt();
                } else {
                    l[i * n + j] = (a[i * n + j] - dot) / l[j * n + j];
                }
            }
        }
        Ok(Self { n, l, jitter })
    }

    /// `L z` for a vector `z` of independent standard normals.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.n).map(|_| StandardNormal.sample(rng)).collect();
        self.apply(&z)
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| dot(&self.l[i * self.n..i * self.n + i + 1], &z[..=i])).collect()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators so the loop vectorizes
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * c + k] * b[4 * c + k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

pub fn min_eigenvalue(a: &[f64], n: usize) -> f64 {
    let m = nalgebra::DMatrix::from_row_slice(n, n, a);
    let m = 0.5 * (&m + m.transpose());
    m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// One zero-mean Gaussian vector with covariance `cov`.
pub fn sample_field<R: Rng + ?Sized>(cov: &CovarianceMatrix, rng: &mut R) -> Result<Vec<f64>> {
    Ok(cov.factor()?.sample(rng))
}

/// Gram matrix of the mollified functionals of `M` paths and one joint
/// draw `W(A_1), ..., W(A_M)` with that covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WickWeights {
    pub m: usize,
    /// Row-major `M × M`.
    pub gram: Vec<f64>,
    pub gaussians: Vec<f64>,
}

impl WickWeights {
    pub fn gram_diag(&self, i: usize) -> f64 {
        self.gram[i * self.m + i]
    }
}

pub fn gram_matrix(paths: &[Path], moll: MollifierParams, d: usize) -> Result<Vec<f64>> {
    moll.validate()?;
    let m = paths.len();
    if m == 0 {
        return Err(Error::domain("need at least one path"));
    }
    for p in paths {
        if p.d() != d {
            return Err(Error::domain("path dimension differs from d"));
        }
        if p.grid() != paths[0].grid() {
            return Err(Error::MismatchedGrid("paths do not share a time grid".into()));
        }
    }
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..=i).map(move |j| (i, j))).collect();
    let vals: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| mollified_value(&paths[i], &paths[j], moll))
        .collect();
    let mut gram = vec![0.0; m * m];
    for (&(i, j), v) in pairs.iter().zip(vals) {
        gram[i * m + j] = v;
        gram[j * m + i] = v;
    }
    Ok(gram)
}

pub fn sample_wick_weights<R: Rng + ?Sized>(
    paths: &[Path],
    moll: MollifierParams,
    d: usize,
    rng: &mut R,
) -> Result<WickWeights> {
    let gram = gram_matrix(paths, moll, d)?;
    let m = paths.len();
    let gaussians = Cholesky::factor(&gram, m)?.sample(rng);
    Ok(WickWeights { m, gram, gaussians })
}

/// A draw of `N(0, V)` with `V` the self exponent of `path`: the law of the
/// Feynman-Kac Gaussian functional given the path.
pub fn conditional_i_sample<R: Rng + ?Sized>(path: &Path, d: usize, rng: &mut R) -> Result<f64> {
    if d != 1 {
        return Err(Error::stratonovich_needs_d1(d));
    }
    let v = self_exponent(path, d)?.value;
    let z: f64 = StandardNormal.sample(rng);
    Ok(v.sqrt() * z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::stable_path::{sample_path, TimeGrid};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn pt(t: f64, x: f64) -> SpaceTimePoint {
        SpaceTimePoint::new(t, vec![x])
    }

    /// Entrywise check of an empirical covariance against `cov`, with the
    /// Gaussian standard error `sqrt((c_ii c_jj + c_ij²) / n)`.
    fn check_empirical(cov: &[f64], n: usize, draws: &[Vec<f64>], k_se: f64) {
        let m = draws.len() as f64;
        for i in 0..n {
            for j in 0..n {
                let emp = draws.iter().map(|v| v[i] * v[j]).sum::<f64>() / m;
                let c = cov[i * n + j];
                let se = ((cov[i * n + i] * cov[j * n + j] + c * c) / m).sqrt();
                assert!((emp - c).abs() < k_se * se, "({i},{j}): {emp} vs {c}, se {se}");
            }
        }
    }

    #[test]
    fn covariance_entries() {
        let cov = build_covariance(&[pt(0.3, 1.0), pt(0.3, 1.0)], 0.25).unwrap();
        assert_abs_diff_eq!(cov.get(0, 0), PI.powf(-0.5), epsilon = 1e-12);
        assert_abs_diff_eq!(cov.get(0, 1), 0.564_189_6, epsilon = 1e-7);
        let pts: Vec<_> = (0..6).map(|k| pt(0.0, 0.3 * k as f64)).collect();
        let cov = build_covariance(&pts, 0.1).unwrap();
        for k in 1..6 {
            assert!(cov.get(0, k) < cov.get(0, k - 1));
        }
        assert!(build_covariance(&pts, 0.0).is_err());
        let cov2 = build_covariance(&[SpaceTimePoint::new(0.0, vec![0.0, 0.0])], 0.25).unwrap();
        assert_abs_diff_eq!(cov2.get(0, 0), 1.0 / PI, epsilon = 1e-12);
    }

    #[test]
    fn periodic_distance_wraps() {
        let cov = build_periodic_covariance(&[pt(0.0, -3.9), pt(0.0, 3.9)], 0.1, 4.0).unwrap();
        let direct = build_covariance(&[pt(0.0, 0.0), pt(0.0, 0.2)], 0.1).unwrap();
        assert_abs_diff_eq!(cov.get(0, 1), direct.get(0, 1), epsilon = 1e-12);
    }

    #[test]
    fn periodized_kernel_branches_agree() {
        let p = 3.0;
        let cut = p * p / (2.0 * PI);
        for &r in &[0.0, 0.4, 1.5, 2.9] {
            let below = periodized_heat_1d(cut * (1.0 - 1e-12), r, p);
            let above = periodized_heat_1d(cut * (1.0 + 1e-12), r, p);
            assert_abs_diff_eq!(below, above, epsilon = 1e-12);
        }
        // mass one over a period
        let m = crate::quad::tanh_sinh(0.0, p, 1e-12, |r| periodized_heat_1d(0.3, r, p)).value;
        assert_abs_diff_eq!(m, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn random_node_set_is_psd() {
        let mut g = RngStream::new(1, 0).generator();
        let pts: Vec<_> = (0..8).map(|_| pt(rand::Rng::random::<f64>(&mut g), 4.0 * rand::Rng::random::<f64>(&mut g) - 2.0)).collect();
        let cov = build_covariance(&pts, 0.05).unwrap();
        let lam = min_eigenvalue(&cov.entries, 8);
        assert!(lam >= -1e-10 * cov.trace(), "{lam}");
        assert!(cov.factor().is_ok());
    }

    #[test]
    fn factorization_failure_reports_eigenvalue() {
        let a = [1.0, 2.0, 2.0, 1.0];
        match Cholesky::factor(&a, 2) {
            Err(Error::Factorization { min_eigenvalue, trace }) => {
                assert_abs_diff_eq!(min_eigenvalue, -1.0, epsilon = 1e-12);
                assert_eq!(trace, 2.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cholesky_reconstructs() {
        let pts: Vec<_> = (0..12).map(|k| pt(0.1 * (k % 3) as f64, 0.4 * k as f64)).collect();
        let cov = build_covariance(&pts, 0.1).unwrap();
        let c = cov.factor().unwrap();
        let n = cov.n;
        for i in 0..n {
            for j in 0..n {
                let s: f64 = (0..n).map(|k| c.l[i * n + k] * c.l[j * n + k]).sum();
                let target = cov.get(i, j) + if i == j { c.jitter } else { 0.0 };
                assert_abs_diff_eq!(s, target, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn scalar_and_diagonal_sampling() {
        let n = 20_000;
        let c = Cholesky::factor(&[2.5], 1).unwrap();
        let mut g = RngStream::new(2, 0).generator();
        let draws: Vec<Vec<f64>> = (0..n).map(|_| c.sample(&mut g)).collect();
        check_empirical(&[2.5], 1, &draws, 3.0);
        let diag = [1.0, 0.0, 0.0, 0.0, 4.0, 0.0, 0.0, 0.0, 0.5];
        let c = Cholesky::factor(&diag, 3).unwrap();
        let draws: Vec<Vec<f64>> = (0..n).map(|_| c.sample(&mut g)).collect();
        check_empirical(&diag, 3, &draws, 3.0);
    }

    #[test]
    fn field_sixteen_nodes_empirical_covariance() {
        // The max over 256 entries of |z| exceeds 3 with some probability;
        // use the Bonferroni level for the set, 4 SE.
        let pts: Vec<_> = (0..16).map(|k| pt(0.25 * (k / 4) as f64, 0.5 * (k % 4) as f64)).collect();
        let cov = build_covariance(&pts, 0.1).unwrap();
        let c = cov.factor().unwrap();
        let mut g = RngStream::new(3, 0).generator();
        let draws: Vec<Vec<f64>> = (0..10_000).map(|_| c.sample(&mut g)).collect();
        check_empirical(&cov.entries, 16, &draws, 4.0);
        let one = sample_field(&cov, &mut g).unwrap();
        assert_eq!(one.len(), 16);
    }

    fn paths(seed: u64, m: usize, n: usize) -> Vec<Path> {
        let grid = TimeGrid::uniform(1.0, n).unwrap();
        (0..m as u64)
            .map(|i| sample_path(2.0, &grid, &[0.0], &mut RngStream::new(seed, i).generator()))
            .collect()
    }

    #[test]
    fn single_weight_variance_is_mollified_inner() {
        let ps = paths(4, 1, 32);
        let moll = MollifierParams::new(0.05, 0.05).unwrap();
        let target = crate::exponent::mollified_inner(&ps[0], &ps[0], moll, 1).unwrap();
        let gram = gram_matrix(&ps, moll, 1).unwrap();
        assert_abs_diff_eq!(gram[0], target, epsilon = 1e-14);
        let c = Cholesky::factor(&gram, 1).unwrap();
        let mut g = RngStream::new(4, 99).generator();
        let n = 20_000;
        let var = (0..n).map(|_| c.sample(&mut g)[0].powi(2)).sum::<f64>() / n as f64;
        let se = target * (2.0 / n as f64).sqrt();
        assert!((var - target).abs() < 3.0 * se);
    }

    #[test]
    fn identical_paths_give_equal_weights() {
        let p = paths(5, 1, 32).pop().unwrap();
        let moll = MollifierParams::new(0.1, 0.1).unwrap();
        let mut g = RngStream::new(5, 1).generator();
        for _ in 0..10 {
            let w = sample_wick_weights(&[p.clone(), p.clone()], moll, 1, &mut g).unwrap();
            // equal up to the jitter, which is 1e-12 relative
            let sd = w.gram_diag(0).sqrt();
            assert!((w.gaussians[0] - w.gaussians[1]).abs() < 1e-5 * sd);
        }
    }

    #[test]
    fn wick_exponential_has_unit_mean() {
        let m = 64;
        let ps = paths(6, m, 32);
        let moll = MollifierParams::new(0.1, 0.1).unwrap();
        let gram = gram_matrix(&ps, moll, 1).unwrap();
        let c = Cholesky::factor(&gram, m).unwrap();
        let reps = 20_000;
        let mut g = RngStream::new(6, 1000).generator();
        let mut s1 = vec![0.0; m];
        for _ in 0..reps {
            let w = c.sample(&mut g);
            for k in 0..m {
                s1[k] += (w[k] - 0.5 * gram[k * m + k]).exp();
            }
        }
        for k in 0..m {
            let mean = s1[k] / reps as f64;
            // lognormal variance e^{v} - 1
            let se = ((gram[k * m + k].exp() - 1.0) / reps as f64).sqrt();
            assert!((mean - 1.0).abs() < 4.0 * se, "path {k}: {mean} (se {se})");
        }
    }

    #[test]
    fn conditional_sample_law() {
        let n = 100_000;
        let t1 = Path::constant(TimeGrid::uniform(1.0, 16).unwrap(), &[0.0]);
        let t4 = Path::constant(TimeGrid::uniform(4.0, 16).unwrap(), &[0.0]);
        let mut g = RngStream::new(7, 0).generator();
        let v = self_exponent(&t1, 1).unwrap().value;
        let draws: Vec<f64> = (0..n).map(|_| conditional_i_sample(&t1, 1, &mut g).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 * (v / n as f64).sqrt());
        assert!((var - 1.063_846_1).abs() < 3.0 * v * (2.0 / n as f64).sqrt());
        let v4 = self_exponent(&t4, 1).unwrap().value;
        assert_abs_diff_eq!(v4 / v, 8.0, epsilon = 1e-9);
        let var4 = (0..n).map(|_| conditional_i_sample(&t4, 1, &mut g).unwrap().powi(2)).sum::<f64>() / n as f64;
        assert!((var4 - 8.0 * v).abs() < 3.0 * v4 * (2.0 / n as f64).sqrt());
        let p2 = Path::constant(TimeGrid::uniform(1.0, 4).unwrap(), &[0.0, 0.0]);
        assert!(matches!(conditional_i_sample(&p2, 2, &mut g), Err(Error::Regime { .. })));
    }

    #[test]
    fn wick_weights_are_deterministic() {
        let ps = paths(8, 4, 16);
        let moll = MollifierParams::new(0.05, 0.05).unwrap();
        let a = sample_wick_weights(&ps, moll, 1, &mut RngStream::new(1, 1).generator()).unwrap();
        let b = sample_wick_weights(&ps, moll, 1, &mut RngStream::new(1, 1).generator()).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn gram_is_psd(seed in 0u64..10_000, alpha in 0.6f64..2.0, eps in 0.02f64..0.3) {
            let grid = TimeGrid::uniform(1.0, 16).unwrap();
            let ps: Vec<Path> = (0..6u64)
                .map(|i| sample_path(alpha, &grid, &[0.0], &mut RngStream::new(seed, i).generator()))
                .collect();
            let gram = gram_matrix(&ps, MollifierParams::new(eps, eps).unwrap(), 1).unwrap();
            let tr: f64 = (0..6).map(|i| gram[i * 7]).sum();
            prop_assert!(min_eigenvalue(&gram, 6) >= -1e-10 * tr);
            prop_assert!(Cholesky::factor(&gram, 6).is_ok());
        }
    }
}
