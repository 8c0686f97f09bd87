//! Heat kernel, isotropic α-stable transition density, their Fourier
//! transforms, and the covariance inner product of the noise.
//!
//! Fourier convention: `𝓕f(ξ) = ∫ f(x) e^{-iξ·x} dx`. The `(2π)^{-d}`
//! factor lives on the inverse / Plancherel side and is carried explicitly
//! by every Fourier-side quadrature in this crate.
//!
//! The stable normalisation is fixed at [`C_ALPHA`]` = 1/2`, so that the
//! α = 2 density coincides with the heat kernel.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::quad::{self, Estimate};

/// Constant in `𝓕g_α(t, ξ) = exp(-C_ALPHA t |ξ|^α)`.
pub const C_ALPHA: f64 = 0.5;

/// Target absolute error of the numerical stable-density inversion.
pub const STABLE_INVERSION_TOL: f64 = 1e-8;

/// Bounded continuous initial datum `u_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum InitialCondition {
    Constant { value: f64 },
    /// `amplitude * exp(-|x|² / (2 width²))`
    GaussianBump { amplitude: f64, width: f64 },
    /// `cos(frequency * x_1)`
    Cosine { frequency: f64 },
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::Constant { value: 1.0 }
    }
}

impl InitialCondition {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            InitialCondition::Constant { value } => value,
            InitialCondition::GaussianBump { amplitude, width } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                amplitude * (-0.5 * r2 / (width * width)).exp()
            }
            InitialCondition::Cosine { frequency } => (frequency * x[0]).cos(),
        }
    }

    /// `u_0(x + shift)` for a one-dimensional argument.
    #[inline]
    pub fn eval_1d(&self, x: f64) -> f64 {
        match *self {
            InitialCondition::Constant { value } => value,
            InitialCondition::GaussianBump { amplitude, width } => {
                amplitude * (-0.5 * x * x / (width * width)).exp()
            }
            InitialCondition::Cosine { frequency } => (frequency * x).cos(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, InitialCondition::Constant { .. })
    }

    pub fn sup_norm(&self) -> f64 {
        match *self {
            InitialCondition::Constant { value } => value.abs(),
            InitialCondition::GaussianBump { amplitude, .. } => amplitude.abs(),
            InitialCondition::Cosine { .. } => 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            InitialCondition::Constant { value } if value.is_finite() => Ok(()),
            InitialCondition::GaussianBump { amplitude, width }
                if amplitude.is_finite() && width.is_finite() && width > 0.0 =>
            {
                Ok(())
            }
            InitialCondition::Cosine { frequency } if frequency.is_finite() => Ok(()),
            _ => Err(Error::domain(format!("invalid initial condition {self}"))),
        }
    }
}

impl fmt::Display for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialCondition::Constant { value } => write!(f, "const:{value}"),
            InitialCondition::GaussianBump { amplitude, width } => {
                write!(f, "gauss:{amplitude},{width}")
            }
            InitialCondition::Cosine { frequency } => write!(f, "cos:{frequency}"),
        }
    }
}

impl FromStr for InitialCondition {
    type Err = Error;

    /// Parses `const:<c>`, `gauss:<amp>,<width>` or `cos:<k>`.
    fn from_str(s: &str) -> Result<Self> {
        let (tag, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::domain(format!("initial condition `{s}` lacks a `tag:` prefix")))?;
        let nums: Vec<f64> = rest
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::domain(format!("initial condition `{s}`: {e}")))?;
        let ic = match (tag.trim(), nums.as_slice()) {
            ("const", [c]) => InitialCondition::Constant { value: *c },
            ("gauss", [a, w]) => InitialCondition::GaussianBump {
                amplitude: *a,
                width: *w,
            },
            ("cos", [k]) => InitialCondition::Cosine { frequency: *k },
            _ => return Err(Error::domain(format!("unrecognised initial condition `{s}`"))),
        };
        ic.validate()?;
        Ok(ic)
    }
}

/// Model parameters shared by every estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub d: usize,
    pub c_alpha: f64,
    pub t_horizon: f64,
    pub x_point: Vec<f64>,
    pub u0: InitialCondition,
}

impl ModelParams {
    pub fn new(alpha: f64, d: usize, t_horizon: f64) -> Result<Self> {
        let p = ModelParams {
            alpha,
            d,
            c_alpha: C_ALPHA,
            t_horizon,
            x_point: vec![0.0; d],
            u0: InitialCondition::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_u0(mut self, u0: InitialCondition) -> Self {
        self.u0 = u0;
        self
    }

    pub fn with_point(mut self, x: Vec<f64>) -> Self {
        self.x_point = x;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(Error::domain(format!("alpha = {} not in (0, 2]", self.alpha)));
        }
        if self.d == 0 {
            return Err(Error::domain("dimension d must be at least 1"));
        }
        if !(self.t_horizon > 0.0 && self.t_horizon.is_finite()) {
            return Err(Error::domain(format!("t = {} must be positive", self.t_horizon)));
        }
        if self.c_alpha != C_ALPHA {
            return Err(Error::domain(format!(
                "c_alpha = {} unsupported; the normalisation is fixed at {C_ALPHA}",
                self.c_alpha
            )));
        }
        if self.x_point.len() != self.d || self.x_point.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("x_point must be a finite d-vector"));
        }
        self.u0.validate()
    }
}

#[inline]
fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// `p_t(x) = (2πt)^{-d/2} exp(-|x|²/(2t))` with `d = x.len()`.
pub fn heat_kernel(t: f64, x: &[f64]) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::domain(format!("heat kernel evaluated at t = {t}")));
    }
    Ok(heat_kernel_unchecked(t, norm2(x), x.len()))
}

/// Heat kernel from the squared distance; `t > 0` is the caller's job.
#[inline]
pub(crate) fn heat_kernel_unchecked(t: f64, r2: f64, d: usize) -> f64 {
    let base = 2.0 * PI * t;
    let norm = match d {
        1 => base.sqrt().recip(),
        2 => base.recip(),
        _ => base.powf(-(d as f64) / 2.0),
    };
    norm * (-0.5 * r2 / t).exp()
}

/// `𝓕p_t(ξ) = exp(-t|ξ|²/2)`.
pub fn heat_kernel_ft(t: f64, xi: &[f64]) -> f64 {
    (-0.5 * t * norm2(xi)).exp()
}

/// `𝓕g_α(t, ξ) = exp(-c_α t |ξ|^α)`.
pub fn stable_kernel_ft(alpha: f64, t: f64, xi: &[f64]) -> f64 {
    let r2 = norm2(xi);
    if alpha == 2.0 {
        return (-C_ALPHA * t * r2).exp();
    }
    (-C_ALPHA * t * r2.powf(0.5 * alpha)).exp()
}

/// Surface area of the unit sphere `S^{n-1} ⊂ ℝ^n`.
pub fn sphere_area(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// `∫_{ℝ^d} |𝓕g_α(t, ξ)|^p dξ = (c_α t p)^{-d/α} ∫ e^{-|ξ|^α} dξ`.
pub fn stable_ft_power_integral(alpha: f64, d: usize, t: f64, p: f64) -> f64 {
    (C_ALPHA * t * p).powf(-(d as f64) / alpha) * stable_ft_unit_integral(alpha, d)
}

/// `∫_{ℝ^d} e^{-|ξ|^α} dξ = |S^{d-1}| Γ(d/α) / α`.
pub fn stable_ft_unit_integral(alpha: f64, d: usize) -> f64 {
    sphere_area(d) * (ln_gamma(d as f64 / alpha)).exp() / alpha
}

/// Inverse Fourier transform of a radial profile:
/// `(2π)^{-d} ∫_{ℝ^d} F(|ξ|) e^{iξ·x} dξ` at `|x| = r`.
///
/// `scale` is the decay length of `F` and `cutoff` the radius beyond which
/// `F` is negligible. For `d ≥ 2` the direction integral is done over the
/// polar angle against `x`, nested around the one-dimensional cosine
/// transform.
pub fn radial_fourier_inverse<F>(d: usize, r: f64, profile: F, scale: f64, cutoff: f64, tol: f64) -> Estimate
where
    F: Fn(f64) -> f64,
{
    if d == 1 {
        let e = quad::cosine_transform(&profile, r, scale, cutoff, tol);
        return Estimate {
            value: e.value / PI,
            error: e.error / PI,
        };
    }
    let dm1 = (d - 1) as i32;
    if r == 0.0 {
        let e = quad::panel_sum(
            |rho| rho.powi(dm1) * profile(rho),
            |start| scale.max(0.5 * start),
            cutoff,
            tol,
            false,
        );
        let c = sphere_area(d) / (2.0 * PI).powi(d as i32);
        return Estimate {
            value: c * e.value,
            error: c * e.error,
        };
    }
    let ring = sphere_area(d - 1);
    let mut inner_err = 0.0f64;
    let outer = quad::tanh_sinh(0.0, 0.5 * PI, tol, |theta| {
        let e = quad::cosine_transform(
            |rho| rho.powi(dm1) * profile(rho),
            r * theta.cos(),
            scale,
            cutoff,
            tol,
        );
        inner_err = inner_err.max(e.error);
        theta.sin().powi(d as i32 - 2) * e.value
    });
    let c = 2.0 * ring / (2.0 * PI).powi(d as i32);
    Estimate {
        value: c * outer.value,
        error: c * (outer.error + inner_err),
    }
}

/// Transition density `g_α(t, x)` of the isotropic α-stable process with
/// `𝓕g_α(t, ξ) = exp(-|ξ|^α t / 2)`.
///
/// α = 2 returns the heat kernel and α = 1 the multivariate Cauchy density
/// with scale `t/2`; all other cases invert the Fourier transform
/// numerically to absolute accuracy [`STABLE_INVERSION_TOL`].
pub fn stable_kernel(alpha: f64, t: f64, x: &[f64]) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::domain(format!("stable density evaluated at t = {t}")));
    }
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::domain(format!("alpha = {alpha} not in (0, 2]")));
    }
    let d = x.len();
    if d == 0 {
        return Err(Error::domain("empty spatial point"));
    }
    let r2 = norm2(x);
    if alpha == 2.0 {
        return Ok(heat_kernel_unchecked(t, r2, d));
    }
    if alpha == 1.0 {
        let gamma_scale = C_ALPHA * t;
        let k = (d as f64 + 1.0) / 2.0;
        let c = (ln_gamma(k) - k * PI.ln()).exp();
        return Ok(c * gamma_scale / (gamma_scale * gamma_scale + r2).powf(k));
    }
    Ok(stable_kernel_numeric(alpha, t, d, r2.sqrt()).value)
}

pub(crate) fn stable_kernel_numeric(alpha: f64, t: f64, d: usize, r: f64) -> Estimate {
    let rate = C_ALPHA * t;
    let scale = rate.recip().powf(1.0 / alpha);
    // exp(-40) is far below the target accuracy
    let cutoff = (40.0 / rate).powf(1.0 / alpha);
    radial_fourier_inverse(
        d,
        r,
        |rho| (-rate * rho.powf(alpha)).exp(),
        scale,
        cutoff,
        STABLE_INVERSION_TOL * 1e-2,
    )
}

/// Piecewise-constant function on a tensor grid of `[0, T] × ℝ`, used as a
/// concrete element of the noise's reproducing space.
///
/// Nodes are the cell centres; `values[i * nx + j]` is the value on
/// `[time_edges[i], time_edges[i+1]) × [space_edges[j], space_edges[j+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub time_edges: Vec<f64>,
    pub space_edges: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(time_edges: Vec<f64>, space_edges: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let check_edges = |e: &[f64], what: &str| -> Result<()> {
            if e.len() < 2 {
                return Err(Error::domain(format!("{what} grid needs at least one cell")));
            }
            if e.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain(format!("{what} support must be bounded")));
            }
            if e.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::domain(format!("{what} edges must be strictly increasing")));
            }
            Ok(())
        };
        check_edges(&time_edges, "time")?;
        check_edges(&space_edges, "space")?;
        if time_edges[0] < 0.0 {
            return Err(Error::domain("time support must lie in [0, ∞)"));
        }
        let n = (time_edges.len() - 1) * (space_edges.len() - 1);
        if values.len() != n {
            return Err(Error::domain(format!("expected {n} values, got {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("grid values must be finite"));
        }
        Ok(Self {
            time_edges,
            space_edges,
            values,
        })
    }

    /// Samples `f(s, x)` at the cell centres.
    pub fn from_fn<F: Fn(f64, f64) -> f64>(time_edges: Vec<f64>, space_edges: Vec<f64>, f: F) -> Result<Self> {
        let mut values = Vec::new();
        for tw in time_edges.windows(2) {
            let s = 0.5 * (tw[0] + tw[1]);
            for xw in space_edges.windows(2) {
                values.push(f(s, 0.5 * (xw[0] + xw[1])));
            }
        }
        Self::new(time_edges, space_edges, values)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            values: vec![0.0; self.values.len()],
            ..self.clone()
        }
    }

    /// Cell-centre nodes `(time, space)` in storage order.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.values.len());
        for tw in self.time_edges.windows(2) {
            for xw in self.space_edges.windows(2) {
                out.push((0.5 * (tw[0] + tw[1]), 0.5 * (xw[0] + xw[1])));
            }
        }
        out
    }

    fn nt(&self) -> usize {
        self.time_edges.len() - 1
    }

    fn nx(&self) -> usize {
        self.space_edges.len() - 1
    }

    fn row(&self, a: usize) -> &[f64] {
        let nx = self.nx();
        &self.values[a * nx..(a + 1) * nx]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| c * v).collect(),
            ..self.clone()
        }
    }
}

/// `∫_0^{|z|} (|z| - w) p_τ(w) dw`, the even second antiderivative of the
/// one-dimensional heat kernel (`τ = 0` gives the delta limit `|z|/2`).
fn gauss_second_antiderivative(z: f64, tau: f64) -> f64 {
    let z = z.abs();
    if tau <= 0.0 {
        return 0.5 * z;
    }
    let s = tau.sqrt();
    let u = z / s;
    let phi = |v: f64| (-0.5 * v * v).exp() / (2.0 * PI).sqrt();
    z * 0.5 * erf(u / 2f64.sqrt()) + s * (phi(u) - phi(0.0))
}

/// `∫_{l1}^{r1} ∫_{l2}^{r2} k(x - y) dy dx` from an even second antiderivative.
#[inline]
pub(crate) fn rectangle<K: Fn(f64) -> f64>(l1: f64, r1: f64, l2: f64, r2: f64, k2: K) -> f64 {
    k2(r1 - l2) - k2(l1 - l2) - k2(r1 - r2) + k2(l1 - r2)
}

/// `⟨f, g⟩ = ∫∫∫∫ f(s,x) g(t,y) p_{|t-s|}(x-y) dx dy ds dt`, evaluated in
/// physical space: spatial cell integrals in closed form, the time-lag
/// integral by tanh-sinh quadrature split at the kinks of the overlap
/// function.
pub fn h_inner_product(f: &GridFunction, g: &GridFunction) -> f64 {
    let mut total = 0.0;
    for a in 0..f.nt() {
        let fa = f.row(a);
        if fa.iter().all(|v| *v == 0.0) {
            continue;
        }
        let (alo, ahi) = (f.time_edges[a], f.time_edges[a + 1]);
        for b in 0..g.nt() {
            let gb = g.row(b);
            if gb.iter().all(|v| *v == 0.0) {
                continue;
            }
            let (blo, bhi) = (g.time_edges[b], g.time_edges[b + 1]);
            let spatial = |tau: f64| -> f64 {
                let mut acc = 0.0;
                for (i, fv) in fa.iter().enumerate() {
                    if *fv == 0.0 {
                        continue;
                    }
                    let (l1, r1) = (f.space_edges[i], f.space_edges[i + 1]);
                    for (j, gv) in gb.iter().enumerate() {
                        if *gv == 0.0 {
                            continue;
                        }
                        let (l2, r2) = (g.space_edges[j], g.space_edges[j + 1]);
                        acc += fv * gv * rectangle(l1, r1, l2, r2, |z| gauss_second_antiderivative(z, tau));
                    }
                }
                acc
            };
            // lag v = s - t; overlap length of {s ∈ A, s - v ∈ B}
            let overlap = |v: f64| (ahi.min(bhi + v) - alo.max(blo + v)).max(0.0);
            let mut knots = vec![alo - bhi, alo - blo, ahi - bhi, ahi - blo, 0.0];
            knots.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let (vmin, vmax) = (alo - bhi, ahi - blo);
            for w in knots.windows(2) {
                let (lo, hi) = (w[0].max(vmin), w[1].min(vmax));
                if hi <= lo {
                    continue;
                }
                total += quad::tanh_sinh(lo, hi, 1e-11, |v| overlap(v) * spatial(v.abs())).value;
            }
        }
    }
    total
}

/// Same inner product evaluated on the Fourier side,
/// `(2π)^{-1} ∫ dξ ∫∫ 𝓕f(s,·)(ξ) conj(𝓕g(t,·)(ξ)) e^{-|t-s| ξ²/2} ds dt`.
pub fn h_inner_product_fourier(f: &GridFunction, g: &GridFunction) -> f64 {
    let extent = {
        let lo = f.space_edges[0].min(g.space_edges[0]);
        let hi = f.space_edges[f.nx()].max(g.space_edges[g.nx()]);
        (hi - lo).max(1e-3)
    };
    let min_width = f
        .space_edges
        .windows(2)
        .chain(g.space_edges.windows(2))
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let spectrum = |gf: &GridFunction, xi: f64| -> Vec<(f64, f64)> {
        (0..gf.nt())
            .map(|a| {
                let mut re = 0.0;
                let mut im = 0.0;
                for (j, v) in gf.row(a).iter().enumerate() {
                    let (l, r) = (gf.space_edges[j], gf.space_edges[j + 1]);
                    let m = 0.5 * (l + r);
                    let w = r - l;
                    let amp = if xi == 0.0 { w } else { 2.0 * (0.5 * xi * w).sin() / xi };
                    re += v * amp * (xi * m).cos();
                    im -= v * amp * (xi * m).sin();
                }
                (re, im)
            })
            .collect()
    };
    let integrand = |xi: f64| -> f64 {
        let lambda = 0.5 * xi * xi;
        let fs = spectrum(f, xi);
        let gs = spectrum(g, xi);
        let mut acc = 0.0;
        for (a, (fr, fi)) in fs.iter().enumerate() {
            let (alo, ahi) = (f.time_edges[a], f.time_edges[a + 1]);
            for (b, (gr, gi)) in gs.iter().enumerate() {
                let (blo, bhi) = (g.time_edges[b], g.time_edges[b + 1]);
                let t = rectangle(alo, ahi, blo, bhi, |v| exp_second_antiderivative(v, lambda));
                acc += t * (fr * gr + fi * gi);
            }
        }
        acc
    };
    let width = (PI / extent).min(0.5 / min_width.max(1e-6)).min(1.0);
    let e = quad::panel_sum(integrand, |_| width, 4000.0, 1e-12, false);
    e.value / PI
}

/// `∫_0^{|v|} (|v| - z) e^{-λ z} dz`.
fn exp_second_antiderivative(v: f64, lambda: f64) -> f64 {
    let v = v.abs();
    let x = lambda * v;
    let ratio = if x < 1e-3 {
        0.5 - x / 6.0 + x * x / 24.0 - x * x * x / 120.0
    } else {
        (x - 1.0 + (-x).exp()) / (x * x)
    };
    v * v * ratio
}
