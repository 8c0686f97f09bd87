//! Time-stepping of the one-dimensional equation driven by smooth noise on a
//! periodic box `[-L, L)`, used as an independent check of the mollified
//! Feynman-Kac estimators.
//!
//! Each step is a Strang splitting: half a step of the spectral semigroup,
//! a full step of pointwise multiplication by `exp(noise · dt)`, then half a
//! step of the semigroup again. The noise is held constant on each time slab.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feynman_kac::{mean_and_se, Flavor, MomentEstimate};
use crate::gaussian_field::{build_periodic_covariance, Cholesky, SpaceTimePoint};
use crate::kernel::{stable_kernel, InitialCondition, ModelParams, C_ALPHA};
use crate::quad;
use crate::rng::{purpose, RngStream};

/// Largest number of space-time nodes the dense noise covariance may have.
pub const MAX_NOISE_NODES: usize = 4096;

/// Default half-length multiplier: `L = 8 √t`.
pub const DEFAULT_LENGTH_FACTOR: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    pub half_length: f64,
    pub n_space: usize,
    pub n_time: usize,
    pub t_horizon: f64,
}

impl TorusGrid {
    pub fn new(t_horizon: f64, half_length: f64, n_space: usize, n_time: usize) -> Result<Self> {
        if !(t_horizon > 0.0 && t_horizon.is_finite()) {
            return Err(Error::domain("t_horizon must be positive"));
        }
        if !(half_length > 0.0 && half_length.is_finite()) {
            return Err(Error::domain("half_length must be positive"));
        }
        if n_space < 2 || !n_space.is_power_of_two() {
            return Err(Error::domain(format!("n_space must be a power of two, got {n_space}")));
        }
        if n_time == 0 {
            return Err(Error::domain("n_time must be positive"));
        }
        Ok(Self {
            half_length,
            n_space,
            n_time,
            t_horizon,
        })
    }

    pub fn with_default_length(t_horizon: f64, n_space: usize, n_time: usize) -> Result<Self> {
        Self::new(t_horizon, DEFAULT_LENGTH_FACTOR * t_horizon.sqrt(), n_space, n_time)
    }

    pub fn dt(&self) -> f64 {
        self.t_horizon / self.n_time as f64
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_length / self.n_space as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        -self.half_length + j as f64 * self.dx()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n_space).map(|j| self.x(j)).collect()
    }

    /// Index of the node at `x`, if `x` is a grid point.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let s = (x + self.half_length) / self.dx();
        let j = s.round();
        if (s - j).abs() < 1e-9 && j >= 0.0 && (j as usize) < self.n_space {
            Some(j as usize)
        } else {
            None
        }
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n_space as i64;
        (0..n)
            .map(|m| {
                let m = if m <= n / 2 { m } else { m - n };
                PI * m as f64 / self.half_length
            })
            .collect()
    }

    /// Slab start times `i · dt` crossed with the spatial nodes, time-major.
    pub fn noise_nodes(&self) -> Vec<SpaceTimePoint> {
        let dt = self.dt();
        let mut pts = Vec::with_capacity(self.n_time * self.n_space);
        for i in 0..self.n_time {
            for j in 0..self.n_space {
                pts.push(SpaceTimePoint::new(i as f64 * dt, vec![self.x(j)]));
            }
        }
        pts
    }

    /// Mass of `g_α(t_horizon, ·)` outside `[-L, L]`.
    pub fn boundary_mass(&self, alpha: f64) -> f64 {
        let (t, l) = (self.t_horizon, self.half_length);
        if alpha == 2.0 {
            return statrs::function::erf::erfc(l / (2.0 * C_ALPHA * 2.0 * t).sqrt());
        }
        let inside = quad::tanh_sinh(0.0, l, 1e-10, |x| stable_kernel(alpha, t, &[x]).unwrap_or(0.0)).value;
        (1.0 - 2.0 * inside).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub values: Vec<f64>,
    pub time: f64,
}

impl FieldState {
    pub fn initial(grid: &TorusGrid, u0: &InitialCondition) -> Self {
        Self {
            values: grid.xs().into_iter().map(|x| u0.eval_1d(x)).collect(),
            time: 0.0,
        }
    }

    pub fn write_csv<W: Write>(&self, grid: &TorusGrid, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "u"])?;
        for (j, v) in self.values.iter().enumerate() {
            out.write_record([grid.x(j).to_string(), v.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `n_time × n_space` noise values, row `i` held on slab `[i dt, (i+1) dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSlab {
    pub n_time: usize,
    pub n_space: usize,
    pub values: Vec<f64>,
}

impl NoiseSlab {
    pub fn zeros(grid: &TorusGrid) -> Self {
        Self {
            n_time: grid.n_time,
            n_space: grid.n_space,
            values: vec![0.0; grid.n_time * grid.n_space],
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_space..(i + 1) * self.n_space]
    }
}

/// Factored noise covariance, reusable across realizations.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    pub grid: TorusGrid,
    pub epsilon: f64,
    chol: Cholesky,
}

impl NoiseModel {
    pub fn new(grid: &TorusGrid, epsilon: f64) -> Result<Self> {
        let nodes = grid.n_time * grid.n_space;
        if nodes > MAX_NOISE_NODES {
            return Err(Error::Budget(format!(
                "noise covariance needs {nodes} nodes, limit is {MAX_NOISE_NODES}"
            )));
        }
        let cov = build_periodic_covariance(&grid.noise_nodes(), epsilon, grid.half_length)?;
        Ok(Self {
            grid: *grid,
            epsilon,
            chol: cov.factor()?,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> NoiseSlab {
        NoiseSlab {
            n_time: self.grid.n_time,
            n_space: self.grid.n_space,
            values: self.chol.sample(rng),
        }
    }
}

pub fn sample_noise_slab<R: Rng + ?Sized>(grid: &TorusGrid, epsilon: f64, rng: &mut R) -> Result<NoiseSlab> {
    Ok(NoiseModel::new(grid, epsilon)?.sample(rng))
}

/// Spectral half-step propagator plus FFT scratch.
pub struct Stepper {
    dt: f64,
    half: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl Stepper {
    pub fn new(grid: &TorusGrid, alpha: f64) -> Self {
        Self::with_dt(grid, alpha, grid.dt())
    }

    pub fn with_dt(grid: &TorusGrid, alpha: f64, dt: f64) -> Self {
        let n = grid.n_space;
        let half = grid
            .wavenumbers()
            .iter()
            .map(|k| (-0.5 * C_ALPHA * dt * k.abs().powf(alpha)).exp() / n as f64)
            .collect();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Self {
            dt,
            half,
            fwd,
            inv,
            buf: vec![Complex::new(0.0, 0.0); n],
            scratch: vec![Complex::new(0.0, 0.0); len],
        }
    }

    /// Same stepper with the semigroup switched off.
    pub fn without_diffusion(grid: &TorusGrid) -> Self {
        let mut s = Self::new(grid, 2.0);
        let n = grid.n_space as f64;
        s.half.iter_mut().for_each(|m| *m = 1.0 / n);
        s
    }

    fn half_step(&mut self, u: &mut [f64]) {
        for (b, v) in self.buf.iter_mut().zip(u.iter()) {
            *b = Complex::new(*v, 0.0);
        }
        self.fwd.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (b, m) in self.buf.iter_mut().zip(&self.half) {
            *b *= *m;
        }
        self.inv.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (v, b) in u.iter_mut().zip(&self.buf) {
            *v = b.re;
        }
    }

    pub fn step(&mut self, state: &mut FieldState, noise_row: &[f64]) {
        self.half_step(&mut state.values);
        for (v, w) in state.values.iter_mut().zip(noise_row) {
            *v *= (w * self.dt).exp();
        }
        self.half_step(&mut state.values);
        state.time += self.dt;
    }
}

/// One Strang step of size `dt` on a fresh stepper.
pub fn step(state: &FieldState, noise_row: &[f64], alpha: f64, dt: f64, grid: &TorusGrid) -> FieldState {
    let mut s = Stepper::with_dt(grid, alpha, dt);
    let mut out = state.clone();
    s.step(&mut out, noise_row);
    out
}

/// Runs all slabs; returns the final state and the states after each step
/// index listed in `snapshot_steps`.
pub fn solve(
    grid: &TorusGrid,
    alpha: f64,
    u0: &InitialCondition,
    noise: &NoiseSlab,
    snapshot_steps: &[usize],
) -> (FieldState, Vec<FieldState>) {
    let mut stepper = Stepper::new(grid, alpha);
    let mut state = FieldState::initial(grid, u0);
    let mut snaps = Vec::new();
    for i in 0..grid.n_time {
        stepper.step(&mut state, noise.row(i));
        if snapshot_steps.contains(&(i + 1)) {
            snaps.push(state.clone());
        }
    }
    (state, snaps)
}

/// Sample `p`-th moment of `u(t, x)` over independent noise realizations.
/// Realization `r` uses stream `r` of the noise family.
pub fn ensemble_moment(
    grid: &TorusGrid,
    params: &ModelParams,
    epsilon: f64,
    p: usize,
    n_realizations: usize,
    seed: u64,
) -> Result<MomentEstimate> {
    params.validate()?;
    if params.d != 1 {
        return Err(Error::domain("the direct solver is one-dimensional"));
    }
    if (grid.t_horizon - params.t_horizon).abs() > 1e-12 * params.t_horizon.max(1.0) {
        return Err(Error::MismatchedGrid("torus grid and model disagree on t".into()));
    }
    if p == 0 || n_realizations == 0 {
        return Err(Error::domain("p and n_realizations must be positive"));
    }
    let j = grid
        .index_of(params.x_point[0])
        .ok_or_else(|| Error::domain("evaluation point must be a grid node"))?;
    let model = NoiseModel::new(grid, epsilon)?;
    let values: Vec<f64> = (0..n_realizations)
        .into_par_iter()
        .map_init(
            || Stepper::new(grid, params.alpha),
            |stepper, r| {
                let mut rng = RngStream::family(seed, purpose::NOISE, r as u64).generator();
                let noise = model.sample(&mut rng);
                let mut state = FieldState::initial(grid, &params.u0);
                for i in 0..grid.n_time {
                    stepper.step(&mut state, noise.row(i));
                }
                state.values[j].powi(p as i32)
            },
        )
        .collect();
    let (value, std_error) = mean_and_se(&values);
    Ok(MomentEstimate {
        value,
        std_error,
        n_samples: n_realizations,
        p_order: p,
        flavor: Flavor::Stratonovich,
        seed,
        grid_steps: grid.n_time,
    })
}
