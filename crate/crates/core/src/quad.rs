//! One-dimensional quadrature rules used across the crate.
//!
//! Two rules are provided: fixed-order Gauss-Legendre for smooth panels and
//! an adaptive tanh-sinh (double-exponential) rule that tolerates algebraic
//! endpoint singularities. Semi-infinite oscillatory integrals are handled
//! by summing panels and, for slowly decaying tails, accelerating the
//! sequence of partial sums by repeated averaging.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "need at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Shared 20-point rule.
    pub fn g20() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(20))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(c + h * x);
        }
        acc * h
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

const TS_MAX_LEVEL: usize = 9;
const TS_T_MAX: f64 = 4.0;

/// Abscissa data for one tanh-sinh node: weight and the distance of the node
/// from the nearer endpoint of `[-1, 1]` (kept separately so points close to
/// an endpoint are resolved without cancellation).
#[derive(Debug, Clone, Copy)]
struct TsNode {
    dist: f64,
    weight: f64,
}

struct TsTable {
    /// `levels[k]` holds the nodes with `t = j * 2^-k`, `j` odd (or all `j`
    /// for `k = 0`), restricted to `t > 0`.
    levels: Vec<Vec<TsNode>>,
    center_weight: f64,
}

fn ts_table() -> &'static TsTable {
    static TABLE: OnceLock<TsTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let node = |t: f64| {
            let u = 0.5 * PI * t.sinh();
            let ch = u.cosh();
            let weight = 0.5 * PI * t.cosh() / (ch * ch);
            // 1 - tanh(u) = 2 / (exp(2u) + 1)
            let dist = 2.0 / ((2.0 * u).exp() + 1.0);
            TsNode { dist, weight }
        };
        let mut levels = Vec::with_capacity(TS_MAX_LEVEL + 1);
        for k in 0..=TS_MAX_LEVEL {
            let h = 0.5f64.powi(k as i32);
            let mut nodes = Vec::new();
            let mut j = 1usize;
            loop {
                let t = j as f64 * h;
                if t > TS_T_MAX {
                    break;
                }
                if k == 0 || j % 2 == 1 {
                    let n = node(t);
                    if n.dist > 0.0 && n.weight > 0.0 {
                        nodes.push(n);
                    }
                }
                j += 1;
            }
            levels.push(nodes);
        }
        TsTable {
            levels,
            center_weight: 0.5 * PI,
        }
    })
}

/// Adaptive tanh-sinh quadrature of `f` over `[a, b]`.
///
/// The integrand is never evaluated at the endpoints themselves, so
/// integrable endpoint singularities are fine. Stops when two successive
/// levels agree to `tol` (absolute, scaled by `max(1, |I|)`).
pub fn tanh_sinh<F: FnMut(f64) -> f64>(a: f64, b: f64, tol: f64, mut f: F) -> Estimate {
    if a == b {
        return Estimate {
            value: 0.0,
            error: 0.0,
        };
    }
    let table = ts_table();
    let c = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut sum = table.center_weight * f(c);
    let mut prev = f64::NAN;
    let mut value = 0.0;
    for (k, level) in table.levels.iter().enumerate() {
        for n in level {
            let off = half * n.dist;
            let fl = f(a + off);
            let fr = f(b - off);
            let s = fl + fr;
            if s.is_finite() {
                sum += n.weight * s;
            }
        }
        let h = 0.5f64.powi(k as i32);
        value = sum * h * half;
        if k >= 3 {
            let err = (value - prev).abs();
            if err <= tol * value.abs().max(1.0) {
                return Estimate { value, error: err };
            }
        }
        prev = value;
    }
    Estimate {
        value,
        error: (value - prev).abs(),
    }
}

/// Integrates `f` over `[0, x_max]` by consecutive panels of width
/// `width(start)`.
///
/// When `accelerate` is set the partial sums are passed through repeated
/// averaging, which removes most of the truncation error for oscillatory
/// integrands with a slowly varying envelope.
pub fn panel_sum<F, W>(
    mut f: F,
    mut width: W,
    x_max: f64,
    tol: f64,
    accelerate: bool,
) -> Estimate
where
    F: FnMut(f64) -> f64,
    W: FnMut(f64) -> f64,
{
    let gl = GaussLegendre::g20();
    let mut partials = Vec::new();
    let mut total = 0.0;
    let mut start = 0.0;
    let mut first = true;
    let mut err = 0.0;
    while start < x_max {
        let w = width(start).min(x_max - start);
        let end = start + w;
        let piece = if first {
            // First panel carries any endpoint non-smoothness at zero.
            let e = tanh_sinh(start, end, tol * 0.1, &mut f);
            err += e.error;
            e.value
        } else {
            gl.integrate(start, end, &mut f)
        };
        first = false;
        total += piece;
        partials.push(total);
        start = end;
        if partials.len() > 200_000 {
            break;
        }
    }
    if accelerate && partials.len() >= 4 {
        let accel = averaged_limit(&partials, 12);
        err += (accel - averaged_limit(&partials, 11)).abs();
        return Estimate {
            value: accel,
            error: err,
        };
    }
    Estimate { value: total, error: err }
}

/// Repeated averaging of the last `depth + 1` partial sums.
pub fn averaged_limit(partials: &[f64], depth: usize) -> f64 {
    let k = depth.min(partials.len() - 1);
    let mut row: Vec<f64> = partials[partials.len() - 1 - k..].to_vec();
    while row.len() > 1 {
        row = row.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    row[0]
}

/// Cosine transform `∫_0^∞ g(ξ) cos(ω ξ) dξ` of a decaying, non-oscillating
/// profile `g`, where `scale` is the decay length of `g` and `g` is
/// negligible beyond `cutoff`.
pub fn cosine_transform<G: FnMut(f64) -> f64>(
    mut g: G,
    omega: f64,
    scale: f64,
    cutoff: f64,
    tol: f64,
) -> Estimate {
    let omega = omega.abs();
    let period_half = if omega > 0.0 { PI / omega } else { f64::INFINITY };
    let base = scale.min(period_half);
    panel_sum(
        |xi| g(xi) * (omega * xi).cos(),
        |start| {
            // Grow panels geometrically where the integrand does not oscillate.
            base.max(0.5 * start).min(period_half)
        },
        cutoff,
        tol,
        false,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let gl = GaussLegendre::new(10);
        // Degree 19 is the highest exactly integrated by 10 nodes.
        let v = gl.integrate(0.0, 2.0, |x| x.powi(19));
        assert_abs_diff_eq!(v, 2f64.powi(20) / 20.0, epsilon = 1e-6);
        let s: f64 = gl.weights.iter().sum();
        assert_abs_diff_eq!(s, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularity() {
        let e = tanh_sinh(0.0, 1.0, 1e-12, |x| 1.0 / x.sqrt());
        assert_abs_diff_eq!(e.value, 2.0, epsilon = 1e-9);
        let e = tanh_sinh(0.0, 1.0, 1e-12, |x| (-x.ln()).sqrt());
        assert_abs_diff_eq!(e.value, PI.sqrt() / 2.0, epsilon = 1e-9);
    }

    #[test]
    fn tanh_sinh_smooth() {
        let e = tanh_sinh(-1.0, 3.0, 1e-13, |x| x.exp());
        assert_abs_diff_eq!(e.value, 3f64.exp() - (-1f64).exp(), epsilon = 1e-11);
    }

    #[test]
    fn cosine_transform_of_gaussian() {
        // ∫_0^∞ e^{-ξ²/2} cos(ωξ) dξ = sqrt(π/2) e^{-ω²/2}
        for &w in &[0.0, 0.5, 3.0] {
            let e = cosine_transform(|x| (-0.5 * x * x).exp(), w, 1.0, 12.0, 1e-12);
            assert_abs_diff_eq!(e.value, (PI / 2.0).sqrt() * (-0.5 * w * w).exp(), epsilon = 1e-10);
        }
    }

    #[test]
    fn averaging_accelerates_alternating_tail() {
        // ∫_0^∞ cos(x)/(1+x) dx, partial sums at multiples of π oscillate
        let e = panel_sum(|x| x.cos() / (1.0 + x), |_| PI, 60.0 * PI, 1e-12, true);
        // reference: Ci(1) sin(1) ... evaluated numerically to high precision
        let reference = 0.343_377_961_556_427;
        assert_abs_diff_eq!(e.value, reference, epsilon = 1e-6);
    }
}
