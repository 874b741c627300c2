//! Gauss–Legendre rules, adaptive panel integration and semi-infinite
//! integrals of positive integrands given in log form.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::log_sum_exp;

/// Quadrature controls shared by the spectral and phase-space integrators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadSpec {
    /// Gauss–Legendre nodes per panel.
    pub nodes_per_panel: usize,
    /// Relative agreement required between interlaced estimates.
    pub rel_tol: f64,
    /// Number of times the node count may be raised before giving up.
    pub max_refinements: usize,
    /// Angular trapezoid points for non-radial phase-space integrals (0 = automatic).
    pub angular_points: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec {
            nodes_per_panel: 16,
            rel_tol: 1e-10,
            max_refinements: 3,
            angular_points: 0,
        }
    }
}

pub type Rule = Arc<(Vec<f64>, Vec<f64>)>;

/// `n`-point Gauss–Legendre rule on `[-1, 1]` (nodes ascending).
pub fn gauss_legendre(n: usize) -> Rule {
    static CACHE: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry(n)
        .or_insert_with(|| Arc::new(compute_gauss_legendre(n)))
        .clone()
}

fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `n`-point Gauss–Hermite rule for the weight `e^{-x²}` (nodes ascending).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let mut z = 0.0f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[n - 1],
            3 => 1.91 * z - 0.91 * nodes[n - 2],
            _ => 2.0 * z - nodes[n - i + 1],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            // orthonormal Hermite recurrence
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2 - (j as f64 / (j as f64 + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        nodes[n - 1 - i] = z;
        nodes[i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    (nodes, weights)
}

/// Fixed Gauss–Legendre estimate of `∫_a^b f`.
pub fn gl_panel(f: &impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let rule = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.0
        .iter()
        .zip(&rule.1)
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Adaptive bisection comparing the panel rule against its two halves.
pub fn adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<f64> {
    fn rec(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        whole: f64,
        rel_tol: f64,
        abs_tol: f64,
        depth: usize,
    ) -> std::result::Result<f64, f64> {
        let m = 0.5 * (a + b);
        let left = gl_panel(f, a, m, 16);
        let right = gl_panel(f, m, b, 16);
        let refined = left + right;
        let err = (refined - whole).abs();
        if err <= abs_tol.max(rel_tol * refined.abs()) {
            return Ok(refined);
        }
        if depth == 0 {
            return Err(err);
        }
        let l = rec(f, a, m, left, rel_tol, 0.5 * abs_tol, depth - 1)?;
        let r = rec(f, m, b, right, rel_tol, 0.5 * abs_tol, depth - 1)?;
        Ok(l + r)
    }
    let whole = gl_panel(f, a, b, 16);
    rec(f, a, b, whole, rel_tol, abs_tol, 30).map_err(|err| Error::Accuracy {
        message: format!("adaptive quadrature on [{a}, {b}] did not converge"),
        achieved: err,
    })
}

/// `ln ∫_0^∞ F(u) du` for a positive integrand supplied as `ln F`.
///
/// The integral runs in `v = ln(1 + u)`; panels are added until the integrand
/// has fallen `drop_nats` below its running peak and keeps decreasing.
pub fn ln_semi_infinite(ln_f: impl Fn(f64) -> f64, rel_tol: f64, drop_nats: f64) -> Result<f64> {
    const WIDTH: f64 = 0.25;
    const V_MAX: f64 = 700.0;
    let ln_g = |v: f64| ln_f(v.exp_m1()) + v;
    let mut peak = f64::NEG_INFINITY;
    let mut panels = Vec::new();
    let mut v = 0.0;
    let mut previous_end = ln_g(0.0);
    while v < V_MAX {
        let (a, b) = (v, v + WIDTH);
        // panel-local scaling keeps the linear-domain values in range
        let rule = gauss_legendre(16);
        let probe = rule
            .0
            .iter()
            .map(|x| ln_g(0.5 * (a + b) + 0.5 * (b - a) * x))
            .chain([ln_g(a), ln_g(b)])
            .fold(f64::NEG_INFINITY, f64::max);
        if probe.is_finite() {
            let g = |x: f64| (ln_g(x) - probe).exp();
            let val = adaptive(&g, a, b, rel_tol * 0.1, 0.0)?;
            if val > 0.0 {
                panels.push(val.ln() + probe);
            }
        } else if probe.is_nan() {
            return Err(Error::Range(format!("integrand is NaN near u = {}", b.exp_m1())));
        }
        peak = peak.max(probe);
        let end = ln_g(b);
        if (end < peak - drop_nats && end <= previous_end) || end == f64::NEG_INFINITY {
            return Ok(log_sum_exp(&panels));
        }
        previous_end = end;
        v = b;
    }
    Err(Error::Range(
        "radial integral did not decay within u < e^700".to_string(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let rule = gauss_legendre(8);
        let s: f64 = rule.1.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let x14: f64 = rule.0.iter().zip(&rule.1).map(|(x, w)| w * x.powi(14)).sum();
        assert!((x14 - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_hermite_moments() {
        let (x, w) = gauss_hermite(64);
        let m0: f64 = w.iter().sum();
        let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        let sqrt_pi = std::f64::consts::PI.sqrt();
        assert!((m0 - sqrt_pi).abs() < 1e-13);
        assert!((m4 - 0.75 * sqrt_pi).abs() < 1e-13);
    }

    #[test]
    fn adaptive_handles_peaks() {
        let f = |x: f64| 1.0 / (1e-4 + x * x);
        let v = adaptive(&f, -1.0, 1.0, 1e-12, 0.0).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((v - exact).abs() < 1e-9 * exact);
    }

    #[test]
    fn semi_infinite_gaussian() {
        // ∫_0^∞ e^{-u} du = 1, ∫_0^∞ e^{-0.001 u} du = 1000
        let v = ln_semi_infinite(|u| -u, 1e-12, 40.0).unwrap();
        assert!(v.abs() < 1e-11);
        let w = ln_semi_infinite(|u| -1e-3 * u, 1e-12, 40.0).unwrap();
        assert!((w - 1000f64.ln()).abs() < 1e-10);
    }
}
