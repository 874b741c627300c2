//! Small numerical helpers shared across modules: log-domain accumulation,
//! deterministic summation and the smooth step used for all cutoffs.

use std::sync::OnceLock;

use num_complex::Complex64;

use crate::jet::Jet;

pub use statrs::function::gamma::{gamma, ln_gamma};

/// `ln(Σ exp(x_i))`, `-∞` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + pairwise_sum(&xs.iter().map(|x| (x - max).exp()).collect::<Vec<_>>()).ln()
}

/// Pairwise (cascade) summation; the result depends only on the slice order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// `ln n!`, summed exactly for small `n` so that `ln 0! = ln 1! = 0` holds bitwise.
pub fn ln_factorial(n: usize) -> f64 {
    const TABLE: usize = 1024;
    static CACHE: OnceLock<Vec<f64>> = OnceLock::new();
    if n < TABLE {
        let table = CACHE.get_or_init(|| {
            let mut t = vec![0.0; TABLE];
            for k in 2..TABLE {
                t[k] = t[k - 1] + (k as f64).ln();
            }
            t
        });
        return table[n];
    }
    ln_gamma(n as f64 + 1.0)
}

fn bump_tail(tau: f64) -> f64 {
    if tau <= 0.0 {
        0.0
    } else {
        (-1.0 / tau).exp()
    }
}

/// C^∞ step equal to 1 for `τ ≤ 0` and 0 for `τ ≥ 1`.
pub fn smooth_step(tau: f64) -> f64 {
    if tau <= 0.0 {
        return 1.0;
    }
    if tau >= 1.0 {
        return 0.0;
    }
    let a = bump_tail(1.0 - tau);
    a / (a + bump_tail(tau))
}

/// Taylor coefficients `S^{(k)}(τ₀)/k!`, `k ≤ order`, of [`smooth_step`].
pub fn smooth_step_taylor(tau0: f64, order: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); order + 1];
    if tau0 <= 0.0 || tau0 >= 1.0 {
        out[0] = Complex64::new(smooth_step(tau0), 0.0);
        return out;
    }
    let t = Jet::variable(1, order, 0, tau0);
    let one = Complex64::new(1.0, 0.0);
    let phi = |x: &Jet| x.recip().scale(-one).exp();
    let left = phi(&(&Jet::constant(1, order, one) - &t));
    let right = phi(&t);
    let s = &left * &(&left + &right).recip();
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = s.taylor(&[k as u8]);
    }
    out
}

/// Solves `f(x) = target` for increasing `f` on a bracket `[lo, hi]` by bisection.
pub fn bisect_increasing(
    f: impl Fn(f64) -> f64,
    target: f64,
    mut lo: f64,
    mut hi: f64,
    rel_tol: f64,
) -> f64 {
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= rel_tol * hi.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_handles_large_values() {
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn smooth_step_plateaus() {
        assert_eq!(smooth_step(-0.1), 1.0);
        assert_eq!(smooth_step(1.3), 0.0);
        assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn smooth_step_taylor_matches_differences() {
        let tau = 0.3;
        let coeffs = smooth_step_taylor(tau, 2);
        let h = 1e-5;
        let fd1 = (smooth_step(tau + h) - smooth_step(tau - h)) / (2.0 * h);
        assert!((coeffs[1].re - fd1).abs() < 1e-8);
        let fd2 = (smooth_step(tau + h) - 2.0 * smooth_step(tau) + smooth_step(tau - h)) / (h * h);
        assert!((2.0 * coeffs[2].re - fd2).abs() < 1e-4);
    }
}
