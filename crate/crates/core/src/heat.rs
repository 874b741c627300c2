//! Heat traces `Σ e^{−tλ_j}`, their phase-space counterparts and the
//! remainder integral controlling the difference.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::Serialize;

use crate::asymptotics::{sphere_quadrature, ComparisonFunction};
use crate::calculus::heat_terms;
use crate::error::{invalid, Error, Result};
use crate::numerics::{ln_factorial, pairwise_sum};
use crate::quadrature::{ln_semi_infinite, QuadSpec};
use crate::quantize::SpectralData;
use crate::symbols::{LogValue, PhasePoint, Symbol};

const DROP_NATS: f64 = 40.0;

/// Eigenvalue lower bound `λ_j ≥ c·f(h j^{1/(2d)})` used to bound the
/// contribution of eigenvalues beyond the trusted prefix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailBound {
    pub f: ComparisonFunction,
    pub c: f64,
    pub h: f64,
    pub d: usize,
}

impl TailBound {
    /// `ln(c·f(h j^{1/(2d)}))`.
    fn ln_lower(&self, j: f64) -> Result<f64> {
        let y = (self.h * j.powf(0.5 / self.d as f64)).max(self.f.y0);
        Ok(self.c.ln() + self.f.ln_value(y)?)
    }

    /// `Σ_{j ≥ first} e^{−t λ_j}` bounded by `g(first) + ∫_first^∞ g`.
    pub fn tail_sum(&self, first: usize, t: f64) -> Result<f64> {
        let ln_term = |j: f64| -> f64 {
            match self.ln_lower(j) {
                Ok(l) => -t * l.exp(),
                Err(_) => f64::NAN,
            }
        };
        let j0 = first.max(1) as f64;
        let head = ln_term(j0).exp();
        let ln_int = ln_semi_infinite(|u| ln_term(j0 + u), 1e-8, DROP_NATS)?;
        Ok(head + ln_int.exp())
    }
}

/// Spectral heat trace over the trusted eigenvalues with a bound on the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeatTrace {
    pub value: f64,
    pub tail_bound: f64,
}

/// `Σ_j e^{−tλ_j}`. Complete spectra need no tail model; otherwise the
/// trusted prefix is summed and the remainder bounded through `tail`.
pub fn heat_trace(spec: &SpectralData, t: f64, tail: Option<&TailBound>) -> Result<HeatTrace> {
    if !(t > 0.0 && t.is_finite()) {
        return invalid(format!("t must be positive, got {t}"));
    }
    let trusted = spec.trusted();
    if trusted.is_empty() {
        return Err(Error::Resolution("no trusted eigenvalues".into()));
    }
    let shift = trusted[0];
    let terms: Vec<f64> = trusted.iter().map(|l| (-t * (l - shift)).exp()).collect();
    let value = pairwise_sum(&terms) * (-t * shift).exp();
    let complete = spec.complete && trusted.len() == spec.len();
    let tail_bound = if complete {
        0.0
    } else {
        let model = tail.ok_or_else(|| {
            Error::Precondition("truncated spectrum needs an eigenvalue lower bound".into())
        })?;
        model.tail_sum(trusted.len(), t)?
    };
    if tail_bound > 1e-3 * value {
        return Err(Error::Resolution(format!(
            "untrusted tail bound {tail_bound:.3e} exceeds 1e-3 of the trace {value:.3e} at t = {t}; \
             enlarge the basis or increase t"
        )));
    }
    Ok(HeatTrace { value, tail_bound })
}

/// `∫_{ℝ^{2d}} F(w) dw` with `ln F` given in terms of `a(w)` and `r = |w|`,
/// in polar coordinates. Radial symbols use a single ray.
fn polar_integral(
    sym: &Symbol,
    quad: &QuadSpec,
    ln_integrand: impl Fn(LogValue, f64) -> f64,
) -> Result<f64> {
    let d = sym.d();
    let dirs: Vec<(Vec<f64>, f64)> = if sym.radial_profile().is_some() {
        let mut e1 = vec![0.0; 2 * d];
        e1[0] = 1.0;
        // |𝕊^{2d−1}| = 2π^d/(d−1)!
        vec![(e1, 2.0 * PI.powi(d as i32) / ln_factorial(d - 1).exp())]
    } else {
        let order = if quad.angular_points > 0 {
            quad.angular_points
        } else if d == 1 {
            16
        } else {
            8
        };
        sphere_quadrature(d, order)
    };
    let jac = (2 * d - 1) as f64;
    let mut parts = Vec::with_capacity(dirs.len());
    for (dir, weight) in dirs {
        let failure = RefCell::new(None);
        let ln_ray = ln_semi_infinite(
            |r| {
                let w = match PhasePoint::new(dir.iter().map(|c| c * r).collect()) {
                    Ok(w) => w,
                    Err(e) => {
                        failure.borrow_mut().get_or_insert(e);
                        return f64::NAN;
                    }
                };
                match sym.evaluate(&w) {
                    Ok(a) => ln_integrand(a, r) + jac * r.ln(),
                    Err(e) => {
                        failure.borrow_mut().get_or_insert(e);
                        f64::NAN
                    }
                }
            },
            quad.rel_tol,
            DROP_NATS,
        );
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        parts.push(weight * ln_ray?.exp());
    }
    Ok(pairwise_sum(&parts))
}

/// `−t·a` for `a` in log form.
fn neg_scaled(a: LogValue, t: f64) -> f64 {
    if a.is_zero() {
        0.0
    } else {
        -a.sign * (t.ln() + a.ln_abs).exp()
    }
}

/// `(2π)^{−d} ∫ e^{−t a(w)} dw`.
pub fn phase_integral(sym: &Symbol, t: f64, quad: &QuadSpec) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return invalid(format!("t must be positive, got {t}"));
    }
    let v = polar_integral(sym, quad, |a, _| neg_scaled(a, t))?;
    Ok(v / (2.0 * PI).powi(sym.d() as i32))
}

/// `∫ e^{−(t/4) a(w)} ⟨w⟩^{−2ρ} dw`.
pub fn remainder_integral(sym: &Symbol, t: f64, rho: f64, quad: &QuadSpec) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return invalid(format!("t must be positive, got {t}"));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return invalid(format!("ρ must lie in (0, 1], got {rho}"));
    }
    polar_integral(sym, quad, |a, r| neg_scaled(a, 0.25 * t) - rho * (1.0 + r * r).ln())
}

/// One row of the trace-formula check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeatSample {
    pub t: f64,
    pub spectral_trace: f64,
    pub phase_integral: f64,
    pub remainder: f64,
    pub tail_bound: f64,
    pub residual: f64,
    /// `residual / remainder`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatReport {
    pub samples: Vec<HeatSample>,
    /// Largest observed `residual/remainder`, the empirical O-constant.
    pub constant: f64,
    /// `max ratio / min ratio`.
    pub spread: f64,
    /// Ratios never increase as `t` decreases.
    pub non_increasing: bool,
}

impl HeatReport {
    /// Bounded ratio: either non-increasing towards `t → 0` or within `max_spread`.
    pub fn bounded(&self, max_spread: f64) -> bool {
        self.non_increasing || self.spread <= max_spread
    }

    /// CSV with header `t,trace,phase,remainder,residual,ratio`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,trace,phase,remainder,residual,ratio\n");
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                s.t, s.spectral_trace, s.phase_integral, s.remainder, s.residual, s.ratio
            );
        }
        out
    }
}

/// Compares spectral traces with phase-space integrals over `ts` (in the
/// order given, normally decreasing).
pub fn verify_heat_formula(
    spec: &SpectralData,
    sym: &Symbol,
    ts: &[f64],
    rho: f64,
    tail: Option<&TailBound>,
    quad: &QuadSpec,
) -> Result<HeatReport> {
    if ts.is_empty() {
        return invalid("empty t-grid");
    }
    let samples = ts
        .iter()
        .map(|&t| {
            let trace = heat_trace(spec, t, tail)?;
            let phase = phase_integral(sym, t, quad)?;
            let remainder = remainder_integral(sym, t, rho, quad)?;
            let residual = (trace.value - phase).abs();
            Ok(HeatSample {
                t,
                spectral_trace: trace.value,
                phase_integral: phase,
                remainder,
                tail_bound: trace.tail_bound,
                residual,
                ratio: residual / remainder,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = samples.iter().map(|s| s.ratio).collect();
    let constant = ratios.iter().copied().fold(0.0, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| samples[b].t.total_cmp(&samples[a].t));
    let non_increasing = order.windows(2).all(|w| ratios[w[1]] <= ratios[w[0]]);
    Ok(HeatReport {
        samples,
        constant,
        spread: constant / min,
        non_increasing,
    })
}

/// Weyl symbol of `e^{−tH}` for `H = x² + D²`: `sech t · e^{−tanh t · r²}` (d = 1).
pub fn mehler_symbol(t: f64, w: &PhasePoint) -> Result<f64> {
    if w.d() != 1 {
        return invalid("the Mehler symbol is implemented for d = 1");
    }
    if !(t > 0.0 && t < PI / 2.0) {
        return invalid(format!("t must lie in (0, π/2), got {t}"));
    }
    Ok((-t.tanh() * w.norm_sq()).exp() / t.cosh())
}

/// `|Σ_{j<J} u_j(t, w) − Mehler(t, w)|` for the harmonic symbol `r²`.
pub fn mehler_parametrix_error(t: f64, w: &PhasePoint, terms: usize) -> Result<f64> {
    let b = Symbol::radial_poly(&[0.0, 1.0], 1)?;
    let mut sum = num_complex::Complex64::new(0.0, 0.0);
    for term in heat_terms(&b, terms)? {
        sum += term.eval(t, w)?;
    }
    Ok((sum - mehler_symbol(t, w)?).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::upper_bound_const;
    use crate::quantize::combine_separable;
    use proptest::prelude::*;

    fn harmonic_exact(n: usize) -> SpectralData {
        SpectralData::new((0..n).map(|k| (2 * k + 1) as f64).collect(), "harmonic")
    }

    fn harmonic_tail(d: usize) -> TailBound {
        let b = upper_bound_const(d, Some(2.0), 1.0, true).unwrap();
        TailBound {
            f: ComparisonFunction::power_log(2.0, 0.0).unwrap(),
            c: 1.0,
            h: 0.8 * b.h_threshold,
            d,
        }
    }

    fn r2() -> Symbol {
        Symbol::radial_poly(&[0.0, 1.0], 1).unwrap()
    }

    /// `E₁(x)` by its convergent series, an independent oracle.
    fn e1(x: f64) -> f64 {
        let euler = 0.577_215_664_901_532_9;
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            sum += term / k as f64;
        }
        -euler - x.ln() - sum
    }

    #[test]
    fn trace_examples() {
        let tr = heat_trace(&harmonic_exact(400), 0.5, Some(&harmonic_tail(1))).unwrap();
        assert!((tr.value - 1.0 / (2.0 * 0.5f64.sinh())).abs() < 1e-12);
        assert!(tr.tail_bound < 1e-12);
        let single = SpectralData::exact(vec![5.0], "five");
        assert!((heat_trace(&single, 1.0, None).unwrap().value - (-5.0f64).exp()).abs() < 1e-16);
        let h = harmonic_exact(200);
        let two = combine_separable(&h, &h, 300.0).unwrap();
        let tr2 = heat_trace(&two, 0.5, Some(&harmonic_tail(2))).unwrap();
        let want = (1.0 / (2.0 * 0.5f64.sinh())).powi(2);
        assert!((tr2.value - want).abs() < 1e-10, "{} vs {want}", tr2.value);
    }

    #[test]
    fn under_resolved_trace_is_rejected() {
        let err = heat_trace(&harmonic_exact(20), 0.01, Some(&harmonic_tail(1))).unwrap_err();
        assert!(matches!(err, Error::Resolution(_)));
        assert!(matches!(
            heat_trace(&harmonic_exact(20), 1.0, None),
            Err(Error::Precondition(_))
        ));
    }

    proptest! {
        #[test]
        fn trace_is_decreasing_and_log_convex(t in 0.05f64..2.0, dt in 0.01f64..0.5) {
            let spec = harmonic_exact(600);
            let tail = harmonic_tail(1);
            let f = |t: f64| heat_trace(&spec, t, Some(&tail)).unwrap().value;
            let (a, b, c) = (f(t), f(t + dt), f(t + 2.0 * dt));
            prop_assert!(b < a && c < b);
            prop_assert!(b.ln() <= 0.5 * (a.ln() + c.ln()) + 1e-12);
        }
    }

    #[test]
    fn phase_integral_examples() {
        let q = QuadSpec::default();
        assert!((phase_integral(&r2(), 0.1, &q).unwrap() - 5.0).abs() < 1e-8);
        let shifted = Symbol::radial_poly(&[3.0, 1.0], 1).unwrap();
        let want = (-0.3f64).exp() / 0.2;
        assert!((phase_integral(&shifted, 0.1, &q).unwrap() - want).abs() < 1e-8);
        // non-radial path: r² + x has the same integral times e^{t/4}
        let px = Symbol::polynomial(vec![(vec![2, 0], 1.0), (vec![0, 2], 1.0), (vec![1, 0], 1.0)], 1)
            .unwrap();
        let want = (0.025f64).exp() * 5.0;
        assert!((phase_integral(&px, 0.1, &q).unwrap() - want).abs() < 1e-8);
    }

    #[test]
    fn phase_integral_infinite_order_scale() {
        let q = QuadSpec::default();
        let eg = Symbol::exp_gevrey(1.0, 2.0, 1).unwrap();
        let rel = |t: f64| {
            let scale = (1.0 / t).ln().powi(4) / 2.0;
            phase_integral(&eg, t, &q).unwrap() / scale
        };
        for t in [0.05, 0.005] {
            assert!((rel(t) - 1.0).abs() < 0.35, "{}", rel(t));
        }
        // direct radial oracle: ½∫_0^∞ exp(−t e^{(1+u)^{1/4}}) du
        let t = 0.02;
        let direct = 0.5
            * crate::quadrature::adaptive(
                &|u: f64| (-t * (1.0 + u).powf(0.25).exp()).exp(),
                0.0,
                3000.0,
                1e-12,
                0.0,
            )
            .unwrap();
        assert!((phase_integral(&eg, t, &q).unwrap() / direct - 1.0).abs() < 1e-8);
    }

    #[test]
    fn remainder_examples() {
        let q = QuadSpec::default();
        let v = remainder_integral(&r2(), 4.0, 1.0, &q).unwrap();
        let want = PI * 1f64.exp() * e1(1.0);
        assert!((v - want).abs() < 1e-9, "{v} vs {want}");
        let mut prev = f64::INFINITY;
        for t in [1.0, 4.0, 16.0, 64.0] {
            let v = remainder_integral(&r2(), t, 1.0, &q).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 0.2);
    }

    #[test]
    fn remainder_grows_as_t_shrinks() {
        let q = QuadSpec::default();
        let mut prev = 0.0;
        for k in 3..=12 {
            let t = 2f64.powi(-k);
            let v = remainder_integral(&r2(), t, 1.0, &q).unwrap();
            // closed form π e^{t/4} E₁(t/4)
            let want = PI * (0.25 * t).exp() * e1(0.25 * t);
            assert!((v - want).abs() < 1e-8 * want);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn harmonic_formula_residuals_shrink() {
        let q = QuadSpec::default();
        let spec = harmonic_exact(2000);
        let rep = verify_heat_formula(&spec, &r2(), &[0.2, 0.1, 0.05], 1.0, Some(&harmonic_tail(1)), &q)
            .unwrap();
        assert!(rep.non_increasing && rep.bounded(3.0));
        for s in &rep.samples {
            assert!((s.spectral_trace - 1.0 / (2.0 * s.t.sinh())).abs() < 1e-10);
            assert!((s.phase_integral - 0.5 / s.t).abs() < 1e-8);
        }
        assert!(rep.to_csv().starts_with("t,trace,phase,remainder,residual,ratio\n"));
    }

    #[test]
    fn mehler_examples() {
        let w = PhasePoint::xy(1.0, 0.0);
        let v = mehler_symbol(0.1, &w).unwrap();
        assert!((v - (-0.1f64.tanh()).exp() / 0.1f64.cosh()).abs() < 1e-15);
        assert!((v - 0.90065).abs() < 5e-5);
        let t = 1e-3;
        assert!((mehler_symbol(t, &w).unwrap() / (-t).exp() - 1.0).abs() < 1e-5);
        // (2π)^{-1} ∫ Mehler = 1/(2 sinh t)
        for t in [0.1, 0.7] {
            let total = 2.0 * PI * crate::quadrature::adaptive(
                &|r: f64| r * mehler_symbol(t, &PhasePoint::xy(r, 0.0)).unwrap(),
                0.0,
                60.0,
                1e-13,
                0.0,
            )
            .unwrap();
            assert!((total / (2.0 * PI) - 0.5 / t.sinh()).abs() < 1e-12);
        }
    }

    #[test]
    fn parametrix_matches_mehler_to_fourth_order() {
        let w = PhasePoint::xy(1.0, 0.0);
        for t in [0.2, 0.1] {
            let ratio = mehler_parametrix_error(t, &w, 3).unwrap()
                / mehler_parametrix_error(t / 2.0, &w, 3).unwrap();
            assert!((8.0..=24.0).contains(&ratio), "t={t}: {ratio}");
        }
    }
}
