//! Phase-space symbols `a(x, ξ)`: evaluation in the log domain, derivative
//! jets, hypoellipticity diagnostics and positivisation.
//!
//! Radial symbols are given by a profile `g(u)` of `u = |w|²`, which keeps
//! them smooth at the origin.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::jet::{multi_factorial, multi_indices, Jet};
use crate::numerics::{ln_factorial, log_sum_exp, smooth_step, smooth_step_taylor};
use crate::weights::WeightSequence;

/// Hard cap on jet orders.
pub const MAX_JET_ORDER: usize = 12;

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// A point `w = (x_1..x_d, ξ_1..ξ_d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    w: Vec<f64>,
}

impl PhasePoint {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() || !w.len().is_multiple_of(2) {
            return invalid(format!("phase point needs 2d coordinates, got {}", w.len()));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return invalid(format!("phase point {w:?} is not finite"));
        }
        Ok(PhasePoint { w })
    }

    /// `(x, ξ)` in one dimension.
    pub fn xy(x: f64, xi: f64) -> Self {
        PhasePoint { w: vec![x, xi] }
    }

    pub fn coords(&self) -> &[f64] {
        &self.w
    }

    pub fn d(&self) -> usize {
        self.w.len() / 2
    }

    pub fn x(&self) -> &[f64] {
        &self.w[..self.d()]
    }

    pub fn xi(&self) -> &[f64] {
        &self.w[self.d()..]
    }

    pub fn norm_sq(&self) -> f64 {
        self.w.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `⟨w⟩ = (1 + |w|²)^{1/2}`.
    pub fn bracket(&self) -> f64 {
        (1.0 + self.norm_sq()).sqrt()
    }
}

/// `sign · exp(ln_abs)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogValue {
    pub sign: f64,
    pub ln_abs: f64,
}

impl LogValue {
    pub fn from_value(v: f64) -> Self {
        LogValue {
            sign: if v < 0.0 { -1.0 } else { 1.0 },
            ln_abs: v.abs().ln(),
        }
    }

    pub fn positive(ln_abs: f64) -> Self {
        LogValue { sign: 1.0, ln_abs }
    }

    pub fn value(&self) -> f64 {
        self.sign * self.ln_abs.exp()
    }

    pub fn is_zero(&self) -> bool {
        self.ln_abs == f64::NEG_INFINITY
    }

    pub fn scale(&self, c: f64) -> LogValue {
        let mut out = *self;
        out.ln_abs += c.abs().ln();
        if c < 0.0 {
            out.sign = -out.sign;
        }
        out
    }

    /// Sum of two signed log-domain values.
    pub fn add(&self, other: &LogValue) -> LogValue {
        if self.is_zero() {
            return *other;
        }
        if other.is_zero() {
            return *self;
        }
        let (big, small) = if self.ln_abs >= other.ln_abs {
            (self, other)
        } else {
            (other, self)
        };
        let r = (small.ln_abs - big.ln_abs).exp();
        if big.sign == small.sign {
            LogValue {
                sign: big.sign,
                ln_abs: big.ln_abs + r.ln_1p(),
            }
        } else if r == 1.0 {
            LogValue::positive(f64::NEG_INFINITY)
        } else {
            LogValue {
                sign: big.sign,
                ln_abs: big.ln_abs + (-r).ln_1p(),
            }
        }
    }
}

type ValueFn = dyn Fn(f64) -> f64 + Send + Sync;
type TaylorFn = dyn Fn(f64, usize) -> Vec<f64> + Send + Sync;

/// A user-supplied radial profile `g(u)`.
#[derive(Clone)]
pub struct CustomProfile {
    pub label: String,
    pub value: Arc<ValueFn>,
    /// Taylor coefficients `g^{(k)}(u₀)/k!` for `k ≤ order`.
    pub taylor: Option<Arc<TaylorFn>>,
    pub fd_fallback: bool,
}

impl fmt::Debug for CustomProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomProfile")
            .field("label", &self.label)
            .field("taylor", &self.taylor.is_some())
            .field("fd_fallback", &self.fd_fallback)
            .finish()
    }
}

/// Radial profiles `g(u)`, `u = |w|²`.
#[derive(Debug, Clone)]
pub enum RadialProfile {
    /// `Σ c_k u^k`.
    Polynomial(Vec<f64>),
    /// `exp(Σ c_k u^k)`.
    ExpPolynomial(Vec<f64>),
    /// `exp((h⟨w⟩)^{1/s}) = exp(h^{1/s} (1+u)^{1/(2s)})`.
    ExpGevrey { h: f64, s: f64 },
    /// `P(⟨w⟩)` with `P(y) = 1 + Σ_{n≥1} (hy)^n / n^{sn}`.
    EntireSeries { h: f64, s: f64 },
    Custom(CustomProfile),
}

fn poly_value(coeffs: &[f64], u: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c)
}

/// Taylor coefficients of `Σ c_j u^j` at `u0`.
fn poly_taylor(coeffs: &[f64], u0: f64, order: usize) -> Vec<Complex64> {
    (0..=order)
        .map(|k| {
            let v: f64 = coeffs
                .iter()
                .enumerate()
                .skip(k)
                .map(|(j, c)| c * binomial(j, k) * u0.powi((j - k) as i32))
                .sum();
            Complex64::new(v, 0.0)
        })
        .collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    (ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)).exp().round()
}

impl RadialProfile {
    pub fn custom(label: &str, value: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        RadialProfile::Custom(CustomProfile {
            label: label.to_string(),
            value: Arc::new(value),
            taylor: None,
            fd_fallback: true,
        })
    }

    fn validate(&self) -> Result<()> {
        match self {
            RadialProfile::Polynomial(c) | RadialProfile::ExpPolynomial(c) => {
                if c.is_empty() || c.iter().any(|v| !v.is_finite()) {
                    return invalid("radial polynomial needs finite coefficients");
                }
            }
            RadialProfile::ExpGevrey { h, s } | RadialProfile::EntireSeries { h, s } => {
                if !(*h > 0.0 && h.is_finite() && *s > 1.0 && s.is_finite()) {
                    return invalid(format!("need h > 0 and s > 1, got h={h}, s={s}"));
                }
            }
            RadialProfile::Custom(_) => {}
        }
        Ok(())
    }

    /// `g(u)` in log form.
    pub fn ln_eval(&self, u: f64) -> LogValue {
        match self {
            RadialProfile::Polynomial(c) => LogValue::from_value(poly_value(c, u)),
            RadialProfile::ExpPolynomial(c) => LogValue::positive(poly_value(c, u)),
            RadialProfile::ExpGevrey { h, s } => {
                LogValue::positive(h.powf(1.0 / s) * (1.0 + u).powf(0.5 / s))
            }
            RadialProfile::EntireSeries { h, s } => {
                LogValue::positive(entire_series_ln_taylor(*h, *s, (1.0 + u).sqrt(), 0)[0])
            }
            RadialProfile::Custom(c) => LogValue::from_value((c.value)(u)),
        }
    }

    pub fn value(&self, u: f64) -> f64 {
        self.ln_eval(u).value()
    }

    /// Taylor coefficients `g^{(k)}(u₀)/k!`, `k ≤ order`.
    pub fn taylor(&self, u0: f64, order: usize) -> Result<Vec<Complex64>> {
        let coeffs = match self {
            RadialProfile::Polynomial(c) => poly_taylor(c, u0, order),
            RadialProfile::ExpPolynomial(c) => {
                let inner = Jet::from_taylor(1, order, poly_taylor(c, u0, order));
                univariate(&inner.exp())
            }
            RadialProfile::ExpGevrey { h, s } => {
                let one_plus_u = Jet::variable(1, order, 0, 1.0 + u0);
                let inner = one_plus_u
                    .powf(0.5 / s)
                    .scale(Complex64::new(h.powf(1.0 / s), 0.0));
                univariate(&inner.exp())
            }
            RadialProfile::EntireSeries { h, s } => {
                let y = Jet::variable(1, order, 0, 1.0 + u0).sqrt();
                let py: Vec<Complex64> = entire_series_ln_taylor(*h, *s, y.value().re, order)
                    .into_iter()
                    .map(|l| Complex64::new(l.exp(), 0.0))
                    .collect();
                univariate(&y.compose(&py))
            }
            RadialProfile::Custom(c) => {
                if let Some(t) = &c.taylor {
                    let v = t(u0, order);
                    if v.len() <= order {
                        return Err(Error::Capability(format!(
                            "derivative oracle of '{}' returned {} coefficients, {} needed",
                            c.label,
                            v.len(),
                            order + 1
                        )));
                    }
                    v[..=order].iter().map(|x| Complex64::new(*x, 0.0)).collect()
                } else if c.fd_fallback {
                    fd_taylor_1d(&*c.value, u0, order)
                } else {
                    return Err(Error::Capability(format!(
                        "profile '{}' has no derivative oracle and finite differences are disabled",
                        c.label
                    )));
                }
            }
        };
        if coeffs.iter().any(|c| !c.re.is_finite()) {
            return Err(Error::Overflow(format!(
                "profile derivatives at u = {u0} exceed double range"
            )));
        }
        Ok(coeffs)
    }
}

fn univariate(jet: &Jet) -> Vec<Complex64> {
    jet.taylor_coeffs().to_vec()
}

/// `ln` of the Taylor coefficients of `P(y) = 1 + Σ (hy)^n / n^{sn}` at `y0`.
pub fn entire_series_ln_taylor(h: f64, s: f64, y0: f64, order: usize) -> Vec<f64> {
    let ln_hy = (h * y0).ln();
    (0..=order)
        .map(|k| {
            let mut terms = Vec::new();
            if k == 0 {
                terms.push(0.0);
            }
            let mut peak = f64::NEG_INFINITY;
            let mut previous = f64::NEG_INFINITY;
            let mut n = k.max(1);
            loop {
                let nf = n as f64;
                let ln_binom = ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k);
                let t = ln_binom + nf * ln_hy - k as f64 * y0.ln() - s * nf * nf.ln();
                terms.push(t);
                peak = peak.max(t);
                if t < previous && t < peak - 40.0 {
                    break;
                }
                previous = t;
                n += 1;
            }
            log_sum_exp(&terms)
        })
        .collect()
}

/// Fornberg weights: `weights[k][j]` approximates the `k`-th derivative at
/// `z` from the value at `nodes[j]`.
pub fn fornberg_weights(z: f64, nodes: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Stencil half-width for a fourth-order accurate central `k`-th derivative.
fn stencil_half_width(k: usize) -> usize {
    k.div_ceil(2) + 1
}

/// Step for a `k`-th derivative relative to the base step; grows with `k`
/// to balance truncation against cancellation.
fn scaled_step(base: f64, k: usize) -> f64 {
    base * 10f64.powf(0.6 * (k.max(1) - 1) as f64)
}

fn fd_taylor_1d(g: &ValueFn, u0: f64, order: usize) -> Vec<Complex64> {
    let base = 1e-4 * (1.0 + u0.abs());
    let mut out = vec![Complex64::new(g(u0), 0.0)];
    for k in 1..=order {
        let h = scaled_step(base, k);
        let half = stencil_half_width(k) as f64;
        // shift the stencil forward when it would cross u = 0
        let centre = half.min(u0 / h).max(0.0);
        let nodes: Vec<f64> = (0..(2 * stencil_half_width(k) + 1))
            .map(|j| u0 + h * (j as f64 - centre))
            .collect();
        let w = fornberg_weights(u0, &nodes, k);
        let d: f64 = nodes.iter().zip(&w[k]).map(|(x, c)| c * g(*x)).sum();
        out.push(Complex64::new(d / crate::jet::factorial(k), 0.0));
    }
    out
}

/// Phase-space symbols.
#[derive(Debug, Clone)]
pub enum Symbol {
    Radial { profile: RadialProfile, d: usize },
    /// `Σ c_α w^α` over monomials in `(x, ξ)`.
    Polynomial { terms: Vec<(Vec<u8>, f64)>, d: usize },
    /// `Σ_k a_k(x_k, ξ_k)` with one-dimensional parts.
    SeparableSum { parts: Vec<Symbol> },
    /// `a + z`.
    Shifted { base: Box<Symbol>, z: Complex64 },
    /// `χ + (1 − χ) a` with a radial cutoff `χ` equal to 1 on `|w| ≤ r_in`
    /// and 0 on `|w| ≥ r_out`.
    Positivized {
        base: Box<Symbol>,
        r_in: f64,
        r_out: f64,
    },
}

impl Symbol {
    pub fn radial(profile: RadialProfile, d: usize) -> Result<Self> {
        profile.validate()?;
        if d == 0 {
            return invalid("dimension must be at least 1");
        }
        Ok(Symbol::Radial { profile, d })
    }

    /// Radial polynomial `Σ c_k |w|^{2k}`.
    pub fn radial_poly(coeffs: &[f64], d: usize) -> Result<Self> {
        Self::radial(RadialProfile::Polynomial(coeffs.to_vec()), d)
    }

    pub fn exp_gevrey(h: f64, s: f64, d: usize) -> Result<Self> {
        Self::radial(RadialProfile::ExpGevrey { h, s }, d)
    }

    pub fn entire_series(h: f64, s: f64, d: usize) -> Result<Self> {
        Self::radial(RadialProfile::EntireSeries { h, s }, d)
    }

    pub fn polynomial(terms: Vec<(Vec<u8>, f64)>, d: usize) -> Result<Self> {
        if d == 0 || terms.iter().any(|(a, c)| a.len() != 2 * d || !c.is_finite()) {
            return invalid("polynomial terms need 2d exponents and finite coefficients");
        }
        Ok(Symbol::Polynomial { terms, d })
    }

    pub fn separable_sum(parts: Vec<Symbol>) -> Result<Self> {
        if parts.is_empty() || parts.iter().any(|p| p.d() != 1) {
            return invalid("separable sums need one-dimensional parts");
        }
        Ok(Symbol::SeparableSum { parts })
    }

    pub fn shifted(base: Symbol, z: Complex64) -> Self {
        Symbol::Shifted {
            base: Box::new(base),
            z,
        }
    }

    pub fn d(&self) -> usize {
        match self {
            Symbol::Radial { d, .. } | Symbol::Polynomial { d, .. } => *d,
            Symbol::SeparableSum { parts } => parts.len(),
            Symbol::Shifted { base, .. } | Symbol::Positivized { base, .. } => base.d(),
        }
    }

    pub fn is_real(&self) -> bool {
        match self {
            Symbol::Shifted { base, z } => z.im == 0.0 && base.is_real(),
            Symbol::Positivized { base, .. } => base.is_real(),
            Symbol::SeparableSum { parts } => parts.iter().all(Symbol::is_real),
            _ => true,
        }
    }

    /// The profile when the symbol is radial.
    pub fn radial_profile(&self) -> Option<&RadialProfile> {
        match self {
            Symbol::Radial { profile, .. } => Some(profile),
            _ => None,
        }
    }

    fn check_point(&self, w: &PhasePoint) -> Result<()> {
        if w.d() != self.d() {
            return invalid(format!(
                "point has dimension {} but the symbol has {}",
                w.d(),
                self.d()
            ));
        }
        Ok(())
    }

    /// `a(w)` as sign and log-magnitude; real symbols only.
    pub fn evaluate(&self, w: &PhasePoint) -> Result<LogValue> {
        self.check_point(w)?;
        self.evaluate_unchecked(w)
    }

    fn evaluate_unchecked(&self, w: &PhasePoint) -> Result<LogValue> {
        match self {
            Symbol::Radial { profile, .. } => Ok(profile.ln_eval(w.norm_sq())),
            Symbol::Polynomial { terms, .. } => Ok(LogValue::from_value(poly_eval(terms, w.coords()))),
            Symbol::SeparableSum { parts } => {
                let d = parts.len();
                let mut acc = LogValue::positive(f64::NEG_INFINITY);
                for (k, part) in parts.iter().enumerate() {
                    let p = PhasePoint::xy(w.coords()[k], w.coords()[d + k]);
                    acc = acc.add(&part.evaluate_unchecked(&p)?);
                }
                Ok(acc)
            }
            Symbol::Shifted { base, z } => {
                if z.im != 0.0 {
                    return Err(Error::Capability(
                        "symbol is complex-valued; use value() instead".to_string(),
                    ));
                }
                Ok(base.evaluate_unchecked(w)?.add(&LogValue::from_value(z.re)))
            }
            Symbol::Positivized { base, r_in, r_out } => {
                let r = w.norm();
                if r >= *r_out {
                    return base.evaluate_unchecked(w);
                }
                let chi = smooth_step((r - r_in) / (r_out - r_in));
                if chi == 1.0 {
                    return Ok(LogValue::positive(0.0));
                }
                let a = base.evaluate_unchecked(w)?;
                Ok(LogValue::from_value(chi).add(&a.scale(1.0 - chi)))
            }
        }
    }

    /// `a(w)` in the linear domain; works for complex symbols.
    pub fn value(&self, w: &PhasePoint) -> Result<Complex64> {
        self.check_point(w)?;
        self.value_unchecked(w)
    }

    fn value_unchecked(&self, w: &PhasePoint) -> Result<Complex64> {
        match self {
            Symbol::Shifted { base, z } => Ok(base.value_unchecked(w)? + z),
            Symbol::SeparableSum { parts } => {
                let d = parts.len();
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, part) in parts.iter().enumerate() {
                    acc += part.value_unchecked(&PhasePoint::xy(w.coords()[k], w.coords()[d + k]))?;
                }
                Ok(acc)
            }
            _ => Ok(Complex64::new(self.evaluate_unchecked(w)?.value(), 0.0)),
        }
    }

    /// Taylor jet of order `order` at `w` by exact Taylor arithmetic.
    pub fn jet(&self, w: &PhasePoint, order: usize) -> Result<Jet> {
        self.check_point(w)?;
        if order > MAX_JET_ORDER {
            return invalid(format!("jet order {order} exceeds the cap {MAX_JET_ORDER}"));
        }
        let jet = self.jet_unchecked(w, order)?;
        if jet.taylor_coeffs().iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::Overflow(format!("jet at {:?} exceeds double range", w.coords())));
        }
        Ok(jet)
    }

    fn jet_unchecked(&self, w: &PhasePoint, order: usize) -> Result<Jet> {
        let n = w.coords().len();
        match self {
            Symbol::Radial { profile, .. } => {
                let u = squared_norm_jet(w, order);
                Ok(u.compose(&profile.taylor(w.norm_sq(), order)?))
            }
            Symbol::Polynomial { terms, .. } => {
                let coords = Jet::coordinates(w.coords(), order);
                let mut acc = Jet::zero(n, order);
                for (alpha, c) in terms {
                    let mut m = Jet::constant(n, order, Complex64::new(*c, 0.0));
                    for (i, &a) in alpha.iter().enumerate() {
                        if a > 0 {
                            m = &m * &coords[i].powi(a as u32);
                        }
                    }
                    acc = &acc + &m;
                }
                Ok(acc)
            }
            Symbol::SeparableSum { parts } => {
                let d = parts.len();
                let mut acc = Jet::zero(n, order);
                for (k, part) in parts.iter().enumerate() {
                    let p = PhasePoint::xy(w.coords()[k], w.coords()[d + k]);
                    acc = &acc + &part.jet_unchecked(&p, order)?.embed(n, &[k, d + k]);
                }
                Ok(acc)
            }
            Symbol::Shifted { base, z } => Ok(base.jet_unchecked(w, order)?.add_scalar(*z)),
            Symbol::Positivized { base, r_in, r_out } => {
                let r = w.norm();
                if r >= *r_out {
                    return base.jet_unchecked(w, order);
                }
                if r <= *r_in {
                    return Ok(Jet::constant(n, order, ONE));
                }
                let width = r_out - r_in;
                let tau = squared_norm_jet(w, order)
                    .sqrt()
                    .add_scalar(Complex64::new(-r_in, 0.0))
                    .scale(Complex64::new(1.0 / width, 0.0));
                let chi = tau.compose(&smooth_step_taylor((r - r_in) / width, order));
                let a = base.jet_unchecked(w, order)?;
                let one_minus = chi.scale(-ONE).add_scalar(ONE);
                Ok(&chi + &(&one_minus * &a))
            }
        }
    }

    /// Jet by tensor-product central differences of [`Symbol::value`].
    ///
    /// The base step is `max(1e-4, 1e-4⟨w⟩)` and grows with the total order.
    pub fn jet_fd(&self, w: &PhasePoint, order: usize) -> Result<Jet> {
        self.check_point(w)?;
        let n = w.coords().len();
        let base = (1e-4 * w.bracket()).max(1e-4);
        let layout = crate::jet::layout(n, order);
        let mut coeffs = Vec::with_capacity(layout.monomials().len());
        for alpha in layout.monomials() {
            let total: usize = alpha.iter().map(|&a| a as usize).sum();
            let h = scaled_step(base, total);
            let axes: Vec<(usize, Vec<f64>, Vec<f64>)> = alpha
                .iter()
                .enumerate()
                .filter(|(_, &a)| a > 0)
                .map(|(i, &a)| {
                    let half = stencil_half_width(a as usize) as i64;
                    let offsets: Vec<f64> = (-half..=half).map(|j| j as f64 * h).collect();
                    let weights = fornberg_weights(0.0, &offsets, a as usize)[a as usize].clone();
                    (i, offsets, weights)
                })
                .collect();
            let mut sum = Complex64::new(0.0, 0.0);
            let mut idx = vec![0usize; axes.len()];
            loop {
                let mut p = w.coords().to_vec();
                let mut weight = 1.0;
                for (k, (i, offsets, weights)) in axes.iter().enumerate() {
                    p[*i] += offsets[idx[k]];
                    weight *= weights[idx[k]];
                }
                sum += self.value_unchecked(&PhasePoint { w: p })? * weight;
                let mut k = 0;
                while k < axes.len() {
                    idx[k] += 1;
                    if idx[k] < axes[k].1.len() {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                }
                if k == axes.len() {
                    break;
                }
            }
            coeffs.push(sum / multi_factorial(alpha));
        }
        Ok(Jet::from_taylor(n, order, coeffs))
    }
}

fn poly_eval(terms: &[(Vec<u8>, f64)], w: &[f64]) -> f64 {
    terms
        .iter()
        .map(|(alpha, c)| {
            c * alpha
                .iter()
                .zip(w)
                .map(|(&a, x)| x.powi(a as i32))
                .product::<f64>()
        })
        .sum()
}

fn squared_norm_jet(w: &PhasePoint, order: usize) -> Jet {
    let n = w.coords().len();
    Jet::coordinates(w.coords(), order)
        .iter()
        .fold(Jet::zero(n, order), |acc, c| &acc + &(c * c))
}

/// Deterministic unit directions in `ℝ^{2d}`; equally spaced angles for `d = 1`.
pub fn sample_directions(d: usize, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            if d == 1 {
                return vec![theta.cos(), theta.sin()];
            }
            let golden = 0.5 * (5f64.sqrt() - 1.0);
            let v: Vec<f64> = (0..2 * d)
                .map(|i| (theta * (i + 1) as f64 + 2.0 * std::f64::consts::PI * golden * (i * i) as f64).cos())
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect()
}

/// Lower-bound fit `|a(w)| ≥ c·exp(−M(m|x|) − M(m|ξ|))` on the scanned grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundFit {
    pub c: f64,
    /// Smallest `m` on the dyadic grid `2^{-10}..2^{10}`; `None` if none fits.
    pub m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypoellipticityReport {
    pub b: f64,
    pub order: usize,
    pub rho: f64,
    /// `per_order[k]`: grid sup of `|∂^α a|⟨w⟩^{ρk}/(|a| A_k)` over `|α| = k`.
    pub per_order: Vec<f64>,
    /// Log-log slope of the running sup against `⟨w⟩` on the outer half.
    pub growth_exponents: Vec<f64>,
    /// Orders whose constant keeps growing with the radius.
    pub growing: Vec<bool>,
    pub lower_bound: LowerBoundFit,
    pub points_scanned: usize,
}

impl HypoellipticityReport {
    pub fn bounded(&self) -> bool {
        self.growing.iter().all(|g| !g)
    }
}

/// Scans the annulus `B ≤ |w| ≤ R_out` on a polar grid.
pub fn hypoellipticity_report(
    sym: &Symbol,
    b: f64,
    r_out: f64,
    grid_n: usize,
    order: usize,
    rho: f64,
    weights: &WeightSequence,
) -> Result<HypoellipticityReport> {
    if !(b >= 0.0 && b < r_out) || grid_n < 8 || !(rho > 0.0 && rho <= 1.0) {
        return invalid("need 0 <= B < R_out, grid_n >= 8 and rho in (0, 1]");
    }
    let d = sym.d();
    let ln_a = weights.ln_values(order)?;
    let dirs = sample_directions(d, grid_n);
    let radii: Vec<f64> = (0..grid_n)
        .map(|i| b + (r_out - b) * i as f64 / (grid_n - 1) as f64)
        .collect();
    let monomials: Vec<Vec<Vec<u8>>> = (0..=order).map(|k| multi_indices(2 * d, k)).collect();

    // per_radius[k][i]: sup over directions at radius i, in log form
    let mut per_radius = vec![vec![f64::NEG_INFINITY; grid_n]; order + 1];
    let mut min_inner = f64::INFINITY;
    let mut samples = Vec::with_capacity(grid_n * grid_n);
    for (i, &r) in radii.iter().enumerate() {
        for dir in &dirs {
            let p = PhasePoint::new(dir.iter().map(|v| v * r).collect())?;
            let a = sym.evaluate(&p)?;
            if a.is_zero() {
                return Err(Error::Degenerate(format!("symbol vanishes at {:?}", p.coords())));
            }
            let jet = sym.jet(&p, order)?;
            let a0 = jet.value().norm();
            let ln_br = p.bracket().ln();
            for (k, ms) in monomials.iter().enumerate() {
                for alpha in ms {
                    let v = jet.partial(alpha).norm();
                    if v > 0.0 {
                        let l = v.ln() + rho * k as f64 * ln_br - a0.ln() - ln_a[k];
                        per_radius[k][i] = per_radius[k][i].max(l);
                    }
                }
            }
            if i == 0 {
                min_inner = min_inner.min(a.ln_abs);
            }
            let xn = p.x().iter().map(|v| v * v).sum::<f64>().sqrt();
            let yn = p.xi().iter().map(|v| v * v).sum::<f64>().sqrt();
            samples.push((a.ln_abs, xn, yn));
        }
    }

    let per_order: Vec<f64> = per_radius
        .iter()
        .map(|v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max).exp())
        .collect();
    let brackets: Vec<f64> = radii.iter().map(|r| (1.0 + r * r).sqrt().ln()).collect();
    let growth_exponents: Vec<f64> = per_radius
        .iter()
        .map(|v| envelope_slope(&brackets, v))
        .collect();
    let growing = growth_exponents.iter().map(|g| *g > 0.5).collect();

    let ln_c_ref = min_inner.min(0.0);
    let mut fit = LowerBoundFit {
        c: ln_c_ref.exp(),
        m: None,
    };
    for e in -10..=10 {
        let m = 2f64.powi(e);
        let assoc = |t: f64| -> Result<f64> {
            if t * m <= 0.0 {
                Ok(0.0)
            } else {
                weights.associated_function(t * m, 8)
            }
        };
        let mut worst = f64::INFINITY;
        for &(ln_abs, xn, yn) in &samples {
            worst = worst.min(ln_abs + assoc(xn)? + assoc(yn)?);
        }
        if worst >= ln_c_ref - 1e-12 {
            fit.m = Some(m);
            break;
        }
    }

    Ok(HypoellipticityReport {
        b,
        order,
        rho,
        per_order,
        growth_exponents,
        growing,
        lower_bound: fit,
        points_scanned: samples.len(),
    })
}

/// Least-squares slope of the running maximum of `ys` against `xs` on the
/// outer half of the grid.
fn envelope_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let mut running = f64::NEG_INFINITY;
    let env: Vec<f64> = ys
        .iter()
        .map(|y| {
            running = running.max(*y);
            running
        })
        .collect();
    let start = xs.len() / 2;
    let pts: Vec<(f64, f64)> = (start..xs.len())
        .filter(|&i| env[i].is_finite())
        .map(|i| (xs[i], env[i]))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// `b = χ + (1 − χ)a`, equal to 1 near the origin and to `a` on `|w| ≥ r_out`.
pub fn positivize(sym: &Symbol, r_in: f64, r_out: f64) -> Result<Symbol> {
    if !(r_in > 0.0 && r_in < r_out && r_out.is_finite()) {
        return invalid(format!("need 0 < r_in < r_out, got {r_in}, {r_out}"));
    }
    if !sym.is_real() {
        return Err(Error::Precondition("positivize needs a real symbol".to_string()));
    }
    let dirs = sample_directions(sym.d(), 64);
    let r_max = (4.0 * r_out).max(r_out + 10.0);
    for i in 0..64 {
        let r = r_in + (r_max - r_in) * i as f64 / 63.0;
        for dir in &dirs {
            let p = PhasePoint::new(dir.iter().map(|v| v * r).collect())?;
            let a = sym.evaluate(&p)?;
            if a.sign <= 0.0 || a.is_zero() {
                return Err(Error::Precondition(format!(
                    "symbol is not positive at {:?} outside r_in",
                    p.coords()
                )));
            }
        }
    }
    Ok(Symbol::Positivized {
        base: Box::new(sym.clone()),
        r_in,
        r_out,
    })
}

/// Serializable description of a symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SymbolSpec {
    /// Profile `Σ c_k u^k`, or its exponential when `exp` is set.
    Radial {
        coeffs: Vec<f64>,
        #[serde(default)]
        exp: bool,
        #[serde(default = "one")]
        d: usize,
    },
    Polynomial {
        terms: Vec<PolyTerm>,
        #[serde(default = "one")]
        d: usize,
    },
    ExpGevrey {
        h: f64,
        s: f64,
        #[serde(default = "one")]
        d: usize,
    },
    EntireSeries {
        h: f64,
        s: f64,
        #[serde(default = "one")]
        d: usize,
    },
    SeparableSum { parts: Vec<SymbolSpec> },
    Shifted {
        base: Box<SymbolSpec>,
        re: f64,
        #[serde(default)]
        im: f64,
    },
    Positivized {
        base: Box<SymbolSpec>,
        r_in: f64,
        r_out: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyTerm {
    pub exponents: Vec<u8>,
    pub coeff: f64,
}

fn one() -> usize {
    1
}

impl SymbolSpec {
    pub fn build(&self) -> Result<Symbol> {
        match self {
            SymbolSpec::Radial { coeffs, exp, d } => {
                let profile = if *exp {
                    RadialProfile::ExpPolynomial(coeffs.clone())
                } else {
                    RadialProfile::Polynomial(coeffs.clone())
                };
                Symbol::radial(profile, *d)
            }
            SymbolSpec::Polynomial { terms, d } => Symbol::polynomial(
                terms.iter().map(|t| (t.exponents.clone(), t.coeff)).collect(),
                *d,
            ),
            SymbolSpec::ExpGevrey { h, s, d } => Symbol::exp_gevrey(*h, *s, *d),
            SymbolSpec::EntireSeries { h, s, d } => Symbol::entire_series(*h, *s, *d),
            SymbolSpec::SeparableSum { parts } => {
                Symbol::separable_sum(parts.iter().map(SymbolSpec::build).collect::<Result<_>>()?)
            }
            SymbolSpec::Shifted { base, re, im } => {
                Ok(Symbol::shifted(base.build()?, Complex64::new(*re, *im)))
            }
            SymbolSpec::Positivized { base, r_in, r_out } => positivize(&base.build()?, *r_in, *r_out),
        }
    }
}
