//! Formal-series calculus: sharp-product layers, parametrix and heat
//! recursions, anti-Wick expansion terms and excision.
//!
//! Jets hold plain partial derivatives; the `D_x = −i∂_x` factors of the
//! Weyl composition formula are applied here.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::jet::{multi_factorial, multi_indices, Jet};
use crate::numerics::{gamma, smooth_step};
use crate::symbols::{PhasePoint, Symbol};
use crate::weights::WeightSequence;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Largest heat-term count supported by [`heat_terms`].
pub const MAX_HEAT_TERMS: usize = 6;
/// Largest `k` accepted by [`anti_wick_term`].
pub const MAX_ANTI_WICK_K: usize = 6;

/// Splits `(x, ξ)` exponents into the multi-index of `f` and of `g` used by
/// the layer `T_l`: `f` gets `∂_ξ^α ∂_x^β`, `g` gets `∂_ξ^β ∂_x^α`.
fn layer_pairs(d: usize, l: usize) -> Vec<(Vec<u8>, Vec<u8>, Complex64)> {
    let mut out = Vec::new();
    for ab in multi_indices(2 * d, l) {
        let (alpha, beta) = ab.split_at(d);
        let nb: usize = beta.iter().map(|&v| v as usize).sum();
        // (−1)^{|β|} (−i)^{|α|+|β|} / (α! β! 2^l)
        let sign = if nb.is_multiple_of(2) { 1.0 } else { -1.0 };
        let phase = match l % 4 {
            0 => ONE,
            1 => Complex64::new(0.0, -1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, 1.0),
        };
        let c = phase * sign / (multi_factorial(alpha) * multi_factorial(beta) * 2f64.powi(l as i32));
        let f_idx = [beta, alpha].concat();
        let g_idx = [alpha, beta].concat();
        out.push((f_idx, g_idx, c));
    }
    out
}

/// The order-`l` sharp layer `T_l(f, g)` as a jet of order `min(D_f, D_g) − l`.
pub fn sharp_layer(f: &Jet, g: &Jet, l: usize) -> Result<Jet> {
    let order = f.order().min(g.order());
    if order < l {
        return Err(Error::Capability(format!(
            "sharp layer {l} needs jets of order {l}, have {order}"
        )));
    }
    let n = f.nvars();
    let mut acc = Jet::zero(n, order - l);
    for (fi, gi, c) in layer_pairs(n / 2, l) {
        let term = &f.derivative(&fi).truncate(order - l) * &g.derivative(&gi).truncate(order - l);
        acc = &acc + &term.scale(c);
    }
    Ok(acc)
}

/// `c_j(w) = Σ_{s+k+l=j} T_l(a_s, b_k)(w)` for term jets `a_s`, `b_k` at `w`.
pub fn sharp_term(a_terms: &[Jet], b_terms: &[Jet], j: usize) -> Result<Complex64> {
    let mut acc = ZERO;
    for s in 0..=j {
        for k in 0..=(j - s) {
            let l = j - s - k;
            let (Some(a), Some(b)) = (a_terms.get(s), b_terms.get(k)) else {
                continue;
            };
            acc += sharp_layer(a, b, l)?.value();
        }
    }
    Ok(acc)
}

/// Sharp layers `c_0..c_{J-1}` of two single symbols at `w`.
pub fn sharp_layers(a: &Symbol, b: &Symbol, layers: usize, w: &PhasePoint) -> Result<Vec<Complex64>> {
    let order = layers.saturating_sub(1);
    let ja = a.jet(w, order)?;
    let jb = b.jet(w, order)?;
    (0..layers).map(|l| Ok(sharp_layer(&ja, &jb, l)?.value())).collect()
}

/// Jets of `q_0..q_{J−1}` where `q_j` has order `order − j`.
pub fn parametrix_jets(a: &Symbol, terms: usize, w: &PhasePoint, z: Complex64, order: usize) -> Result<Vec<Jet>> {
    if terms == 0 {
        return Ok(Vec::new());
    }
    if order + 1 < terms {
        return invalid("parametrix jets need order >= J - 1");
    }
    let ja = a.jet(w, order)?;
    let shifted = ja.add_scalar(z);
    if shifted.value().norm() == 0.0 {
        return Err(Error::Singularity(format!(
            "a + z vanishes at {:?}",
            w.coords()
        )));
    }
    let q0 = shifted.recip();
    let mut qs = vec![q0.clone()];
    for j in 1..terms {
        let mut sum = Jet::zero(ja.nvars(), order - j);
        for s in 1..=j {
            let layer = sharp_layer(&qs[j - s], &ja, s)?;
            sum = &sum + &layer.truncate(order - j);
        }
        qs.push((&q0.truncate(order - j) * &sum).scale(-ONE));
    }
    Ok(qs)
}

/// Values `q_0..q_{J−1}` of the (resolvent) parametrix of `a + z` at `w`.
pub fn parametrix_terms(a: &Symbol, terms: usize, w: &PhasePoint, z: Complex64) -> Result<Vec<Complex64>> {
    Ok(parametrix_jets(a, terms, w, z, terms.saturating_sub(1))?
        .iter()
        .map(Jet::value)
        .collect())
}

/// Polynomial in `t` with jet coefficients.
#[derive(Clone, Debug)]
struct TPoly(Vec<Jet>);

impl TPoly {
    fn order(&self) -> usize {
        self.0.iter().map(Jet::order).min().unwrap_or(0)
    }

    fn truncate(&self, order: usize) -> TPoly {
        TPoly(self.0.iter().map(|c| c.truncate(order)).collect())
    }

    fn mul(&self, other: &TPoly) -> TPoly {
        let order = self.order().min(other.order());
        let n = self.0[0].nvars();
        let mut out = vec![Jet::zero(n, order); self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] = &out[i + j] + &(&a.truncate(order) * &b.truncate(order));
            }
        }
        TPoly(out)
    }

    fn add(&self, other: &TPoly) -> TPoly {
        let order = self.order().min(other.order());
        let n = self.0[0].nvars();
        let len = self.0.len().max(other.0.len());
        let out = (0..len)
            .map(|k| {
                let mut acc = Jet::zero(n, order);
                if let Some(a) = self.0.get(k) {
                    acc = &acc + &a.truncate(order);
                }
                if let Some(b) = other.0.get(k) {
                    acc = &acc + &b.truncate(order);
                }
                acc
            })
            .collect();
        TPoly(out)
    }

    /// `∫_0^t`, scaled by `factor`.
    fn integrate(&self, factor: Complex64) -> TPoly {
        let n = self.0[0].nvars();
        let order = self.order();
        let mut out = vec![Jet::zero(n, order)];
        for (k, c) in self.0.iter().enumerate() {
            out.push(c.scale(factor / (k as f64 + 1.0)));
        }
        TPoly(out)
    }
}

/// `Σ_n (sign·t)^n δ^n / n!` for a nilpotent jet `δ`.
fn exp_series(delta: &Jet, sign: f64) -> TPoly {
    let n = delta.nvars();
    let order = delta.order();
    let mut coeffs = vec![Jet::constant(n, order, ONE)];
    let mut power = Jet::constant(n, order, ONE);
    for k in 1..=order {
        power = &power * delta;
        coeffs.push(power.scale(Complex64::new(sign.powi(k as i32) / crate::jet::factorial(k), 0.0)));
    }
    TPoly(coeffs)
}

/// Coefficients `u_{l,j}(w)` (index `l`, starting at `t^0`) for `j < J`,
/// with `u_j(t, w) = e^{−t b(w)} Σ_l t^l u_{l,j}(w)`.
///
/// The terms solve `∂_t u_j + Σ_{k+l=j} T_l(b, u_k) = 0`, `u_j(0) = δ_{j0}`.
/// Near `w` every factor is written as `e^{−t b(w)}` times a polynomial in
/// `t` whose coefficients are jets, so the `t`-integration is exact.
pub fn heat_coefficients(b: &Symbol, terms: usize, w: &PhasePoint) -> Result<Vec<Vec<Complex64>>> {
    if terms > MAX_HEAT_TERMS {
        return Err(Error::Capability(format!(
            "heat terms are supported up to J = {MAX_HEAT_TERMS}, got {terms}"
        )));
    }
    if terms == 0 {
        return Ok(Vec::new());
    }
    let order = terms - 1;
    let jb = b.jet(w, order)?;
    let delta = jb.add_scalar(-jb.value());
    let e_plus = exp_series(&delta, -1.0);
    let e_minus = exp_series(&delta, 1.0);
    // u_k = e^{−t b(w)} · E · V_k, stored as U_k = E · V_k
    let mut us: Vec<TPoly> = vec![e_plus.clone()];
    let mut vs: Vec<TPoly> = vec![TPoly(vec![Jet::constant(jb.nvars(), order, ONE)])];
    for j in 1..terms {
        let target = order - j;
        let mut w_poly = TPoly(vec![Jet::zero(jb.nvars(), target)]);
        for l in 1..=j {
            let layer = TPoly(
                us[j - l]
                    .0
                    .iter()
                    .map(|c| Ok(sharp_layer(&jb, c, l)?.truncate(target)))
                    .collect::<Result<_>>()?,
            );
            w_poly = w_poly.add(&layer);
        }
        let v = e_minus.truncate(target).mul(&w_poly).integrate(-ONE);
        us.push(e_plus.truncate(target).mul(&v));
        vs.push(v);
    }
    Ok(vs
        .iter()
        .map(|v| {
            let mut c: Vec<Complex64> = v.0.iter().map(Jet::value).collect();
            while c.len() > 1 && c.last().is_some_and(|x| x.norm() == 0.0) {
                c.pop();
            }
            c
        })
        .collect())
}

/// Heat-parametrix term `u_j(t, w) = e^{−t b(w)} Σ_l t^l u_{l,j}(w)`.
#[derive(Clone, Debug)]
pub struct HeatTermPolynomial {
    pub j: usize,
    symbol: Symbol,
}

impl HeatTermPolynomial {
    /// `u_{l,j}(w)` for `l = 0..`.
    pub fn coefficients(&self, w: &PhasePoint) -> Result<Vec<Complex64>> {
        Ok(heat_coefficients(&self.symbol, self.j + 1, w)?.swap_remove(self.j))
    }

    pub fn eval(&self, t: f64, w: &PhasePoint) -> Result<Complex64> {
        let coeffs = self.coefficients(w)?;
        let b = self.symbol.value(w)?;
        let poly = coeffs.iter().rev().fold(ZERO, |acc, c| acc * t + c);
        Ok((-t * b).exp() * poly)
    }
}

/// Heat-parametrix terms `u_0..u_{J−1}` of `b`.
pub fn heat_terms(b: &Symbol, terms: usize) -> Result<Vec<HeatTermPolynomial>> {
    if terms > MAX_HEAT_TERMS {
        return Err(Error::Capability(format!(
            "heat terms are supported up to J = {MAX_HEAT_TERMS}, got {terms}"
        )));
    }
    if !b.is_real() {
        return invalid("heat terms need a real symbol");
    }
    Ok((0..terms)
        .map(|j| HeatTermPolynomial {
            j,
            symbol: b.clone(),
        })
        .collect())
}

/// One-dimensional Gaussian moment `π^{−1/2} ∫ t^k e^{−t²} dt`.
fn gaussian_moment(k: u8) -> f64 {
    if k % 2 == 1 {
        0.0
    } else {
        gamma((k as f64 + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
    }
}

/// `c_{α,β} = π^{−d} ∫ η^α y^β e^{−|y|²−|η|²} dy dη`.
pub fn anti_wick_coeff(alpha: &[u8], beta: &[u8]) -> f64 {
    alpha.iter().chain(beta).map(|&k| gaussian_moment(k)).product()
}

/// Compositions of `k` into `j` positive parts.
fn compositions(k: usize, j: usize) -> Vec<Vec<usize>> {
    if j == 0 {
        return if k == 0 { vec![Vec::new()] } else { Vec::new() };
    }
    let mut out = Vec::new();
    for first in 1..=k.saturating_sub(j - 1) {
        for mut rest in compositions(k - first, j - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// The anti-Wick expansion term `p'_{k,j}(w)` of `b`.
pub fn anti_wick_term(b: &Symbol, k: usize, j: usize, w: &PhasePoint) -> Result<f64> {
    if k > MAX_ANTI_WICK_K {
        return Err(Error::Capability(format!(
            "anti-Wick terms are enumerated up to k = {MAX_ANTI_WICK_K}, got {k}"
        )));
    }
    if k == 0 && j == 0 {
        return Ok(b.value(w)?.re);
    }
    if j == 0 || k < j {
        return Ok(0.0);
    }
    let d = b.d();
    let jet = b.jet(w, 2 * k)?;
    // only even exponents contribute; each part is (2γ) with |γ| = l_i
    let mut total = 0.0;
    for parts in compositions(k, j) {
        let choices: Vec<Vec<Vec<u8>>> = parts
            .iter()
            .map(|&l| {
                multi_indices(2 * d, l)
                    .into_iter()
                    .map(|g| g.iter().map(|v| 2 * v).collect())
                    .collect()
            })
            .collect();
        let mut idx = vec![0usize; j];
        loop {
            let mut coeff = 1.0;
            let mut deriv = vec![0u8; 2 * d];
            for (i, c) in idx.iter().enumerate() {
                let ab: &Vec<u8> = &choices[i][*c];
                let (alpha, beta) = ab.split_at(d);
                coeff *= anti_wick_coeff(alpha, beta) / (multi_factorial(alpha) * multi_factorial(beta));
                for m in 0..d {
                    deriv[m] += beta[m];
                    deriv[d + m] += alpha[m];
                }
            }
            total += coeff * jet.partial(&deriv).re;
            let mut p = 0;
            while p < j {
                idx[p] += 1;
                if idx[p] < choices[p].len() {
                    break;
                }
                idx[p] = 0;
                p += 1;
            }
            if p == j {
                break;
            }
        }
    }
    Ok(total)
}

type TermFn = dyn Fn(usize, &PhasePoint) -> Result<Complex64> + Send + Sync;

/// A formal sum `Σ_j a_j` whose term `a_j` lives outside `Q_{B m_j}`.
#[derive(Clone)]
pub struct FormalSeries {
    term: Arc<TermFn>,
    pub b: f64,
    pub weights: WeightSequence,
    pub j_max: usize,
}

impl fmt::Debug for FormalSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FormalSeries")
            .field("b", &self.b)
            .field("weights", &self.weights)
            .field("j_max", &self.j_max)
            .finish()
    }
}

/// `Q_t = {⟨x⟩ < t and ⟨ξ⟩ < t}`.
pub fn in_q(w: &PhasePoint, t: f64) -> bool {
    let bx = (1.0 + w.x().iter().map(|v| v * v).sum::<f64>()).sqrt();
    let bxi = (1.0 + w.xi().iter().map(|v| v * v).sum::<f64>()).sqrt();
    bx < t && bxi < t
}

impl FormalSeries {
    pub fn new(
        term: impl Fn(usize, &PhasePoint) -> Result<Complex64> + Send + Sync + 'static,
        b: f64,
        weights: WeightSequence,
        j_max: usize,
    ) -> Result<Self> {
        if !(b >= 0.0 && b.is_finite()) {
            return invalid("exclusion parameter B must be finite and non-negative");
        }
        Ok(FormalSeries {
            term: Arc::new(term),
            b,
            weights,
            j_max,
        })
    }

    /// The parametrix series `Σ q_j` of `a + z`.
    pub fn parametrix(a: Symbol, z: Complex64, b: f64, weights: WeightSequence, j_max: usize) -> Result<Self> {
        Self::new(
            move |j, w| Ok(parametrix_terms(&a, j + 1, w, z)?[j]),
            b,
            weights,
            j_max,
        )
    }

    /// `m_j = M_j / M_{j−1}` with `m_0 = 0`.
    pub fn m(&self, j: usize) -> Result<f64> {
        if j == 0 {
            Ok(0.0)
        } else {
            self.weights.ratio(j)
        }
    }

    /// `a_j(w)`; an error inside the exclusion region `Q_{B m_j}`.
    pub fn term(&self, j: usize, w: &PhasePoint) -> Result<Complex64> {
        if j > self.j_max {
            return Err(Error::Range(format!("term {j} beyond J_max = {}", self.j_max)));
        }
        let radius = self.b * self.m(j)?;
        if in_q(w, radius) {
            return Err(Error::Domain(format!(
                "term {j} requested inside Q_{radius} at {:?}",
                w.coords()
            )));
        }
        (self.term)(j, w)
    }
}

/// `ψ(v)`: 1 for `⟨v⟩ ≤ 2`, 0 for `⟨v⟩ ≥ 3`.
fn psi(v_norm_sq: f64) -> f64 {
    smooth_step((1.0 + v_norm_sq).sqrt() - 2.0)
}

/// `χ_{j,R}(w) = ψ(x/(R m_j)) ψ(ξ/(R m_j))`, `χ_{0,R} = 0`.
pub fn excision_cutoff(series: &FormalSeries, j: usize, r: f64, w: &PhasePoint) -> Result<f64> {
    if j == 0 {
        return Ok(0.0);
    }
    let scale = r * series.m(j)?;
    let xs = w.x().iter().map(|v| v * v).sum::<f64>() / (scale * scale);
    let ys = w.xi().iter().map(|v| v * v).sum::<f64>() / (scale * scale);
    Ok(psi(xs) * psi(ys))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Excision {
    pub value: Complex64,
    /// Largest index with a non-trivial contribution.
    pub last_index: usize,
}

/// `R(Σ_j a_j)(w) = Σ_j (1 − χ_{j,R}(w)) a_j(w)`, summed until the cutoff
/// plateau covers `w` (all later cutoffs equal 1 there).
pub fn excision(series: &FormalSeries, r: f64, w: &PhasePoint) -> Result<Excision> {
    if r <= series.b {
        return Err(Error::Precondition(format!(
            "excision radius R = {r} must exceed B = {}",
            series.b
        )));
    }
    let mut value = ZERO;
    let mut last_index = 0;
    for j in 0..=series.j_max {
        let chi = excision_cutoff(series, j, r, w)?;
        if j >= 1 && chi == 1.0 {
            return Ok(Excision { value, last_index });
        }
        value += series.term(j, w)? * (1.0 - chi);
        last_index = j;
    }
    Err(Error::Range(format!(
        "excision at {:?} not locally finite within J_max = {}",
        w.coords(),
        series.j_max
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r2() -> Symbol {
        Symbol::radial_poly(&[0.0, 1.0], 1).unwrap()
    }

    fn monomial(alpha: [u8; 2]) -> Symbol {
        Symbol::polynomial(vec![(alpha.to_vec(), 1.0)], 1).unwrap()
    }

    #[test]
    fn sharp_examples() {
        let w = PhasePoint::xy(0.7, -1.3);
        let c = sharp_layers(&r2(), &r2(), 3, &w).unwrap();
        let r4 = w.norm_sq().powi(2);
        assert!((c[0] - r4).norm() < 1e-12);
        assert!(c[1].norm() < 1e-12);
        assert!((c[2] + 1.0).norm() < 1e-12);

        let c = sharp_layers(&monomial([1, 0]), &monomial([0, 1]), 2, &w).unwrap();
        assert!((c[1] - Complex64::new(0.0, 0.5)).norm() < 1e-15);

        let ja = r2().jet(&w, 0).unwrap();
        assert!(matches!(sharp_term(&[ja.clone()], &[ja], 1), Err(Error::Capability(_))));
    }

    #[test]
    fn parametrix_examples() {
        let a = Symbol::radial_poly(&[2.0, 1.0], 1).unwrap();
        let q = parametrix_terms(&a, 1, &PhasePoint::xy(0.0, 0.0), ZERO).unwrap();
        assert!((q[0] - 0.5).norm() < 1e-15);

        let w = PhasePoint::xy(1.0, 0.0);
        let jets = parametrix_jets(&a, 3, &w, ZERO, 2).unwrap();
        let ja = a.jet(&w, 2).unwrap();
        for m in 0..3 {
            let layer = sharp_term(&jets, std::slice::from_ref(&ja), m).unwrap();
            let expected = if m == 0 { ONE } else { ZERO };
            assert!((layer - expected).norm() < 1e-9, "layer {m}: {layer}");
        }

        let zero = Symbol::radial_poly(&[0.0, 1.0], 1).unwrap();
        assert!(matches!(
            parametrix_terms(&zero, 2, &PhasePoint::xy(0.0, 0.0), ZERO),
            Err(Error::Singularity(_))
        ));
    }

    #[test]
    fn heat_term_examples() {
        let b = r2();
        let terms = heat_terms(&b, 3).unwrap();
        let w = PhasePoint::xy(1.0, 0.5);
        let t = 0.3;
        let u0 = terms[0].eval(t, &w).unwrap();
        assert!((u0.re - (-t * w.norm_sq()).exp()).abs() < 1e-15);
        let c1 = terms[1].coefficients(&w).unwrap();
        assert!(c1.iter().all(|c| c.norm() < 1e-14));
        let c2 = terms[2].coefficients(&w).unwrap();
        let expected = [0.0, 0.0, -0.5, w.norm_sq() / 3.0];
        for (l, e) in expected.iter().enumerate() {
            assert!((c2.get(l).copied().unwrap_or(ZERO) - e).norm() < 1e-13, "{c2:?}");
        }
        assert!(heat_terms(&b, 7).is_err());
    }

    #[test]
    fn heat_terms_vanish_at_zero_time() {
        let b = Symbol::exp_gevrey(1.0, 2.0, 1).unwrap();
        let w = PhasePoint::xy(0.4, 1.1);
        let coeffs = heat_coefficients(&b, 4, &w).unwrap();
        for c in &coeffs[1..] {
            assert!(c[0].norm() < 1e-14);
        }
    }

    #[test]
    fn anti_wick_examples() {
        assert_eq!(anti_wick_coeff(&[0], &[0]), 1.0);
        assert_eq!(anti_wick_coeff(&[3], &[0]), 0.0);
        assert!((anti_wick_coeff(&[2], &[0]) - 0.5).abs() < 1e-15);

        let b = r2();
        let w = PhasePoint::xy(0.3, 0.9);
        assert!((anti_wick_term(&b, 0, 0, &w).unwrap() - w.norm_sq()).abs() < 1e-15);
        assert_eq!(anti_wick_term(&b, 2, 0, &w).unwrap(), 0.0);
        // (1/2)/2!·∂_ξ²b + (1/2)/2!·∂_x²b = 1
        assert!((anti_wick_term(&b, 1, 1, &w).unwrap() - 1.0).abs() < 1e-14);
        assert!(anti_wick_term(&b, 7, 1, &w).is_err());
    }

    #[test]
    fn compositions_count() {
        assert_eq!(compositions(4, 2).len(), 3);
        assert_eq!(compositions(5, 3).len(), 6);
        assert!(compositions(2, 3).is_empty());
    }

    #[test]
    fn excision_examples() {
        let g1 = WeightSequence::gevrey(1.0).unwrap();
        let series = FormalSeries::new(|j, _| Ok(Complex64::new(1.0 / (j + 1) as f64, 0.0)), 1.0, g1.clone(), 40).unwrap();
        let e = excision(&series, 2.0, &PhasePoint::xy(0.0, 0.0)).unwrap();
        assert_eq!(e.value, ONE);
        assert_eq!(e.last_index, 0);

        let only_first = FormalSeries::new(|j, _| Ok(if j == 0 { Complex64::new(3.0, 0.0) } else { ZERO }), 1.0, g1.clone(), 40).unwrap();
        for x in [0.0, 5.0, 40.0] {
            assert_eq!(excision(&only_first, 2.0, &PhasePoint::xy(x, 1.0)).unwrap().value.re, 3.0);
        }
        assert!(matches!(excision(&series, 0.5, &PhasePoint::xy(0.0, 0.0)), Err(Error::Precondition(_))));

        let a = Symbol::radial_poly(&[2.0, 1.0], 1).unwrap();
        let par = FormalSeries::parametrix(a.clone(), ZERO, 1.0, g1, 10).unwrap();
        let w = PhasePoint::xy(30.0, 0.0);
        let e = excision(&par, 10.0, &w).unwrap();
        let q = parametrix_terms(&a, e.last_index + 1, &w, ZERO).unwrap();
        let direct: Complex64 = q
            .iter()
            .enumerate()
            .map(|(j, v)| v * (1.0 - excision_cutoff(&par, j, 10.0, &w).unwrap()))
            .sum();
        assert_eq!(e.last_index, 1);
        assert!((e.value - direct).norm() < 1e-12);
        assert!(matches!(par.term(3, &PhasePoint::xy(0.0, 0.0)), Err(Error::Domain(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn q1_vanishes_for_real_symbols(x in -5.0f64..5.0, y in -5.0f64..5.0, which in 0usize..3) {
            let syms = [
                Symbol::radial_poly(&[2.0, 1.0], 1).unwrap(),
                Symbol::exp_gevrey(1.0, 2.0, 1).unwrap(),
                Symbol::polynomial(vec![(vec![2, 0], 1.0), (vec![0, 2], 2.0), (vec![1, 1], 0.5), (vec![0, 0], 3.0)], 1).unwrap(),
            ];
            let q = parametrix_terms(&syms[which], 2, &PhasePoint::xy(x, y), ZERO).unwrap();
            prop_assert!(q[1].norm() < 1e-12 * (1.0 + q[0].norm()));
        }

        #[test]
        fn self_sharp_layers_parity(x in -3.0f64..3.0, y in -3.0f64..3.0) {
            let a = Symbol::polynomial(vec![(vec![4, 0], 1.0), (vec![1, 2], 1.0), (vec![0, 2], 1.0)], 1).unwrap();
            let c = sharp_layers(&a, &a, 5, &PhasePoint::xy(x, y)).unwrap();
            for (j, v) in c.iter().enumerate() {
                if j % 2 == 1 {
                    prop_assert!(v.norm() < 1e-9 * (1.0 + c[0].norm()));
                } else {
                    prop_assert!(v.im.abs() < 1e-9 * (1.0 + c[0].norm()));
                }
            }
        }

        #[test]
        fn sharp_conjugation_symmetry(x in -3.0f64..3.0, y in -3.0f64..3.0) {
            let a = Symbol::polynomial(vec![(vec![3, 0], 1.0), (vec![1, 2], -0.5)], 1).unwrap();
            let b = Symbol::exp_gevrey(1.0, 2.0, 1).unwrap();
            let w = PhasePoint::xy(x, y);
            let ab = sharp_layers(&a, &b, 4, &w).unwrap();
            let ba = sharp_layers(&b, &a, 4, &w).unwrap();
            for j in 0..4 {
                prop_assert!((ab[j] - ba[j].conj()).norm() < 1e-9 * (1.0 + ab[0].norm()));
            }
        }

        #[test]
        fn resolvent_damping(theta_sign in prop::bool::ANY, mag in 0.0f64..1000.0, x in -4.0f64..4.0, y in -4.0f64..4.0) {
            let a = Symbol::radial_poly(&[2.0, 1.0], 1).unwrap();
            let angle = if theta_sign { 0.75 } else { -0.75 } * std::f64::consts::PI;
            let z = Complex64::from_polar(mag, angle);
            let q = parametrix_terms(&a, 1, &PhasePoint::xy(x, y), z).unwrap();
            prop_assert!(q[0].norm() * (1.0 + mag) <= 2.5);
        }
    }

    #[test]
    fn anti_wick_coeff_matches_gauss_hermite() {
        // brute-force 2d-dimensional product Gauss–Hermite quadrature (d = 1)
        let (nodes, weights) = gauss_hermite(40);
        for total in 0..=6u8 {
            for a in 0..=total {
                let b = total - a;
                let mut s = 0.0;
                for (i, &eta) in nodes.iter().enumerate() {
                    for (j, &y) in nodes.iter().enumerate() {
                        s += weights[i] * weights[j] * eta.powi(a as i32) * y.powi(b as i32);
                    }
                }
                s /= std::f64::consts::PI;
                assert!((s - anti_wick_coeff(&[a], &[b])).abs() < 1e-10, "{a} {b}");
            }
        }
    }

    /// Golub–Welsch via the symmetric tridiagonal Jacobi matrix.
    fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let v = (k as f64 / 2.0).sqrt();
            m[(k, k - 1)] = v;
            m[(k - 1, k)] = v;
        }
        let eig = m.symmetric_eigen();
        let mu0 = std::f64::consts::PI.sqrt();
        let nodes = eig.eigenvalues.iter().copied().collect();
        let weights = (0..n).map(|k| mu0 * eig.eigenvectors[(0, k)].powi(2)).collect();
        (nodes, weights)
    }
}
