//! Truncated multivariate Taylor series ("jets") with complex coefficients.
//!
//! A jet of order `D` in `n` variables stores the Taylor coefficients
//! `c_α = ∂^α f(w₀) / α!` for every multi-index `|α| ≤ D`. Products are
//! truncated polynomial products, derivatives shift coefficients and lower
//! the order by one. Univariate functions are applied by composing their
//! Taylor expansion with the nilpotent part of the jet.
//!
//! Variables of a phase-space jet are ordered `(x_1..x_d, ξ_1..ξ_d)`.

use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

/// Monomial bookkeeping shared by all jets with the same `(nvars, order)`.
#[derive(Debug)]
pub struct Layout {
    nvars: usize,
    order: usize,
    monomials: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
    /// `(i, j, k)` with `monomial[i] + monomial[j] = monomial[k]`.
    products: Vec<(u32, u32, u32)>,
}

impl Layout {
    fn build(nvars: usize, order: usize) -> Self {
        let mut monomials = Vec::new();
        for degree in 0..=order {
            monomials.extend(multi_indices(nvars, degree));
        }
        let index: HashMap<Vec<u8>, usize> = monomials
            .iter()
            .enumerate()
            .map(|(k, m)| (m.clone(), k))
            .collect();
        let mut products = Vec::new();
        for (i, a) in monomials.iter().enumerate() {
            let da: usize = a.iter().map(|&v| v as usize).sum();
            for (j, b) in monomials.iter().enumerate() {
                let db: usize = b.iter().map(|&v| v as usize).sum();
                if da + db > order {
                    // graded ordering: every later monomial has degree ≥ db
                    break;
                }
                let sum: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                products.push((i as u32, j as u32, index[&sum] as u32));
            }
        }
        Layout {
            nvars,
            order,
            monomials,
            index,
            products,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn monomials(&self) -> &[Vec<u8>] {
        &self.monomials
    }

    pub fn index_of(&self, alpha: &[u8]) -> Option<usize> {
        self.index.get(alpha).copied()
    }
}

/// Shared layout for `(nvars, order)`.
pub fn layout(nvars: usize, order: usize) -> Arc<Layout> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Layout>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry((nvars, order))
        .or_insert_with(|| Arc::new(Layout::build(nvars, order)))
        .clone()
}

/// All multi-indices in `ℕ^n` with total degree `total`, in lexicographically
/// descending order of the first component.
pub fn multi_indices(n: usize, total: usize) -> Vec<Vec<u8>> {
    fn rec(n: usize, total: usize, prefix: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if n == 1 {
            prefix.push(total as u8);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=total).rev() {
            prefix.push(first as u8);
            rec(n - 1, total - first, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        if total == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(n, total, &mut Vec::with_capacity(n), &mut out);
    out
}

pub fn multi_factorial(alpha: &[u8]) -> f64 {
    alpha.iter().map(|&a| factorial(a as usize)).product()
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

#[derive(Clone, Debug)]
pub struct Jet {
    layout: Arc<Layout>,
    coeffs: Vec<Complex64>,
}

impl Jet {
    pub fn zero(nvars: usize, order: usize) -> Self {
        let layout = layout(nvars, order);
        let len = layout.monomials.len();
        Jet {
            layout,
            coeffs: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn constant(nvars: usize, order: usize, value: Complex64) -> Self {
        let mut jet = Self::zero(nvars, order);
        jet.coeffs[0] = value;
        jet
    }

    /// The coordinate function `w_i` expanded at a point where it equals `value`.
    pub fn variable(nvars: usize, order: usize, i: usize, value: f64) -> Self {
        let mut jet = Self::constant(nvars, order, Complex64::new(value, 0.0));
        if order >= 1 {
            let mut alpha = vec![0u8; nvars];
            alpha[i] = 1;
            let k = jet.layout.index[&alpha];
            jet.coeffs[k] = Complex64::new(1.0, 0.0);
        }
        jet
    }

    /// Coordinate jets `(w_1, …, w_n)` at the point `w`.
    pub fn coordinates(w: &[f64], order: usize) -> Vec<Jet> {
        (0..w.len())
            .map(|i| Jet::variable(w.len(), order, i, w[i]))
            .collect()
    }

    pub fn from_taylor(nvars: usize, order: usize, coeffs: Vec<Complex64>) -> Self {
        let layout = layout(nvars, order);
        assert_eq!(coeffs.len(), layout.monomials.len());
        Jet { layout, coeffs }
    }

    pub fn nvars(&self) -> usize {
        self.layout.nvars
    }

    pub fn order(&self) -> usize {
        self.layout.order
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn value(&self) -> Complex64 {
        self.coeffs[0]
    }

    pub fn taylor_coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Taylor coefficient `∂^α f / α!`; zero beyond the jet order.
    pub fn taylor(&self, alpha: &[u8]) -> Complex64 {
        self.layout
            .index_of(alpha)
            .map(|k| self.coeffs[k])
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// Plain partial derivative `∂^α f(w₀)`.
    pub fn partial(&self, alpha: &[u8]) -> Complex64 {
        self.taylor(alpha) * multi_factorial(alpha)
    }

    /// Largest imaginary part over all coefficients.
    pub fn max_imag(&self) -> f64 {
        self.coeffs.iter().map(|c| c.im.abs()).fold(0.0, f64::max)
    }

    pub fn truncate(&self, order: usize) -> Jet {
        if order >= self.order() {
            return self.clone();
        }
        let layout = layout(self.nvars(), order);
        let coeffs = self.coeffs[..layout.monomials.len()].to_vec();
        Jet { layout, coeffs }
    }

    pub fn scale(&self, factor: Complex64) -> Jet {
        Jet {
            layout: self.layout.clone(),
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    pub fn add_scalar(&self, c: Complex64) -> Jet {
        let mut out = self.clone();
        out.coeffs[0] += c;
        out
    }

    /// `∂^δ f`, of order `D − |δ|`.
    pub fn derivative(&self, delta: &[u8]) -> Jet {
        let shift: usize = delta.iter().map(|&d| d as usize).sum();
        assert!(shift <= self.order(), "derivative order exceeds jet order");
        let target = layout(self.nvars(), self.order() - shift);
        let mut coeffs = Vec::with_capacity(target.monomials.len());
        for gamma in &target.monomials {
            let mut factor = 1.0;
            let mut src = gamma.clone();
            for (k, &dk) in delta.iter().enumerate() {
                for m in 1..=dk {
                    factor *= (gamma[k] + m) as f64;
                }
                src[k] += dk;
            }
            coeffs.push(self.coeffs[self.layout.index[&src]] * factor);
        }
        Jet {
            layout: target,
            coeffs,
        }
    }

    /// Re-expresses a jet in `nvars` variables, mapping variable `i` of `self`
    /// to variable `var_map[i]` of the result.
    pub fn embed(&self, nvars: usize, var_map: &[usize]) -> Jet {
        let mut out = Jet::zero(nvars, self.order());
        for (k, alpha) in self.layout.monomials.iter().enumerate() {
            let mut beta = vec![0u8; nvars];
            for (i, &a) in alpha.iter().enumerate() {
                beta[var_map[i]] += a;
            }
            let idx = out.layout.index[&beta];
            out.coeffs[idx] += self.coeffs[k];
        }
        out
    }

    /// `f(self)` where `taylor[k] = f^{(k)}(self.value()) / k!`.
    pub fn compose(&self, taylor: &[Complex64]) -> Jet {
        let order = self.order();
        let mut delta = self.clone();
        delta.coeffs[0] = Complex64::new(0.0, 0.0);
        let top = order.min(taylor.len().saturating_sub(1));
        let mut acc = Jet::constant(self.nvars(), order, taylor[top]);
        for k in (0..top).rev() {
            acc = &acc * &delta;
            acc.coeffs[0] += taylor[k];
        }
        acc
    }

    pub fn exp(&self) -> Jet {
        self.compose(&taylor_exp(self.value(), self.order()))
    }

    pub fn recip(&self) -> Jet {
        self.compose(&taylor_recip(self.value(), self.order()))
    }

    pub fn powf(&self, p: f64) -> Jet {
        self.compose(&taylor_powf(self.value(), p, self.order()))
    }

    pub fn sqrt(&self) -> Jet {
        self.powf(0.5)
    }

    pub fn ln(&self) -> Jet {
        self.compose(&taylor_ln(self.value(), self.order()))
    }

    pub fn powi(&self, n: u32) -> Jet {
        let mut acc = Jet::constant(self.nvars(), self.order(), Complex64::new(1.0, 0.0));
        for _ in 0..n {
            acc = &acc * self;
        }
        acc
    }
}

fn common_order(a: &Jet, b: &Jet) -> (Jet, Jet) {
    assert_eq!(a.nvars(), b.nvars(), "jets over different variable sets");
    let order = a.order().min(b.order());
    (a.truncate(order), b.truncate(order))
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        let (mut a, b) = common_order(self, rhs);
        for (x, y) in a.coeffs.iter_mut().zip(&b.coeffs) {
            *x += y;
        }
        a
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        let (mut a, b) = common_order(self, rhs);
        for (x, y) in a.coeffs.iter_mut().zip(&b.coeffs) {
            *x -= y;
        }
        a
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(Complex64::new(-1.0, 0.0))
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        let (a, b) = common_order(self, rhs);
        let mut out = Jet::zero(a.nvars(), a.order());
        for &(i, j, k) in &a.layout.products {
            out.coeffs[k as usize] += a.coeffs[i as usize] * b.coeffs[j as usize];
        }
        out
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        &self + &rhs
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        &self - &rhs
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        &self * &rhs
    }
}

pub fn taylor_exp(x0: Complex64, order: usize) -> Vec<Complex64> {
    let e = x0.exp();
    let mut out = Vec::with_capacity(order + 1);
    let mut fact = 1.0;
    for k in 0..=order {
        if k > 0 {
            fact *= k as f64;
        }
        out.push(e / fact);
    }
    out
}

pub fn taylor_recip(x0: Complex64, order: usize) -> Vec<Complex64> {
    let inv = 1.0 / x0;
    let mut out = Vec::with_capacity(order + 1);
    let mut term = inv;
    for _ in 0..=order {
        out.push(term);
        term = -term * inv;
    }
    out
}

/// Coefficients of `(x0 + ε)^p` (principal branch).
pub fn taylor_powf(x0: Complex64, p: f64, order: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(order + 1);
    let base = x0.powf(p);
    let inv = 1.0 / x0;
    let mut binom = 1.0;
    let mut pow = base;
    for k in 0..=order {
        out.push(pow * binom);
        binom *= (p - k as f64) / (k as f64 + 1.0);
        pow *= inv;
    }
    out
}

pub fn taylor_ln(x0: Complex64, order: usize) -> Vec<Complex64> {
    let mut out = vec![x0.ln()];
    let inv = 1.0 / x0;
    let mut pow = inv;
    for k in 1..=order {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        out.push(pow * (sign / k as f64));
        pow *= inv;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn layout_counts_monomials() {
        assert_eq!(layout(2, 3).monomials().len(), 10);
        assert_eq!(layout(4, 2).monomials().len(), 15);
        assert_eq!(multi_indices(2, 2), vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
    }

    #[test]
    fn product_of_coordinates() {
        let w = Jet::coordinates(&[2.0, 3.0], 3);
        let f = &(&w[0] * &w[0]) * &w[1]; // x²ξ
        assert!((f.value() - c(12.0)).norm() < 1e-14);
        assert!((f.partial(&[1, 0]) - c(12.0)).norm() < 1e-14);
        assert!((f.partial(&[2, 1]) - c(2.0)).norm() < 1e-14);
        assert!((f.partial(&[1, 1]) - c(4.0)).norm() < 1e-14);
    }

    #[test]
    fn exp_and_recip_match_closed_forms() {
        let w = Jet::coordinates(&[0.5], 5);
        let e = w[0].exp();
        for k in 0..=5u8 {
            assert!((e.partial(&[k]) - c(0.5f64.exp())).norm() < 1e-13);
        }
        let r = w[0].recip();
        // d^k/dx^k 1/x = (-1)^k k! / x^{k+1}
        for k in 0..=5u8 {
            let exact = (-1f64).powi(k as i32) * factorial(k as usize) / 0.5f64.powi(k as i32 + 1);
            assert!((r.partial(&[k]) - c(exact)).norm() < 1e-9 * exact.abs());
        }
    }

    #[test]
    fn derivative_and_embed() {
        let w = Jet::coordinates(&[1.0, 2.0], 4);
        let f = (&w[0] * &w[0]) * (&w[1] * &w[1]); // x²ξ²
        let g = f.derivative(&[1, 1]); // 4xξ
        assert_eq!(g.order(), 2);
        assert!((g.value() - c(8.0)).norm() < 1e-13);
        assert!((g.partial(&[1, 1]) - c(4.0)).norm() < 1e-13);
        let e = f.embed(4, &[1, 3]);
        assert!((e.partial(&[0, 2, 0, 2]) - c(4.0)).norm() < 1e-13);
    }

    #[test]
    fn powf_matches_sqrt_derivatives() {
        let w = Jet::coordinates(&[4.0], 3);
        let s = w[0].sqrt();
        assert!((s.partial(&[1]) - c(0.25)).norm() < 1e-14);
        assert!((s.partial(&[2]) - c(-1.0 / 32.0)).norm() < 1e-14);
    }
}
