//! Weyl and anti-Wick quantisation on the Hermite basis of L²(ℝ).
//!
//! Matrix elements are phase-space integrals against cross-Wigner functions,
//! which in polar coordinates reduce to Laguerre-function transforms of the
//! angular Fourier modes of the symbol. All Laguerre functions are generated
//! by three-term recurrences carried in scaled form, so no polynomial is ever
//! multiplied by an exponential explicitly.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::eigen::hermitian_eigenvalues;
use crate::error::{invalid, Error, Result};
use crate::numerics::ln_factorial;
use crate::quadrature::{gauss_legendre, QuadSpec};
use crate::symbols::{PhasePoint, RadialProfile, Symbol};

// recurrences are rescaled by exact powers of two so no rounding enters
const RESCALE_BITS: i64 = 500;
const RESCALE: f64 = 3.273_390_607_896_142e150; // 2^500
const TAIL_RATIO: f64 = 1e-17;

/// `m · 2^e` with a wide exponent, for Gaussian factors far below the
/// double range.
#[derive(Debug, Clone, Copy)]
struct Scaled {
    m: f64,
    e: i64,
}

impl Scaled {
    fn from_f64(x: f64) -> Self {
        if x == 0.0 || !x.is_finite() {
            return Scaled { m: x, e: 0 };
        }
        let bits = x.to_bits();
        let raw = ((bits >> 52) & 0x7ff) as i64;
        if raw == 0 {
            // subnormal: normalise first
            let s = Self::from_f64(x * 2f64.powi(64));
            return Scaled { m: s.m, e: s.e - 64 };
        }
        let m = f64::from_bits((bits & !(0x7ff << 52)) | (1022 << 52));
        Scaled { m, e: raw - 1022 }
    }

    fn mul(self, x: f64) -> Self {
        let s = Self::from_f64(self.m * x);
        Scaled { m: s.m, e: s.e + self.e }
    }

    /// `e^{−u}` for `u ≥ 0`, exact up to a few roundings regardless of `u`.
    fn exp_neg(u: f64) -> Self {
        const CHUNK: f64 = 512.0;
        let k = (u / CHUNK).floor();
        let mut out = Self::from_f64((-(u - k * CHUNK)).exp());
        let step = (-CHUNK).exp();
        for _ in 0..k as usize {
            out = out.mul(step);
        }
        out
    }

    fn shift(self, bits: i64) -> Self {
        Scaled { m: self.m, e: self.e + bits }
    }

    fn value(self) -> f64 {
        if self.m == 0.0 || self.e < -1100 {
            return 0.0;
        }
        let mut x = self.m;
        let mut e = self.e;
        while e > 0 {
            let step = e.min(1000);
            x *= f64::from_bits(((1023 + step) as u64) << 52);
            e -= step;
        }
        while e < 0 {
            let step = (-e).min(1000);
            x *= f64::from_bits(((1023 - step) as u64) << 52);
            e += step;
        }
        x
    }
}

/// Orthonormal Hermite function `h_n(x)`.
pub fn hermite_function(n: usize, x: f64) -> f64 {
    // h_0 = π^{-1/4} e^{-x²/2}; the exponential is kept as a log scale
    let mut factor = Scaled::exp_neg(0.5 * x * x).mul(PI.powf(-0.25));
    let mut prev = 0.0;
    let mut cur = 1.0;
    for k in 0..n {
        let next = (2.0 / (k as f64 + 1.0)).sqrt() * x * cur
            - (k as f64 / (k as f64 + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE {
            cur /= RESCALE;
            prev /= RESCALE;
            factor = factor.shift(RESCALE_BITS);
        }
    }
    factor.mul(cur).value()
}

/// Eigenvalues with provenance and a trusted prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    pub eigenvalues: Vec<f64>,
    /// Length of the prefix known to be accurate; `None` until assessed.
    pub trusted_count: Option<usize>,
    pub source: String,
    /// The list is the whole spectrum, not a truncation.
    pub complete: bool,
}

impl SpectralData {
    /// Sorts the values and marks all of them trusted.
    pub fn new(mut eigenvalues: Vec<f64>, source: impl Into<String>) -> Self {
        eigenvalues.sort_by(|a, b| a.total_cmp(b));
        let n = eigenvalues.len();
        SpectralData {
            eigenvalues,
            trusted_count: Some(n),
            source: source.into(),
            complete: false,
        }
    }

    /// A finite spectrum known in full.
    pub fn exact(eigenvalues: Vec<f64>, source: impl Into<String>) -> Self {
        SpectralData {
            complete: true,
            ..Self::new(eigenvalues, source)
        }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn trusted(&self) -> &[f64] {
        &self.eigenvalues[..self.trusted_count.unwrap_or(0).min(self.len())]
    }

    /// `N(λ) = #{j : λ_j ≤ λ}` over the trusted prefix.
    pub fn count_below(&self, lambda: f64) -> usize {
        self.trusted().partition_point(|&v| v <= lambda)
    }

    /// CSV with header `j,lambda,trusted`.
    pub fn to_csv(&self) -> String {
        let trusted = self.trusted_count.unwrap_or(0);
        let mut out = String::from("j,lambda,trusted\n");
        for (j, v) in self.eigenvalues.iter().enumerate() {
            let _ = writeln!(out, "{j},{v:.16e},{}", u8::from(j < trusted));
        }
        out
    }
}

/// Sums `Σ w_i f(s_i)` over panels in `s = √u` for a family of integrals at
/// once. `eval` receives the nodes and weights of one panel and accumulates
/// each entry's contribution and its absolute value.
///
/// Panels have one local oscillation period `π/s_turn` (halved on each
/// refinement); two rules are compared entrywise against the absolute sum.
fn panel_integrate<F>(
    entries: usize,
    s_turn: f64,
    quad: &QuadSpec,
    eval: F,
) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&[f64], &[f64], &mut [f64], &mut [f64]) -> Result<()> + Sync,
{
    let n1 = quad.nodes_per_panel.max(4);
    let n2 = n1 + n1 / 2;
    let s_cap = 4.0 * s_turn + 60.0;
    let batch = ((1usize << 23) / (3 * entries + 1)).clamp(1, 32);
    let mut worst = f64::INFINITY;
    for level in 0..=quad.max_refinements {
        let width = PI / s_turn / (1u64 << level) as f64;
        let sweep = sweep_panels(entries, width, s_turn, s_cap, batch, n1, n2, &eval)?;
        let (v1, v2, abs) = sweep;
        // entries that are pure rounding noise are judged against the largest one
        let floor = 1e-14 * abs.iter().copied().fold(0.0, f64::max);
        worst = v1
            .iter()
            .zip(&v2)
            .zip(&abs)
            .map(|((a, b), s)| {
                let diff = (a - b).abs();
                if diff <= floor {
                    0.0
                } else {
                    diff / s
                }
            })
            .fold(0.0, f64::max);
        if worst <= quad.rel_tol {
            return Ok((v2, abs));
        }
    }
    Err(Error::Accuracy {
        message: format!(
            "Laguerre transform did not reach relative agreement {:e} after {} refinements",
            quad.rel_tol, quad.max_refinements
        ),
        achieved: worst,
    })
}

type Sweep = (Vec<f64>, Vec<f64>, Vec<f64>);

#[allow(clippy::too_many_arguments)]
fn sweep_panels<F>(
    entries: usize,
    width: f64,
    s_turn: f64,
    s_cap: f64,
    batch: usize,
    n1: usize,
    n2: usize,
    eval: &F,
) -> Result<Sweep>
where
    F: Fn(&[f64], &[f64], &mut [f64], &mut [f64]) -> Result<()> + Sync,
{
    let rules = [gauss_legendre(n1), gauss_legendre(n2)];
    let panel = |i: usize| -> Result<Sweep> {
        let (a, b) = (i as f64 * width, (i + 1) as f64 * width);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut out = Vec::with_capacity(3);
        let mut abs_first = vec![0.0; entries];
        for (k, rule) in rules.iter().enumerate() {
            let nodes: Vec<f64> = rule.0.iter().map(|x| mid + half * x).collect();
            let weights: Vec<f64> = rule.1.iter().map(|w| w * half).collect();
            let mut val = vec![0.0; entries];
            let mut abs = vec![0.0; entries];
            eval(&nodes, &weights, &mut val, &mut abs)?;
            if k == 0 {
                abs_first = abs;
            }
            out.push(val);
        }
        let v2 = out.pop().unwrap_or_default();
        let v1 = out.pop().unwrap_or_default();
        Ok((v1, v2, abs_first))
    };
    let mut tot1 = vec![0.0; entries];
    let mut tot2 = vec![0.0; entries];
    let mut abs = vec![0.0; entries];
    let mut quiet = 0;
    let mut start = 0;
    loop {
        let results: Vec<Result<Sweep>> = (start..start + batch).into_par_iter().map(panel).collect();
        for (offset, res) in results.into_iter().enumerate() {
            let (p1, p2, pa) = res?;
            let s_lo = (start + offset) as f64 * width;
            if p2.iter().chain(&pa).any(|v| !v.is_finite()) {
                return Err(Error::Accuracy {
                    message: format!("integrand overflows near |w| = {s_lo:.2}; symbol grows too fast"),
                    achieved: f64::INFINITY,
                });
            }
            for i in 0..entries {
                tot1[i] += p1[i];
                tot2[i] += p2[i];
                abs[i] += pa[i];
            }
            if s_lo >= s_turn + 1.0 {
                let negligible = p1
                    .iter()
                    .zip(&abs)
                    .all(|(p, s)| p.abs() <= TAIL_RATIO * s);
                quiet = if negligible { quiet + 1 } else { 0 };
                if quiet >= 2 {
                    return Ok((tot1, tot2, abs));
                }
            }
            if s_lo > s_cap {
                return Err(Error::Accuracy {
                    message: format!(
                        "integrand has not decayed by |w| = {s_cap:.1}; symbol grows too fast"
                    ),
                    achieved: f64::INFINITY,
                });
            }
        }
        start += batch;
    }
}

/// Unsorted Weyl diagonal `λ_n = (−1)^n ∫_0^∞ g(u) L_n(2u) e^{−u} du`, `n < N`.
pub fn radial_weyl_diagonal(g: &RadialProfile, n: usize, quad: &QuadSpec) -> Result<Vec<f64>> {
    if n == 0 {
        return invalid("basis size must be at least 1");
    }
    let s_turn = (2.0 * n as f64 + 1.0).sqrt();
    let eval = |nodes: &[f64], weights: &[f64], val: &mut [f64], abs: &mut [f64]| {
        for (&s, &w) in nodes.iter().zip(weights) {
            let u = s * s;
            let lg = g.ln_eval(u);
            if lg.is_zero() {
                continue;
            }
            let v = 2.0 * u;
            let mut factor = Scaled::exp_neg(u).mul((lg.ln_abs + (2.0 * s * w).ln()).exp());
            let mut scale = factor.value();
            let mut prev = 0.0;
            let mut cur = 1.0;
            for k in 0..n {
                if k > 0 {
                    let kf = k as f64;
                    let next = ((2.0 * kf - 1.0 - v) * cur - (kf - 1.0) * prev) / kf;
                    prev = cur;
                    cur = next;
                    if cur.abs() > RESCALE {
                        cur /= RESCALE;
                        prev /= RESCALE;
                        factor = factor.shift(RESCALE_BITS);
                        scale = factor.value();
                    }
                }
                let c = cur * scale;
                val[k] += if (k % 2 == 1) != (lg.sign < 0.0) { -c } else { c };
                abs[k] += c.abs();
            }
        }
        Ok(())
    };
    let (values, _) = panel_integrate(n, s_turn, quad, eval)?;
    Ok(values)
}

/// Weyl eigenvalues of a radial symbol in d = 1, ascending.
pub fn radial_weyl_eigs(g: &RadialProfile, n: usize, quad: &QuadSpec) -> Result<SpectralData> {
    let diag = radial_weyl_diagonal(g, n, quad)?;
    Ok(SpectralData::new(diag, format!("radial_weyl(N={n})")))
}

/// Unsorted anti-Wick diagonal `∫_0^∞ g(2v) vⁿ e^{−v}/n! dv`, `n < N`.
pub fn radial_antiwick_diagonal(g: &RadialProfile, n: usize, quad: &QuadSpec) -> Result<Vec<f64>> {
    if n == 0 {
        return invalid("basis size must be at least 1");
    }
    (0..n)
        .into_par_iter()
        .map(|k| gamma_weighted(g, k, quad))
        .collect()
}

/// `∫_0^∞ g(2v) v^k e^{−v}/k! dv` in the log domain, panels of width `√(k+1)`
/// spreading out from the peak of the Gamma density.
fn gamma_weighted(g: &RadialProfile, k: usize, quad: &QuadSpec) -> Result<f64> {
    const DROP: f64 = 40.0;
    const MAX_PANELS: usize = 20_000;
    let kf = k as f64;
    let ln_norm = ln_factorial(k);
    let ln_density = |v: f64| {
        if v <= 0.0 {
            if k == 0 {
                -ln_norm
            } else {
                f64::NEG_INFINITY
            }
        } else {
            kf * v.ln() - v - ln_norm
        }
    };
    // (sign, ln |integrand|) at a point
    let point = |v: f64| {
        let lg = g.ln_eval(2.0 * v);
        (lg.sign, lg.ln_abs + ln_density(v))
    };
    let width = (kf + 1.0).sqrt();
    let n1 = quad.nodes_per_panel.max(4);
    let n2 = n1 + n1 / 2;
    let rules = [gauss_legendre(n1), gauss_legendre(n2)];
    let mut terms: [Vec<(f64, f64)>; 2] = [Vec::new(), Vec::new()];
    let mut peak = f64::NEG_INFINITY;
    let add_panel = |a: f64, b: f64, terms: &mut [Vec<(f64, f64)>; 2]| {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (rule, out) in rules.iter().zip(terms.iter_mut()) {
            for (x, w) in rule.0.iter().zip(&rule.1) {
                let (sign, ln) = point(mid + half * x);
                if ln.is_finite() {
                    out.push((sign, ln + (w * half).ln()));
                }
            }
        }
    };
    let v0 = kf;
    // rightwards
    let mut a = v0;
    let mut last = point(a).1;
    for i in 0.. {
        if i > MAX_PANELS {
            return Err(Error::Accuracy {
                message: "anti-Wick integrand does not decay".to_string(),
                achieved: f64::INFINITY,
            });
        }
        let b = a + width;
        add_panel(a, b, &mut terms);
        let end = point(b).1;
        peak = peak.max(end).max(last);
        if end.is_nan() {
            return Err(Error::Overflow("anti-Wick integrand is NaN".to_string()));
        }
        if end == f64::NEG_INFINITY || (end < peak - DROP && end <= last) {
            break;
        }
        last = end;
        a = b;
    }
    // leftwards
    let mut b = v0;
    last = point(b).1;
    while b > 0.0 {
        let a = (b - width).max(0.0);
        add_panel(a, b, &mut terms);
        let end = point(a).1;
        peak = peak.max(end);
        if end == f64::NEG_INFINITY || (end < peak - DROP && end <= last) {
            break;
        }
        last = end;
        b = a;
    }
    let sums: Vec<(f64, f64)> = terms
        .iter()
        .map(|t| {
            let top = t.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
            if top == f64::NEG_INFINITY {
                return (0.0, 0.0);
            }
            let (mut s, mut abs) = (0.0, 0.0);
            for (sign, ln) in t {
                let e = (ln - top).exp();
                s += sign * e;
                abs += e;
            }
            (s * top.exp(), abs * top.exp())
        })
        .collect();
    let (low, high) = (sums[0], sums[1]);
    let diff = (low.0 - high.0).abs();
    if diff > quad.rel_tol * high.1.max(f64::MIN_POSITIVE) {
        return Err(Error::Accuracy {
            message: format!("anti-Wick entry {k} did not converge"),
            achieved: diff / high.1,
        });
    }
    if !high.0.is_finite() {
        return Err(Error::Overflow(format!("anti-Wick entry {k} overflows")));
    }
    Ok(high.0)
}

/// Anti-Wick diagonal values of a radial symbol in d = 1, ascending.
pub fn radial_antiwick_eigs(g: &RadialProfile, n: usize) -> Result<SpectralData> {
    let diag = radial_antiwick_diagonal(g, n, &QuadSpec::default())?;
    Ok(SpectralData::new(diag, format!("radial_antiwick(N={n})")))
}

/// Finite section of a Weyl operator on `h_0 … h_{N−1}`, row-major with
/// `entries[m·N + n] = ⟨h_m, a^w h_n⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub dimension: usize,
    pub entries: Vec<Complex64>,
}

impl OperatorMatrix {
    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.entries[m * self.dimension + n]
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `max |A − A^H|`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.dimension;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..=i {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// Leading `k × k` block.
    pub fn leading_block(&self, k: usize) -> OperatorMatrix {
        let k = k.min(self.dimension);
        let entries = (0..k)
            .flat_map(|m| (0..k).map(move |n| (m, n)))
            .map(|(m, n)| self.get(m, n))
            .collect();
        OperatorMatrix {
            dimension: k,
            entries,
        }
    }

    pub fn matmul(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        let n = self.dimension;
        if other.dimension != n {
            return invalid("matrix dimensions differ");
        }
        let entries = (0..n * n)
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                (0..n).map(|k| self.get(i, k) * other.get(k, j)).sum()
            })
            .collect();
        Ok(OperatorMatrix {
            dimension: n,
            entries,
        })
    }

    /// Real and imaginary parts, one matrix row per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for m in 0..self.dimension {
            let row: Vec<String> = (0..self.dimension)
                .map(|n| {
                    let c = self.get(m, n);
                    format!("{:.16e}{:+.16e}i", c.re, c.im)
                })
                .collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

fn angular_modes(sym: &Symbol, fft: &Arc<dyn Fft<f64>>, r: f64) -> Result<Vec<Complex64>> {
    let len = fft.len();
    let mut buf = (0..len)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / len as f64;
            sym.value(&PhasePoint::xy(r * theta.cos(), r * theta.sin()))
        })
        .collect::<Result<Vec<_>>>()?;
    fft.process(&mut buf);
    let inv = 1.0 / len as f64;
    for c in buf.iter_mut() {
        *c *= inv;
    }
    Ok(buf)
}

/// Weyl matrix of a d = 1 symbol on `h_0 … h_{N−1}`.
///
/// With `a(r, θ) = Σ_q â_q(r²) e^{iqθ}`, for `n = m + q ≥ m`
/// `A_{mn} = (−1)^m ∫ â_q(u) φ_m^{(q)}(2u) du` and
/// `A_{nm} = (−1)^m ∫ â_{−q}(u) φ_m^{(q)}(2u) du`, where `φ_m^{(q)}` are the
/// normalised Laguerre functions `√(m!/(m+q)!) v^{q/2} e^{−v/2} L_m^{(q)}(v)`.
pub fn build_matrix(sym: &Symbol, n: usize, quad: &QuadSpec) -> Result<OperatorMatrix> {
    if sym.d() != 1 {
        return Err(Error::Capability(
            "matrix quantisation is implemented for d = 1; use combine_separable for sums".into(),
        ));
    }
    if n == 0 {
        return invalid("basis size must be at least 1");
    }
    let m_angles = (2 * n + 32).next_power_of_two();
    let fft = FftPlanner::new().plan_fft_forward(m_angles);
    let s_turn = (2.0 * n as f64 + 1.0).sqrt();
    let eval = |nodes: &[f64], weights: &[f64], val: &mut [f64], abs: &mut [f64]| {
        for (&s, &w) in nodes.iter().zip(weights) {
            let u = s * s;
            let v = 2.0 * u;
            let modes = angular_modes(sym, &fft, s)?;
            let amax = modes.iter().map(|c| c.norm()).fold(0.0, f64::max);
            if amax == 0.0 {
                continue;
            }
            // φ_0^{(q)}(v)·(2s·w), built up in q
            let mut base = Scaled::exp_neg(u).mul(2.0 * s * w);
            for q in 0..n {
                if q > 0 {
                    base = base.mul((v / q as f64).sqrt());
                }
                let up = modes[q];
                let down = modes[(m_angles - q) % m_angles];
                if up.norm().max(down.norm()) <= 1e-14 * amax {
                    continue;
                }
                let qf = q as f64;
                let mut factor = base;
                let mut scale = factor.value();
                let mut prev = 0.0;
                let mut cur = 1.0;
                for m in 0..n - q {
                    if m > 0 {
                        let mf = m as f64;
                        let next = ((2.0 * mf - 1.0 + qf - v) * cur
                            - ((mf - 1.0) * (mf - 1.0 + qf)).sqrt() * prev)
                            / (mf * (mf + qf)).sqrt();
                        prev = cur;
                        cur = next;
                        if cur.abs() > RESCALE {
                            cur /= RESCALE;
                            prev /= RESCALE;
                            factor = factor.shift(RESCALE_BITS);
                            scale = factor.value();
                        }
                    }
                    let c = if m % 2 == 1 { -cur * scale } else { cur * scale };
                    let upper = 2 * (m * n + m + q);
                    let cu = up * c;
                    val[upper] += cu.re;
                    val[upper + 1] += cu.im;
                    abs[upper] += cu.re.abs();
                    abs[upper + 1] += cu.im.abs();
                    if q > 0 {
                        let lower = 2 * ((m + q) * n + m);
                        let cd = down * c;
                        val[lower] += cd.re;
                        val[lower + 1] += cd.im;
                        abs[lower] += cd.re.abs();
                        abs[lower + 1] += cd.im.abs();
                    }
                }
            }
        }
        Ok(())
    };
    let (values, _) = panel_integrate(2 * n * n, s_turn, quad, eval)?;
    let entries = values
        .chunks_exact(2)
        .map(|c| Complex64::new(c[0], c[1]))
        .collect();
    Ok(OperatorMatrix {
        dimension: n,
        entries,
    })
}

/// Ascending eigenvalues of a Hermitian operator matrix.
pub fn eigensolve(mat: &OperatorMatrix) -> Result<SpectralData> {
    let n = mat.dimension;
    let tol = 1e-10 * (1.0 + mat.max_abs());
    let defect = mat.hermitian_defect();
    if defect > tol {
        return invalid(format!("matrix is not Hermitian (defect {defect:.3e})"));
    }
    let mut sym = mat.entries.clone();
    for i in 0..n {
        for j in 0..=i {
            let avg = 0.5 * (mat.get(i, j) + mat.get(j, i).conj());
            sym[i * n + j] = avg;
            sym[j * n + i] = avg.conj();
        }
    }
    let eigenvalues = hermitian_eigenvalues(&sym, n)?;
    Ok(SpectralData {
        eigenvalues,
        trusted_count: None,
        source: format!("eigensolve(N={n})"),
        complete: false,
    })
}

/// Longest prefix on which two truncations agree to `tol·(1 + |λ|)`.
pub fn truncation_trust(small: &SpectralData, large: &SpectralData, tol: f64) -> usize {
    small
        .eigenvalues
        .iter()
        .zip(&large.eigenvalues)
        .take_while(|(a, b)| (*a - *b).abs() <= tol * (1.0 + a.abs()))
        .count()
}

/// Spectrum of `a ⊗ 1 + 1 ⊗ b` below `cutoff`.
///
/// Each side must either be complete or have a trusted eigenvalue above
/// `cutoff − min(other)`, so that no missing value could contribute.
pub fn combine_separable(a: &SpectralData, b: &SpectralData, cutoff: f64) -> Result<SpectralData> {
    let (ta, tb) = (a.trusted(), b.trusted());
    if ta.is_empty() || tb.is_empty() {
        return Err(Error::Range("separable factors have no trusted eigenvalues".into()));
    }
    let covered = |side: &SpectralData, own: &[f64], other_min: f64| {
        side.complete && own.len() == side.len() || own[own.len() - 1] > cutoff - other_min
    };
    for (name, side, own, other) in [("first", a, ta, tb), ("second", b, tb, ta)] {
        if !covered(side, own, other[0]) {
            return Err(Error::Range(format!(
                "{name} factor trusted only up to {:.6e}; cutoff {cutoff} needs more than {:.6e}",
                own[own.len() - 1],
                cutoff - other[0]
            )));
        }
    }
    let mut sums = Vec::new();
    for &x in ta {
        if x + tb[0] > cutoff {
            break;
        }
        sums.extend(tb.iter().map(|y| x + y).take_while(|s| *s <= cutoff));
    }
    let mut out = SpectralData::new(sums, format!("separable({} + {})", a.source, b.source));
    out.complete = false;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_hermite;

    fn harmonic() -> RadialProfile {
        RadialProfile::Polynomial(vec![0.0, 1.0])
    }

    #[test]
    fn hermite_values_and_norm() {
        assert!((hermite_function(0, 0.0) - PI.powf(-0.25)).abs() < 1e-15);
        assert_eq!(hermite_function(1, 0.0), 0.0);
        let (x, w) = gauss_hermite(64);
        // ∫ h_3² dx with the Gaussian weight divided out
        let norm: f64 = x
            .iter()
            .zip(&w)
            .map(|(x, w)| w * hermite_function(3, *x).powi(2) * (x * x).exp())
            .sum();
        assert!((norm - 1.0).abs() < 1e-12, "{norm}");
        let cross: f64 = x
            .iter()
            .zip(&w)
            .map(|(x, w)| w * hermite_function(3, *x) * hermite_function(5, *x) * (x * x).exp())
            .sum();
        assert!(cross.abs() < 1e-12);
    }

    #[test]
    fn hermite_far_tail_is_finite() {
        let v = hermite_function(2000, 60.0);
        assert!(v.is_finite());
        assert!(hermite_function(3, 50.0).abs() < 1e-300);
    }

    #[test]
    fn radial_weyl_constants_and_harmonic() {
        let q = QuadSpec::default();
        let one = radial_weyl_eigs(&RadialProfile::Polynomial(vec![1.0]), 40, &q).unwrap();
        assert!(one.eigenvalues.iter().all(|v| (v - 1.0).abs() < 1e-10));
        let h = radial_weyl_eigs(&harmonic(), 300, &q).unwrap();
        for (n, v) in h.eigenvalues.iter().enumerate() {
            assert!((v - (2 * n + 1) as f64).abs() < 1e-8, "{n}: {v}");
        }
        assert_eq!(h.trusted_count, Some(300));
        let quartic = radial_weyl_diagonal(&RadialProfile::Polynomial(vec![0.0, 0.0, 1.0]), 20, &q)
            .unwrap();
        for (n, v) in quartic.iter().enumerate() {
            let want = ((2 * n + 1) as f64).powi(2) + 1.0;
            assert!((v - want).abs() < 1e-8 * want, "{n}: {v}");
        }
    }

    #[test]
    fn harmonic_large_basis() {
        let h = radial_weyl_diagonal(&harmonic(), 4000, &QuadSpec::default()).unwrap();
        let worst = h
            .iter()
            .enumerate()
            .map(|(n, v)| (v - (2 * n + 1) as f64).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-8, "worst deviation {worst:e}");
    }

    #[test]
    fn fast_growth_is_rejected() {
        let g = RadialProfile::ExpPolynomial(vec![0.0, 0.0, 1.0]);
        let err = radial_weyl_diagonal(&g, 8, &QuadSpec::default()).unwrap_err();
        assert!(matches!(err, Error::Accuracy { .. }), "{err:?}");
    }

    #[test]
    fn antiwick_examples() {
        let one = radial_antiwick_eigs(&RadialProfile::Polynomial(vec![1.0]), 50).unwrap();
        assert!(one.eigenvalues.iter().all(|v| (v - 1.0).abs() < 1e-10));
        let h = radial_antiwick_eigs(&harmonic(), 200).unwrap();
        for (n, v) in h.eigenvalues.iter().enumerate() {
            assert!((v - (2 * n + 2) as f64).abs() < 1e-8 * (n as f64 + 1.0), "{n}: {v}");
        }
        let g = RadialProfile::ExpGevrey { h: 1.0, s: 2.0 };
        let aw = radial_antiwick_eigs(&g, 60).unwrap();
        assert!(aw.eigenvalues.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn antiwick_dominates_weyl_for_harmonic() {
        let q = QuadSpec::default();
        let w = radial_weyl_diagonal(&harmonic(), 30, &q).unwrap();
        let a = radial_antiwick_diagonal(&harmonic(), 30, &q).unwrap();
        for (x, y) in w.iter().zip(&a) {
            assert!((y - x - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn matrix_examples() {
        let q = QuadSpec::default();
        let r2 = build_matrix(&Symbol::radial_poly(&[0.0, 1.0], 1).unwrap(), 4, &q).unwrap();
        for m in 0..4 {
            for n in 0..4 {
                let want = if m == n { (2 * n + 1) as f64 } else { 0.0 };
                assert!((r2.get(m, n) - want).norm() < 1e-10, "({m},{n}) {}", r2.get(m, n));
            }
        }
        let x = Symbol::polynomial(vec![(vec![1, 0], 1.0)], 1).unwrap();
        let mx = build_matrix(&x, 3, &q).unwrap();
        let s = 0.5f64.sqrt();
        let want = [[0.0, s, 0.0], [s, 0.0, 1.0], [0.0, 1.0, 0.0]];
        for m in 0..3 {
            for n in 0..3 {
                assert!((mx.get(m, n) - want[m][n]).norm() < 1e-10);
            }
        }
        let id = build_matrix(&Symbol::radial_poly(&[1.0], 1).unwrap(), 6, &q).unwrap();
        for m in 0..6 {
            for n in 0..6 {
                let want = if m == n { 1.0 } else { 0.0 };
                assert!((id.get(m, n) - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn position_and_momentum_match_gauss_hermite() {
        let q = QuadSpec::default();
        let n = 8;
        let (nodes, weights) = gauss_hermite(64);
        let x = Symbol::polynomial(vec![(vec![1, 0], 1.0)], 1).unwrap();
        let mx = build_matrix(&x, n, &q).unwrap();
        let xi = Symbol::polynomial(vec![(vec![0, 1], 1.0)], 1).unwrap();
        let mxi = build_matrix(&xi, n, &q).unwrap();
        for m in 0..n {
            for k in 0..n {
                let oracle: f64 = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(t, w)| {
                        w * t * hermite_function(m, *t) * hermite_function(k, *t) * (t * t).exp()
                    })
                    .sum();
                assert!((mx.get(m, k).re - oracle).abs() < 1e-10);
                // momentum is −i d/dx: ⟨h_m, D h_k⟩ = −i(√(k/2)δ_{m,k−1} − √((k+1)/2)δ_{m,k+1})
                let d = if m + 1 == k {
                    (k as f64 / 2.0).sqrt()
                } else if m == k + 1 {
                    -((k as f64 + 1.0) / 2.0).sqrt()
                } else {
                    0.0
                };
                assert!((mxi.get(m, k) - Complex64::new(0.0, -d)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn radial_matrix_diagonal_matches_transform() {
        let q = QuadSpec::default();
        let g = RadialProfile::ExpGevrey { h: 1.0, s: 2.0 };
        let sym = Symbol::radial(g.clone(), 1).unwrap();
        let mat = build_matrix(&sym, 24, &q).unwrap();
        let diag = radial_weyl_diagonal(&g, 24, &q).unwrap();
        for n in 0..24 {
            assert!((mat.get(n, n).re - diag[n]).abs() < 1e-8 * (1.0 + diag[n].abs()));
            assert!(mat.get(n, n).im.abs() < 1e-12 * (1.0 + diag[n].abs()));
        }
        assert!(mat.hermitian_defect() < 1e-12 * mat.max_abs());
    }

    #[test]
    fn composition_of_harmonic_matrices() {
        let q = QuadSpec::default();
        let a = build_matrix(&Symbol::radial_poly(&[0.0, 1.0], 1).unwrap(), 200, &q).unwrap();
        let c = build_matrix(&Symbol::radial_poly(&[-1.0, 0.0, 1.0], 1).unwrap(), 200, &q).unwrap();
        let a50 = a.leading_block(50);
        let sq = a50.matmul(&a50).unwrap();
        let c50 = c.leading_block(50);
        let worst = sq
            .entries
            .iter()
            .zip(&c50.entries)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-6, "{worst:e}");
    }

    fn shifted_harmonic() -> Symbol {
        Symbol::polynomial(
            vec![(vec![2, 0], 1.0), (vec![0, 2], 1.0), (vec![1, 0], 1.0)],
            1,
        )
        .unwrap()
    }

    #[test]
    fn completed_square_shift() {
        let q = QuadSpec::default();
        let small = eigensolve(&build_matrix(&shifted_harmonic(), 100, &q).unwrap()).unwrap();
        let large = eigensolve(&build_matrix(&shifted_harmonic(), 200, &q).unwrap()).unwrap();
        let trusted = truncation_trust(&small, &large, 1e-6);
        assert!(trusted >= 60, "trusted prefix {trusted}");
        for (n, v) in large.eigenvalues.iter().take(trusted).enumerate() {
            assert!((v - (2 * n + 1) as f64 + 0.25).abs() < 1e-6, "{n}: {v}");
        }
    }

    #[test]
    fn eigensolve_examples_and_errors() {
        let c = |v: f64| Complex64::new(v, 0.0);
        let diag = OperatorMatrix {
            dimension: 3,
            entries: vec![c(1.0), c(0.0), c(0.0), c(0.0), c(3.0), c(0.0), c(0.0), c(0.0), c(5.0)],
        };
        assert_eq!(eigensolve(&diag).unwrap().eigenvalues, vec![1.0, 3.0, 5.0]);
        let refl = OperatorMatrix {
            dimension: 2,
            entries: vec![c(0.0), c(1.0), c(1.0), c(0.0)],
        };
        let ev = eigensolve(&refl).unwrap().eigenvalues;
        assert!((ev[0] + 1.0).abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);
        let skew = OperatorMatrix {
            dimension: 2,
            entries: vec![c(0.0), c(1.0), c(-1.0), c(0.0)],
        };
        assert!(matches!(eigensolve(&skew), Err(Error::InvalidInput(_))));
        assert!(eigensolve(&diag).unwrap().trusted_count.is_none());
    }

    #[test]
    fn weyl_and_matrix_spectra_agree() {
        let q = QuadSpec::default();
        let sym = Symbol::radial_poly(&[0.0, 1.0], 1).unwrap();
        let ev = eigensolve(&build_matrix(&sym, 60, &q).unwrap()).unwrap();
        let direct = radial_weyl_eigs(&harmonic(), 60, &q).unwrap();
        for (a, b) in ev.eigenvalues.iter().zip(&direct.eigenvalues) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn truncation_trust_examples() {
        let a = SpectralData::new(vec![1.0, 2.0, 3.0], "a");
        assert_eq!(truncation_trust(&a, &a, 1e-12), 3);
        let b = SpectralData::new(vec![1.0, 2.0, 3.5, 4.0], "b");
        assert_eq!(truncation_trust(&a, &b, 1e-6), 2);
        let q = QuadSpec::default();
        let d1 = radial_weyl_eigs(&harmonic(), 30, &q).unwrap();
        let d2 = radial_weyl_eigs(&harmonic(), 60, &q).unwrap();
        assert_eq!(truncation_trust(&d1, &d2, 1e-10), 30);
    }

    #[test]
    fn separable_combination() {
        let q = QuadSpec::default();
        let h = radial_weyl_eigs(&harmonic(), 10, &q).unwrap();
        let sum = combine_separable(&h, &h, 10.0 + 1e-9).unwrap();
        let want = [2.0, 4.0, 4.0, 6.0, 6.0, 6.0, 8.0, 8.0, 8.0, 8.0, 10.0, 10.0, 10.0, 10.0, 10.0];
        assert_eq!(sum.len(), want.len());
        for (a, b) in sum.eigenvalues.iter().zip(want) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(sum.trusted_count, Some(15));

        let zero = SpectralData::exact(vec![0.0], "zero");
        let filtered = combine_separable(&zero, &h, 7.5).unwrap();
        assert_eq!(filtered.len(), 4);

        let big = radial_weyl_eigs(&harmonic(), 110, &q).unwrap();
        // λ = 200 is itself a level of multiplicity 100; allow for rounding in 2n+1
        assert_eq!(combine_separable(&big, &big, 200.0 + 1e-6).unwrap().len(), 5050);
        assert!(matches!(
            combine_separable(&h, &h, 40.0),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn csv_layout() {
        let mut s = SpectralData::new(vec![2.0, 1.0], "t");
        s.trusted_count = Some(1);
        let csv = s.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "j,lambda,trusted");
        assert_eq!(lines[1], "0,1.0000000000000000e0,1");
        assert_eq!(lines[2], "1,2.0000000000000000e0,0");
    }
}
