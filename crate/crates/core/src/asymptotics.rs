//! Comparison functions, the scale `σ(λ) = (f⁻¹(λ))^{2d}`, counting
//! functions, Weyl-law constants and the Tauberian passage from heat traces
//! to eigenvalue counts.

use std::f64::consts::{E, PI};
use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{bisect_increasing, gamma, ln_factorial};
use crate::quadrature::{gauss_legendre, QuadSpec};
use crate::quantize::SpectralData;
use crate::symbols::{PhasePoint, Symbol};
use crate::weights::WeightSequence;

/// Growth profiles `f` of symbols along rays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ComparisonFamily {
    /// `y^β lnᵅ y`.
    PowerLog { beta: f64, alpha: f64 },
    /// `exp((hy)^{1/s})`.
    ExpGevrey { h: f64, s: f64 },
    /// `exp(c·(hy)^{1/s})`.
    ExpRootScaled { h: f64, s: f64, c: f64 },
    /// `exp(M(hy))` with `M` the associated function of `weights`.
    Assoc { weights: WeightSequence, h: f64 },
}

/// A comparison function on `[y0, ∞)`, where it is increasing and at least 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonFunction {
    pub family: ComparisonFamily,
    pub y0: f64,
}

impl ComparisonFunction {
    /// Uses the family's default domain start when `y0` is `None`.
    pub fn new(family: ComparisonFamily, y0: Option<f64>) -> Result<Self> {
        let y0 = match y0 {
            Some(y) => y,
            None => Self::default_start(&family)?,
        };
        let f = ComparisonFunction { family, y0 };
        f.validate()?;
        Ok(f)
    }

    pub fn power_log(beta: f64, alpha: f64) -> Result<Self> {
        Self::new(ComparisonFamily::PowerLog { beta, alpha }, None)
    }

    pub fn exp_gevrey(h: f64, s: f64) -> Result<Self> {
        Self::new(ComparisonFamily::ExpGevrey { h, s }, None)
    }

    pub fn exp_root_scaled(h: f64, s: f64, c: f64) -> Result<Self> {
        Self::new(ComparisonFamily::ExpRootScaled { h, s, c }, None)
    }

    pub fn assoc(weights: WeightSequence, h: f64) -> Result<Self> {
        Self::new(ComparisonFamily::Assoc { weights, h }, None)
    }

    fn default_start(family: &ComparisonFamily) -> Result<f64> {
        Ok(match family {
            ComparisonFamily::PowerLog { beta, alpha } => {
                if *alpha == 0.0 {
                    1.0
                } else {
                    (1.0f64).max(2.0 * alpha.abs() / beta).exp()
                }
            }
            ComparisonFamily::ExpGevrey { .. } | ComparisonFamily::ExpRootScaled { .. } => 1.0,
            ComparisonFamily::Assoc { weights, h } => 2.0 * weights.ratio(1)? / h,
        })
    }

    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        match &self.family {
            ComparisonFamily::PowerLog { beta, alpha } => {
                if !ok(*beta) || !alpha.is_finite() {
                    return invalid("power_log needs beta > 0 and finite alpha");
                }
            }
            ComparisonFamily::ExpGevrey { h, s } => {
                if !ok(*h) || !(s.is_finite() && *s > 1.0) {
                    return invalid("exp_gevrey needs h > 0 and s > 1");
                }
            }
            ComparisonFamily::ExpRootScaled { h, s, c } => {
                if !ok(*h) || !ok(*c) || !(s.is_finite() && *s > 1.0) {
                    return invalid("exp_root_scaled needs h, c > 0 and s > 1");
                }
            }
            ComparisonFamily::Assoc { weights, h } => {
                weights.validate()?;
                if !ok(*h) {
                    return invalid("assoc needs h > 0");
                }
            }
        }
        if !(self.y0.is_finite() && self.y0 > 0.0) {
            return invalid(format!("domain start must be positive, got {}", self.y0));
        }
        let ln_f0 = self.ln_value(self.y0)?;
        if ln_f0 < 0.0 {
            return invalid(format!("f(y0) = exp({ln_f0:.3e}) is below 1; raise y0"));
        }
        if self.log_derivative(self.y0)? <= 0.0 {
            return invalid("f is not increasing at y0; raise y0");
        }
        Ok(())
    }

    /// Finite power index `β = lim y f'(y)/f(y)`; `None` for ultrapolynomial families.
    pub fn index(&self) -> Option<f64> {
        match &self.family {
            ComparisonFamily::PowerLog { beta, .. } => Some(*beta),
            _ => None,
        }
    }

    /// `ln f(y)`.
    pub fn ln_value(&self, y: f64) -> Result<f64> {
        Ok(match &self.family {
            ComparisonFamily::PowerLog { beta, alpha } => {
                let l = y.ln();
                if *alpha == 0.0 {
                    beta * l
                } else {
                    beta * l + alpha * l.ln()
                }
            }
            ComparisonFamily::ExpGevrey { h, s } => (h * y).powf(1.0 / s),
            ComparisonFamily::ExpRootScaled { h, s, c } => c * (h * y).powf(1.0 / s),
            ComparisonFamily::Assoc { weights, h } => weights.associated_function(h * y, 0)?,
        })
    }

    /// `f(y)`; overflow is reported rather than returned as infinity.
    pub fn value(&self, y: f64) -> Result<f64> {
        let l = self.ln_value(y)?;
        if l > 709.0 {
            return Err(Error::Overflow(format!("f({y}) = exp({l:.3})")));
        }
        Ok(l.exp())
    }

    /// `y f'(y)/f(y)`.
    pub fn log_derivative(&self, y: f64) -> Result<f64> {
        Ok(match &self.family {
            ComparisonFamily::PowerLog { beta, alpha } => beta + alpha / y.ln(),
            ComparisonFamily::ExpGevrey { h, s } => (h * y).powf(1.0 / s) / s,
            ComparisonFamily::ExpRootScaled { h, s, c } => c * (h * y).powf(1.0 / s) / s,
            // the maximising index of the associated function is its derivative in ln ρ
            ComparisonFamily::Assoc { weights, h } => weights.ln_sup(h * y, 0)?.0 as f64,
        })
    }

    /// `f⁻¹(λ)` from `ln λ`.
    pub fn inverse_ln(&self, ln_lambda: f64) -> Result<f64> {
        let ln_f0 = self.ln_value(self.y0)?;
        if ln_lambda.is_nan() || ln_lambda < ln_f0 {
            return Err(Error::Domain(format!(
                "ln λ = {ln_lambda:.6e} lies below ln f(y0) = {ln_f0:.6e}"
            )));
        }
        Ok(match &self.family {
            ComparisonFamily::PowerLog { beta, alpha } if *alpha == 0.0 => (ln_lambda / beta).exp(),
            ComparisonFamily::ExpGevrey { h, s } => ln_lambda.powf(*s) / h,
            ComparisonFamily::ExpRootScaled { h, s, c } => (ln_lambda / c).powf(*s) / h,
            _ => {
                // bracket by doubling ln y, then bisect in ln y
                let target = ln_lambda;
                let ln_f = |ly: f64| self.ln_value(ly.exp()).unwrap_or(f64::INFINITY);
                let lo = self.y0.ln();
                let mut hi = lo + 1.0;
                while ln_f(hi) < target {
                    hi = lo + 2.0 * (hi - lo);
                    if hi > 700.0 {
                        return Err(Error::Range(format!("f⁻¹(exp({target})) exceeds e^700")));
                    }
                }
                bisect_increasing(ln_f, target, lo, hi, 1e-15).exp()
            }
        })
    }

    pub fn inverse(&self, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0) {
            return Err(Error::Domain(format!("λ = {lambda} is not positive")));
        }
        self.inverse_ln(lambda.ln())
    }

    /// `σ(λ) = (f⁻¹(λ))^{2d}`.
    pub fn sigma(&self, lambda: f64, d: usize) -> Result<f64> {
        Ok(self.inverse(lambda)?.powi(2 * d as i32))
    }

    /// `σ` at `λ = e^{ln_lambda}`, for λ beyond the double range.
    pub fn sigma_ln(&self, ln_lambda: f64, d: usize) -> Result<f64> {
        Ok(self.inverse_ln(ln_lambda)?.powi(2 * d as i32))
    }

    /// `η(λ) = λσ'(λ)/σ(λ) = 2d·f(y)/(y f'(y))` at `y = f⁻¹(λ)`.
    pub fn eta(&self, lambda: f64, d: usize) -> Result<f64> {
        self.eta_ln(lambda.ln(), d)
    }

    pub fn eta_ln(&self, ln_lambda: f64, d: usize) -> Result<f64> {
        let y = self.inverse_ln(ln_lambda)?;
        let ld = self.log_derivative(y)?;
        if ld <= 0.0 {
            return Err(Error::Domain(format!("f' vanishes at y = {y}")));
        }
        Ok(2.0 * d as f64 / ld)
    }
}

/// `N(λ)` over the trusted prefix; `λ` must not exceed the last trusted value
/// unless the spectrum is complete.
pub fn counting(spec: &SpectralData, lambda: f64) -> Result<usize> {
    counting_with_tolerance(spec, lambda, 0.0)
}

/// `N(λ)` where eigenvalues within `rel_tol·(1 + |λ|)` above `λ` count as
/// equal to it, for evaluating counts exactly at a numerically computed level.
pub fn counting_with_tolerance(spec: &SpectralData, lambda: f64, rel_tol: f64) -> Result<usize> {
    let trusted = spec.trusted();
    let level = lambda + rel_tol * (1.0 + lambda.abs());
    let covered = spec.complete && trusted.len() == spec.len();
    if !covered {
        match trusted.last() {
            Some(&top) if lambda <= top => {}
            _ => {
                return Err(Error::Range(format!(
                    "λ = {lambda} is beyond the trusted range (ceiling {:?})",
                    trusted.last()
                )))
            }
        }
    }
    Ok(trusted.partition_point(|&v| v <= level))
}

/// A positive function `Φ` on the unit sphere of `ℝ^{2d}`.
#[derive(Clone)]
pub struct SphereProfile {
    pub d: usize,
    pub label: String,
    phi: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    /// Nodes per coordinate of the sphere quadrature.
    pub order: usize,
}

impl fmt::Debug for SphereProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SphereProfile")
            .field("d", &self.d)
            .field("label", &self.label)
            .field("order", &self.order)
            .finish()
    }
}

impl SphereProfile {
    pub fn new(
        d: usize,
        label: &str,
        phi: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if d == 0 {
            return invalid("dimension must be at least 1");
        }
        let profile = SphereProfile {
            d,
            label: label.to_string(),
            phi: Arc::new(phi),
            order: if d == 1 { 64 } else { 12 },
        };
        let min = sphere_quadrature(d, profile.order)
            .iter()
            .map(|(p, _)| (profile.phi)(p))
            .fold(f64::INFINITY, f64::min);
        if !(min > 0.0 && min.is_finite()) {
            return invalid(format!("Φ must be positive on the sphere, minimum {min}"));
        }
        Ok(profile)
    }

    pub fn constant(d: usize, c: f64) -> Result<Self> {
        Self::new(d, &format!("{c}"), move |_| c)
    }

    pub fn with_order(mut self, order: usize) -> Self {
        self.order = order.max(2);
        self
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        (self.phi)(point)
    }

    /// `∫_{𝕊^{2d−1}} Φ^{−p}`.
    pub fn integral_neg_power(&self, p: f64) -> f64 {
        sphere_quadrature(self.d, self.order)
            .iter()
            .map(|(pt, w)| w * self.eval(pt).powf(-p))
            .sum()
    }
}

/// Quadrature on `𝕊^{2d−1} ⊂ ℂ^d` with `z_k = √v_k e^{iφ_k}`: the surface
/// measure is `2^{1−d} dv dφ` with `v` uniform on the simplex. Gauss–Legendre
/// on the collapsed simplex and trapezoid in each angle; `d = 1` is a plain
/// trapezoid with `4·order` points.
pub fn sphere_quadrature(d: usize, order: usize) -> Vec<(Vec<f64>, f64)> {
    let angles = if d == 1 { 4 * order } else { order };
    let step = 2.0 * PI / angles as f64;
    // simplex nodes (v, weight), weights summing to 1/(d−1)!
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
    let rule = gauss_legendre(order);
    for _ in 0..d.saturating_sub(1) {
        let mut next = Vec::with_capacity(simplex.len() * order);
        for (v, w) in &simplex {
            let rest = 1.0 - v.iter().sum::<f64>();
            for (x, wx) in rule.0.iter().zip(&rule.1) {
                let t = 0.5 * (x + 1.0);
                let mut vv = v.clone();
                vv.push(rest * t);
                next.push((vv, w * 0.5 * wx * rest));
            }
        }
        simplex = next;
    }
    let measure = 2f64.powi(1 - d as i32);
    let mut out = Vec::new();
    for (v, w) in simplex {
        let mut full = v.clone();
        full.push((1.0 - v.iter().sum::<f64>()).max(0.0));
        let total = angles.pow(d as u32);
        for idx in 0..total {
            let mut point = vec![0.0; 2 * d];
            let mut rem = idx;
            for k in 0..d {
                let phi = step * (rem % angles) as f64;
                rem /= angles;
                let r = full[k].sqrt();
                point[k] = r * phi.cos();
                point[d + k] = r * phi.sin();
            }
            out.push((point, w * measure * step.powi(d as i32)));
        }
    }
    out
}

fn weyl_prefactor(d: usize) -> f64 {
    PI / ((2.0 * PI).powi(d as i32 + 1) * d as f64)
}

/// `π/((2π)^{d+1}d) ∫ Φ^{−2d/β}`, with exponent `2d` when `β = ∞` (`None`).
pub fn weyl_constant(d: usize, beta: Option<f64>, phi: &SphereProfile) -> Result<f64> {
    if phi.d != d {
        return invalid("sphere profile dimension does not match d");
    }
    let p = match beta {
        Some(b) if b > 0.0 => 2.0 * d as f64 / b,
        Some(b) => return invalid(format!("β must be positive, got {b}")),
        None => 2.0 * d as f64,
    };
    Ok(weyl_prefactor(d) * phi.integral_neg_power(p))
}

/// `γ = √(2π)·(2d / ∫ Φ^{−2d})^{1/(2d)}`.
pub fn gamma_const(d: usize, phi: &SphereProfile) -> Result<f64> {
    if phi.d != d {
        return invalid("sphere profile dimension does not match d");
    }
    let dd = 2.0 * d as f64;
    Ok((2.0 * PI).sqrt() * (dd / phi.integral_neg_power(dd)).powf(1.0 / dd))
}

/// `ln λ_j` predicted by the Weyl law: `f(γ j^{1/(2d)})` for `β = ∞`,
/// `C^{−β/(2d)} f(j^{1/(2d)})` for finite `β`.
pub fn ln_eigenvalue_prediction(
    j: usize,
    f: &ComparisonFunction,
    d: usize,
    phi: &SphereProfile,
    beta: Option<f64>,
) -> Result<f64> {
    if j == 0 {
        return invalid("eigenvalue predictions start at j = 1");
    }
    let root = (j as f64).powf(0.5 / d as f64);
    match beta {
        None => f.ln_value(gamma_const(d, phi)? * root),
        Some(b) => {
            let c = weyl_constant(d, Some(b), phi)?;
            Ok(-b / (2.0 * d as f64) * c.ln() + f.ln_value(root)?)
        }
    }
}

pub fn eigenvalue_prediction(
    j: usize,
    f: &ComparisonFunction,
    d: usize,
    phi: &SphereProfile,
    beta: Option<f64>,
) -> Result<f64> {
    let l = ln_eigenvalue_prediction(j, f, d, phi, beta)?;
    if l > 709.0 {
        return Err(Error::Overflow(format!("predicted λ_{j} = exp({l:.3})")));
    }
    Ok(l.exp())
}

/// Upper bound on `limsup N(λ)/σ(λ)` and the admissible range `h < h_threshold`
/// of the eigenvalue lower bound `λ_j ≥ f(h j^{1/(2d)})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UpperBound {
    pub bound: f64,
    pub h_threshold: f64,
}

/// `beta_prime = None` stands for `β' = ∞`. `limit_case` selects the sharper
/// constants available when `y f'/f` converges rather than only having a
/// positive lim inf.
pub fn upper_bound_const(
    d: usize,
    beta_prime: Option<f64>,
    c_lower: f64,
    limit_case: bool,
) -> Result<UpperBound> {
    if !(c_lower > 0.0 && c_lower.is_finite()) {
        return invalid(format!("C must be positive, got {c_lower}"));
    }
    if d == 0 {
        return invalid("dimension must be at least 1");
    }
    let df = d as f64;
    let fact = ln_factorial(d).exp();
    // 2d/β', 1/β'
    let (q, inv) = match beta_prime {
        Some(b) if b > 0.0 => (2.0 * df / b, 1.0 / b),
        Some(b) => return invalid(format!("β' must be positive, got {b}")),
        None => (0.0, 0.0),
    };
    let g = gamma(1.0 + q);
    let cq = c_lower.powf(q);
    let base = E / (2f64.powi(d as i32) * fact);
    Ok(if limit_case {
        UpperBound {
            bound: g * base / cq,
            h_threshold: 2f64.sqrt() * c_lower.powf(inv) * fact.powf(0.5 / df) * (E * g).powf(-0.5 / df),
        }
    } else {
        UpperBound {
            bound: base * (1.0 + g / cq),
            h_threshold: 2f64.sqrt()
                * c_lower.powf(inv)
                * E.powf(-0.5 / df)
                * fact.powf(0.5 / df)
                * (cq + g).powf(-0.5 / df),
        }
    })
}

/// Onset of `λ_j ≥ f(h j^{1/(2d)})` over the trusted positive eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundReport {
    pub h: f64,
    /// Smallest `j` from which every checked index satisfies the bound.
    pub onset: Option<usize>,
    pub checked: usize,
    pub violations: Vec<usize>,
}

impl LowerBoundReport {
    /// The bound holds from the onset to the end of the trusted range.
    pub fn holds_eventually(&self) -> bool {
        self.onset.is_some()
    }
}

pub fn lower_bound_check(
    spec: &SpectralData,
    f: &ComparisonFunction,
    d: usize,
    h: f64,
) -> Result<LowerBoundReport> {
    let mut checked = 0;
    let mut violations = Vec::new();
    let mut onset = None;
    for (j, &lambda) in spec.trusted().iter().enumerate() {
        let y = h * (j as f64).powf(0.5 / d as f64);
        if j == 0 || lambda <= 0.0 || y < f.y0 {
            continue;
        }
        checked += 1;
        if lambda.ln() < f.ln_value(y)? {
            violations.push(j);
            onset = None;
        } else if onset.is_none() {
            onset = Some(j);
        }
    }
    Ok(LowerBoundReport {
        h,
        onset,
        checked,
        violations,
    })
}

/// `(2π)^{−d} |{a < λ}|` by polar quadrature with a root search along each ray.
pub fn geometric_count(sym: &Symbol, lambda: f64, quad: &QuadSpec) -> Result<f64> {
    const R_MAX: f64 = 1e9;
    let d = sym.d();
    let order = if quad.angular_points > 0 {
        quad.angular_points
    } else if d == 1 {
        16
    } else {
        8
    };
    let below = |w: &PhasePoint| -> Result<bool> {
        let a = sym.evaluate(w)?;
        Ok(if lambda > 0.0 {
            a.sign <= 0.0 || a.is_zero() || a.ln_abs < lambda.ln()
        } else {
            a.value() < lambda
        })
    };
    let dd = 2 * d as i32;
    let mut total = 0.0;
    for (dir, weight) in sphere_quadrature(d, order) {
        let at = |r: f64| -> Result<bool> {
            below(&PhasePoint::new(dir.iter().map(|c| c * r).collect())?)
        };
        // march outwards, bisecting every change of side
        let mut r = 0.0;
        let mut inside = at(0.0)?;
        let mut enter: Option<f64> = if inside { Some(0.0) } else { None };
        let mut volume = 0.0;
        let mut last_exit: f64 = 0.0;
        loop {
            let next = r + 0.01 * (1.0 + r);
            let now = at(next)?;
            if now != inside {
                let (mut lo, mut hi) = (r, next);
                while hi - lo > 1e-14 * hi {
                    let mid = 0.5 * (lo + hi);
                    if at(mid)? == inside {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let root = 0.5 * (lo + hi);
                if inside {
                    let start = enter.take().unwrap_or(0.0);
                    volume += (root.powi(dd) - start.powi(dd)) / dd as f64;
                    last_exit = root;
                } else {
                    enter = Some(root);
                }
                inside = now;
            }
            r = next;
            if !inside && r > 4.0 * last_exit + 10.0 {
                break;
            }
            if r > R_MAX {
                return Err(Error::Range(format!(
                    "sublevel set {{a < {lambda}}} reaches |w| = {R_MAX:e}; it may be unbounded"
                )));
            }
        }
        total += weight * volume;
    }
    Ok(total / (2.0 * PI).powi(d as i32))
}

/// Sampled regular variation of `σ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularVariationReport {
    /// `2d/β`, zero for ultrapolynomial `f`.
    pub index: f64,
    pub max_deviation: f64,
    /// Ratios `σ(αλ)/σ(λ)` as `(α, ln λ, ratio)`.
    pub samples: Vec<(f64, f64, f64)>,
    /// Smallest `ν` with `σ(αλ)/σ(λ) ≤ (α + 1)^ν` on the samples (`C₁ = 1`).
    pub nu: f64,
}

/// Compares `σ(αλ)/σ(λ)` with `α^{2d/β}` over a grid given by `ln λ`.
pub fn regular_variation_check(
    f: &ComparisonFunction,
    d: usize,
    alphas: &[f64],
    ln_lambdas: &[f64],
) -> Result<RegularVariationReport> {
    let index = f.index().map_or(0.0, |b| 2.0 * d as f64 / b);
    let mut samples = Vec::new();
    let mut max_deviation: f64 = 0.0;
    let mut nu: f64 = 0.0;
    for &alpha in alphas {
        if !(alpha > 0.0) {
            return invalid(format!("α must be positive, got {alpha}"));
        }
        for &ll in ln_lambdas {
            let ratio = f.sigma_ln(ll + alpha.ln(), d)? / f.sigma_ln(ll, d)?;
            max_deviation = max_deviation.max((ratio - alpha.powf(index)).abs());
            if ratio > 1.0 {
                nu = nu.max(ratio.ln() / (1.0 + alpha).ln());
            }
            samples.push((alpha, ll, ratio));
        }
    }
    Ok(RegularVariationReport {
        index,
        max_deviation,
        samples,
        nu,
    })
}

/// Heat-trace limit and its Tauberian inversion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KaramataEstimate {
    /// `trace(t)/σ(1/t)` at each sample.
    pub ratios: Vec<f64>,
    /// Extrapolated `L = lim trace(t)/σ(1/t)`.
    pub limit: f64,
    /// Variation index `ρ_v = 2d/β` (0 for `β = ∞`).
    pub index: f64,
    pub d: usize,
}

impl KaramataEstimate {
    /// `N_est(λ) = L·σ(λ)/Γ(1 + ρ_v)`.
    pub fn counting_estimate(&self, f: &ComparisonFunction, lambda: f64) -> Result<f64> {
        Ok(self.limit * f.sigma(lambda, self.d)? / gamma(1.0 + self.index))
    }

    /// `N_est(λ)/σ(λ)`, the estimated Weyl constant.
    pub fn constant(&self) -> f64 {
        self.limit / gamma(1.0 + self.index)
    }
}

/// Extrapolates `trace(t)/σ(1/t)` to `t → 0` from samples at decreasing `t`
/// (Aitken's Δ² on the last three, i.e. Richardson with the observed order).
pub fn karamata_estimate(
    samples: &[(f64, f64)],
    f: &ComparisonFunction,
    d: usize,
) -> Result<KaramataEstimate> {
    if samples.len() < 3 {
        return invalid("Karamata extrapolation needs at least three samples");
    }
    let ordered = samples
        .windows(2)
        .all(|w| w[1].0 < w[0].0 && w[1].1 > w[0].1 && w[1].0 > 0.0 && w[0].1 > 0.0);
    let ratios: Vec<f64> = samples
        .iter()
        .map(|(t, tr)| Ok(tr / f.sigma(1.0 / t, d)?))
        .collect::<Result<_>>()?;
    if !ordered {
        return Err(Error::FitQuality {
            message: "heat samples must have decreasing t and increasing traces".into(),
            residuals: ratios,
        });
    }
    let n = ratios.len();
    let (r1, r2, r3) = (ratios[n - 3], ratios[n - 2], ratios[n - 1]);
    let (d1, d2) = (r2 - r1, r3 - r2);
    if d1 * d2 < 0.0 {
        return Err(Error::FitQuality {
            message: "trace/σ ratios are not monotone; samples too noisy to extrapolate".into(),
            residuals: vec![d1, d2],
        });
    }
    let denom = d2 - d1;
    let limit = if d2 == 0.0 || denom == 0.0 || (d2 / d1).abs() >= 1.0 {
        r3
    } else {
        r3 - d2 * d2 / denom
    };
    Ok(KaramataEstimate {
        ratios,
        limit,
        index: f.index().map_or(0.0, |b| 2.0 * d as f64 / b),
        d,
    })
}

/// One row of a Weyl-law report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeylRow {
    pub lambda: f64,
    pub count: usize,
    pub sigma: f64,
    pub ratio: f64,
    pub predicted: f64,
}

pub fn weyl_report(
    spec: &SpectralData,
    f: &ComparisonFunction,
    d: usize,
    lambdas: &[f64],
    predicted: f64,
    tie_tol: f64,
) -> Result<Vec<WeylRow>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let count = counting_with_tolerance(spec, lambda, tie_tol)?;
            let sigma = f.sigma(lambda, d)?;
            Ok(WeylRow {
                lambda,
                count,
                sigma,
                ratio: count as f64 / sigma,
                predicted,
            })
        })
        .collect()
}

/// CSV with header `lambda,N,sigma,ratio,predicted_constant`.
pub fn weyl_report_csv(rows: &[WeylRow]) -> String {
    let mut out = String::from("lambda,N,sigma,ratio,predicted_constant\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:.16e},{},{:.16e},{:.16e},{:.16e}",
            r.lambda, r.count, r.sigma, r.ratio, r.predicted
        );
    }
    out
}
