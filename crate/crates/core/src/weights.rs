//! Weight sequences `M_p`, their structural conditions and associated
//! functions. Everything is stored and compared in the log domain.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{ln_factorial, pairwise_sum};

/// Largest natural logarithm that still exponentiates to a finite double.
const LN_MAX: f64 = 709.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSequence {
    /// `M_p = (p!)^s`.
    Gevrey { s: f64 },
    /// `M_p = p^{sp}` with `0^0 = 1`.
    PowerSequence { s: f64 },
    /// Explicit values `M_0, M_1, ...` with `M_0 = 1`.
    Custom { values: Vec<f64> },
}

impl WeightSequence {
    pub fn gevrey(s: f64) -> Result<Self> {
        let seq = WeightSequence::Gevrey { s };
        seq.validate()?;
        Ok(seq)
    }

    pub fn power_sequence(s: f64) -> Result<Self> {
        let seq = WeightSequence::PowerSequence { s };
        seq.validate()?;
        Ok(seq)
    }

    pub fn custom(values: Vec<f64>) -> Result<Self> {
        let seq = WeightSequence::Custom { values };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            WeightSequence::Gevrey { s } | WeightSequence::PowerSequence { s } => {
                if !(s.is_finite() && *s > 0.0) {
                    return invalid(format!("weight exponent must be positive, got {s}"));
                }
            }
            WeightSequence::Custom { values } => {
                if values.is_empty() || values[0] != 1.0 {
                    return invalid("custom weight sequences must start with M_0 = 1");
                }
                if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                    return invalid(format!("custom weight value {v} is not positive and finite"));
                }
            }
        }
        Ok(())
    }

    /// Largest index available, `None` for unbounded built-ins.
    pub fn max_index(&self) -> Option<usize> {
        match self {
            WeightSequence::Custom { values } => Some(values.len() - 1),
            _ => None,
        }
    }

    /// `ln M_p`.
    pub fn ln_value(&self, p: usize) -> Result<f64> {
        match self {
            WeightSequence::Gevrey { s } => Ok(s * ln_factorial(p)),
            WeightSequence::PowerSequence { s } => {
                Ok(if p == 0 { 0.0 } else { s * p as f64 * (p as f64).ln() })
            }
            WeightSequence::Custom { values } => values.get(p).map(|v| v.ln()).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "custom weight sequence has {} values, index {p} requested",
                    values.len()
                ))
            }),
        }
    }

    /// `ln M_0, ..., ln M_P`.
    pub fn ln_values(&self, p_max: usize) -> Result<Vec<f64>> {
        (0..=p_max).map(|p| self.ln_value(p)).collect()
    }

    /// `M_0, ..., M_P` in the linear domain.
    pub fn weight_values(&self, p_max: usize) -> Result<Vec<f64>> {
        self.ln_values(p_max)?
            .into_iter()
            .enumerate()
            .map(|(p, l)| {
                if l > LN_MAX {
                    Err(Error::Overflow(format!("M_{p} = exp({l:.3})")))
                } else {
                    Ok(l.exp())
                }
            })
            .collect()
    }

    /// `m_p = M_p / M_{p-1}` for `p ≥ 1`.
    pub fn ratio(&self, p: usize) -> Result<f64> {
        if p == 0 {
            return invalid("m_p is defined for p >= 1");
        }
        Ok((self.ln_value(p)? - self.ln_value(p - 1)?).exp())
    }

    /// `max_p (p ln ρ − ln M_p)` and the attaining index.
    ///
    /// The scan runs at least to `p_min_scan` and continues until the
    /// supremand has decreased for eight consecutive indices.
    pub fn ln_sup(&self, rho: f64, p_min_scan: usize) -> Result<(usize, f64)> {
        if !(rho.is_finite() && rho > 0.0) {
            return invalid(format!("rho must be positive and finite, got {rho}"));
        }
        let ln_rho = rho.ln();
        let mut best = (0usize, 0.0 - self.ln_value(0)?);
        let mut previous = best.1;
        let mut decreasing = 0usize;
        let mut p = 1usize;
        loop {
            if let Some(last) = self.max_index() {
                if p > last {
                    if decreasing > 0 {
                        break;
                    }
                    return Err(Error::Range(format!(
                        "supremand still increasing at the last custom index {last}"
                    )));
                }
            }
            let v = p as f64 * ln_rho - self.ln_value(p)?;
            if v > best.1 {
                best = (p, v);
            }
            decreasing = if v < previous { decreasing + 1 } else { 0 };
            previous = v;
            if p >= p_min_scan && decreasing >= 8 {
                break;
            }
            p += 1;
        }
        Ok(best)
    }

    /// Associated function `M(ρ) = sup_p ln_+(ρ^p / M_p)`.
    pub fn associated_function(&self, rho: f64, p_max: usize) -> Result<f64> {
        Ok(self.ln_sup(rho, p_max)?.1.max(0.0))
    }

    pub fn condition_report(&self, p_max: usize) -> Result<ConditionReport> {
        if p_max < 3 {
            return invalid("condition report needs P >= 3");
        }
        let ln_m = self.ln_values(p_max)?;
        let tol = |x: f64| 1e-12 * (1.0 + x.abs());

        let m1 = (1..p_max).all(|p| 2.0 * ln_m[p] <= ln_m[p - 1] + ln_m[p + 1] + tol(ln_m[p]));

        let ln_tilde: Vec<f64> = ln_m.iter().enumerate().map(|(p, l)| l - ln_factorial(p)).collect();
        let m4 = (1..p_max)
            .all(|p| 2.0 * ln_tilde[p] <= ln_tilde[p - 1] + ln_tilde[p + 1] + tol(ln_tilde[p]));

        let m2 = m2_search(&ln_m);

        let terms: Vec<f64> = (1..=p_max).map(|p| (ln_m[p - 1] - ln_m[p]).exp()).collect();
        let partial_sum = pairwise_sum(&terms);
        let m3prime = M3Prime {
            convergence_indicated: tail_indicates_convergence(&terms),
            partial_sum,
        };

        Ok(ConditionReport {
            m1,
            m2,
            m3prime,
            m4,
            checked_up_to: p_max,
        })
    }
}

/// Result of scanning `M.1`–`M.4` on `p ≤ checked_up_to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub m1: bool,
    pub m2: M2,
    pub m3prime: M3Prime,
    pub m4: bool,
    pub checked_up_to: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M2 {
    pub holds: bool,
    pub c0: f64,
    pub h: f64,
}

/// Convergence of `Σ M_{p-1}/M_p` is only indicated by a finite scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M3Prime {
    pub convergence_indicated: bool,
    pub partial_sum: f64,
}

/// First `H` on the grid for which the minimal `c0` stops growing with `p + q`.
fn m2_search(ln_m: &[f64]) -> M2 {
    let p_max = ln_m.len() - 1;
    let stable_limit = (3 * p_max) / 4;
    let mut grid = vec![1.0, 1.25, 1.5, 2.0, 4.0];
    let mut h = 4.0;
    while h < 1024.0 {
        h *= 2.0;
        grid.push(h);
    }
    let mut last = M2 {
        holds: false,
        c0: f64::INFINITY,
        h: f64::INFINITY,
    };
    for &h in &grid {
        let ln_h = f64::ln(h);
        let mut full = 0.0f64;
        let mut inner = 0.0f64;
        for n in 0..=p_max {
            for p in 0..=n {
                let v = ln_m[n] - n as f64 * ln_h - ln_m[p] - ln_m[n - p];
                full = full.max(v);
                if n <= stable_limit {
                    inner = inner.max(v);
                }
            }
        }
        last = M2 {
            holds: full <= inner + 1e-12 * (1.0 + inner.abs()),
            c0: full.exp(),
            h,
        };
        if last.holds {
            return last;
        }
    }
    last
}

/// Raabe test over the last quarter: `p (a_p / a_{p+1} − 1) ≥ 1/0.999`.
///
/// A plain ratio test at 0.999 accepts `p^{-1/2}` for the first thousand
/// terms, so the sharper test is used.
fn tail_indicates_convergence(terms: &[f64]) -> bool {
    let n = terms.len();
    let start = n - (n / 4).max(2);
    (start..n - 1).all(|i| {
        let p = (i + 1) as f64;
        p * (terms[i] / terms[i + 1] - 1.0) >= 1.0 / 0.999
    })
}
