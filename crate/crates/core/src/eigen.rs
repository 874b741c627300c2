//! Dense Hermitian eigenvalues: complex Householder reduction to a real
//! symmetric tridiagonal matrix followed by implicit QL with Wilkinson shifts.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Reduces a Hermitian matrix (row-major, `n × n`) to real tridiagonal form.
/// Returns the diagonal and the moduli of the sub-diagonal.
pub fn tridiagonalize(a: &[Complex64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut m = a.to_vec();
    let idx = |i: usize, j: usize| i * n + j;
    let mut off = vec![0.0; n.saturating_sub(1)];
    for k in 0..n.saturating_sub(2) {
        let len = n - k - 1;
        let mut v: Vec<Complex64> = (0..len).map(|i| m[idx(k + 1 + i, k)]).collect();
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            off[k] = 0.0;
            continue;
        }
        let x0 = v[0];
        let phase = if x0.norm() == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            x0 / x0.norm()
        };
        let alpha = -phase * norm;
        v[0] -= alpha;
        let vnorm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            off[k] = norm;
            continue;
        }
        for c in v.iter_mut() {
            *c /= vnorm;
        }
        // p = B v, with B the trailing block
        let p: Vec<Complex64> = (0..len)
            .map(|i| {
                let row = &m[idx(k + 1 + i, k + 1)..idx(k + 1 + i, n)];
                row.iter().zip(&v).map(|(a, b)| a * b).sum()
            })
            .collect();
        let vhp: Complex64 = v.iter().zip(&p).map(|(a, b)| a.conj() * b).sum();
        let w: Vec<Complex64> = p.iter().zip(&v).map(|(p, v)| p - vhp * v).collect();
        for i in 0..len {
            for j in 0..len {
                m[idx(k + 1 + i, k + 1 + j)] -= 2.0 * (v[i] * w[j].conj() + w[i] * v[j].conj());
            }
        }
        for i in 0..len {
            m[idx(k + 1 + i, k)] = Complex64::new(0.0, 0.0);
            m[idx(k, k + 1 + i)] = Complex64::new(0.0, 0.0);
        }
        m[idx(k + 1, k)] = alpha;
        m[idx(k, k + 1)] = alpha.conj();
        off[k] = alpha.norm();
    }
    if n >= 2 {
        off[n - 2] = m[idx(n - 1, n - 2)].norm();
    }
    let diag = (0..n).map(|i| m[idx(i, i)].re).collect();
    (diag, off)
}

/// Eigenvalues of the symmetric tridiagonal matrix `(d, e)`, ascending.
pub fn tridiagonal_eigenvalues(mut d: Vec<f64>, e: &[f64]) -> Result<Vec<f64>> {
    let n = d.len();
    if n == 0 {
        return Ok(d);
    }
    let mut e: Vec<f64> = e.iter().copied().chain(std::iter::once(0.0)).collect();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Accuracy {
                    message: "implicit QL did not converge".to_string(),
                    achieved: e[l].abs(),
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(|a, b| a.total_cmp(b));
    Ok(d)
}

/// Ascending eigenvalues of a Hermitian matrix.
pub fn hermitian_eigenvalues(a: &[Complex64], n: usize) -> Result<Vec<f64>> {
    let (d, e) = tridiagonalize(a, n);
    tridiagonal_eigenvalues(d, &e)
}
