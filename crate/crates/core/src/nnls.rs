//! Non-negative least squares (Lawson-Hanson active set) and the
//! least-distance program built on it.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    /// `A x - b`
    pub residual: DVector<f64>,
    pub iterations: usize,
}

/// `argmin_{x >= 0} ||A x - b||`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<NnlsSolution> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::Validation(format!("rhs has {} entries, expected {m}", b.len())));
    }
    let scale = a.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max);
    let tol = 10.0 * f64::EPSILON * scale * m.max(n) as f64;
    let max_iter = 3 * n.max(10);

    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    // Columns whose entry would not move x; cleared whenever x changes.
    let mut blocked = vec![false; n];
    let mut iterations = 0;
    let mut w = a.tr_mul(&(b - a * &x));
    loop {
        let candidate = (0..n)
            .filter(|&j| !passive[j] && !blocked[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(t) = candidate.filter(|&j| w[j] > tol) else {
            break;
        };
        passive[t] = true;
        let mut first = true;
        loop {
            iterations += 1;
            if iterations > max_iter {
                let r = a * &x - b;
                return Err(Error::NoConvergence {
                    message: format!("NNLS exceeded {max_iter} iterations"),
                    best_residual: r.norm(),
                });
            }
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let s_p = least_squares(&a.select_columns(&idx), b);
            if first {
                first = false;
                let pos = idx.iter().position(|&j| j == t).expect("t is passive");
                if s_p[pos] <= tol {
                    // Rounding made w[t] look positive (degenerate fit).
                    passive[t] = false;
                    blocked[t] = true;
                    break;
                }
            }
            if s_p.iter().all(|&v| v > tol) {
                x.fill(0.0);
                for (&j, &v) in idx.iter().zip(s_p.iter()) {
                    x[j] = v;
                }
                blocked.fill(false);
                break;
            }
            let mut alpha = f64::INFINITY;
            for (&j, &s) in idx.iter().zip(s_p.iter()) {
                if s <= tol {
                    let step = x[j] / (x[j] - s);
                    alpha = alpha.min(step);
                }
            }
            let mut s_full = DVector::zeros(n);
            for (&j, &v) in idx.iter().zip(s_p.iter()) {
                s_full[j] = v;
            }
            x += (&s_full - &x) * alpha;
            blocked.fill(false);
            for &j in &idx {
                if x[j] <= tol {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
        w = a.tr_mul(&(b - a * &x));
    }
    let residual = a * &x - b;
    Ok(NnlsSolution { x, residual, iterations })
}

fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let eps = f64::EPSILON * a.nrows().max(a.ncols()) as f64 * svd.singular_values.max();
    svd.solve(b, eps).expect("SVD computed with both factors")
}

/// Whether some `u` satisfies `g_i . u > 0` for every row `g_i`.
///
/// Solved as the least-distance program `min ||u||` subject to
/// `g_i . u >= 1` through its NNLS dual on the unit-normalized rows
/// `(g_i, 1)`. A vanishing dual residual means infeasible; otherwise the
/// recovered `u` is checked directly.
pub fn strictly_feasible(g: &DMatrix<f64>) -> Result<bool> {
    let (m, n) = g.shape();
    if m == 0 {
        return Ok(true);
    }
    let mut e = DMatrix::zeros(n + 1, m);
    for i in 0..m {
        let row = g.row(i);
        let norm = (row.norm_squared() + 1.0).sqrt();
        for j in 0..n {
            e[(j, i)] = row[j] / norm;
        }
        e[(n, i)] = 1.0 / norm;
    }
    let mut f = DVector::zeros(n + 1);
    f[n] = 1.0;
    let sol = nnls(&e, &f)?;
    let r = &sol.residual;
    if r.norm() < 1e-12 || r[n].abs() < 1e-300 {
        return Ok(false);
    }
    let u: DVector<f64> = DVector::from_fn(n, |j, _| -r[j] / r[n]);
    Ok((g * u).iter().all(|&v| v > 0.0))
}
