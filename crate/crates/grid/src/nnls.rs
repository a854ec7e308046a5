//! Active-set least squares: Lawson–Hanson non-negative least squares and
//! the least-distance program built on it.

use nalgebra::{DMatrix, DVector};

use crate::error::GridError;

/// Solves `min ||A x - b||₂` subject to `x >= 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, GridError> {
    let (m, n) = a.shape();
    assert_eq!(b.len(), m, "rhs length");
    let tol = 10.0 * f64::EPSILON * a.norm().max(1.0) * (m.max(n) as f64);

    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let max_outer = 3 * n + 10;

    for _ in 0..max_outer {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(t) = candidate else { return Ok(x) };
        if w[t] <= tol {
            return Ok(x);
        }
        passive[t] = true;

        loop {
            let cols: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let z = passive_solve(a, b, &cols)?;
            if cols.iter().all(|&j| z[j] > tol) {
                x = z;
                break;
            }
            let alpha = cols
                .iter()
                .filter(|&&j| z[j] <= tol)
                .map(|&j| x[j] / (x[j] - z[j]))
                .fold(f64::INFINITY, f64::min);
            x += alpha * (&z - &x);
            for &j in &cols {
                if x[j] <= tol {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            if passive.iter().all(|p| !p) {
                break;
            }
        }
    }
    Err(GridError::Solver("NNLS did not terminate".into()))
}

fn passive_solve(a: &DMatrix<f64>, b: &DVector<f64>, cols: &[usize]) -> Result<DVector<f64>, GridError> {
    let sub = a.select_columns(cols);
    let sol = sub
        .svd(true, true)
        .solve(b, 1e-14)
        .map_err(|e| GridError::Solver(format!("least squares: {e}")))?;
    let mut z = DVector::zeros(a.ncols());
    for (k, &j) in cols.iter().enumerate() {
        z[j] = sol[k];
    }
    Ok(z)
}

/// Least-distance program: `min ||x||₂` subject to `G x >= h`.
/// Returns `None` when the constraints are inconsistent.
pub fn least_distance(g: &DMatrix<f64>, h: &DVector<f64>) -> Result<Option<DVector<f64>>, GridError> {
    let (m, n) = g.shape();
    if m == 0 || h.iter().all(|&v| v <= 0.0) {
        return Ok(Some(DVector::zeros(n)));
    }
    let mut e = DMatrix::zeros(n + 1, m);
    e.view_mut((0, 0), (n, m)).copy_from(&g.transpose());
    e.row_mut(n).copy_from(&h.transpose());
    let mut f = DVector::zeros(n + 1);
    f[n] = 1.0;

    let u = nnls(&e, &f)?;
    let r = &e * u - f;
    if r.norm() <= 1e-12 || r[n].abs() <= 1e-14 {
        return Ok(None);
    }
    Ok(Some(DVector::from_fn(n, |i, _| -r[i] / r[n])))
}
