//! Central finite-difference derivatives for black-box vector functions.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Default relative step; O(step^2) truncation keeps these accurate enough
/// to serve as test oracles for analytic Jacobians.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Central-difference Jacobian of `f` at `x`.
///
/// The per-component step is `step * max(1, |x_i|)`. Any NaN/Inf returned by
/// `f` at a probe aborts with `NonFiniteEvaluation`.
pub fn fd_jacobian<F>(f: F, x: &[f64], step: f64) -> Result<Matrix>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let n = x.len();
    let probe = |x: &[f64], idx: usize| -> Result<Vec<f64>> {
        let y = f(x);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation { index: idx });
        }
        Ok(y)
    };

    let mut xp = x.to_vec();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut m = None;
    for j in 0..n {
        let h = step * x[j].abs().max(1.0);
        let orig = xp[j];
        xp[j] = orig + h;
        let fp = probe(&xp, j)?;
        xp[j] = orig - h;
        let fm = probe(&xp, j)?;
        xp[j] = orig;
        if let Some(rows) = m {
            if fp.len() != rows {
                return Err(Error::ShapeMismatch {
                    context: format!("residual length changed from {rows} to {}", fp.len()),
                });
            }
        } else {
            m = Some(fp.len());
        }
        cols.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect());
    }

    let rows = m.unwrap_or(0);
    if rows == 0 || n == 0 {
        return Err(Error::ShapeMismatch { context: "empty Jacobian".into() });
    }
    Ok(Matrix::from_fn(rows, n, |i, j| cols[j][i]))
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient<F>(f: F, x: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let jac = fd_jacobian(|x| vec![f(x)], x, step)?;
    Ok((0..x.len()).map(|j| jac[(0, j)]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_and_linear_components() {
        let f = |x: &[f64]| vec![x[0] * x[0], x[1]];
        let j = fd_jacobian(f, &[3.0, 5.0], 1e-5).unwrap();
        assert!((j[(0, 0)] - 6.0).abs() < 1e-6);
        assert!(j[(0, 1)].abs() < 1e-6);
        assert!(j[(1, 0)].abs() < 1e-6);
        assert!((j[(1, 1)] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn linear_map_recovered_exactly() {
        let m = [[2.0, -3.0, 0.5], [0.0, 1.0, 4.0]];
        let f = |x: &[f64]| {
            m.iter()
                .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
                .collect::<Vec<f64>>()
        };
        // No truncation error for linear maps; only rounding, which stays
        // below 1e-9 for steps down to ~1e-6.
        for step in [1e-2, 1e-3, 1e-4, 1e-6] {
            let j = fd_jacobian(f, &[0.3, -0.7, 2.0], step).unwrap();
            for i in 0..2 {
                for k in 0..3 {
                    assert!((j[(i, k)] - m[i][k]).abs() < 1e-9, "step {step}");
                }
            }
        }
    }

    #[test]
    fn sine_derivative_at_zero() {
        let j = fd_jacobian(|x| vec![x[0].sin()], &[0.0], 1e-6).unwrap();
        assert!((j[(0, 0)] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn non_finite_probe_is_reported() {
        let f = |x: &[f64]| vec![(x[0] - 1.0).ln()];
        match fd_jacobian(f, &[1.0], 1e-6) {
            Err(Error::NonFiniteEvaluation { .. }) => {}
            other => panic!("expected NonFiniteEvaluation, got {other:?}"),
        }
    }
}
