//! Householder QR factorization, least-squares solve, and numerical rank.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Relative threshold on |r_kk| below which a factorization is reported
/// rank deficient.
pub const RANK_DEFICIENT_TOL: f64 = 1e-12;

/// Default relative tolerance for [`rank`].
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Thin QR factors: `q` has orthonormal columns, `r` is upper triangular
/// with positive diagonal.
#[derive(Debug, Clone)]
pub struct QrFactors {
    pub q: Matrix,
    pub r: Matrix,
}

/// Householder vectors stored below the diagonal plus the packed R. Shared
/// by the plain and column-pivoted factorizations.
struct HouseholderQr {
    /// m x n working array: R on and above the diagonal, reflector tails below.
    work: Matrix,
    /// Leading reflector components (the v_k[0] that would collide with R's diagonal).
    v_heads: Vec<f64>,
    betas: Vec<f64>,
}

fn householder_factor(a: &Matrix) -> HouseholderQr {
    let (m, n) = (a.rows(), a.cols());
    let mut work = a.clone();
    let mut betas = vec![0.0; n];
    let mut v_heads = vec![0.0; n];

    for k in 0..n {
        // Householder vector for column k at and below the diagonal.
        let mut norm = 0.0;
        for i in k..m {
            norm += work[(i, k)] * work[(i, k)];
        }
        let norm = norm.sqrt();
        if norm == 0.0 {
            betas[k] = 0.0;
            v_heads[k] = 1.0;
            continue;
        }
        let x0 = work[(k, k)];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        let v0 = x0 - alpha;
        // ||v||^2 = 2 norm (norm + |x0|) written in a cancellation-free form.
        let vnorm2 = v0 * v0
            + (k + 1..m).map(|i| work[(i, k)] * work[(i, k)]).sum::<f64>();
        let beta = if vnorm2 == 0.0 { 0.0 } else { 2.0 / vnorm2 };
        betas[k] = beta;
        v_heads[k] = v0;
        work[(k, k)] = alpha;

        // Apply (I - beta v v^T) to the remaining columns.
        for j in k + 1..n {
            let mut dot = v0 * work[(k, j)];
            for i in k + 1..m {
                dot += work[(i, k)] * work[(i, j)];
            }
            let s = beta * dot;
            work[(k, j)] -= s * v0;
            for i in k + 1..m {
                let vik = work[(i, k)];
                work[(i, j)] -= s * vik;
            }
        }
    }

    HouseholderQr { work, v_heads, betas }
}

impl HouseholderQr {
    fn m(&self) -> usize {
        self.work.rows()
    }

    fn n(&self) -> usize {
        self.work.cols()
    }

    /// Apply Q^T to a vector of length m in place.
    fn apply_qt(&self, y: &mut [f64]) {
        let (m, n) = (self.m(), self.n());
        for k in 0..n {
            let beta = self.betas[k];
            if beta == 0.0 {
                continue;
            }
            let mut dot = self.v_heads[k] * y[k];
            for i in k + 1..m {
                dot += self.work[(i, k)] * y[i];
            }
            let s = beta * dot;
            y[k] -= s * self.v_heads[k];
            for i in k + 1..m {
                y[i] -= s * self.work[(i, k)];
            }
        }
    }

    /// Materialize the thin Q (m x n).
    fn thin_q(&self) -> Matrix {
        let (m, n) = (self.m(), self.n());
        let mut q = Matrix::zeros(m, n);
        for j in 0..n {
            // Column j of Q is Q e_j: apply reflectors in reverse order.
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            for k in (0..n).rev() {
                let beta = self.betas[k];
                if beta == 0.0 {
                    continue;
                }
                let mut dot = self.v_heads[k] * e[k];
                for i in k + 1..m {
                    dot += self.work[(i, k)] * e[i];
                }
                let s = beta * dot;
                e[k] -= s * self.v_heads[k];
                for i in k + 1..m {
                    e[i] -= s * self.work[(i, k)];
                }
            }
            for i in 0..m {
                q[(i, j)] = e[i];
            }
        }
        q
    }

    /// Upper-triangular R (n x n).
    fn r(&self) -> Matrix {
        let n = self.n();
        Matrix::from_fn(n, n, |i, j| if j >= i { self.work[(i, j)] } else { 0.0 })
    }
}

fn check_full_rank(r_diag: impl Iterator<Item = f64>, scale: f64) -> Result<()> {
    let tol = RANK_DEFICIENT_TOL * scale;
    for (k, d) in r_diag.enumerate() {
        if d.abs() < tol {
            return Err(Error::RankDeficient { index: k, diag: d.abs(), tol });
        }
    }
    Ok(())
}

/// Householder QR of a full-column-rank matrix with rows >= cols.
///
/// The returned `r` has a strictly positive diagonal; the sign convention is
/// absorbed into `q` so that `q * r` reconstructs the input.
pub fn qr_householder(a: &Matrix) -> Result<QrFactors> {
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        return Err(Error::ShapeMismatch {
            context: format!("QR needs rows >= cols, got {m}x{n}"),
        });
    }
    let fac = householder_factor(a);
    check_full_rank((0..n).map(|k| fac.work[(k, k)]), a.max_abs())?;

    let mut q = fac.thin_q();
    let mut r = fac.r();
    // Flip signs so diag(R) > 0; compensate in Q's columns.
    for k in 0..n {
        if r[(k, k)] < 0.0 {
            for j in k..n {
                r[(k, j)] = -r[(k, j)];
            }
            for i in 0..m {
                q[(i, k)] = -q[(i, k)];
            }
        }
    }
    Ok(QrFactors { q, r })
}

/// Factor without any rank check and return (R, Q^T e truncated to n).
/// Solver internals use this; R may be singular.
pub fn qr_project(a: &Matrix, e: &[f64]) -> (Matrix, Vec<f64>) {
    assert_eq!(a.rows(), e.len(), "rhs length mismatch");
    let fac = householder_factor(a);
    let mut qte = e.to_vec();
    fac.apply_qt(&mut qte);
    qte.truncate(a.cols());
    (fac.r(), qte)
}

/// Solve the upper-triangular system `r x = b` (lengths n); public alias
/// for solver modules.
pub fn back_substitute_pub(r: &Matrix, b: &[f64]) -> Vec<f64> {
    back_substitute(r, b)
}

/// Solve the upper-triangular system `r x = b` (lengths n).
pub(crate) fn back_substitute(r: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = r.cols();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= r[(i, j)] * x[j];
        }
        x[i] = s / r[(i, i)];
    }
    x
}

/// Least-squares solution of `a x ~ y` via Householder QR.
pub fn lsq_solve(a: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
    let (m, n) = (a.rows(), a.cols());
    if y.len() != m {
        return Err(Error::ShapeMismatch {
            context: format!("rhs length {} for {m}x{n} matrix", y.len()),
        });
    }
    if m < n {
        return Err(Error::ShapeMismatch {
            context: format!("least squares needs rows >= cols, got {m}x{n}"),
        });
    }
    let fac = householder_factor(a);
    check_full_rank((0..n).map(|k| fac.work[(k, k)]), a.max_abs())?;
    let mut qty = y.to_vec();
    fac.apply_qt(&mut qty);
    Ok(back_substitute(&fac.r(), &qty[..n]))
}

/// Least-squares solve that also returns the R factor, for callers that
/// need the (D^T D)^-1 leverage form afterwards. One factorization.
pub fn lsq_solve_with_r(a: &Matrix, y: &[f64]) -> Result<(Vec<f64>, Matrix)> {
    let (m, n) = (a.rows(), a.cols());
    if y.len() != m || m < n {
        return Err(Error::ShapeMismatch {
            context: format!("lsq with rhs {} on {m}x{n}", y.len()),
        });
    }
    let fac = householder_factor(a);
    check_full_rank((0..n).map(|k| fac.work[(k, k)]), a.max_abs())?;
    let mut qty = y.to_vec();
    fac.apply_qt(&mut qty);
    let mut r = fac.r();
    let sol = back_substitute(&r, &qty[..n]);
    // Positive-diagonal convention, same as qr_householder.
    for k in 0..n {
        if r[(k, k)] < 0.0 {
            for j in k..n {
                r[(k, j)] = -r[(k, j)];
            }
        }
    }
    Ok((sol, r))
}

/// Numerical rank from a column-pivoted QR: the number of diagonal
/// magnitudes of R above `tol` times the largest one.
pub fn rank(a: &Matrix, tol: f64) -> usize {
    assert!(tol > 0.0, "rank tolerance must be positive");
    let diag = pivoted_r_diagonal(a);
    let max = diag.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    if max == 0.0 {
        return 0;
    }
    diag.iter().filter(|d| d.abs() > tol * max).count()
}

/// Diagonal magnitudes of R in a column-pivoted Householder QR.
fn pivoted_r_diagonal(a: &Matrix) -> Vec<f64> {
    let (m, n) = (a.rows(), a.cols());
    let kmax = m.min(n);
    let mut w = a.clone();
    let mut diag = Vec::with_capacity(kmax);
    // Squared norms of the trailing part of each column.
    let mut col_norms: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| w[(i, j)] * w[(i, j)]).sum())
        .collect();

    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..kmax {
        // Pivot: bring the column with the largest remaining norm to front.
        let (pivot, _) = col_norms[k..]
            .iter()
            .enumerate()
            .fold((0, -1.0), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        let pivot = pivot + k;
        if pivot != k {
            for i in 0..m {
                let tmp = w[(i, k)];
                w[(i, k)] = w[(i, pivot)];
                w[(i, pivot)] = tmp;
            }
            col_norms.swap(k, pivot);
            perm.swap(k, pivot);
        }

        let mut norm = 0.0;
        for i in k..m {
            norm += w[(i, k)] * w[(i, k)];
        }
        let norm = norm.sqrt();
        diag.push(norm);
        if norm == 0.0 {
            continue;
        }
        let x0 = w[(k, k)];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        let v0 = x0 - alpha;
        let vnorm2 =
            v0 * v0 + (k + 1..m).map(|i| w[(i, k)] * w[(i, k)]).sum::<f64>();
        if vnorm2 == 0.0 {
            continue;
        }
        let beta = 2.0 / vnorm2;
        w[(k, k)] = v0;
        for j in k + 1..n {
            let mut dot = 0.0;
            for i in k..m {
                dot += w[(i, k)] * w[(i, j)];
            }
            let s = beta * dot;
            for i in k..m {
                let vik = w[(i, k)];
                w[(i, j)] -= s * vik;
            }
        }
        // Downdate trailing column norms.
        for (j, cn) in col_norms.iter_mut().enumerate().skip(k + 1) {
            *cn -= w[(k, j)] * w[(k, j)];
            if *cn < 0.0 {
                *cn = (k + 1..m).map(|i| w[(i, j)] * w[(i, j)]).sum();
            }
        }
    }
    diag
}
