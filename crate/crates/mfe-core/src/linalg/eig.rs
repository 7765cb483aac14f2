//! Eigenvalues of small real matrices.
//!
//! Balancing, Householder reduction to upper Hessenberg form, and the
//! Francis implicit double-shift QR iteration with deflation. Sized for the
//! 8x8 perturbation state matrices of the trim classifier; the square-input
//! cap is 32.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Hard cap on the input dimension; callers only need 8x8.
pub const MAX_DIM: usize = 32;

const MAX_SWEEPS_PER_EIGENVALUE: usize = 40;

/// Eigenvalues of a square matrix as (re, im) pairs, unordered multiset.
pub fn eigenvalues(a: &Matrix) -> Result<Vec<(f64, f64)>> {
    if !a.is_square() {
        return Err(Error::ShapeMismatch {
            context: format!("eigenvalues need a square matrix, got {}x{}", a.rows(), a.cols()),
        });
    }
    let n = a.rows();
    if n > MAX_DIM {
        return Err(Error::Invalid(format!("matrix dimension {n} exceeds cap {MAX_DIM}")));
    }
    let mut h = a.clone();
    balance(&mut h);
    hessenberg(&mut h);
    hqr(&mut h)
}

/// Parlett-Reinsch balancing: similarity scaling by powers of two to even
/// out row/column norms. Exact in floating point, leaves eigenvalues intact.
fn balance(a: &mut Matrix) {
    let n = a.rows();
    let radix = 2.0_f64;
    let sqrdx = radix * radix;
    loop {
        let mut done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / radix;
                let mut f = 1.0;
                let s = c + r;
                let mut c2 = c;
                while c2 < g {
                    f *= radix;
                    c2 *= sqrdx;
                }
                g = r * radix;
                while c2 > g {
                    f /= radix;
                    c2 /= sqrdx;
                }
                if (c2 + r) / f < 0.95 * s {
                    done = false;
                    let ginv = 1.0 / f;
                    for j in 0..n {
                        a[(i, j)] *= ginv;
                    }
                    for j in 0..n {
                        a[(j, i)] *= f;
                    }
                }
            }
        }
        if done {
            return;
        }
    }
}

/// In-place Householder reduction to upper Hessenberg form.
fn hessenberg(a: &mut Matrix) {
    let n = a.rows();
    if n < 3 {
        return;
    }
    for k in 0..n - 2 {
        let mut norm = 0.0;
        for i in k + 1..n {
            norm += a[(i, k)] * a[(i, k)];
        }
        let norm = norm.sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = a[(k + 1, k)];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        let mut v = vec![0.0; n];
        v[k + 1] = x0 - alpha;
        for i in k + 2..n {
            v[i] = a[(i, k)];
        }
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let beta = 2.0 / vnorm2;

        // Left: A <- (I - beta v v^T) A on columns k..n.
        for j in k..n {
            let mut dot = 0.0;
            for i in k + 1..n {
                dot += v[i] * a[(i, j)];
            }
            let s = beta * dot;
            for i in k + 1..n {
                a[(i, j)] -= s * v[i];
            }
        }
        // Right: A <- A (I - beta v v^T) on all rows.
        for i in 0..n {
            let mut dot = 0.0;
            for j in k + 1..n {
                dot += a[(i, j)] * v[j];
            }
            let s = beta * dot;
            for j in k + 1..n {
                a[(i, j)] -= s * v[j];
            }
        }
        a[(k + 1, k)] = alpha;
        for i in k + 2..n {
            a[(i, k)] = 0.0;
        }
    }
}

/// Implicit double-shift QR on an upper Hessenberg matrix. Classic scheme
/// with deflation and exceptional shifts every ten stalled sweeps.
fn hqr(h: &mut Matrix) -> Result<Vec<(f64, f64)>> {
    let n = h.rows();
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];

    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += h[(i, j)].abs();
        }
    }
    if anorm == 0.0 {
        return Ok(vec![(0.0, 0.0); n]);
    }

    let eps = f64::EPSILON;
    let mut t = 0.0;
    let mut hi = n - 1;
    'deflate: loop {
        let mut its = 0;
        loop {
            // Look for a negligible subdiagonal element.
            let mut l = hi;
            while l >= 1 {
                let mut s = h[(l - 1, l - 1)].abs() + h[(l, l)].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if h[(l, l - 1)].abs() <= eps * s {
                    h[(l, l - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }

            let mut x = h[(hi, hi)];
            if l == hi {
                // Single real eigenvalue.
                wr[hi] = x + t;
                wi[hi] = 0.0;
                if hi == 0 {
                    break 'deflate;
                }
                hi -= 1;
                continue 'deflate;
            }

            let mut y = h[(hi - 1, hi - 1)];
            let mut w = h[(hi, hi - 1)] * h[(hi - 1, hi)];
            if l == hi - 1 {
                // A 2x2 block: real pair or complex conjugates.
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    let z = p + z.abs().copysign(p);
                    wr[hi - 1] = x + z;
                    wr[hi] = wr[hi - 1];
                    if z != 0.0 {
                        wr[hi] = x - w / z;
                    }
                    wi[hi - 1] = 0.0;
                    wi[hi] = 0.0;
                } else {
                    wr[hi - 1] = x + p;
                    wr[hi] = x + p;
                    wi[hi - 1] = z;
                    wi[hi] = -z;
                }
                if hi == 1 {
                    break 'deflate;
                }
                hi -= 2;
                continue 'deflate;
            }

            if its == MAX_SWEEPS_PER_EIGENVALUE {
                return Err(Error::NonConvergence { max_sweeps: MAX_SWEEPS_PER_EIGENVALUE });
            }
            if its == 10 || its == 20 || its == 30 {
                // Exceptional shift to break symmetric stalls.
                t += x;
                for i in 0..=hi {
                    h[(i, i)] -= x;
                }
                let s = h[(hi, hi - 1)].abs() + h[(hi - 1, hi - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;

            // Find two consecutive small subdiagonals starting the bulge.
            let mut m = hi - 2;
            let mut p;
            let mut q;
            let mut r;
            loop {
                let z = h[(m, m)];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / h[(m + 1, m)] + h[(m, m + 1)];
                q = h[(m + 1, m + 1)] - z - rr - ss;
                r = h[(m + 2, m + 1)];
                let scale = p.abs() + q.abs() + r.abs();
                p /= scale;
                q /= scale;
                r /= scale;
                if m == l {
                    break;
                }
                let u = h[(m, m - 1)].abs() * (q.abs() + r.abs());
                let v = p.abs() * (h[(m - 1, m - 1)].abs() + z.abs() + h[(m + 1, m + 1)].abs());
                if u <= eps * v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=hi {
                h[(i, i - 2)] = 0.0;
                if i > m + 2 {
                    h[(i, i - 3)] = 0.0;
                }
            }

            // Double QR sweep on rows/columns l..=hi.
            for k in m..hi {
                if k != m {
                    p = h[(k, k - 1)];
                    q = h[(k + 1, k - 1)];
                    r = if k != hi - 1 { h[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s == 0.0 {
                    continue;
                }
                if k == m {
                    if l != m {
                        h[(k, k - 1)] = -h[(k, k - 1)];
                    }
                } else {
                    h[(k, k - 1)] = -s * x;
                }
                p += s;
                x = p / s;
                y = q / s;
                let z = r / s;
                q /= p;
                r /= p;
                for j in k..=hi {
                    let mut pp = h[(k, j)] + q * h[(k + 1, j)];
                    if k != hi - 1 {
                        pp += r * h[(k + 2, j)];
                        h[(k + 2, j)] -= pp * z;
                    }
                    h[(k + 1, j)] -= pp * y;
                    h[(k, j)] -= pp * x;
                }
                let mmin = if hi < k + 3 { hi } else { k + 3 };
                for i in l..=mmin {
                    let mut pp = x * h[(i, k)] + y * h[(i, k + 1)];
                    if k != hi - 1 {
                        pp += z * h[(i, k + 2)];
                        h[(i, k + 2)] -= pp * r;
                    }
                    h[(i, k + 1)] -= pp * q;
                    h[(i, k)] -= pp;
                }
            }
        }
    }

    Ok(wr.into_iter().zip(wi).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn sorted_by_re_im(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
        v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        v
    }

    #[test]
    fn diagonal_matrix() {
        let a = Matrix::from_rows(&[&[-1.0, 0.0, 0.0], &[0.0, -2.0, 0.0], &[0.0, 0.0, -3.0]]);
        let ev = sorted_by_re_im(eigenvalues(&a).unwrap());
        let expect = [(-3.0, 0.0), (-2.0, 0.0), (-1.0, 0.0)];
        for (got, want) in ev.iter().zip(expect) {
            assert!((got.0 - want.0).abs() < 1e-12 && got.1.abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_block_gives_pure_imaginary_pair() {
        // Characteristic polynomial lambda^2 + 1.
        let a = Matrix::from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        let ev = sorted_by_re_im(eigenvalues(&a).unwrap());
        assert!(ev[0].0.abs() < 1e-12 && (ev[0].1 + 1.0).abs() < 1e-12);
        assert!(ev[1].0.abs() < 1e-12 && (ev[1].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn companion_of_quadratic() {
        // lambda^2 - 3 lambda + 2 = (lambda - 1)(lambda - 2).
        let a = Matrix::from_rows(&[&[0.0, -2.0], &[1.0, 3.0]]);
        let ev = sorted_by_re_im(eigenvalues(&a).unwrap());
        assert!((ev[0].0 - 1.0).abs() < 1e-10 && ev[0].1.abs() < 1e-12);
        assert!((ev[1].0 - 2.0).abs() < 1e-10 && ev[1].1.abs() < 1e-12);
    }

    #[test]
    fn symmetric_matrix_has_real_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = Matrix::from_fn(8, 8, |_, _| rng.gen_range(-1.0..1.0));
        let a = Matrix::from_fn(8, 8, |i, j| 0.5 * (b[(i, j)] + b[(j, i)]));
        let ev = eigenvalues(&a).unwrap();
        for (_, im) in ev {
            assert!(im.abs() < 1e-10);
        }
    }

    #[test]
    fn shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Matrix::from_fn(6, 6, |_, _| rng.gen_range(-2.0..2.0));
        let c = 3.25;
        let shifted = Matrix::from_fn(6, 6, |i, j| a[(i, j)] + if i == j { c } else { 0.0 });
        let mut ev_a = sorted_by_re_im(eigenvalues(&a).unwrap());
        for e in &mut ev_a {
            e.0 += c;
        }
        let ev_s = sorted_by_re_im(eigenvalues(&shifted).unwrap());
        for (x, y) in ev_a.iter().zip(&ev_s) {
            assert!((x.0 - y.0).abs() < 1e-8, "{x:?} vs {y:?}");
            assert!((x.1 - y.1).abs() < 1e-8, "{x:?} vs {y:?}");
        }
    }

    #[test]
    fn known_spectrum_via_similarity() {
        // Conjugate a diagonal by a fixed well-conditioned transform.
        let d = [2.0, -1.0, 0.5, -3.5];
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let p = Matrix::from_fn(4, 4, |i, j| {
            if i == j { 1.0 } else { 0.3 * rng.gen_range(-1.0..1.0) }
        });
        // a = p * diag(d) * p^-1 computed via solving p x = (p diag(d)) col-wise.
        let pd = Matrix::from_fn(4, 4, |i, j| p[(i, j)] * d[j]);
        // Invert p by Gaussian elimination through lsq (p is square full rank).
        let mut a = Matrix::zeros(4, 4);
        for j in 0..4 {
            // Solve p^T y = e_j then a_col... simpler: a = pd * inv(p):
            // column j of inv(p) solves p x = e_j.
            let mut e = vec![0.0; 4];
            e[j] = 1.0;
            let x = crate::linalg::lsq_solve(&p, &e).unwrap();
            let col = pd.mul_vec(&x);
            for i in 0..4 {
                a[(i, j)] = col[i];
            }
        }
        let ev = sorted_by_re_im(eigenvalues(&a).unwrap());
        let mut want = d.to_vec();
        want.sort_by(f64::total_cmp);
        for (got, w) in ev.iter().zip(want) {
            assert!((got.0 - w).abs() < 1e-9 && got.1.abs() < 1e-9, "{got:?} vs {w}");
        }
    }
}
