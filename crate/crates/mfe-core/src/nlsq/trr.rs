//! Trust-region solver over the two-dimensional subspace spanned by the
//! steepest-descent and Gauss-Newton directions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, inf_norm, norm2};
use crate::nlsq::{
    jacobian_or_fd, objective, IterationRecord, JacobianFactor, ResidualModel, SolveTrace,
    Termination,
};

/// Trust-radius schedule and termination tolerances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrConfig {
    pub delta0: f64,
    /// Gain-ratio threshold below which the radius shrinks.
    pub shrink_threshold: f64,
    /// Gain-ratio threshold above which a boundary step doubles the radius.
    pub expand_threshold: f64,
    pub shrink_factor: f64,
    pub expand_factor: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
}

impl Default for TrConfig {
    fn default() -> Self {
        Self {
            delta0: 1.0,
            shrink_threshold: 0.25,
            expand_threshold: 0.75,
            shrink_factor: 0.25,
            expand_factor: 2.0,
            max_iter: 1000,
            grad_tol: 1e-6,
            step_tol: 1e-10,
        }
    }
}

impl TrConfig {
    fn validate(&self) -> Result<()> {
        if self.delta0 <= 0.0 {
            return Err(Error::Config("trust radius must start positive".into()));
        }
        if !(0.0 < self.shrink_threshold && self.shrink_threshold < self.expand_threshold && self.expand_threshold < 1.0) {
            return Err(Error::Config("need 0 < shrink threshold < expand threshold < 1".into()));
        }
        Ok(())
    }
}

const DELTA_MIN: f64 = 1e-14;

/// Minimize `||e(eta)||^2` from `eta0` with the 2D-subspace trust region.
pub fn trr_solve<M: ResidualModel + ?Sized>(
    model: &M,
    eta0: &[f64],
    cfg: &TrConfig,
) -> Result<(Vec<f64>, SolveTrace)> {
    cfg.validate()?;
    let n = model.param_count();
    let mut eta = eta0.to_vec();
    let mut evaluations = 1;
    let mut e = model.residuals(&eta);
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEvaluation { index: 0 });
    }
    let mut f = objective(&e);
    let mut delta = cfg.delta0;

    let mut records = Vec::new();
    let mut iterations = 0;
    let mut optimality = f64::INFINITY;
    let mut last_step = f64::INFINITY;
    let termination;

    loop {
        if iterations >= cfg.max_iter {
            termination = if optimality <= cfg.grad_tol * f.max(1.0) {
                Termination::GradientTolerance
            } else {
                Termination::StalledAtNonStationary
            };
            break;
        }
        iterations += 1;

        let jac = jacobian_or_fd(model, &eta, &mut evaluations)?;
        let fac = JacobianFactor::new(&jac, &e);
        let g = fac.gradient();
        optimality = inf_norm(&g);
        if optimality <= cfg.grad_tol * f.max(1.0) {
            termination = Termination::GradientTolerance;
            break;
        }

        // Orthonormal basis of span{-g, gauss_newton}.
        let gnorm = norm2(&g);
        let u1: Vec<f64> = g.iter().map(|v| -v / gnorm).collect();
        let u2 = fac.gauss_newton_step().and_then(|gn| {
            let proj = dot(&gn, &u1);
            let mut v: Vec<f64> = gn.iter().zip(&u1).map(|(a, b)| a - proj * b).collect();
            let vn = norm2(&v);
            if vn > 1e-12 * norm2(&gn).max(1.0) {
                for x in &mut v {
                    *x /= vn;
                }
                Some(v)
            } else {
                None
            }
        });

        // Reduced gradient and Hessian on the subspace.
        let hu1 = fac.hessian_apply(&u1);
        let (b, a_red) = match &u2 {
            Some(u2) => {
                let hu2 = fac.hessian_apply(u2);
                (
                    [dot(&g, &u1), dot(&g, u2)],
                    [[dot(&u1, &hu1), dot(&u1, &hu2)], [dot(u2, &hu1), dot(u2, &hu2)]],
                )
            }
            None => ([dot(&g, &u1), 0.0], [[dot(&u1, &hu1), 0.0], [0.0, 1.0]]),
        };

        // Retry with smaller radii without re-evaluating the Jacobian.
        let mut accepted = false;
        let mut stop_reason = None;
        loop {
            let s = solve_2d_subproblem(&b, &a_red, delta);
            let step: Vec<f64> = (0..n)
                .map(|i| s[0] * u1[i] + s[1] * u2.as_ref().map_or(0.0, |u| u[i]))
                .collect();
            let step_size = norm2(&step);
            debug_assert!(step_size <= delta * (1.0 + 1e-12));
            let predicted = -(b[0] * s[0]
                + b[1] * s[1]
                + 0.5
                    * (a_red[0][0] * s[0] * s[0]
                        + 2.0 * a_red[0][1] * s[0] * s[1]
                        + a_red[1][1] * s[1] * s[1]));

            let trial: Vec<f64> = eta.iter().zip(&step).map(|(a, b)| a + b).collect();
            evaluations += 1;
            let e_trial = model.residuals(&trial);
            let f_trial = if e_trial.iter().all(|v| v.is_finite()) {
                objective(&e_trial)
            } else {
                f64::INFINITY
            };
            let actual = f - f_trial;
            let ratio = if predicted > 0.0 { actual / predicted } else { -1.0 };

            if f_trial < f {
                eta = trial;
                e = e_trial;
                f = f_trial;
                let on_boundary = step_size >= 0.99 * delta;
                if ratio < cfg.shrink_threshold {
                    delta *= cfg.shrink_factor;
                } else if ratio > cfg.expand_threshold && on_boundary {
                    delta *= cfg.expand_factor;
                }
                records.push(IterationRecord {
                    iteration: iterations,
                    objective: f,
                    step_size,
                    optimality,
                    damping: delta,
                });
                last_step = step_size;
                accepted = true;
                if step_size <= cfg.step_tol * (norm2(&eta) + cfg.step_tol) {
                    stop_reason = Some(Termination::StepTolerance);
                }
                break;
            }

            delta *= cfg.shrink_factor;
            if delta < DELTA_MIN {
                break;
            }
        }

        if !accepted {
            termination = stop_reason.unwrap_or(Termination::NoDescent);
            break;
        }
        if let Some(t) = stop_reason {
            termination = t;
            break;
        }
    }

    let trace = SolveTrace {
        records,
        iterations,
        evaluations,
        termination,
        objective: f,
        optimality,
        step_size: last_step,
    };
    Ok((eta, trace))
}

/// Exact minimizer of `b.s + s'As/2` over the disc `||s|| <= delta`:
/// interior stationary point when admissible, otherwise the boundary
/// minimum located by a dense angular scan refined with Newton steps.
fn solve_2d_subproblem(b: &[f64; 2], a: &[[f64; 2]; 2], delta: f64) -> [f64; 2] {
    let q = |s: [f64; 2]| {
        b[0] * s[0]
            + b[1] * s[1]
            + 0.5 * (a[0][0] * s[0] * s[0] + 2.0 * a[0][1] * s[0] * s[1] + a[1][1] * s[1] * s[1])
    };

    let mut best: Option<([f64; 2], f64)> = None;
    let mut consider = |s: [f64; 2]| {
        let v = q(s);
        if best.map_or(true, |(_, bv)| v < bv) {
            best = Some((s, v));
        }
    };

    // Interior stationary point A s = -b, admitted when A is positive
    // definite and the point lies inside the disc.
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let scale = a[0][0].abs().max(a[1][1].abs()).max(a[0][1].abs()).max(1e-300);
    if det > 1e-14 * scale * scale && a[0][0] > 0.0 {
        let s = [
            (-b[0] * a[1][1] + b[1] * a[0][1]) / det,
            (-a[0][0] * b[1] + a[0][1] * b[0]) / det,
        ];
        if s[0].hypot(s[1]) <= delta {
            consider(s);
        }
    }

    // Boundary: s = delta (cos t, sin t), scanned densely then polished.
    const SCAN: usize = 256;
    let mut best_t = 0.0;
    let mut best_v = f64::INFINITY;
    for k in 0..SCAN {
        let t = 2.0 * std::f64::consts::PI * k as f64 / SCAN as f64;
        let v = q([delta * t.cos(), delta * t.sin()]);
        if v < best_v {
            best_v = v;
            best_t = t;
        }
    }
    let mut t = best_t;
    for _ in 0..8 {
        let (sin, cos) = t.sin_cos();
        let s = [delta * cos, delta * sin];
        let ds = [-delta * sin, delta * cos];
        let dss = [-delta * cos, -delta * sin];
        let grad_s = [
            b[0] + a[0][0] * s[0] + a[0][1] * s[1],
            b[1] + a[1][0] * s[0] + a[1][1] * s[1],
        ];
        let d1 = grad_s[0] * ds[0] + grad_s[1] * ds[1];
        let d2 = grad_s[0] * dss[0]
            + grad_s[1] * dss[1]
            + a[0][0] * ds[0] * ds[0]
            + 2.0 * a[0][1] * ds[0] * ds[1]
            + a[1][1] * ds[1] * ds[1];
        if d2.abs() < 1e-300 {
            break;
        }
        let dt = d1 / d2;
        t -= dt;
        if dt.abs() < 1e-15 {
            break;
        }
    }
    consider([delta * t.cos(), delta * t.sin()]);
    consider([delta * best_t.cos(), delta * best_t.sin()]);

    best.unwrap().0
}
