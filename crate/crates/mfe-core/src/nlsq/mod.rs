//! General nonlinear least-squares engines and the tanh model family.
//!
//! Two solvers minimize `F(eta) = ||e(eta)||^2`: Levenberg-Marquardt with
//! the classic multiplicative damping schedule, and a trust-region method
//! that minimizes the quadratic model exactly over the two-dimensional
//! subspace spanned by the steepest-descent and Gauss-Newton directions.
//! Both work off a thin QR of the Jacobian and never form the Gram matrix.

mod lm;
mod tanh;
mod trr;

pub use lm::{lm_solve, lm_solve_observed, LmConfig, StepControl};
pub use tanh::{fit_tanh_family, tanh_model_eval, TanhFit, TanhModel, TanhModelSpec, TanhResiduals};
pub use trr::{trr_solve, TrConfig};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{fd_jacobian, Matrix, DEFAULT_FD_STEP};

/// A residual vector `e(eta)` with an optional analytic Jacobian. When the
/// Jacobian is absent the solvers fall back to central finite differences.
///
/// Implementations must be pure: concurrent restarts call them from
/// multiple threads.
pub trait ResidualModel: Sync {
    fn param_count(&self) -> usize;

    fn residuals(&self, eta: &[f64]) -> Vec<f64>;

    fn jacobian(&self, _eta: &[f64]) -> Option<Matrix> {
        None
    }

    fn fd_step(&self) -> f64 {
        DEFAULT_FD_STEP
    }
}

pub(crate) fn jacobian_or_fd<M: ResidualModel + ?Sized>(
    model: &M,
    eta: &[f64],
    evals: &mut usize,
) -> Result<Matrix> {
    if let Some(j) = model.jacobian(eta) {
        return Ok(j);
    }
    *evals += 2 * eta.len();
    fd_jacobian(|x| model.residuals(x), eta, model.fd_step())
}

/// Why a solver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Scaled first-order optimality dropped below the gradient tolerance.
    GradientTolerance,
    /// The accepted step became smaller than the step tolerance.
    StepTolerance,
    /// No descent direction could be found at the damping/radius limits.
    NoDescent,
    /// An observer (e.g. validation-based early stopping) ended the run.
    EarlyStopped,
    /// Iteration cap reached while the gradient was still above tolerance.
    StalledAtNonStationary,
}

/// One accepted iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub step_size: f64,
    /// Infinity norm of the objective gradient at the start of the step.
    pub optimality: f64,
    /// Marquardt parameter or trust radius in effect for the step.
    pub damping: f64,
}

/// Per-run record of a nonlinear least-squares solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveTrace {
    /// Accepted iterations, objective strictly decreasing.
    pub records: Vec<IterationRecord>,
    /// Outer iterations spent (accepted and rejected attempts included).
    pub iterations: usize,
    /// Number of residual-vector evaluations, finite-difference probes
    /// included.
    pub evaluations: usize,
    pub termination: Termination,
    /// Final objective value F = ||e||^2.
    pub objective: f64,
    /// Final infinity norm of the gradient.
    pub optimality: f64,
    /// Size of the last accepted step.
    pub step_size: f64,
}

impl SolveTrace {
    /// Dump the per-iteration series as CSV (iteration, objective, step,
    /// optimality, damping).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iteration,objective,step_size,optimality,damping")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.iteration, r.objective, r.step_size, r.optimality, r.damping
            )?;
        }
        Ok(())
    }
}

pub(crate) fn objective(residuals: &[f64]) -> f64 {
    residuals.iter().map(|e| e * e).sum()
}

/// Thin-QR view of a Jacobian: R factor and the projected residual Q^T e.
/// Gradient, Gauss-Newton direction, and damped steps all derive from it.
pub(crate) struct JacobianFactor {
    pub r: Matrix,
    pub qte: Vec<f64>,
}

impl JacobianFactor {
    pub fn new(j: &Matrix, e: &[f64]) -> Self {
        let (qr, qte_full) = crate::linalg::qr_project(j, e);
        Self { r: qr, qte: qte_full }
    }

    /// Gradient of F = ||e||^2: g = 2 J^T e = 2 R^T (Q^T e).
    pub fn gradient(&self) -> Vec<f64> {
        let n = self.r.cols();
        let mut g = vec![0.0; n];
        for j in 0..n {
            let mut s = 0.0;
            for i in 0..=j.min(n - 1) {
                s += self.r[(i, j)] * self.qte[i];
            }
            g[j] = 2.0 * s;
        }
        g
    }

    /// Solve the damped normal equations (J^T J + xi I) d = -J^T e through
    /// the stacked system [R; sqrt(xi) I] d ~ [-(Q^T e); 0].
    pub fn damped_step(&self, xi: f64) -> Result<Vec<f64>> {
        let n = self.r.cols();
        let mut stacked = Matrix::zeros(2 * n, n);
        for i in 0..n {
            for j in i..n {
                stacked[(i, j)] = self.r[(i, j)];
            }
            stacked[(n + i, i)] = xi.sqrt();
        }
        let mut rhs = vec![0.0; 2 * n];
        for i in 0..n {
            rhs[i] = -self.qte[i];
        }
        crate::linalg::lsq_solve(&stacked, &rhs)
    }

    /// Gauss-Newton direction, unless R is numerically singular.
    pub fn gauss_newton_step(&self) -> Option<Vec<f64>> {
        let n = self.r.cols();
        let max_diag = (0..n).fold(0.0_f64, |m, i| m.max(self.r[(i, i)].abs()));
        if max_diag == 0.0 {
            return None;
        }
        for i in 0..n {
            if self.r[(i, i)].abs() < 1e-12 * max_diag {
                return None;
            }
        }
        let neg: Vec<f64> = self.qte.iter().map(|v| -v).collect();
        Some(crate::linalg::back_substitute_pub(&self.r, &neg))
    }

    /// Action of the model Hessian H = 2 J^T J on a vector: 2 R^T (R v).
    pub fn hessian_apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.r.cols();
        let mut rv = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            for j in i..n {
                s += self.r[(i, j)] * v[j];
            }
            rv[i] = s;
        }
        let mut out = vec![0.0; n];
        for j in 0..n {
            let mut s = 0.0;
            for i in 0..=j {
                s += self.r[(i, j)] * rv[i];
            }
            out[j] = 2.0 * s;
        }
        out
    }
}
