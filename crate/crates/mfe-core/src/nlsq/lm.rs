//! Levenberg-Marquardt with multiplicative damping control.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inf_norm, norm2};
use crate::nlsq::{
    jacobian_or_fd, objective, IterationRecord, JacobianFactor, ResidualModel, SolveTrace,
    Termination,
};

/// Damping schedule and termination tolerances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LmConfig {
    /// Initial Marquardt parameter.
    pub xi0: f64,
    /// Divisor applied on a successful step.
    pub xi_decrease: f64,
    /// Multiplier applied on a rejected step.
    pub xi_increase: f64,
    pub max_iter: usize,
    /// Tolerance on ||g||_inf scaled by max(1, F).
    pub grad_tol: f64,
    /// Tolerance on the accepted step length.
    pub step_tol: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            xi0: 0.01,
            xi_decrease: 10.0,
            xi_increase: 10.0,
            max_iter: 1000,
            grad_tol: 1e-6,
            step_tol: 1e-10,
        }
    }
}

impl LmConfig {
    fn validate(&self) -> Result<()> {
        if self.xi0 <= 0.0 || self.xi_decrease <= 1.0 || self.xi_increase <= 1.0 {
            return Err(Error::Config("LM damping factors must be positive with factors > 1".into()));
        }
        if self.grad_tol <= 0.0 || self.step_tol <= 0.0 {
            return Err(Error::Config("LM tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Observer verdict after each accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepControl {
    Continue,
    Stop,
}

const XI_MAX: f64 = 1e16;
const XI_MIN: f64 = 1e-14;

/// Minimize `||e(eta)||^2` from `eta0`.
pub fn lm_solve<M: ResidualModel + ?Sized>(
    model: &M,
    eta0: &[f64],
    cfg: &LmConfig,
) -> Result<(Vec<f64>, SolveTrace)> {
    lm_solve_observed(model, eta0, cfg, |_, _, _| StepControl::Continue)
}

/// Same solver with a per-accepted-step observer `(iteration, eta, F)`;
/// validation-based early stopping hooks in here.
pub fn lm_solve_observed<M: ResidualModel + ?Sized>(
    model: &M,
    eta0: &[f64],
    cfg: &LmConfig,
    mut observer: impl FnMut(usize, &[f64], f64) -> StepControl,
) -> Result<(Vec<f64>, SolveTrace)> {
    cfg.validate()?;
    let mut eta = eta0.to_vec();
    let mut evaluations = 1;
    let mut e = model.residuals(&eta);
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEvaluation { index: 0 });
    }
    let mut f = objective(&e);
    let mut xi = cfg.xi0;

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

        // Retry with stiffer damping until a descent step is found; the
        // Jacobian is not re-evaluated inside this loop.
        let mut accepted = false;
        let mut stop_reason = None;
        loop {
            let step = fac.damped_step(xi)?;
            let step_size = norm2(&step);
            let trial: Vec<f64> = eta.iter().zip(&step).map(|(a, b)| a + b).collect();
            evaluations += 1;
            let e_trial = model.residuals(&trial);
            let f_trial = if e_trial.iter().all(|v| v.is_finite()) {
                objective(&e_trial)
            } else {
                f64::INFINITY
            };

            if f_trial < f {
                eta = trial;
                e = e_trial;
                f = f_trial;
                xi = (xi / cfg.xi_decrease).max(XI_MIN);
                records.push(IterationRecord {
                    iteration: iterations,
                    objective: f,
                    step_size,
                    optimality,
                    damping: xi,
                });
                last_step = step_size;
                accepted = true;
                if step_size <= cfg.step_tol * (norm2(&eta) + cfg.step_tol) {
                    stop_reason = Some(Termination::StepTolerance);
                }
                break;
            }

            xi *= cfg.xi_increase;
            if xi > XI_MAX {
                break;
            }
            if step_size <= cfg.step_tol * (norm2(&eta) + cfg.step_tol) {
                stop_reason = Some(Termination::StepTolerance);
                break;
            }
        }

        if !accepted {
            termination = stop_reason.unwrap_or(Termination::NoDescent);
            break;
        }
        if observer(iterations, &eta, f) == StepControl::Stop {
            termination = Termination::EarlyStopped;
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
