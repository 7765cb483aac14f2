//! Penalized nonlinear least-squares trim solve and trim-point
//! classification.
//!
//! The decision vector holds all eight states and four controls mapped
//! through smooth tanh box transforms (so every iterate honors the control
//! limits, the bank and alpha constraints, and the failure's rudder box).
//! The stacked residual carries the weighted state derivatives (the trim
//! cost) plus the maneuver-constraint residuals under a quadratic penalty;
//! a feasible trim zeroes both exactly.

use serde::{Deserialize, Serialize};

use crate::envelope::constraints::maneuver_constraints;
use crate::envelope::{
    ControlVector, DynamicsModel, StateVector, TrimProblem, AILERON_LIMIT, ALPHA_MAX, BANK_LIMIT,
    ELEVATOR_LIMIT,
};
use crate::error::Result;
use crate::linalg::{fd_jacobian, Matrix};
use crate::nlsq::{lm_solve, LmConfig, ResidualModel};

const DEG: f64 = std::f64::consts::PI / 180.0;
const KT: f64 = 0.514444;
const G0: f64 = 9.80665;

/// Stability/controllability verdict of a feasible trim candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Stable,
    UnstableControllable,
    Rejected(RejectReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// Unstable with a rank-deficient controllability matrix.
    Uncontrollable,
    /// The eigenvalue iteration failed; treated as unclassifiable.
    EigenvalueFailure,
}

impl Classification {
    /// Whether the point belongs to the envelope.
    pub fn accepted(&self) -> bool {
        matches!(self, Classification::Stable | Classification::UnstableControllable)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Classification::Stable => "stable",
            Classification::UnstableControllable => "unstable-controllable",
            Classification::Rejected(RejectReason::Uncontrollable) => "rejected-uncontrollable",
            Classification::Rejected(RejectReason::EigenvalueFailure) => "rejected-eig-failure",
        }
    }
}

/// A converged, feasible trim point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrimPoint {
    pub state: StateVector,
    pub control: ControlVector,
    /// Trim cost J = 1/2 xdot' G xdot at the solution.
    pub cost: f64,
    /// Largest maneuver-constraint residual magnitude.
    pub constraint_violation: f64,
    /// Largest state-derivative magnitude (internal units).
    pub derivative_norm: f64,
    pub classification: Classification,
    pub eigenvalues: Vec<(f64, f64)>,
}

/// Outcome of one trim solve; infeasibility is an expected result at
/// envelope boundaries, not an error.
#[derive(Debug, Clone, PartialEq)]
pub enum TrimOutcome {
    Accepted(Box<TrimPoint>),
    Infeasible { cost: f64, constraint_violation: f64 },
}

impl TrimOutcome {
    pub fn accepted(&self) -> Option<&TrimPoint> {
        match self {
            TrimOutcome::Accepted(p) if p.classification.accepted() => Some(p),
            _ => None,
        }
    }
}

/// Acceptance gates and solver parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrimSolverConfig {
    /// Gate on the trim cost J.
    pub accept_cost: f64,
    /// Gate on the constraint residuals.
    pub accept_constraint: f64,
    /// Gate on the infinity norm of the state derivative.
    pub accept_derivative: f64,
    /// Quadratic penalty weight on the constraint stack.
    pub penalty_weight: f64,
    pub lm: LmConfig,
}

impl Default for TrimSolverConfig {
    fn default() -> Self {
        Self {
            accept_cost: 1e-8,
            accept_constraint: 1e-6,
            accept_derivative: 1e-6,
            penalty_weight: 1e4,
            lm: LmConfig { max_iter: 60, grad_tol: 1e-8, step_tol: 1e-10, ..LmConfig::default() },
        }
    }
}

/// A smooth box transform x = mid + half tanh(z). A zero-width box (a
/// jammed surface) pins the value at `mid` regardless of z.
#[derive(Debug, Clone, Copy)]
struct Box1 {
    mid: f64,
    half: f64,
}

impl Box1 {
    fn new(lo: f64, hi: f64) -> Self {
        Self { mid: 0.5 * (lo + hi), half: 0.5 * (hi - lo) }
    }

    fn decode(&self, z: f64) -> f64 {
        self.mid + self.half * z.tanh()
    }

    fn encode(&self, x: f64) -> f64 {
        if self.half == 0.0 {
            return 0.0;
        }
        let t = ((x - self.mid) / self.half).clamp(-0.999, 0.999);
        0.5 * ((1.0 + t) / (1.0 - t)).ln()
    }
}

struct TrimResiduals<'a, M: DynamicsModel + ?Sized> {
    problem: &'a TrimProblem,
    model: &'a M,
    boxes: [Box1; 12],
    sqrt_weights: [f64; 8],
    sqrt_penalty: f64,
}

impl<'a, M: DynamicsModel + ?Sized> TrimResiduals<'a, M> {
    fn new(problem: &'a TrimProblem, model: &'a M, cfg: &TrimSolverConfig) -> Self {
        let (alo, ahi) = model.alpha_range();
        let (blo, bhi) = model.beta_range();
        let (vlo, vhi) = model.speed_range();
        let boxes = [
            Box1::new((problem.v - 50.0).max(vlo), (problem.v + 50.0).min(vhi)),
            Box1::new(alo, ahi.min(ALPHA_MAX)),
            Box1::new(blo, bhi),
            Box1::new(-40.0, 40.0),
            Box1::new(-40.0, 40.0),
            Box1::new(-40.0, 40.0),
            Box1::new(-BANK_LIMIT, BANK_LIMIT),
            Box1::new(-45.0, 45.0),
            Box1::new(0.0, 1.0),
            Box1::new(-ELEVATOR_LIMIT, ELEVATOR_LIMIT),
            Box1::new(-AILERON_LIMIT, AILERON_LIMIT),
            Box1::new(problem.failure.ll, problem.failure.ul),
        ];
        let mut sqrt_weights = [0.0; 8];
        for (w, g) in sqrt_weights.iter_mut().zip(&problem.weights) {
            *w = (g / 2.0).sqrt();
        }
        Self { problem, model, boxes, sqrt_weights, sqrt_penalty: (cfg.penalty_weight / 2.0).sqrt() }
    }

    fn decode(&self, z: &[f64]) -> (StateVector, ControlVector) {
        let d: Vec<f64> = z.iter().zip(&self.boxes).map(|(v, b)| b.decode(*v)).collect();
        (
            StateVector::from_array([d[0], d[1], d[2], d[3], d[4], d[5], d[6], d[7]]),
            ControlVector::from_array([d[8], d[9], d[10], d[11]]),
        )
    }

    fn encode(&self, x: &StateVector, u: &ControlVector) -> Vec<f64> {
        let raw = [
            x.v, x.alpha, x.beta, x.p, x.q, x.r, x.phi, x.theta, u.throttle, u.elevator,
            u.aileron, u.rudder,
        ];
        raw.iter().zip(&self.boxes).map(|(v, b)| b.encode(*v)).collect()
    }
}

impl<M: DynamicsModel + ?Sized> ResidualModel for TrimResiduals<'_, M> {
    fn param_count(&self) -> usize {
        12
    }

    fn residuals(&self, z: &[f64]) -> Vec<f64> {
        let (x, u) = self.decode(z);
        let xdot = self.model.derivative(&x, &u, self.problem.h);
        let mut out = Vec::with_capacity(16);
        for (d, w) in xdot.iter().zip(&self.sqrt_weights) {
            out.push(w * d);
        }
        match maneuver_constraints(self.problem)(&x) {
            Ok(c) => {
                for v in c {
                    out.push(self.sqrt_penalty * v);
                }
            }
            // The theta relation degenerates only outside the attitude box;
            // steer the optimizer away with a large finite penalty.
            Err(_) => out.extend(std::iter::repeat(1e6).take(8)),
        }
        out
    }
}

/// Cold-start guess: moderate angle of attack, the bank of a coordinated
/// turn, rates from the steady-turn relations, mid-box controls.
pub fn default_start(problem: &TrimProblem) -> (StateVector, ControlVector) {
    let alpha = 4.0;
    let theta = alpha + problem.gamma;
    let phi = (problem.v * KT * problem.psidot * DEG / G0).atan().to_degrees().clamp(-28.0, 28.0);
    let (sth, cth) = ((theta * DEG).sin(), (theta * DEG).cos());
    let (sphi, cphi) = ((phi * DEG).sin(), (phi * DEG).cos());
    let state = StateVector {
        v: problem.v,
        alpha,
        beta: 0.0,
        p: -problem.psidot * sth,
        q: problem.psidot * cth * sphi,
        r: problem.psidot * cth * cphi,
        phi,
        theta,
    };
    let control = ControlVector {
        throttle: 0.45,
        elevator: -3.0,
        aileron: 0.0,
        rudder: 0.5 * (problem.failure.ll + problem.failure.ul),
    };
    (state, control)
}

/// Solve one trim target from the given start.
pub fn solve_trim<M: DynamicsModel + ?Sized>(
    problem: &TrimProblem,
    model: &M,
    start: (StateVector, ControlVector),
    cfg: &TrimSolverConfig,
) -> Result<TrimOutcome> {
    let residuals = TrimResiduals::new(problem, model, cfg);
    let z0 = residuals.encode(&start.0, &start.1);
    let (z_star, _trace) = lm_solve(&residuals, &z0, &cfg.lm)?;
    let (state, control) = residuals.decode(&z_star);

    let xdot = model.derivative(&state, &control, problem.h);
    let cost: f64 =
        0.5 * xdot.iter().zip(&problem.weights).map(|(d, g)| g * d * d).sum::<f64>();
    let derivative_norm = xdot.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    let violation = match maneuver_constraints(problem)(&state) {
        Ok(c) => c.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        Err(_) => f64::INFINITY,
    };

    if cost <= cfg.accept_cost
        && violation <= cfg.accept_constraint
        && derivative_norm <= cfg.accept_derivative
    {
        let (classification, eigenvalues) = classify(problem, model, &state, &control);
        Ok(TrimOutcome::Accepted(Box::new(TrimPoint {
            state,
            control,
            cost,
            constraint_violation: violation,
            derivative_norm,
            classification,
            eigenvalues,
        })))
    } else {
        Ok(TrimOutcome::Infeasible { cost, constraint_violation: violation })
    }
}

/// Linearize about the candidate and classify: stable when no eigenvalue
/// real part crosses +1e-9; an unstable candidate is admitted when the
/// controllability matrix of the perturbation system over the free controls
/// has full rank.
pub fn classify<M: DynamicsModel + ?Sized>(
    problem: &TrimProblem,
    model: &M,
    state: &StateVector,
    control: &ControlVector,
) -> (Classification, Vec<(f64, f64)>) {
    let x0 = state.as_array();
    let f_x = |xa: &[f64]| {
        let x = StateVector::from_array([xa[0], xa[1], xa[2], xa[3], xa[4], xa[5], xa[6], xa[7]]);
        model.derivative(&x, control, problem.h).to_vec()
    };
    let a = match fd_jacobian(f_x, &x0, 1e-6) {
        Ok(a) => a,
        Err(_) => return (Classification::Rejected(RejectReason::EigenvalueFailure), Vec::new()),
    };

    let eigenvalues = match crate::linalg::eigenvalues(&a) {
        Ok(e) => e,
        Err(_) => return (Classification::Rejected(RejectReason::EigenvalueFailure), Vec::new()),
    };
    if eigenvalues.iter().all(|(re, _)| *re < 1e-9) {
        return (Classification::Stable, eigenvalues);
    }

    // Free controls: the rudder only when the failure leaves it a range.
    let mut free: Vec<usize> = vec![0, 1, 2];
    if problem.failure.ll < problem.failure.ul {
        free.push(3);
    }
    let u0 = control.as_array();
    let f_u = |ua: &[f64]| {
        let mut u = u0;
        for (k, &idx) in free.iter().enumerate() {
            u[idx] = ua[k];
        }
        model.derivative(state, &ControlVector::from_array(u), problem.h).to_vec()
    };
    let u_free: Vec<f64> = free.iter().map(|&i| u0[i]).collect();
    let b = match fd_jacobian(f_u, &u_free, 1e-6) {
        Ok(b) => b,
        Err(_) => return (Classification::Rejected(RejectReason::EigenvalueFailure), eigenvalues),
    };

    if controllability_rank(&a, &b) == 8 {
        (Classification::UnstableControllable, eigenvalues)
    } else {
        (Classification::Rejected(RejectReason::Uncontrollable), eigenvalues)
    }
}

/// Rank of [B, AB, ..., A^7 B].
fn controllability_rank(a: &Matrix, b: &Matrix) -> usize {
    let mut block = b.clone();
    let mut ctrl = b.clone();
    for _ in 1..8 {
        block = a.matmul(&block);
        ctrl = ctrl.hstack(&block);
    }
    // Scale columns to unit norm so the rank tolerance is not dominated by
    // the growth of A^k B.
    let normalized = Matrix::from_fn(ctrl.rows(), ctrl.cols(), |i, j| {
        let norm: f64 = (0..ctrl.rows()).map(|r| ctrl[(r, j)] * ctrl[(r, j)]).sum::<f64>().sqrt();
        if norm > 0.0 {
            ctrl[(i, j)] / norm
        } else {
            0.0
        }
    });
    crate::linalg::rank(&normalized, crate::linalg::DEFAULT_RANK_TOL)
}
