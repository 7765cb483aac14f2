//! Maneuver equality constraints on a trim candidate.
//!
//! The target pins altitude, airspeed, flight path angle, and turn rate;
//! the pitch attitude follows from the rate-of-climb relation solved for
//! theta, and the body rates follow from the rotational kinematics of a
//! steady turn (constant bank and pitch).

use crate::envelope::{StateVector, TrimProblem};
use crate::error::{Error, Result};

const DEG: f64 = std::f64::consts::PI / 180.0;

/// Flight path angle implied by the state, degrees:
/// `sin(gamma) = a sin(theta) - b cos(theta)` with the usual
/// `a = cos(alpha) cos(beta)`, `b = sin(phi) sin(beta) + cos(phi) sin(alpha) cos(beta)`.
pub fn gamma_of_state(x: &StateVector) -> f64 {
    let (alpha, beta) = (x.alpha * DEG, x.beta * DEG);
    let (phi, theta) = (x.phi * DEG, x.theta * DEG);
    let a = alpha.cos() * beta.cos();
    let b = phi.sin() * beta.sin() + phi.cos() * alpha.sin() * beta.cos();
    let s = (a * theta.sin() - b * theta.cos()).clamp(-1.0, 1.0);
    s.asin() / DEG
}

/// Turn rate implied by the body rates and attitude, deg/s:
/// `psidot = (q sin(phi) + r cos(phi)) / cos(theta)`.
pub fn psidot_of_state(x: &StateVector) -> f64 {
    let (phi, theta) = (x.phi * DEG, x.theta * DEG);
    (x.q * phi.sin() + x.r * phi.cos()) / theta.cos()
}

/// Residual of the rate-of-climb relation solved for theta:
/// `tan(theta) (a^2 - sin^2 gamma*) - (a b + sin gamma* sqrt(a^2 - sin^2 gamma* + b^2))`.
///
/// Fails with `ThetaSingularity` when the denominator term collapses
/// (theta near +/-90 deg territory).
pub fn theta_relation_residual(x: &StateVector, gamma_target_deg: f64) -> Result<f64> {
    let (alpha, beta) = (x.alpha * DEG, x.beta * DEG);
    let (phi, theta) = (x.phi * DEG, x.theta * DEG);
    let a = alpha.cos() * beta.cos();
    let b = phi.sin() * beta.sin() + phi.cos() * alpha.sin() * beta.cos();
    let sg = (gamma_target_deg * DEG).sin();
    let denom = a * a - sg * sg;
    if denom.abs() < 1e-9 {
        return Err(Error::ThetaSingularity { denominator: denom.abs() });
    }
    let root = (denom + b * b).max(0.0).sqrt();
    Ok(theta.tan() * denom - (a * b + sg * root))
}

/// The stacked equality-constraint residual of a trim target. Component
/// order: altitude pin (identically zero here, the altitude is a model
/// parameter), airspeed, flight path angle, turn rate, the theta relation,
/// and the three body-rate relations
/// `p + psidot* sin(theta)`, `q - psidot* cos(theta) sin(phi)`,
/// `r - psidot* cos(theta) cos(phi)`.
pub fn maneuver_constraints(problem: &TrimProblem) -> impl Fn(&StateVector) -> Result<Vec<f64>> + '_ {
    move |x: &StateVector| {
        let (phi, theta) = (x.phi * DEG, x.theta * DEG);
        let psidot = problem.psidot;
        Ok(vec![
            0.0,
            x.v - problem.v,
            gamma_of_state(x) - problem.gamma,
            psidot_of_state(x) - problem.psidot,
            theta_relation_residual(x, problem.gamma)?,
            x.p + psidot * theta.sin(),
            x.q - psidot * theta.cos() * phi.sin(),
            x.r - psidot * theta.cos() * phi.cos(),
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::FailureCase;

    fn state(v: f64, alpha: f64, beta: f64, p: f64, q: f64, r: f64, phi: f64, theta: f64) -> StateVector {
        StateVector { v, alpha, beta, p, q, r, phi, theta }
    }

    #[test]
    fn wings_level_theta_equals_alpha_plus_gamma() {
        // phi = beta = 0, alpha = 5 deg, gamma* = 2 deg: theta = 7 deg zeroes
        // the relation.
        let x = state(100.0, 5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 7.0);
        let r = theta_relation_residual(&x, 2.0).unwrap();
        assert!(r.abs() < 1e-12, "residual {r}");
        assert!((gamma_of_state(&x) - 2.0).abs() < 1e-12);
        // And theta = 8 deg does not.
        let x8 = state(100.0, 5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 8.0);
        assert!(theta_relation_residual(&x8, 2.0).unwrap().abs() > 1e-3);
    }

    #[test]
    fn level_turn_rate_relations() {
        // theta = phi = 0, psidot* = 2 deg/s: Eq-13-style relations demand
        // (p, q, r) = (0, 0, 2) deg/s.
        let problem =
            TrimProblem::new(0.0, 100.0, 0.0, 2.0, FailureCase::unimpaired()).unwrap();
        let x = state(100.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0);
        let c = maneuver_constraints(&problem)(&x).unwrap();
        for (i, v) in c.iter().enumerate() {
            assert!(v.abs() < 1e-12, "component {i} = {v}");
        }
    }

    #[test]
    fn rectilinear_flight_forces_zero_rates() {
        let problem = TrimProblem::new(0.0, 100.0, 0.0, 0.0, FailureCase::unimpaired()).unwrap();
        let c = maneuver_constraints(&problem);
        let ok = state(100.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert!(c(&ok).unwrap().iter().all(|v| v.abs() < 1e-12));
        for (p, q, r) in [(0.5, 0.0, 0.0), (0.0, 0.5, 0.0), (0.0, 0.0, 0.5)] {
            let bad = state(100.0, 0.0, 0.0, p, q, r, 0.0, 0.0);
            assert!(c(&bad).unwrap().iter().any(|v| v.abs() > 0.4));
        }
    }

    #[test]
    fn psidot_recovered_in_banked_turn() {
        // Consistency: rates built from the relations give back psidot.
        let (phi, theta, psidot) = (20.0_f64, 4.0_f64, 3.0_f64);
        let x = state(
            120.0,
            3.0,
            1.0,
            -psidot * (theta * DEG).sin(),
            psidot * (theta * DEG).cos() * (phi * DEG).sin(),
            psidot * (theta * DEG).cos() * (phi * DEG).cos(),
            phi,
            theta,
        );
        assert!((psidot_of_state(&x) - psidot).abs() < 1e-12);
    }

    #[test]
    fn singular_denominator_is_reported() {
        // alpha/beta chosen so a^2 collapses onto sin^2(gamma*).
        let x = state(100.0, 89.99, 0.0, 0.0, 0.0, 0.0, 0.0, 10.0);
        match theta_relation_residual(&x, 0.01) {
            Err(Error::ThetaSingularity { .. }) => {}
            other => panic!("expected ThetaSingularity, got {other:?}"),
        }
    }
}
