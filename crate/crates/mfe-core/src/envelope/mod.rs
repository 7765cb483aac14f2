//! Maneuvering-flight-envelope generation.
//!
//! A trim point is a steady-state maneuver: all eight state derivatives of
//! the 6-DOF model vanish at fixed controls. For each flight condition
//! (altitude, flight path angle) and rudder failure case, a grid over
//! (airspeed, turn rate) is swept; every node is posed as a penalized
//! nonlinear least-squares problem and accepted when the trim cost and
//! maneuver-constraint residuals vanish and the point is stable or at least
//! controllable. The count of accepted nodes and their centroid are the
//! envelope characteristics the regression layers consume.

mod constraints;
mod database;
mod surrogate;
mod sweep;
mod trim;

pub use constraints::{gamma_of_state, maneuver_constraints, psidot_of_state, theta_relation_residual};
pub use database::{build_database, enumerate_jobs, ingest_csv, DatabaseMeta, Job, ALTITUDES_FT, GAMMAS_DEG};
pub use surrogate::SurrogateTransport;
pub use sweep::{sweep_mfe2d, write_mfe_details, AcceptedNode, GridSpec, Mfe2d};
pub use trim::{
    classify, default_start, solve_trim, Classification, RejectReason, TrimOutcome, TrimPoint,
    TrimSolverConfig,
};

use serde::{Deserialize, Serialize};

use crate::data::RUDDER_RANGE;
use crate::error::{Error, Result};

/// Wind-frame state: airspeed (knot), aerodynamic angles (deg), body rates
/// (deg/s), and attitude (deg).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub v: f64,
    pub alpha: f64,
    pub beta: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub phi: f64,
    pub theta: f64,
}

impl StateVector {
    pub fn as_array(&self) -> [f64; 8] {
        [self.v, self.alpha, self.beta, self.p, self.q, self.r, self.phi, self.theta]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        Self { v: a[0], alpha: a[1], beta: a[2], p: a[3], q: a[4], r: a[5], phi: a[6], theta: a[7] }
    }
}

/// Throttle fraction plus surface deflections in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlVector {
    pub throttle: f64,
    pub elevator: f64,
    pub aileron: f64,
    pub rudder: f64,
}

impl ControlVector {
    pub fn as_array(&self) -> [f64; 4] {
        [self.throttle, self.elevator, self.aileron, self.rudder]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self { throttle: a[0], elevator: a[1], aileron: a[2], rudder: a[3] }
    }
}

/// Nominal deflection limits of the non-failed surfaces, degrees.
pub const ELEVATOR_LIMIT: f64 = 30.0;
pub const AILERON_LIMIT: f64 = 20.0;
/// Bank-angle constraint, degrees.
pub const BANK_LIMIT: f64 = 30.0;
/// Stall-guard ceiling on the angle of attack, degrees.
pub const ALPHA_MAX: f64 = 10.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Unimpaired,
    Jam,
    Restriction,
}

/// A rudder failure expressed as deflection limits [ll, ul] in degrees;
/// a jam has ll = ul and the unimpaired case spans the nominal range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureCase {
    pub ll: f64,
    pub ul: f64,
    pub kind: FailureKind,
}

impl FailureCase {
    pub fn unimpaired() -> Self {
        Self { ll: RUDDER_RANGE.0, ul: RUDDER_RANGE.1, kind: FailureKind::Unimpaired }
    }

    pub fn jam(angle: f64) -> Result<Self> {
        if !(RUDDER_RANGE.0..=RUDDER_RANGE.1).contains(&angle) {
            return Err(Error::Invalid(format!("jam angle {angle} outside rudder range")));
        }
        Ok(Self { ll: angle, ul: angle, kind: FailureKind::Jam })
    }

    pub fn restriction(ll: f64, ul: f64) -> Result<Self> {
        if ll >= ul {
            return Err(Error::Invalid(format!("restriction needs ll < ul, got [{ll}, {ul}]")));
        }
        if ll < RUDDER_RANGE.0 || ul > RUDDER_RANGE.1 {
            return Err(Error::Invalid(format!("restriction [{ll}, {ul}] outside rudder range")));
        }
        if (ll, ul) == RUDDER_RANGE {
            return Err(Error::Invalid("full-range restriction is the unimpaired case".into()));
        }
        Ok(Self { ll, ul, kind: FailureKind::Restriction })
    }

    pub fn label(&self) -> String {
        match self.kind {
            FailureKind::Unimpaired => "unimpaired".into(),
            FailureKind::Jam => format!("jam[{}]", self.ll),
            FailureKind::Restriction => format!("restriction[{},{}]", self.ll, self.ul),
        }
    }
}

/// The evaluated failure set: the unimpaired case, seven jams at the
/// multiples of ten degrees, and twenty restriction intervals with
/// endpoints at multiples of ten.
pub fn enumerate_failure_cases() -> Vec<FailureCase> {
    let mut cases = vec![FailureCase::unimpaired()];
    for angle in [-30.0, -20.0, -10.0, 0.0, 10.0, 20.0, 30.0] {
        cases.push(FailureCase::jam(angle).expect("in range"));
    }
    let restrictions: [(f64, f64); 20] = [
        (-30.0, -20.0),
        (-30.0, -10.0),
        (-30.0, 0.0),
        (-30.0, 10.0),
        (-30.0, 20.0),
        (20.0, 30.0),
        (10.0, 30.0),
        (0.0, 30.0),
        (-10.0, 30.0),
        (-20.0, 30.0),
        (-20.0, 20.0),
        (-20.0, -10.0),
        (-20.0, 0.0),
        (-20.0, 10.0),
        (-10.0, 0.0),
        (-10.0, 10.0),
        (10.0, 20.0),
        (0.0, 20.0),
        (-10.0, 20.0),
        (0.0, 10.0),
    ];
    for (ll, ul) in restrictions {
        cases.push(FailureCase::restriction(ll, ul).expect("in range"));
    }
    cases
}

/// One trim target: the flight condition, the commanded maneuver, the
/// active failure, and the cost weights on the state derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrimProblem {
    /// Altitude, ft.
    pub h: f64,
    /// Target airspeed, knot.
    pub v: f64,
    /// Target flight path angle, deg.
    pub gamma: f64,
    /// Target turn rate, deg/s.
    pub psidot: f64,
    pub failure: FailureCase,
    /// Diagonal weights on the squared state derivatives (airspeed in
    /// knot/s, angles and rates in deg/s).
    pub weights: [f64; 8],
}

impl TrimProblem {
    pub fn new(h: f64, v: f64, gamma: f64, psidot: f64, failure: FailureCase) -> Result<Self> {
        if !(crate::data::GAMMA_RANGE.0..=crate::data::GAMMA_RANGE.1).contains(&gamma) {
            return Err(Error::Invalid(format!("gamma {gamma} outside permitted range")));
        }
        if v <= 0.0 || h < 0.0 {
            return Err(Error::Invalid("need positive airspeed and non-negative altitude".into()));
        }
        Ok(Self { h, v, gamma, psidot, failure, weights: [1.0; 8] })
    }
}

/// A 6-DOF dynamics model supplying wind-frame state derivatives. Must be a
/// pure function: grid jobs call it concurrently.
pub trait DynamicsModel: Sync {
    /// Derivative of the state in its own units per second: knot/s for
    /// airspeed, deg/s for angles, deg/s^2 for rates.
    fn derivative(&self, x: &StateVector, u: &ControlVector, h_ft: f64) -> [f64; 8];

    /// Declared validity range of the airspeed, knots.
    fn speed_range(&self) -> (f64, f64);

    /// Declared validity range of the angle of attack, degrees.
    fn alpha_range(&self) -> (f64, f64);

    /// Declared validity range of the sideslip angle, degrees.
    fn beta_range(&self) -> (f64, f64);

    /// Identity string stored in database metadata.
    fn fingerprint(&self) -> String;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failure_case_counts() {
        let cases = enumerate_failure_cases();
        assert_eq!(cases.len(), 28);
        assert_eq!(cases.iter().filter(|c| c.kind == FailureKind::Jam).count(), 7);
        assert_eq!(cases.iter().filter(|c| c.kind == FailureKind::Restriction).count(), 20);
        assert_eq!(cases.len() * 4, 112);
    }

    #[test]
    fn jam_angles_are_the_multiples_of_ten() {
        let cases = enumerate_failure_cases();
        let mut jams: Vec<f64> =
            cases.iter().filter(|c| c.kind == FailureKind::Jam).map(|c| c.ll).collect();
        jams.sort_by(f64::total_cmp);
        assert_eq!(jams, vec![-30.0, -20.0, -10.0, 0.0, 10.0, 20.0, 30.0]);
        for c in cases.iter().filter(|c| c.kind == FailureKind::Jam) {
            assert_eq!(c.ll, c.ul);
        }
    }

    #[test]
    fn restriction_intervals_well_formed() {
        for c in enumerate_failure_cases().iter().filter(|c| c.kind == FailureKind::Restriction) {
            assert!(c.ll < c.ul);
            assert_eq!(c.ll % 10.0, 0.0);
            assert_eq!(c.ul % 10.0, 0.0);
        }
    }

    #[test]
    fn invalid_failures_rejected() {
        assert!(FailureCase::jam(35.0).is_err());
        assert!(FailureCase::restriction(10.0, 10.0).is_err());
        assert!(FailureCase::restriction(-40.0, 0.0).is_err());
        assert!(FailureCase::restriction(-30.0, 30.0).is_err());
    }
}
