//! Parametric transport-class surrogate dynamics.
//!
//! Rigid-body 6-DOF with a linear aerodynamic build-up in standard
//! stability/control derivative form, a thrust model with ISA density
//! lapse, and transport-class mass/inertia numbers. The derivative set is
//! not any specific airframe; it is chosen so the envelope has the expected
//! qualitative structure: stall and thrust boundaries, altitude
//! contraction, bank-limited turn rates, and rudder-failure asymmetry.

use crate::envelope::{ControlVector, DynamicsModel, StateVector};

const DEG: f64 = std::f64::consts::PI / 180.0;
const KT: f64 = 0.514444; // m/s per knot
const G0: f64 = 9.80665;
const RHO0: f64 = 1.225;

/// ISA troposphere density at an altitude in feet.
pub fn isa_density(h_ft: f64) -> f64 {
    let base = (1.0 - 6.875_586e-6 * h_ft).max(0.05);
    RHO0 * base.powf(4.2561)
}

/// Aerodynamic derivatives, per radian where dimensional.
#[derive(Debug, Clone, PartialEq)]
pub struct AeroDerivatives {
    pub cl0: f64,
    pub cl_alpha: f64,
    pub cl_q: f64,
    pub cl_de: f64,
    pub cd0: f64,
    pub induced_k: f64,
    /// Sideslip drag rise, per rad^2.
    pub cd_beta2: f64,
    pub cy_beta: f64,
    pub cy_p: f64,
    pub cy_r: f64,
    pub cy_dr: f64,
    pub cll_beta: f64,
    pub cll_p: f64,
    pub cll_r: f64,
    pub cll_da: f64,
    pub cll_dr: f64,
    pub cm0: f64,
    pub cm_alpha: f64,
    pub cm_q: f64,
    pub cm_de: f64,
    pub cn_beta: f64,
    pub cn_p: f64,
    pub cn_r: f64,
    pub cn_da: f64,
    pub cn_dr: f64,
}

impl Default for AeroDerivatives {
    fn default() -> Self {
        Self {
            cl0: 0.30,
            cl_alpha: 5.5,
            cl_q: 8.0,
            cl_de: 0.35,
            cd0: 0.040,
            induced_k: 0.045,
            cd_beta2: 0.30,
            cy_beta: -0.85,
            cy_p: 0.0,
            cy_r: 0.40,
            cy_dr: 0.20,
            cll_beta: -0.10,
            cll_p: -0.45,
            cll_r: 0.06,
            cll_da: 0.15,
            cll_dr: 0.015,
            cm0: 0.06,
            cm_alpha: -1.2,
            cm_q: -22.0,
            cm_de: -1.25,
            cn_beta: 0.20,
            cn_p: -0.02,
            cn_r: -0.18,
            cn_da: -0.01,
            cn_dr: -0.10,
        }
    }
}

/// The surrogate airframe.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateTransport {
    /// Mass, kg.
    pub mass: f64,
    /// Wing area, m^2.
    pub wing_area: f64,
    /// Span, m.
    pub span: f64,
    /// Mean aerodynamic chord, m.
    pub chord: f64,
    /// Inertias, kg m^2.
    pub ixx: f64,
    pub iyy: f64,
    pub izz: f64,
    pub ixz: f64,
    /// Static sea-level thrust, N.
    pub thrust_max: f64,
    /// Density-lapse exponent of the thrust model.
    pub thrust_lapse: f64,
    pub aero: AeroDerivatives,
}

impl Default for SurrogateTransport {
    fn default() -> Self {
        Self {
            mass: 9300.0,
            wing_area: 60.0,
            span: 26.0,
            chord: 2.5,
            ixx: 1.6e5,
            iyy: 3.2e5,
            izz: 4.5e5,
            ixz: 1.5e4,
            thrust_max: 22_000.0,
            thrust_lapse: 0.7,
            aero: AeroDerivatives::default(),
        }
    }
}

impl SurrogateTransport {
    /// Variant with the available thrust scaled; test rigs use weak-thrust
    /// versions to force empty envelopes.
    pub fn with_thrust_factor(factor: f64) -> Self {
        let mut m = Self::default();
        m.thrust_max *= factor;
        m
    }

    /// Thrust available, N.
    pub fn thrust(&self, throttle: f64, h_ft: f64) -> f64 {
        throttle.clamp(0.0, 1.0)
            * self.thrust_max
            * (isa_density(h_ft) / RHO0).powf(self.thrust_lapse)
    }
}

impl DynamicsModel for SurrogateTransport {
    fn derivative(&self, x: &StateVector, u: &ControlVector, h_ft: f64) -> [f64; 8] {
        let a = &self.aero;
        let v = (x.v * KT).max(1.0);
        let alpha = x.alpha * DEG;
        let beta = x.beta * DEG;
        let (p, q, r) = (x.p * DEG, x.q * DEG, x.r * DEG);
        let (phi, theta) = (x.phi * DEG, x.theta * DEG);
        let de = u.elevator * DEG;
        let da = u.aileron * DEG;
        let dr = u.rudder * DEG;

        let rho = isa_density(h_ft);
        let qbar = 0.5 * rho * v * v;
        let qs = qbar * self.wing_area;

        let phat = p * self.span / (2.0 * v);
        let qhat = q * self.chord / (2.0 * v);
        let rhat = r * self.span / (2.0 * v);

        let cl = a.cl0 + a.cl_alpha * alpha + a.cl_q * qhat + a.cl_de * de;
        let cd = a.cd0 + a.induced_k * cl * cl + a.cd_beta2 * beta * beta;
        let cy = a.cy_beta * beta + a.cy_p * phat + a.cy_r * rhat + a.cy_dr * dr;
        let lift = qs * cl;
        let drag = qs * cd;
        let side = qs * cy;

        let thrust = self.thrust(u.throttle, h_ft);

        // Wind-to-body force resolution plus gravity.
        let (sa, ca) = alpha.sin_cos();
        let (sb, cb) = beta.sin_cos();
        let (sphi, cphi) = phi.sin_cos();
        let (sth, cth) = theta.sin_cos();
        let fx = -drag * ca * cb - side * ca * sb + lift * sa + thrust - self.mass * G0 * sth;
        let fy = -drag * sb + side * cb + self.mass * G0 * cth * sphi;
        let fz = -drag * sa * cb - side * sa * sb - lift * ca + self.mass * G0 * cth * cphi;

        let ub = v * ca * cb;
        let vb = v * sb;
        let wb = v * sa * cb;
        let udot = r * vb - q * wb + fx / self.mass;
        let vdot = p * wb - r * ub + fy / self.mass;
        let wdot = q * ub - p * vb + fz / self.mass;

        let v_dot = (ub * udot + vb * vdot + wb * wdot) / v;
        let alpha_dot = (ub * wdot - wb * udot) / (ub * ub + wb * wb);
        let beta_dot = (vdot * v - vb * v_dot) / (v * v * cb);

        let cll = a.cll_beta * beta + a.cll_p * phat + a.cll_r * rhat + a.cll_da * da + a.cll_dr * dr;
        let cm = a.cm0 + a.cm_alpha * alpha + a.cm_q * qhat + a.cm_de * de;
        let cn = a.cn_beta * beta + a.cn_p * phat + a.cn_r * rhat + a.cn_da * da + a.cn_dr * dr;
        let lmom = qs * self.span * cll;
        let mmom = qs * self.chord * cm;
        let nmom = qs * self.span * cn;

        let gamma_i = self.ixx * self.izz - self.ixz * self.ixz;
        let p_dot = (self.izz * lmom
            + self.ixz * nmom
            + self.ixz * (self.ixx - self.iyy + self.izz) * p * q
            + (self.izz * (self.iyy - self.izz) - self.ixz * self.ixz) * q * r)
            / gamma_i;
        let q_dot =
            (mmom + (self.izz - self.ixx) * p * r + self.ixz * (r * r - p * p)) / self.iyy;
        let r_dot = (self.ixx * nmom
            + self.ixz * lmom
            + (self.ixx * (self.ixx - self.iyy) + self.ixz * self.ixz) * p * q
            + self.ixz * (self.iyy - self.ixx - self.izz) * q * r)
            / gamma_i;

        let phi_dot = p + (q * sphi + r * cphi) * sth / cth;
        let theta_dot = q * cphi - r * sphi;

        [
            v_dot / KT,
            alpha_dot / DEG,
            beta_dot / DEG,
            p_dot / DEG,
            q_dot / DEG,
            r_dot / DEG,
            phi_dot / DEG,
            theta_dot / DEG,
        ]
    }

    fn speed_range(&self) -> (f64, f64) {
        (40.0, 400.0)
    }

    fn alpha_range(&self) -> (f64, f64) {
        (-10.0, 14.0)
    }

    fn beta_range(&self) -> (f64, f64) {
        (-20.0, 20.0)
    }

    fn fingerprint(&self) -> String {
        format!(
            "surrogate-transport/m{:.0}/S{:.0}/T{:.0}/lapse{:.2}/cd0{:.3}",
            self.mass, self.wing_area, self.thrust_max, self.thrust_lapse, self.aero.cd0
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isa_density_decreases_with_altitude() {
        assert!((isa_density(0.0) - RHO0).abs() < 1e-12);
        let mut last = isa_density(0.0);
        for h in [5000.0, 10000.0, 20000.0, 30000.0] {
            let rho = isa_density(h);
            assert!(rho < last);
            last = rho;
        }
        // Standard-atmosphere spot value near 10 kft.
        assert!((isa_density(10_000.0) - 0.9046).abs() < 5e-3);
    }

    #[test]
    fn gravity_only_pitch_drop() {
        // At zero dynamic-pressure-ish speed the dominant V_dot term is
        // -g sin(theta); check the sign structure at a climbing attitude.
        let m = SurrogateTransport::default();
        let x = StateVector { v: 120.0, alpha: 3.0, beta: 0.0, p: 0.0, q: 0.0, r: 0.0, phi: 0.0, theta: 10.0 };
        let u = ControlVector { throttle: 0.0, elevator: 0.0, aileron: 0.0, rudder: 0.0 };
        let d = m.derivative(&x, &u, 0.0);
        assert!(d[0] < 0.0, "decelerates climbing without thrust");
    }

    #[test]
    fn thrust_lapse_reduces_available_thrust() {
        let m = SurrogateTransport::default();
        assert!((m.thrust(1.0, 0.0) - m.thrust_max).abs() < 1e-9);
        assert!(m.thrust(1.0, 30_000.0) < 0.55 * m.thrust_max);
        assert!(m.thrust(1.0, 30_000.0) > 0.45 * m.thrust_max);
    }

    #[test]
    fn rudder_creates_yawing_moment() {
        let m = SurrogateTransport::default();
        let x = StateVector { v: 120.0, alpha: 3.0, beta: 0.0, p: 0.0, q: 0.0, r: 0.0, phi: 0.0, theta: 3.0 };
        let base = ControlVector { throttle: 0.4, elevator: -2.0, aileron: 0.0, rudder: 0.0 };
        let kicked = ControlVector { rudder: 10.0, ..base };
        let d0 = m.derivative(&x, &base, 0.0);
        let d1 = m.derivative(&x, &kicked, 0.0);
        assert!((d1[5] - d0[5]).abs() > 0.1, "r_dot responds to rudder");
        assert!(d1[5] < d0[5], "positive rudder yaws negative with cn_dr < 0");
    }

    #[test]
    fn derivative_is_finite_over_the_declared_box() {
        let m = SurrogateTransport::default();
        for v in [60.0, 120.0, 240.0] {
            for alpha in [-8.0, 0.0, 10.0] {
                for beta in [-15.0, 0.0, 15.0] {
                    for h in [0.0, 15_000.0, 30_000.0] {
                        let x = StateVector {
                            v,
                            alpha,
                            beta,
                            p: 2.0,
                            q: -1.0,
                            r: 3.0,
                            phi: 20.0,
                            theta: 5.0,
                        };
                        let u = ControlVector {
                            throttle: 0.7,
                            elevator: -5.0,
                            aileron: 3.0,
                            rudder: -10.0,
                        };
                        let d = m.derivative(&x, &u, h);
                        assert!(d.iter().all(|v| v.is_finite()));
                    }
                }
            }
        }
    }
}
