//! Intelligent Driver Model longitudinal control.

use serde::{Deserialize, Serialize};

/// IDM parameters. All fields must be strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmParams {
    /// Maximum acceleration, m/s^2.
    pub a_max: f64,
    /// Comfortable braking, m/s^2.
    pub b: f64,
    /// Desired speed, m/s.
    pub v0: f64,
    /// Free-road acceleration exponent.
    pub delta_exp: f64,
    /// Minimum standstill gap, m.
    pub s0: f64,
    /// Desired time headway, s.
    pub t_headway: f64,
}

impl IdmParams {
    pub fn with_desired_speed(v0: f64) -> Self {
        IdmParams {
            a_max: 2.0,
            b: 2.0,
            v0,
            delta_exp: 4.0,
            s0: 2.0,
            t_headway: 1.5,
        }
    }
}

/// IDM acceleration toward a leader `gap` meters ahead moving at `v_lead`.
///
/// Returns a value clamped to `[-hard_brake, a_max]`. A non-positive gap
/// means the leader is already overlapping and yields `-hard_brake`. Pass
/// `gap = f64::INFINITY` for free-road driving.
pub fn idm_accel(gap: f64, v: f64, v_lead: f64, params: &IdmParams, hard_brake: f64) -> f64 {
    debug_assert!(params.a_max > 0.0 && params.b > 0.0 && params.v0 > 0.0);
    debug_assert!(params.s0 > 0.0 && params.t_headway > 0.0 && params.delta_exp > 0.0);
    debug_assert!(hard_brake > 0.0);
    if gap <= 0.0 {
        return -hard_brake;
    }
    let dv = v - v_lead;
    let s_star = params.s0
        + v * params.t_headway
        + v * dv / (2.0 * (params.a_max * params.b).sqrt());
    // A desired gap below s0 (fast leader pulling away) still costs s0.
    let s_star = s_star.max(params.s0);
    let free = (v / params.v0).powf(params.delta_exp);
    let interaction = (s_star / gap).powi(2);
    let a = params.a_max * (1.0 - free - interaction);
    a.clamp(-hard_brake, params.a_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HARD: f64 = 4.0;

    #[test]
    fn free_road_formula_value() {
        // a_max (1 - (v/v0)^4) with v=5, v0=10: 2 * (1 - 0.0625) = 1.875.
        let p = IdmParams::with_desired_speed(10.0);
        let a = idm_accel(f64::INFINITY, 5.0, 5.0, &p, HARD);
        assert!((a - 1.875).abs() < 1e-12);
    }

    #[test]
    fn at_desired_speed_free_accel_is_zero() {
        let p = IdmParams::with_desired_speed(8.0);
        let a = idm_accel(f64::INFINITY, 8.0, 8.0, &p, HARD);
        assert!(a.abs() < 1e-12);
    }

    #[test]
    fn above_desired_speed_decelerates() {
        let p = IdmParams::with_desired_speed(8.0);
        assert!(idm_accel(f64::INFINITY, 10.0, 10.0, &p, HARD) < 0.0);
    }

    #[test]
    fn non_positive_gap_is_hard_brake() {
        let p = IdmParams::with_desired_speed(10.0);
        assert_eq!(idm_accel(0.0, 5.0, 5.0, &p, HARD), -HARD);
        assert_eq!(idm_accel(-3.0, 5.0, 5.0, &p, HARD), -HARD);
    }

    #[test]
    fn close_stopped_leader_forces_braking() {
        // Approaching a stopped leader 4 m ahead at 5 m/s: the desired gap
        // s* = 2 + 7.5 + 25/4 far exceeds 4 m, so braking saturates.
        let p = IdmParams::with_desired_speed(10.0);
        let a = idm_accel(4.0, 5.0, 0.0, &p, HARD);
        assert!(a < 0.0);
        assert_eq!(a, -HARD);
    }

    #[test]
    fn output_always_within_clamp() {
        let p = IdmParams::with_desired_speed(9.0);
        for gap in [0.1, 1.0, 5.0, 20.0, 200.0, f64::INFINITY] {
            for v in [0.0, 2.0, 9.0, 20.0] {
                for v_lead in [0.0, 4.0, 12.0] {
                    let a = idm_accel(gap, v, v_lead, &p, HARD);
                    assert!(a >= -HARD && a <= p.a_max);
                    assert!(a.is_finite());
                }
            }
        }
    }

    #[test]
    fn equilibrium_gap_is_stable() {
        // At v = v_lead = 6 with v0 far away, a = 0 when gap solves
        // (s*/gap)^2 = 1 - (v/v0)^4. Simulate a follower starting there and
        // check it stays near equilibrium.
        let p = IdmParams::with_desired_speed(30.0);
        let v = 6.0;
        let s_star = p.s0 + v * p.t_headway;
        let eq_gap = s_star / (1.0 - (v / p.v0).powf(p.delta_exp)).sqrt();
        let a = idm_accel(eq_gap, v, v, &p, HARD);
        assert!(a.abs() < 1e-9, "accel at equilibrium was {a}");
    }
}
