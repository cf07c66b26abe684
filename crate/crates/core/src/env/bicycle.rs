//! Kinematic bicycle model.

use super::{Action, EgoState, SimParams};
use crate::geom::normalize_angle;
use crate::{Error, Result};

/// Advance the ego one step of `dt` seconds under `action`.
///
/// Update order: position advances along the current heading, then heading
/// turns by `v/L * tan(steer) * dt`, then speed integrates acceleration and
/// clamps at zero (no reverse). Heading stays normalized in `(-pi, pi]`.
pub fn step_bicycle(
    state: &EgoState,
    action: &Action,
    dt: f64,
    params: &SimParams,
) -> Result<EgoState> {
    if !action.is_finite() {
        return Err(Error::non_finite(
            "action",
            format!("accel={}, steer={}", action.accel, action.steer),
        ));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("dt", format!("{dt}")));
    }
    let v = state.speed;
    let x = state.x + v * state.heading.cos() * dt;
    let y = state.y + v * state.heading.sin() * dt;
    let heading = normalize_angle(state.heading + v / params.wheelbase * action.steer.tan() * dt);
    let speed = (v + action.accel * dt).max(0.0);
    Ok(EgoState {
        x,
        y,
        heading,
        speed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SimParams {
        SimParams::default()
    }

    #[test]
    fn zero_action_coasts_straight() {
        let s0 = EgoState::new(0.0, 0.0, 0.0, 8.0);
        let s1 = step_bicycle(&s0, &Action::new(0.0, 0.0), 0.1, &params()).unwrap();
        assert!((s1.x - 0.8).abs() < 1e-12);
        assert_eq!(s1.y, 0.0);
        assert_eq!(s1.heading, 0.0);
        assert_eq!(s1.speed, 8.0);
    }

    #[test]
    fn heading_rate_matches_formula() {
        // v/L * tan(steer) * dt with v=5, L=2.7, steer=0.2, dt=0.1.
        let s0 = EgoState::new(0.0, 0.0, 0.0, 5.0);
        let s1 = step_bicycle(&s0, &Action::new(0.0, 0.2), 0.1, &params()).unwrap();
        let expected = 5.0 / 2.7 * 0.2f64.tan() * 0.1;
        assert!((s1.heading - expected).abs() < 1e-12);
        assert!((expected - 0.03754).abs() < 5e-5);
    }

    #[test]
    fn speed_clamps_at_zero() {
        let s0 = EgoState::new(0.0, 0.0, 0.0, 0.2);
        let s1 = step_bicycle(&s0, &Action::new(-4.0, 0.0), 0.1, &params()).unwrap();
        assert_eq!(s1.speed, 0.0);
        // And a stopped vehicle does not move or turn regardless of steer.
        let s2 = step_bicycle(&s1, &Action::new(-1.0, 0.5), 0.1, &params()).unwrap();
        assert_eq!(s2.x, s1.x);
        assert_eq!(s2.y, s1.y);
        assert_eq!(s2.heading, s1.heading);
        assert_eq!(s2.speed, 0.0);
    }

    #[test]
    fn heading_wraps_into_half_open_interval() {
        let s0 = EgoState::new(0.0, 0.0, 3.1, 10.0);
        let s1 = step_bicycle(&s0, &Action::new(0.0, 0.5), 0.5, &params()).unwrap();
        assert!(s1.heading > -std::f64::consts::PI);
        assert!(s1.heading <= std::f64::consts::PI);
        assert!(s1.heading < 0.0, "3.1 rad plus a left turn wraps negative");
    }

    #[test]
    fn non_finite_action_is_rejected() {
        let s0 = EgoState::new(0.0, 0.0, 0.0, 5.0);
        assert!(step_bicycle(&s0, &Action::new(f64::NAN, 0.0), 0.1, &params()).is_err());
        assert!(step_bicycle(&s0, &Action::new(0.0, f64::INFINITY), 0.1, &params()).is_err());
        assert!(step_bicycle(&s0, &Action::new(0.0, 0.0), 0.0, &params()).is_err());
    }

    #[test]
    fn emergency_stop_distance_from_ten_mps() {
        // From 10 m/s under constant -4 m/s^2, discrete integration at 0.1 s:
        // speed hits zero in 25 steps and distance stays under 13 m.
        let mut s = EgoState::new(0.0, 0.0, 0.0, 10.0);
        let mut steps = 0;
        while s.speed > 0.0 {
            s = step_bicycle(&s, &Action::new(-4.0, 0.0), 0.1, &params()).unwrap();
            steps += 1;
            assert!(steps < 100);
        }
        assert_eq!(steps, 25);
        assert!(s.x > 11.0 && s.x < 13.5, "stop distance {}", s.x);
    }
}
