//! The 2D driving environment: vehicle kinematics, routes, background
//! agents, scenario generation, and closed-loop rollout.

mod agent;
mod bicycle;
mod idm;
mod log;
mod rollout;
mod route;
mod scenario;

pub use agent::{AgentBehavior, AgentSim, AgentSnapshot, AgentSpec, AgentWaypoint, LaneFollow};
pub use bicycle::step_bicycle;
pub use idm::{idm_accel, IdmParams};
pub use log::{PlanRecord, SimRecord, Termination, TrajectoryLog};
pub use rollout::{
    plan_tick_worlds, replay_agents, rollout, Mode, PlanOutput, PlanningPolicy, WorldSnapshot,
    WorldView,
};
pub use route::Route;
pub use scenario::{
    generate_scenario, generate_scenario_with, Regime, Scenario, ScenarioKind, ScenarioOverrides,
    ScenarioSet, ScenarioSetEntry,
};

use crate::geom::normalize_angle;
use serde::{Deserialize, Serialize};

/// Ego vehicle state propagated by the kinematic bicycle model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub x: f64,
    pub y: f64,
    /// Heading in `(-pi, pi]`.
    pub heading: f64,
    /// Forward speed, never negative.
    pub speed: f64,
}

impl EgoState {
    pub fn new(x: f64, y: f64, heading: f64, speed: f64) -> Self {
        EgoState {
            x,
            y,
            heading: normalize_angle(heading),
            speed: speed.max(0.0),
        }
    }

    pub fn pose(&self) -> crate::geom::Pose {
        crate::geom::Pose::new(self.x, self.y, self.heading)
    }
}

/// A single control command: longitudinal acceleration and front steer angle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    /// m/s^2
    pub accel: f64,
    /// rad
    pub steer: f64,
}

impl Action {
    pub fn new(accel: f64, steer: f64) -> Self {
        Action { accel, steer }
    }

    pub fn is_finite(&self) -> bool {
        self.accel.is_finite() && self.steer.is_finite()
    }

    pub fn clamped(&self, bounds: &ActionBounds) -> Action {
        Action {
            accel: self.accel.clamp(bounds.accel_min, bounds.accel_max),
            steer: self.steer.clamp(-bounds.steer_max, bounds.steer_max),
        }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.accel, self.steer]
    }

    pub fn from_array(a: [f64; 2]) -> Self {
        Action {
            accel: a[0],
            steer: a[1],
        }
    }
}

/// Box constraints on [`Action`], also used as the squash range of learned
/// policy outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    pub accel_min: f64,
    pub accel_max: f64,
    pub steer_max: f64,
}

impl ActionBounds {
    /// Component-wise interval centers, `[accel, steer]`.
    pub fn centers(&self) -> [f64; 2] {
        [(self.accel_min + self.accel_max) * 0.5, 0.0]
    }

    /// Component-wise interval half-widths, `[accel, steer]`.
    pub fn half_widths(&self) -> [f64; 2] {
        [(self.accel_max - self.accel_min) * 0.5, self.steer_max]
    }

    pub fn contains(&self, a: &Action) -> bool {
        a.accel >= self.accel_min
            && a.accel <= self.accel_max
            && a.steer.abs() <= self.steer_max
    }
}

/// Physical and simulation constants shared by every scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Bicycle-model wheelbase, m.
    pub wheelbase: f64,
    /// Steering limit, rad.
    pub max_steer: f64,
    /// Action-space acceleration bounds, m/s^2.
    pub accel_min: f64,
    pub accel_max: f64,
    /// Hardest deceleration background agents may command, m/s^2.
    pub hard_brake: f64,
    /// Ego footprint, m.
    pub ego_length: f64,
    pub ego_width: f64,
    /// Rollout terminates when |lateral offset| exceeds this multiple of the
    /// route's lane half-width.
    pub off_route_factor: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            wheelbase: 2.7,
            max_steer: 0.6,
            accel_min: -4.0,
            accel_max: 2.0,
            hard_brake: 4.0,
            ego_length: 4.6,
            ego_width: 1.9,
            off_route_factor: 2.0,
        }
    }
}

impl SimParams {
    pub fn action_bounds(&self) -> ActionBounds {
        ActionBounds {
            accel_min: self.accel_min,
            accel_max: self.accel_max,
            steer_max: self.max_steer,
        }
    }
}
