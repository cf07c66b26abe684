//! The rule-based demonstrator: pure pursuit steering plus IDM speed
//! control, with braking for anything that blocks the ego's path.

mod dataset;
mod features;

pub use dataset::{collect, CollectReport, Dataset, Demonstration, NormStats};
pub use features::{
    featurize, FeatureVector, CURVATURE_LOOKAHEADS, FEATURE_LEN, LEAD_GAP_CAP, OBSTACLE_CAP,
    PATH_BAND_MARGIN, STATIC_SPEED,
};

use crate::env::{
    idm_accel, Action, EgoState, IdmParams, PlanOutput, PlanningPolicy, Route, SimParams,
    WorldView,
};
use crate::geom::normalize_angle;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpertParams {
    /// Pure pursuit lookahead floor, m.
    pub lookahead_min: f64,
    /// Seconds of travel added to the lookahead.
    pub lookahead_time: f64,
    /// IDM acceleration/braking shape. Desired speed is bound to the
    /// route's limit at evaluation time.
    pub a_max: f64,
    pub b: f64,
    pub delta_exp: f64,
    pub s0: f64,
    pub t_headway: f64,
}

impl Default for ExpertParams {
    fn default() -> Self {
        ExpertParams {
            lookahead_min: 4.0,
            lookahead_time: 1.2,
            a_max: 2.0,
            b: 2.0,
            delta_exp: 4.0,
            s0: 2.0,
            t_headway: 1.5,
        }
    }
}

impl ExpertParams {
    fn idm(&self, desired_speed: f64) -> IdmParams {
        IdmParams {
            a_max: self.a_max,
            b: self.b,
            v0: desired_speed,
            delta_exp: self.delta_exp,
            s0: self.s0,
            t_headway: self.t_headway,
        }
    }

    pub fn lookahead(&self, speed: f64) -> f64 {
        self.lookahead_min.max(self.lookahead_time * speed)
    }
}

/// Pure pursuit steering toward the route point `lookahead` meters ahead of
/// the ego's projection, clamped to the steering limit.
pub fn pure_pursuit_steer(
    ego: &EgoState,
    route: &Route,
    lookahead: f64,
    params: &SimParams,
) -> f64 {
    let proj = route.project(ego.pose().position());
    let target = route.point_at(proj.s + lookahead);
    let rel = ego.pose().to_local(target);
    if rel.norm() < 1e-6 {
        return 0.0;
    }
    let alpha = normalize_angle(rel.y.atan2(rel.x));
    if alpha.abs() > std::f64::consts::FRAC_PI_2 {
        log::debug!(
            "pure pursuit target behind ego (alpha = {alpha:.3}); steering saturates"
        );
    }
    let steer = (2.0 * params.wheelbase * alpha.sin() / lookahead).atan();
    steer.clamp(-params.max_steer, params.max_steer)
}

/// Expert action for one plan tick: pure pursuit steering, and the most
/// cautious of the IDM responses to the speed limit and to every body that
/// blocks the path ahead.
pub fn expert_act(view: &WorldView<'_>, xp: &ExpertParams) -> Action {
    let bounds = view.params.action_bounds();
    let lookahead = xp.lookahead(view.ego.speed);
    let steer = pure_pursuit_steer(view.ego, view.route, lookahead, view.params);

    let idm = xp.idm(view.route.speed_limit);
    let v = view.ego.speed;
    let hard = view.params.hard_brake;
    let mut accel = idm_accel(f64::INFINITY, v, v, &idm, hard);
    for r in features::relative_agents(view) {
        if r.long > 0.0 && features::blocks_path(&r, view) {
            accel = accel.min(idm_accel(r.gap, v, r.v_long, &idm, hard));
        }
    }
    Action::new(accel, steer).clamped(&bounds)
}

/// [`PlanningPolicy`] wrapper around [`expert_act`].
#[derive(Debug, Clone, Default)]
pub struct ExpertPolicy {
    pub params: ExpertParams,
}

impl PlanningPolicy for ExpertPolicy {
    fn plan(&self, view: &WorldView<'_>) -> PlanOutput {
        PlanOutput::single(expert_act(view, &self.params))
    }
}
