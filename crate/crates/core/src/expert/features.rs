//! Route-relative observation encoding.
//!
//! Features are computed in the route frame, so the encoding is invariant
//! to rigid motion of the whole scene.

use crate::env::WorldView;
use serde::{Deserialize, Serialize};

/// Arc-length lookaheads (m) at which route curvature is sampled.
pub const CURVATURE_LOOKAHEADS: [f64; 5] = [5.0, 10.0, 15.0, 20.0, 30.0];

/// Feature vector length: 9 scalar features plus one curvature sample per
/// lookahead.
pub const FEATURE_LEN: usize = 9 + CURVATURE_LOOKAHEADS.len();

/// Lead gap is capped here, and "no lead" encodes as the cap.
pub const LEAD_GAP_CAP: f64 = 100.0;

/// Static obstacle offsets are clamped to +-this, and "none" encodes as
/// (cap, cap).
pub const OBSTACLE_CAP: f64 = 50.0;

/// Agents slower than this count as static obstacles.
pub const STATIC_SPEED: f64 = 0.15;

/// Extra lateral margin (m) beyond the ego half-width when deciding whether
/// a body ahead blocks the ego's path.
pub const PATH_BAND_MARGIN: f64 = 0.25;

/// Fixed-order observation vector.
///
/// Layout: `[speed, lateral_offset, heading_error, curvature x 5,
/// lead_gap, lead_closing_speed, lead_present, obstacle_long, obstacle_lat,
/// speed_limit]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_LEN]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// An agent expressed in the ego's route frame.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RelativeAgent {
    /// Arc-length offset of the agent center from the ego center, m.
    pub long: f64,
    /// Signed lateral offset of the agent center from the route, m.
    pub lateral: f64,
    /// Clear gap from ego front to agent rear along the route, m.
    pub gap: f64,
    /// Agent velocity component along the route, m/s.
    pub v_long: f64,
    pub width: f64,
    pub speed: f64,
}

pub(crate) fn relative_agents(view: &WorldView<'_>) -> Vec<RelativeAgent> {
    let ego_s = view.route.project(view.ego.pose().position()).s;
    view.agents
        .iter()
        .map(|a| {
            let proj = view.route.project(a.pose.position());
            let long = proj.s - ego_s;
            let route_heading = view.route.heading_at(proj.s);
            RelativeAgent {
                long,
                lateral: proj.lateral,
                gap: long - (view.params.ego_length + a.length) * 0.5,
                v_long: a.speed * (a.pose.heading - route_heading).cos(),
                width: a.width,
                speed: a.speed,
            }
        })
        .collect()
}

/// Whether a relative agent's body encroaches on the ego's swept band.
pub(crate) fn blocks_path(rel: &RelativeAgent, view: &WorldView<'_>) -> bool {
    rel.lateral.abs() - rel.width * 0.5 <= view.params.ego_width * 0.5 + PATH_BAND_MARGIN
}

pub fn featurize(view: &WorldView<'_>) -> FeatureVector {
    let route = view.route;
    let proj = route.project(view.ego.pose().position());
    let heading_error =
        crate::geom::normalize_angle(view.ego.heading - route.heading_at(proj.s));

    let rels = relative_agents(view);

    // Nearest body ahead that encroaches on the ego's path.
    let mut lead_gap = LEAD_GAP_CAP;
    let mut lead_closing = 0.0;
    let mut lead_present = 0.0;
    for r in &rels {
        if r.long > 0.0 && blocks_path(r, view) {
            let gap = r.gap.clamp(0.0, LEAD_GAP_CAP);
            if gap < lead_gap || lead_present == 0.0 {
                lead_gap = gap;
                lead_closing = r.v_long - view.ego.speed;
                lead_present = 1.0;
            }
        }
    }

    // Nearest static body by absolute longitudinal offset.
    let mut obs = (OBSTACLE_CAP, OBSTACLE_CAP);
    let mut best = f64::INFINITY;
    for r in &rels {
        if r.speed < STATIC_SPEED && r.long.abs() < best && r.long.abs() <= OBSTACLE_CAP {
            best = r.long.abs();
            obs = (
                r.long.clamp(-OBSTACLE_CAP, OBSTACLE_CAP),
                r.lateral.clamp(-OBSTACLE_CAP, OBSTACLE_CAP),
            );
        }
    }

    let mut f = [0.0; FEATURE_LEN];
    f[0] = view.ego.speed;
    f[1] = proj.lateral;
    f[2] = heading_error;
    for (i, d) in CURVATURE_LOOKAHEADS.iter().enumerate() {
        f[3 + i] = route.curvature_at(proj.s + d);
    }
    f[8] = lead_gap;
    f[9] = lead_closing;
    f[10] = lead_present;
    f[11] = obs.0;
    f[12] = obs.1;
    f[13] = route.speed_limit;
    FeatureVector(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{
        generate_scenario, AgentSnapshot, EgoState, Mode, PlanOutput, PlanningPolicy, Route,
        ScenarioKind, SimParams, WorldView,
    };
    use crate::geom::{Pose, Vec2};

    fn view_fixture<'a>(
        ego: &'a EgoState,
        agents: &'a [AgentSnapshot],
        route: &'a Route,
        params: &'a SimParams,
    ) -> WorldView<'a> {
        WorldView {
            tick: 0,
            time: 0.0,
            ego,
            agents,
            route,
            params,
        }
    }

    #[test]
    fn empty_road_features() {
        let params = SimParams::default();
        let route = Route::straight(200.0, 1.0, 2.0, 9.0).unwrap();
        let ego = EgoState::new(10.0, 0.5, 0.1, 6.0);
        let v = view_fixture(&ego, &[], &route, &params);
        let f = featurize(&v);
        assert_eq!(f.0[0], 6.0);
        assert!((f.0[1] - 0.5).abs() < 1e-9);
        assert!((f.0[2] - 0.1).abs() < 1e-9);
        for i in 3..8 {
            assert_eq!(f.0[i], 0.0, "curvature slot {i}");
        }
        assert_eq!(f.0[8], LEAD_GAP_CAP);
        assert_eq!(f.0[9], 0.0);
        assert_eq!(f.0[10], 0.0, "no lead present");
        assert_eq!(f.0[11], OBSTACLE_CAP);
        assert_eq!(f.0[12], OBSTACLE_CAP);
        assert_eq!(f.0[13], 9.0);
    }

    #[test]
    fn lead_gap_and_closing_speed() {
        // A lead with 12.5 m of clear gap at 3 m/s, ego at 5 m/s: gap
        // feature 12.5 and relative speed -2.0.
        let params = SimParams::default();
        let route = Route::straight(200.0, 1.0, 2.0, 9.0).unwrap();
        let ego = EgoState::new(10.0, 0.0, 0.0, 5.0);
        let agents = [AgentSnapshot {
            pose: Pose::new(10.0 + 12.5 + 4.6, 0.2, 0.0),
            speed: 3.0,
            length: 4.6,
            width: 1.9,
        }];
        let v = view_fixture(&ego, &agents, &route, &params);
        let f = featurize(&v);
        assert!((f.0[8] - 12.5).abs() < 1e-9);
        assert!((f.0[9] - (-2.0)).abs() < 1e-9);
        assert_eq!(f.0[10], 1.0);
    }

    #[test]
    fn agents_outside_band_or_behind_are_not_leads() {
        let params = SimParams::default();
        let route = Route::straight(200.0, 1.0, 2.0, 9.0).unwrap();
        let ego = EgoState::new(50.0, 0.0, 0.0, 8.0);
        let agents = [
            // Adjacent lane, well outside the swept band.
            AgentSnapshot {
                pose: Pose::new(80.0, 3.5, 0.0),
                speed: 5.0,
                length: 4.6,
                width: 1.9,
            },
            // Behind the ego.
            AgentSnapshot {
                pose: Pose::new(20.0, 0.0, 0.0),
                speed: 5.0,
                length: 4.6,
                width: 1.9,
            },
        ];
        let v = view_fixture(&ego, &agents, &route, &params);
        let f = featurize(&v);
        assert_eq!(f.0[8], LEAD_GAP_CAP);
        assert_eq!(f.0[9], 0.0);
    }

    #[test]
    fn static_obstacle_offsets_and_caps() {
        let params = SimParams::default();
        let route = Route::straight(400.0, 1.0, 2.0, 9.0).unwrap();
        let ego = EgoState::new(100.0, 0.0, 0.0, 8.0);
        let agents = [
            AgentSnapshot {
                pose: Pose::new(130.0, 2.4, 0.0),
                speed: 0.0,
                length: 4.6,
                width: 1.9,
            },
            // Much farther; should lose to the nearer one.
            AgentSnapshot {
                pose: Pose::new(145.0, -2.4, 0.0),
                speed: 0.0,
                length: 4.6,
                width: 1.9,
            },
        ];
        let v = view_fixture(&ego, &agents, &route, &params);
        let f = featurize(&v);
        assert!((f.0[11] - 30.0).abs() < 1e-9);
        assert!((f.0[12] - 2.4).abs() < 1e-9);

        // Beyond the cap the encoding clamps.
        let far = [AgentSnapshot {
            pose: Pose::new(380.0, 2.4, 0.0),
            speed: 0.0,
            length: 4.6,
            width: 1.9,
        }];
        let v = view_fixture(&ego, &far, &route, &params);
        let f = featurize(&v);
        assert_eq!(f.0[11], OBSTACLE_CAP);
        assert_eq!(f.0[12], OBSTACLE_CAP, "out-of-range body encodes as none");
    }

    #[test]
    fn crossing_pedestrian_in_band_is_a_stopped_lead() {
        let params = SimParams::default();
        let route = Route::straight(200.0, 1.0, 2.0, 9.0).unwrap();
        let ego = EgoState::new(20.0, 0.0, 0.0, 7.0);
        let agents = [AgentSnapshot {
            pose: Pose::new(50.0, -0.8, std::f64::consts::FRAC_PI_2),
            speed: 1.3,
            length: 0.6,
            width: 0.6,
        }];
        let v = view_fixture(&ego, &agents, &route, &params);
        let f = featurize(&v);
        assert!(f.0[8] < LEAD_GAP_CAP);
        // Perpendicular motion has no along-route component.
        assert!((f.0[9] - (0.0 - 7.0)).abs() < 1e-9);
    }

    #[test]
    fn features_are_invariant_to_rigid_scene_motion() {
        let params = SimParams::default();
        let scenario = generate_scenario(ScenarioKind::ParkedVehiclePass, 3);
        let rot = 1.9;
        let shift = Vec2::new(-310.0, 77.0);

        let ego = EgoState::new(12.0, 0.4, 0.05, 5.0);
        let agents: Vec<AgentSnapshot> =
            scenario.agents.iter().map(|a| a.snapshot_at(0)).collect();
        let v = view_fixture(&ego, &agents, &scenario.route, &params);
        let base = featurize(&v);

        let moved_route = Route::new(
            scenario
                .route
                .points()
                .iter()
                .map(|p| p.rotate(rot) + shift)
                .collect(),
            scenario.route.lane_half_width,
            scenario.route.speed_limit,
        )
        .unwrap();
        let ego_p = Vec2::new(ego.x, ego.y).rotate(rot) + shift;
        let moved_ego = EgoState::new(ego_p.x, ego_p.y, ego.heading + rot, ego.speed);
        let moved_agents: Vec<AgentSnapshot> = agents
            .iter()
            .map(|a| {
                let p = a.pose.position().rotate(rot) + shift;
                AgentSnapshot {
                    pose: Pose::new(p.x, p.y, a.pose.heading + rot),
                    ..*a
                }
            })
            .collect();
        let v2 = view_fixture(&moved_ego, &moved_agents, &moved_route, &params);
        let got = featurize(&v2);
        for i in 0..FEATURE_LEN {
            assert!(
                (got.0[i] - base.0[i]).abs() < 1e-6,
                "feature {i}: {} vs {}",
                got.0[i],
                base.0[i]
            );
        }
    }

    #[test]
    fn rollout_views_feed_featurize() {
        struct Probe;
        impl PlanningPolicy for Probe {
            fn plan(&self, view: &WorldView<'_>) -> PlanOutput {
                let f = featurize(view);
                assert!(f.0.iter().all(|v| v.is_finite()));
                PlanOutput::single(crate::env::Action::new(0.3, 0.0))
            }
        }
        let s = generate_scenario(ScenarioKind::PedestrianCrossing, 1);
        let log = crate::env::rollout(&Probe, &s, Mode::NonReactive);
        assert!(!log.records.is_empty());
    }
}
