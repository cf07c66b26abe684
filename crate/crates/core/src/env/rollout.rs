//! Closed-loop episode execution.

use super::scenario::Scenario;
use super::{
    step_bicycle, Action, AgentSim, AgentSnapshot, EgoState, PlanRecord, Route, SimParams,
    SimRecord, Termination, TrajectoryLog,
};
use crate::geom::{obb_overlap, Obb};
use serde::{Deserialize, Serialize};

/// How background traffic behaves during a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Agents replay their scripted trajectories.
    NonReactive,
    /// Lane-following agents run live IDM and respond to the ego.
    Reactive,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::NonReactive, Mode::Reactive];

    pub fn name(&self) -> &'static str {
        match self {
            Mode::NonReactive => "cl-nr",
            Mode::Reactive => "cl-r",
        }
    }

    pub fn from_name(s: &str) -> Option<Mode> {
        match s {
            "cl-nr" => Some(Mode::NonReactive),
            "cl-r" => Some(Mode::Reactive),
            _ => None,
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything a policy may observe at a plan tick.
pub struct WorldView<'a> {
    /// Plan tick index, starting at 0.
    pub tick: u64,
    /// Simulation time at this tick, s.
    pub time: f64,
    pub ego: &'a EgoState,
    pub agents: &'a [AgentSnapshot],
    pub route: &'a Route,
    pub params: &'a SimParams,
}

/// Owned copy of the world at one plan tick.
#[derive(Debug, Clone)]
pub struct WorldSnapshot {
    pub tick: u64,
    pub time: f64,
    pub ego: EgoState,
    pub agents: Vec<AgentSnapshot>,
}

impl WorldSnapshot {
    pub fn view<'a>(&'a self, route: &'a Route, params: &'a SimParams) -> WorldView<'a> {
        WorldView {
            tick: self.tick,
            time: self.time,
            ego: &self.ego,
            agents: &self.agents,
            route,
            params,
        }
    }
}

/// A planned action plus which expert produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanOutput {
    pub action: Action,
    pub expert_index: usize,
}

impl PlanOutput {
    pub fn single(action: Action) -> Self {
        PlanOutput {
            action,
            expert_index: 0,
        }
    }
}

/// A planner invoked once per plan tick; the returned action is held
/// constant for the following `plan_dt / sim_dt` sim steps.
pub trait PlanningPolicy: Sync {
    fn plan(&self, view: &WorldView<'_>) -> PlanOutput;
}

fn ego_obb(ego: &EgoState, params: &SimParams) -> Obb {
    Obb::new(ego.pose(), params.ego_length, params.ego_width)
}

fn agent_obb(a: &AgentSnapshot) -> Obb {
    Obb::new(a.pose, a.length, a.width)
}

fn in_collision(ego: &EgoState, agents: &[AgentSnapshot], params: &SimParams) -> bool {
    let e = ego_obb(ego, params);
    agents.iter().any(|a| obb_overlap(&e, &agent_obb(a)))
}

/// Run one closed-loop episode.
///
/// The policy is invoked at every plan tick; its action is clamped to the
/// action bounds and held for the intervening sim steps. The episode ends
/// at the scenario duration, on collision, on leaving the route corridor,
/// or on a non-finite action (recorded as [`Termination::PolicyFault`]).
pub fn rollout(policy: &dyn PlanningPolicy, scenario: &Scenario, mode: Mode) -> TrajectoryLog {
    let params = &scenario.params;
    let bounds = params.action_bounds();
    let steps = scenario.sim_steps();
    let per_plan = scenario.steps_per_plan();
    let dt = scenario.sim_dt;

    let mut ego = scenario.ego_init;
    let mut agents = AgentSim::new(&scenario.agents, mode, dt, params.hard_brake)
        .expect("scenario agents validated at construction");
    let mut records = Vec::with_capacity(steps);
    let mut plan_records = Vec::new();
    let mut termination = Termination::Completed;
    let mut held = Action::default();
    let mut held_expert = 0usize;

    for step in 0..steps {
        if step % per_plan == 0 {
            let tick = (step / per_plan) as u64;
            let view = WorldView {
                tick,
                time: step as f64 * dt,
                ego: &ego,
                agents: agents.snapshots(),
                route: &scenario.route,
                params,
            };
            let out = policy.plan(&view);
            plan_records.push(PlanRecord {
                tick,
                expert_index: out.expert_index,
            });
            if !out.action.is_finite() {
                termination = Termination::PolicyFault;
                break;
            }
            held = out.action.clamped(&bounds);
            held_expert = out.expert_index;
        }

        ego = step_bicycle(&ego, &held, dt, params).expect("clamped action is finite");
        agents.advance(&ego);
        records.push(SimRecord {
            time: (step + 1) as f64 * dt,
            ego,
            action: held,
            expert_index: held_expert,
        });

        if in_collision(&ego, agents.snapshots(), params) {
            termination = Termination::Collided;
            break;
        }
        let lateral = scenario.route.project(ego.pose().position()).lateral;
        if lateral.abs() > params.off_route_factor * scenario.route.lane_half_width {
            termination = Termination::OffRoute;
            break;
        }
    }

    TrajectoryLog {
        scenario_id: scenario.id.clone(),
        mode,
        ego_init: scenario.ego_init,
        records,
        plan_records,
        final_agents: agents.snapshots().to_vec(),
        termination,
    }
}

/// Reconstruct per-step agent states for a recorded episode.
///
/// Entry `k` holds the agent states that coexisted with `log.records[k]`
/// (both are post-step states), and one extra leading entry holds the
/// initial agent states. Works for both modes because agents depend only on
/// prior agent states and the recorded ego trajectory.
pub fn replay_agents(scenario: &Scenario, log: &TrajectoryLog) -> Vec<Vec<AgentSnapshot>> {
    let mut sim = AgentSim::new(&scenario.agents, log.mode, scenario.sim_dt, scenario.params.hard_brake)
        .expect("scenario agents validated at construction");
    let mut out = Vec::with_capacity(log.records.len() + 1);
    out.push(sim.snapshots().to_vec());
    for r in &log.records {
        sim.advance(&r.ego);
        out.push(sim.snapshots().to_vec());
    }
    out
}

/// Reconstruct the world as the policy saw it at each plan tick.
pub fn plan_tick_worlds(scenario: &Scenario, log: &TrajectoryLog) -> Vec<WorldSnapshot> {
    let per_plan = scenario.steps_per_plan();
    let agents = replay_agents(scenario, log);
    let egos = log.ego_states();
    let mut out = Vec::new();
    for (k, ego) in egos.iter().enumerate() {
        // The final ego state opens a new tick only if a plan actually ran
        // there; plan_records is the authority.
        if k % per_plan == 0 {
            let tick = (k / per_plan) as u64;
            if tick as usize == out.len() && (out.len() as u64) < log.plan_records.len() as u64 {
                out.push(WorldSnapshot {
                    tick,
                    time: k as f64 * scenario.sim_dt,
                    ego: *ego,
                    agents: agents[k].clone(),
                });
            }
        }
    }
    out
}
