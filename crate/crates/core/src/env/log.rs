//! Rollout records.

use super::{Action, AgentSnapshot, EgoState, Mode};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Why a rollout ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Ran the full episode duration.
    Completed,
    /// Ego bounding box overlapped an agent.
    Collided,
    /// Ego left the drivable corridor around the route.
    OffRoute,
    /// The policy emitted a non-finite action.
    PolicyFault,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Termination::Completed => "completed",
            Termination::Collided => "collided",
            Termination::OffRoute => "off_route",
            Termination::PolicyFault => "policy_fault",
        };
        f.write_str(s)
    }
}

/// Ego state after one sim step, together with the command that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub time: f64,
    pub ego: EgoState,
    /// The executed (clamped) action held during this step.
    pub action: Action,
    /// Which expert's plan was active during this step.
    pub expert_index: usize,
}

/// One planner invocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub tick: u64,
    pub expert_index: usize,
}

/// Complete record of one closed-loop episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub scenario_id: String,
    pub mode: Mode,
    pub ego_init: EgoState,
    pub records: Vec<SimRecord>,
    pub plan_records: Vec<PlanRecord>,
    /// Agent states at the final recorded step.
    pub final_agents: Vec<AgentSnapshot>,
    pub termination: Termination,
}

impl TrajectoryLog {
    /// Ego states including the initial one, `records.len() + 1` entries.
    pub fn ego_states(&self) -> Vec<EgoState> {
        let mut out = Vec::with_capacity(self.records.len() + 1);
        out.push(self.ego_init);
        out.extend(self.records.iter().map(|r| r.ego));
        out
    }

    /// Tab-separated export with one row per sim step, for plotting and
    /// external inspection.
    pub fn write_columns<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# scenario_id={} mode={} termination={}",
            self.scenario_id, self.mode, self.termination
        )?;
        writeln!(w, "time\tx\ty\theading\tspeed\taccel\tsteer\texpert")?;
        writeln!(
            w,
            "0.000\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t\t\t",
            self.ego_init.x, self.ego_init.y, self.ego_init.heading, self.ego_init.speed
        )?;
        for r in &self.records {
            writeln!(
                w,
                "{:.3}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}",
                r.time,
                r.ego.x,
                r.ego.y,
                r.ego.heading,
                r.ego.speed,
                r.action.accel,
                r.action.steer,
                r.expert_index
            )?;
        }
        Ok(())
    }

    /// Canonical serialized form, used for byte-level equality checks.
    pub fn to_json_bytes(&self) -> crate::Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    /// Serialized behavioral content: everything the episode physically
    /// did, with the expert-index annotations stripped. Two logs with equal
    /// behavior bytes drove bit-identical trajectories under bit-identical
    /// actions even if their scheduling bookkeeping differs, which is the
    /// equality that matters when comparing a duplicated-expert alternation
    /// against the single expert.
    pub fn behavior_bytes(&self) -> crate::Result<Vec<u8>> {
        #[derive(Serialize)]
        struct Step<'a> {
            time: f64,
            ego: &'a EgoState,
            action: &'a Action,
        }
        #[derive(Serialize)]
        struct Behavior<'a> {
            scenario_id: &'a str,
            mode: Mode,
            ego_init: &'a EgoState,
            steps: Vec<Step<'a>>,
            plan_ticks: usize,
            final_agents: &'a [AgentSnapshot],
            termination: Termination,
        }
        let b = Behavior {
            scenario_id: &self.scenario_id,
            mode: self.mode,
            ego_init: &self.ego_init,
            steps: self
                .records
                .iter()
                .map(|r| Step {
                    time: r.time,
                    ego: &r.ego,
                    action: &r.action,
                })
                .collect(),
            plan_ticks: self.plan_records.len(),
            final_agents: &self.final_agents,
            termination: self.termination,
        };
        Ok(serde_json::to_vec(&b)?)
    }
}
