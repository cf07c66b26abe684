//! Background traffic: scripted trajectories and lane-following vehicles.
//!
//! Every agent carries a precomputed scripted trajectory covering the whole
//! episode. In non-reactive mode all agents replay their script verbatim.
//! In reactive mode lane-following agents switch to live IDM control and
//! respond to the ego and to each other; purely scripted agents
//! (pedestrians, parked vehicles) replay their script in both modes.

use super::rollout::Mode;
use super::{idm_accel, EgoState, IdmParams};
use crate::geom::{Polyline, Pose, Vec2};
use crate::Result;
use serde::{Deserialize, Serialize};

/// Lateral band around a lane-follower's path within which another body
/// counts as a leader.
const LEADER_BAND: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentWaypoint {
    pub pose: Pose,
    pub speed: f64,
}

/// Dynamic state of one agent at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub pose: Pose,
    pub speed: f64,
    pub length: f64,
    pub width: f64,
}

/// Lane-following behavior parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneFollow {
    /// Path the agent travels along, in world coordinates.
    pub path: Vec<Vec2>,
    pub init_arc: f64,
    pub init_speed: f64,
    pub desired_speed: f64,
    /// Brake to rest before the end of the path.
    pub stop_at_end: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AgentBehavior {
    /// Replays the scripted trajectory in every mode.
    Scripted,
    /// Replays the script in non-reactive mode, runs live IDM in reactive
    /// mode.
    Lane(LaneFollow),
}

/// One background agent: footprint, behavior, and its episode script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub length: f64,
    pub width: f64,
    pub behavior: AgentBehavior,
    /// Pose and speed at every sim step, `sim_steps + 1` entries.
    pub scripted: Vec<AgentWaypoint>,
}

impl AgentSpec {
    pub fn snapshot_at(&self, step: usize) -> AgentSnapshot {
        let w = self.scripted[step.min(self.scripted.len() - 1)];
        AgentSnapshot {
            pose: w.pose,
            speed: w.speed,
            length: self.length,
            width: self.width,
        }
    }
}

impl LaneFollow {
    /// Simulate this follower alone on its path (no ego, no other agents)
    /// and record `steps + 1` waypoints. This is the script replayed in
    /// non-reactive mode.
    pub fn script(&self, steps: usize, dt: f64, hard_brake: f64) -> Result<Vec<AgentWaypoint>> {
        let path = Polyline::new(self.path.clone())?;
        let mut runner = LaneRunner::new(self);
        let mut out = Vec::with_capacity(steps + 1);
        out.push(runner.waypoint(&path));
        for _ in 0..steps {
            runner.advance(&path, &[], dt, hard_brake);
            out.push(runner.waypoint(&path));
        }
        Ok(out)
    }
}

/// Live integration state for one lane follower.
struct LaneRunner {
    s: f64,
    speed: f64,
    idm: IdmParams,
    stop_at_end: bool,
    half_length: f64,
}

impl LaneRunner {
    fn new(lf: &LaneFollow) -> Self {
        LaneRunner {
            s: lf.init_arc,
            speed: lf.init_speed,
            idm: IdmParams::with_desired_speed(lf.desired_speed.max(0.1)),
            stop_at_end: lf.stop_at_end,
            half_length: 0.0,
        }
    }

    fn waypoint(&self, path: &Polyline) -> AgentWaypoint {
        let p = path.point_at(self.s);
        let h = path.segment_heading_at(self.s);
        AgentWaypoint {
            pose: Pose::new(p.x, p.y, h),
            speed: self.speed,
        }
    }

    /// One IDM step against the given obstacle snapshots.
    fn advance(&mut self, path: &Polyline, bodies: &[AgentSnapshot], dt: f64, hard_brake: f64) {
        let mut accel = idm_accel(f64::INFINITY, self.speed, self.speed, &self.idm, hard_brake);
        let path_heading = path.segment_heading_at(self.s);
        for b in bodies {
            let proj = path.project(b.pose.position());
            if proj.s <= self.s || proj.lateral.abs() > LEADER_BAND {
                continue;
            }
            let gap = (proj.s - self.s) - (b.length * 0.5 + self.half_length);
            let v_lead = (b.speed * (b.pose.heading - path_heading).cos()).max(0.0);
            accel = accel.min(idm_accel(gap, self.speed, v_lead, &self.idm, hard_brake));
        }
        if self.stop_at_end {
            let gap = path.total_length() - self.s - self.half_length;
            accel = accel.min(idm_accel(gap, self.speed, 0.0, &self.idm, hard_brake));
        }
        self.s += self.speed * dt;
        self.speed = (self.speed + accel * dt).max(0.0);
    }
}

enum Runtime {
    Scripted,
    Lane { path: Polyline, runner: LaneRunner },
}

/// Steps all background agents through an episode. Construction chooses
/// scripted replay or live control per agent based on `mode`.
pub struct AgentSim<'a> {
    specs: &'a [AgentSpec],
    runtimes: Vec<Runtime>,
    current: Vec<AgentSnapshot>,
    step: usize,
    dt: f64,
    hard_brake: f64,
}

impl<'a> AgentSim<'a> {
    pub fn new(specs: &'a [AgentSpec], mode: Mode, dt: f64, hard_brake: f64) -> Result<Self> {
        let mut runtimes = Vec::with_capacity(specs.len());
        for spec in specs {
            let rt = match (&spec.behavior, mode) {
                (AgentBehavior::Scripted, _) | (AgentBehavior::Lane(_), Mode::NonReactive) => {
                    Runtime::Scripted
                }
                (AgentBehavior::Lane(lf), Mode::Reactive) => {
                    let path = Polyline::new(lf.path.clone())?;
                    let mut runner = LaneRunner::new(lf);
                    runner.half_length = spec.length * 0.5;
                    Runtime::Lane { path, runner }
                }
            };
            runtimes.push(rt);
        }
        let current = specs.iter().map(|s| s.snapshot_at(0)).collect();
        Ok(AgentSim {
            specs,
            runtimes,
            current,
            step: 0,
            dt,
            hard_brake,
        })
    }

    /// Agent states at the current step.
    pub fn snapshots(&self) -> &[AgentSnapshot] {
        &self.current
    }

    /// Advance every agent one sim step. Live agents react to the ego and
    /// to the other agents' states from before this step, in fixed index
    /// order, so the update is simultaneous and deterministic.
    pub fn advance(&mut self, ego: &EgoState) {
        self.step += 1;
        let before = self.current.clone();
        for (i, rt) in self.runtimes.iter_mut().enumerate() {
            match rt {
                Runtime::Scripted => {
                    self.current[i] = self.specs[i].snapshot_at(self.step);
                }
                Runtime::Lane { path, runner } => {
                    let mut bodies: Vec<AgentSnapshot> = Vec::with_capacity(before.len());
                    bodies.push(AgentSnapshot {
                        pose: ego.pose(),
                        speed: ego.speed,
                        length: 4.6,
                        width: 1.9,
                    });
                    for (j, b) in before.iter().enumerate() {
                        if j != i {
                            bodies.push(*b);
                        }
                    }
                    runner.advance(path, &bodies, self.dt, self.hard_brake);
                    let w = runner.waypoint(path);
                    self.current[i] = AgentSnapshot {
                        pose: w.pose,
                        speed: w.speed,
                        length: self.specs[i].length,
                        width: self.specs[i].width,
                    };
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight_path(len: f64) -> Vec<Vec2> {
        (0..=(len as usize)).map(|i| Vec2::new(i as f64, 0.0)).collect()
    }

    #[test]
    fn solo_script_reaches_and_holds_desired_speed() {
        let lf = LaneFollow {
            path: straight_path(300.0),
            init_arc: 0.0,
            init_speed: 8.0,
            desired_speed: 8.0,
            stop_at_end: false,
        };
        let script = lf.script(100, 0.1, 4.0).unwrap();
        assert_eq!(script.len(), 101);
        for w in &script {
            assert!((w.speed - 8.0).abs() < 1e-9);
        }
        // Constant speed covers v * t meters.
        let moved = script.last().unwrap().pose.x - script[0].pose.x;
        assert!((moved - 80.0).abs() < 1e-6);
    }

    #[test]
    fn stop_at_end_comes_to_rest_before_path_end() {
        let lf = LaneFollow {
            path: straight_path(60.0),
            init_arc: 0.0,
            init_speed: 7.0,
            desired_speed: 7.0,
            stop_at_end: true,
        };
        let script = lf.script(180, 0.1, 4.0).unwrap();
        let last = script.last().unwrap();
        assert!(last.speed < 0.05, "final speed {}", last.speed);
        assert!(last.pose.x < 60.0, "stopped at {}", last.pose.x);
        // Monotone forward motion.
        for w in script.windows(2) {
            assert!(w[1].pose.x >= w[0].pose.x - 1e-12);
        }
    }

    #[test]
    fn reactive_follower_brakes_behind_slow_ego() {
        // Ego sits stopped 15 m ahead of a follower that wants 8 m/s.
        let lf = LaneFollow {
            path: straight_path(200.0),
            init_arc: 0.0,
            init_speed: 8.0,
            desired_speed: 8.0,
            stop_at_end: false,
        };
        let spec = AgentSpec {
            length: 4.6,
            width: 1.9,
            behavior: AgentBehavior::Lane(lf.clone()),
            scripted: lf.script(100, 0.1, 4.0).unwrap(),
        };
        let specs = [spec];
        let ego = EgoState::new(15.0, 0.0, 0.0, 0.0);

        let mut live = AgentSim::new(&specs, Mode::Reactive, 0.1, 4.0).unwrap();
        for _ in 0..100 {
            live.advance(&ego);
        }
        let reactive_final = live.snapshots()[0];
        assert!(reactive_final.speed < 0.5, "speed {}", reactive_final.speed);
        // It stops short of the ego's rear bumper.
        assert!(reactive_final.pose.x < 15.0 - 4.6);

        // Non-reactive replay ignores the ego entirely and drives through.
        let mut replay = AgentSim::new(&specs, Mode::NonReactive, 0.1, 4.0).unwrap();
        for _ in 0..100 {
            replay.advance(&ego);
        }
        assert!((replay.snapshots()[0].speed - 8.0).abs() < 1e-9);
    }

    #[test]
    fn non_reactive_matches_script_exactly_at_every_step() {
        let lf = LaneFollow {
            path: straight_path(100.0),
            init_arc: 5.0,
            init_speed: 6.0,
            desired_speed: 6.0,
            stop_at_end: true,
        };
        let spec = AgentSpec {
            length: 4.6,
            width: 1.9,
            behavior: AgentBehavior::Lane(lf.clone()),
            scripted: lf.script(50, 0.1, 4.0).unwrap(),
        };
        let specs = [spec.clone()];
        let ego = EgoState::new(0.0, 0.0, 0.0, 3.0);
        let mut sim = AgentSim::new(&specs, Mode::NonReactive, 0.1, 4.0).unwrap();
        for step in 0..=50 {
            let snap = sim.snapshots()[0];
            assert_eq!(snap.pose, spec.scripted[step].pose);
            assert_eq!(snap.speed, spec.scripted[step].speed);
            if step < 50 {
                sim.advance(&ego);
            }
        }
    }
}
