//! Closed-loop scenario scoring and the improvement indicators derived from
//! score matrices.
//!
//! A scenario score is the product of four {0,1} gates (collision, drivable
//! area, minimum progress, direction compliance) and a weighted average of
//! four graded metrics (progress ratio, time-to-collision, speed compliance,
//! comfort). Every quantity is recomputed from the recorded trajectory; the
//! log's own termination label is never trusted.

use crate::env::{replay_agents, Mode, Scenario, ScenarioKind, Termination, TrajectoryLog};
use crate::geom::{normalize_angle, obb_overlap, Obb, Vec2};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Minimum fraction of the reference progress counted as "making progress".
pub const PROGRESS_GATE_THRESHOLD: f64 = 0.2;
/// Smallest constant-velocity time-to-collision tolerated, s.
pub const MIN_TTC: f64 = 0.95;
/// Extrapolation horizon when searching for a future collision, s.
pub const TTC_HORIZON: f64 = 3.0;
/// Extrapolation sampling step, s.
pub const TTC_STEP: f64 = 0.1;
/// Ego speeds below this are treated as stopped for TTC purposes, m/s.
pub const TTC_MIN_EGO_SPEED: f64 = 0.5;
/// Comfort bound on longitudinal acceleration magnitude, m/s^2.
pub const MAX_ABS_ACCEL: f64 = 4.0;
/// Comfort bound on lateral acceleration magnitude, m/s^2.
pub const MAX_LAT_ACCEL: f64 = 4.0;
/// Comfort bound on plan-window jerk magnitude, m/s^3.
pub const MAX_ABS_JERK: f64 = 8.0;
/// Comfort bound on yaw rate magnitude, rad/s.
pub const MAX_YAW_RATE: f64 = 0.95;
/// Cumulative motion against the route direction that zeroes the gate, m.
pub const DIRECTION_LIMIT: f64 = 6.0;
/// Reference progress below this counts as a stationary scenario, m.
pub const STATIONARY_PROGRESS: f64 = 0.1;

const EDGE_TOL: f64 = 1e-9;

/// Sub-metric values for one scenario. Gates and the binary metrics take
/// values in {0,1}; the graded metrics lie in [0,1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub collision_gate: f64,
    pub drivable_gate: f64,
    pub progress_gate: f64,
    pub direction_gate: f64,
    pub progress_ratio: f64,
    pub ttc_score: f64,
    pub speed_score: f64,
    pub comfort_score: f64,
}

impl MetricVector {
    pub fn all_ones() -> Self {
        MetricVector {
            collision_gate: 1.0,
            drivable_gate: 1.0,
            progress_gate: 1.0,
            direction_gate: 1.0,
            progress_ratio: 1.0,
            ttc_score: 1.0,
            speed_score: 1.0,
            comfort_score: 1.0,
        }
    }

    pub fn gate_product(&self) -> f64 {
        self.collision_gate * self.drivable_gate * self.progress_gate * self.direction_gate
    }

    pub fn validate(&self) -> Result<()> {
        let binary = [
            ("collision_gate", self.collision_gate),
            ("drivable_gate", self.drivable_gate),
            ("progress_gate", self.progress_gate),
            ("direction_gate", self.direction_gate),
            ("ttc_score", self.ttc_score),
            ("comfort_score", self.comfort_score),
        ];
        for (name, v) in binary {
            if v != 0.0 && v != 1.0 {
                return Err(Error::invalid("metric vector", format!("{name} = {v}")));
            }
        }
        for (name, v) in [
            ("progress_ratio", self.progress_ratio),
            ("speed_score", self.speed_score),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid("metric vector", format!("{name} = {v}")));
            }
        }
        Ok(())
    }
}

/// Weights of the additive metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Weights {
    pub progress: f64,
    pub ttc: f64,
    pub speed: f64,
    pub comfort: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            progress: 5.0,
            ttc: 5.0,
            speed: 4.0,
            comfort: 2.0,
        }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("progress", self.progress),
            ("ttc", self.ttc),
            ("speed", self.speed),
            ("comfort", self.comfort),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid("weights", format!("{name} = {v}")));
            }
        }
        Ok(())
    }
}

/// Aggregate score: product of the gates times the weighted mean of the
/// graded metrics. Always in [0,1].
pub fn scenario_score(m: &MetricVector, w: &Weights) -> f64 {
    let total = w.progress + w.ttc + w.speed + w.comfort;
    let additive = (w.progress * m.progress_ratio
        + w.ttc * m.ttc_score
        + w.speed * m.speed_score
        + w.comfort * m.comfort_score)
        / total;
    m.gate_product() * additive
}

fn ego_obb(state: &crate::env::EgoState, scenario: &Scenario) -> Obb {
    Obb::new(state.pose(), scenario.params.ego_length, scenario.params.ego_width)
}

/// Forward reach along the route and cumulative motion against it, both in
/// meters of arc length, measured from the recorded ego states.
pub fn route_motion(scenario: &Scenario, log: &TrajectoryLog) -> (f64, f64) {
    let states = log.ego_states();
    let s: Vec<f64> = states
        .iter()
        .map(|e| scenario.route.project(Vec2::new(e.x, e.y)).s)
        .collect();
    let start = s[0];
    let mut forward: f64 = 0.0;
    let mut against = 0.0;
    for k in 1..s.len() {
        let ds = s[k] - s[k - 1];
        if ds < 0.0 {
            against -= ds;
        }
        forward = forward.max(s[k] - start);
    }
    (forward, against)
}

/// Smallest constant-velocity time to an ego-agent overlap across the whole
/// log, or infinity when no extrapolated overlap occurs within the horizon.
/// Steps where the ego is essentially stopped are skipped: a stationary
/// vehicle is not closing on anything.
fn min_ttc(
    scenario: &Scenario,
    states: &[crate::env::EgoState],
    agents_per_step: &[Vec<crate::env::AgentSnapshot>],
) -> f64 {
    let mut min_t = f64::INFINITY;
    let taus: Vec<f64> = {
        let mut t = TTC_STEP;
        let mut v = Vec::new();
        while t <= TTC_HORIZON + EDGE_TOL {
            v.push(t);
            t += TTC_STEP;
        }
        v
    };
    for (state, agents) in states.iter().zip(agents_per_step.iter()) {
        if state.speed < TTC_MIN_EGO_SPEED {
            continue;
        }
        let ego_vel = Vec2::new(state.heading.cos(), state.heading.sin()).scale(state.speed);
        for agent in agents {
            let a_vel = Vec2::new(agent.pose.heading.cos(), agent.pose.heading.sin())
                .scale(agent.speed);
            for &tau in &taus {
                if tau >= min_t {
                    break;
                }
                let e_pose = crate::geom::Pose::new(
                    state.x + ego_vel.x * tau,
                    state.y + ego_vel.y * tau,
                    state.heading,
                );
                let a_pose = crate::geom::Pose::new(
                    agent.pose.x + a_vel.x * tau,
                    agent.pose.y + a_vel.y * tau,
                    agent.pose.heading,
                );
                let e = Obb::new(e_pose, scenario.params.ego_length, scenario.params.ego_width);
                let a = Obb::new(a_pose, agent.length, agent.width);
                if obb_overlap(&e, &a) {
                    min_t = min_t.min(tau);
                    break;
                }
            }
        }
    }
    min_t
}

/// Recompute every sub-metric from the trajectory. `reference_progress` is
/// the expert's forward reach on the same scenario and mode; it anchors the
/// progress ratio.
pub fn compute_metrics(
    log: &TrajectoryLog,
    scenario: &Scenario,
    reference_progress: f64,
) -> MetricVector {
    let states = log.ego_states();
    let agents = replay_agents(scenario, log);
    let dt = scenario.sim_dt;

    let collided = states
        .iter()
        .zip(agents.iter())
        .any(|(s, a)| a.iter().any(|ag| {
            obb_overlap(&ego_obb(s, scenario), &Obb::new(ag.pose, ag.length, ag.width))
        }));

    let off_drivable = states.iter().any(|s| {
        scenario
            .route
            .project(Vec2::new(s.x, s.y))
            .lateral
            .abs()
            > scenario.route.lane_half_width
    });

    let (forward, against) = route_motion(scenario, log);
    let progress_ratio = if reference_progress < STATIONARY_PROGRESS {
        1.0
    } else {
        (forward / reference_progress).clamp(0.0, 1.0)
    };

    let ttc = min_ttc(scenario, &states, &agents);

    // Speed compliance: overspeed integral relative to a full-duration
    // limit-speed integral.
    let limit = scenario.route.speed_limit;
    let duration = log.records.len() as f64 * dt;
    let speed_score = if duration > 0.0 {
        let overspeed: f64 = log
            .records
            .iter()
            .map(|r| (r.ego.speed - limit).max(0.0) * dt)
            .sum();
        (1.0 - overspeed / (limit * duration)).clamp(0.0, 1.0)
    } else {
        1.0
    };

    // Comfort: per-step longitudinal/lateral acceleration and yaw rate,
    // jerk from plan-window mean accelerations (actions are held for a
    // window, so per-step jerk would always saturate at plan boundaries).
    let mut comfortable = true;
    let n = states.len() - 1;
    for k in 0..n {
        let a_long = (states[k + 1].speed - states[k].speed) / dt;
        let yaw_rate = normalize_angle(states[k + 1].heading - states[k].heading) / dt;
        let v_mid = 0.5 * (states[k].speed + states[k + 1].speed);
        let a_lat = v_mid * yaw_rate;
        if a_long.abs() > MAX_ABS_ACCEL + EDGE_TOL
            || a_lat.abs() > MAX_LAT_ACCEL + EDGE_TOL
            || yaw_rate.abs() > MAX_YAW_RATE + EDGE_TOL
        {
            comfortable = false;
            break;
        }
    }
    if comfortable && n > 0 {
        let per_plan = scenario.steps_per_plan();
        let mut window_accels = Vec::new();
        let mut start = 0;
        while start < n {
            let end = (start + per_plan).min(n);
            let span = (end - start) as f64 * dt;
            window_accels.push((states[end].speed - states[start].speed) / span);
            start = end;
        }
        for w in window_accels.windows(2) {
            if ((w[1] - w[0]) / scenario.plan_dt).abs() > MAX_ABS_JERK + EDGE_TOL {
                comfortable = false;
                break;
            }
        }
    }

    MetricVector {
        collision_gate: if collided { 0.0 } else { 1.0 },
        drivable_gate: if off_drivable { 0.0 } else { 1.0 },
        progress_gate: if progress_ratio > PROGRESS_GATE_THRESHOLD {
            1.0
        } else {
            0.0
        },
        direction_gate: if against > DIRECTION_LIMIT { 0.0 } else { 1.0 },
        progress_ratio,
        ttc_score: if ttc >= MIN_TTC { 1.0 } else { 0.0 },
        speed_score,
        comfort_score: if comfortable { 1.0 } else { 0.0 },
    }
}

/// One evaluated scenario within a cell or validation pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScore {
    pub scenario_id: String,
    pub kind: ScenarioKind,
    pub score: f64,
    pub metrics: MetricVector,
    pub termination: Termination,
    /// Present when the policy emitted a non-finite action; the score is
    /// forced to zero in that case.
    pub fault: Option<String>,
}

/// Mean score over a scenario split plus the per-scenario evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalBreakdown {
    pub score: f64,
    pub per_scenario: Vec<ScenarioScore>,
}

impl EvalBreakdown {
    pub fn from_scenarios(per_scenario: Vec<ScenarioScore>) -> Result<Self> {
        if per_scenario.is_empty() {
            return Err(Error::invalid("evaluation", "no scenarios"));
        }
        let score =
            per_scenario.iter().map(|s| s.score).sum::<f64>() / per_scenario.len() as f64;
        Ok(EvalBreakdown {
            score,
            per_scenario,
        })
    }

    /// A breakdown carrying only an aggregate value (fixtures, summaries).
    pub fn bare(score: f64) -> Self {
        EvalBreakdown {
            score,
            per_scenario: Vec::new(),
        }
    }

    /// Field-wise mean of the per-scenario metric vectors.
    pub fn mean_metrics(&self) -> Option<MetricVector> {
        if self.per_scenario.is_empty() {
            return None;
        }
        let n = self.per_scenario.len() as f64;
        let mut acc = [0.0; 8];
        for s in &self.per_scenario {
            let m = &s.metrics;
            for (a, v) in acc.iter_mut().zip([
                m.collision_gate,
                m.drivable_gate,
                m.progress_gate,
                m.direction_gate,
                m.progress_ratio,
                m.ttc_score,
                m.speed_score,
                m.comfort_score,
            ]) {
                *a += v;
            }
        }
        Some(MetricVector {
            collision_gate: acc[0] / n,
            drivable_gate: acc[1] / n,
            progress_gate: acc[2] / n,
            direction_gate: acc[3] / n,
            progress_ratio: acc[4] / n,
            ttc_score: acc[5] / n,
            speed_score: acc[6] / n,
            comfort_score: acc[7] / n,
        })
    }

    pub fn failure_cases(&self) -> Vec<FailureCase> {
        self.per_scenario
            .iter()
            .map(|s| FailureCase {
                scenario_id: s.scenario_id.clone(),
                collision: s.metrics.collision_gate == 0.0,
                drivable: s.metrics.drivable_gate == 0.0,
            })
            .collect()
    }
}

/// The m x m grid of closed-loop scores over ordered policy pairs. Rows
/// index the base policy, columns the alternate; the diagonal holds the
/// members evaluated alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub split: String,
    pub mode: Mode,
    /// Alternation period used for the off-diagonal cells.
    pub period: u64,
    pub member_labels: Vec<String>,
    pub cells: Vec<Vec<EvalBreakdown>>,
}

impl ScoreMatrix {
    pub fn from_values(
        split: &str,
        mode: Mode,
        period: u64,
        values: &[Vec<f64>],
    ) -> Result<Self> {
        let matrix = ScoreMatrix {
            split: split.to_string(),
            mode,
            period,
            member_labels: (0..values.len()).map(|i| format!("m{}", i + 1)).collect(),
            cells: values
                .iter()
                .map(|row| row.iter().map(|&v| EvalBreakdown::bare(v)).collect())
                .collect(),
        };
        matrix.validate()?;
        Ok(matrix)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.cells.len();
        if self.cells.iter().any(|row| row.len() != m) {
            return Err(Error::invalid("score matrix", "not square"));
        }
        if self.member_labels.len() != m {
            return Err(Error::invalid("score matrix", "label count mismatch"));
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.cells.len()
    }

    pub fn score(&self, row: usize, col: usize) -> f64 {
        self.cells[row][col].score
    }

    pub fn values(&self) -> Vec<Vec<f64>> {
        self.cells
            .iter()
            .map(|row| row.iter().map(|c| c.score).collect())
            .collect()
    }

    pub fn lambda(&self) -> Result<f64> {
        lambda_improvement(&self.values())
    }

    /// Cell with the highest score; ties break toward the smaller
    /// (row, column) in row-major order.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_score = f64::NEG_INFINITY;
        for (i, row) in self.cells.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                if cell.score > best_score {
                    best_score = cell.score;
                    best = (i, j);
                }
            }
        }
        best
    }

    /// Improvement of cell (i,j) over the better of its two diagonal
    /// components.
    pub fn theta(&self, row: usize, col: usize) -> f64 {
        theta_improvement(self.score(row, col), self.score(row, row), self.score(col, col))
    }

    /// Largest off-diagonal improvement and the cell achieving it.
    pub fn max_theta(&self) -> Option<(f64, usize, usize)> {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..self.m() {
            for j in 0..self.m() {
                if i == j {
                    continue;
                }
                let th = self.theta(i, j);
                if best.map_or(true, |(b, _, _)| th > b) {
                    best = Some((th, i, j));
                }
            }
        }
        best
    }
}

/// Mean off-diagonal score minus mean diagonal score.
pub fn lambda_improvement(values: &[Vec<f64>]) -> Result<f64> {
    let m = values.len();
    if m < 2 {
        return Err(Error::invalid("lambda", "matrix must be at least 2x2"));
    }
    if values.iter().any(|row| row.len() != m) {
        return Err(Error::invalid("lambda", "matrix not square"));
    }
    let mut diag = 0.0;
    let mut off = 0.0;
    for (i, row) in values.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if i == j {
                diag += v;
            } else {
                off += v;
            }
        }
    }
    Ok(off / (m * (m - 1)) as f64 - diag / m as f64)
}

/// Score of a combined policy minus the better of its two components.
pub fn theta_improvement(soe_score: f64, score_a: f64, score_b: f64) -> f64 {
    soe_score - score_a.max(score_b)
}

/// Per-scenario failure flags for one policy on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureCase {
    pub scenario_id: String,
    pub collision: bool,
    pub drivable: bool,
}

/// One failure type's overlap counts. `both`/`only_a`/`only_b`/`neither`
/// partition the scenario set by which component policies fail; each `_soe`
/// field counts how many scenarios of that category the combined policy
/// still fails.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub both: usize,
    pub both_soe: usize,
    pub only_a: usize,
    pub only_a_soe: usize,
    pub only_b: usize,
    pub only_b_soe: usize,
    pub neither: usize,
    pub neither_soe: usize,
}

impl OverlapRow {
    pub fn category_total(&self) -> usize {
        self.both + self.only_a + self.only_b + self.neither
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapTable {
    pub scenario_count: usize,
    pub collision: OverlapRow,
    pub drivable: OverlapRow,
}

/// Cross-tabulate where two component policies fail and whether their
/// combination still fails there. All three inputs must cover the same
/// scenario sequence.
pub fn failure_overlap(
    a: &[FailureCase],
    b: &[FailureCase],
    soe: &[FailureCase],
) -> Result<OverlapTable> {
    if a.len() != b.len() || a.len() != soe.len() {
        return Err(Error::invalid("failure overlap", "set sizes differ"));
    }
    for ((fa, fb), fs) in a.iter().zip(b.iter()).zip(soe.iter()) {
        if fa.scenario_id != fb.scenario_id || fa.scenario_id != fs.scenario_id {
            return Err(Error::invalid(
                "failure overlap",
                format!("scenario sequences diverge at {}", fa.scenario_id),
            ));
        }
    }
    let tabulate = |fail: fn(&FailureCase) -> bool| {
        let mut row = OverlapRow::default();
        for ((fa, fb), fs) in a.iter().zip(b.iter()).zip(soe.iter()) {
            let (xa, xb, xs) = (fail(fa), fail(fb), fail(fs));
            match (xa, xb) {
                (true, true) => {
                    row.both += 1;
                    row.both_soe += xs as usize;
                }
                (true, false) => {
                    row.only_a += 1;
                    row.only_a_soe += xs as usize;
                }
                (false, true) => {
                    row.only_b += 1;
                    row.only_b_soe += xs as usize;
                }
                (false, false) => {
                    row.neither += 1;
                    row.neither_soe += xs as usize;
                }
            }
        }
        row
    };
    Ok(OverlapTable {
        scenario_count: a.len(),
        collision: tabulate(|f| f.collision),
        drivable: tabulate(|f| f.drivable),
    })
}

/// Mean score per scenario kind for each model, plus the largest
/// inter-model spread within the kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindBreakdown {
    pub kind: ScenarioKind,
    pub scenario_count: usize,
    pub per_model: Vec<f64>,
    pub spread: f64,
}

/// Group per-scenario scores by kind across several models. Every model
/// must have been evaluated on the identical scenario sequence.
pub fn grouped_scores(models: &[&EvalBreakdown]) -> Result<Vec<KindBreakdown>> {
    let first = models
        .first()
        .ok_or_else(|| Error::invalid("grouped scores", "no models"))?;
    for m in models {
        if m.per_scenario.len() != first.per_scenario.len()
            || m.per_scenario
                .iter()
                .zip(first.per_scenario.iter())
                .any(|(x, y)| x.scenario_id != y.scenario_id)
        {
            return Err(Error::invalid(
                "grouped scores",
                "models cover different scenario sequences",
            ));
        }
    }
    let mut out = Vec::new();
    for kind in ScenarioKind::ALL {
        let idx: Vec<usize> = first
            .per_scenario
            .iter()
            .enumerate()
            .filter(|(_, s)| s.kind == kind)
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            continue;
        }
        let per_model: Vec<f64> = models
            .iter()
            .map(|m| idx.iter().map(|&i| m.per_scenario[i].score).sum::<f64>() / idx.len() as f64)
            .collect();
        let max = per_model.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = per_model.iter().cloned().fold(f64::INFINITY, f64::min);
        out.push(KindBreakdown {
            kind,
            scenario_count: idx.len(),
            per_model,
            spread: max - min,
        });
    }
    Ok(out)
}
