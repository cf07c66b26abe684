//! Temporal alternation between trained experts: the schedule functions,
//! the alternating policy wrapper, ordered pair enumeration into a score
//! matrix, and best-cell selection.

use crate::env::{Action, ActionBounds, Mode, PlanOutput, PlanningPolicy, SimParams, WorldView};
use crate::expert::{featurize, FeatureVector, NormStats, FEATURE_LEN};
use crate::pipeline::{cl_validate, EvalSet, LearnedPolicy, ModelSet};
use crate::scoring::{EvalBreakdown, ScoreMatrix};
use crate::tinynet::{Checkpoint, Network};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};

/// Two-expert periodic schedule: expert 1 takes every n-th plan tick, the
/// last of each period window, expert 0 takes the rest.
pub fn sigma(t: u64, n: u64) -> usize {
    debug_assert!(n >= 2, "period must be at least 2");
    if t % n < n - 1 {
        0
    } else {
        1
    }
}

/// Cyclic schedule over any expert count: walk `order` one entry per tick,
/// wrapping at the end.
pub fn sigma_cyclic(t: u64, order: &[usize]) -> usize {
    debug_assert!(!order.is_empty(), "order must be non-empty");
    order[(t % order.len() as u64) as usize]
}

/// Which expert plans at which tick.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ScheduleVariant {
    /// Two experts, expert 1 on the last tick of each n-tick window.
    Periodic { period: u64 },
    /// Any expert count, dispatched by position in a repeating sequence.
    Cyclic { order: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub expert_count: usize,
    #[serde(flatten)]
    pub variant: ScheduleVariant,
}

impl ScheduleSpec {
    pub fn periodic(period: u64) -> Self {
        ScheduleSpec {
            expert_count: 2,
            variant: ScheduleVariant::Periodic { period },
        }
    }

    pub fn cyclic(order: Vec<usize>) -> Self {
        ScheduleSpec {
            expert_count: order.len(),
            variant: ScheduleVariant::Cyclic { order },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.variant {
            ScheduleVariant::Periodic { period } => {
                if self.expert_count != 2 {
                    return Err(Error::invalid(
                        "schedule",
                        format!("periodic schedule needs exactly 2 experts, got {}", self.expert_count),
                    ));
                }
                if *period < 2 {
                    return Err(Error::invalid("schedule", format!("period {period} < 2")));
                }
            }
            ScheduleVariant::Cyclic { order } => {
                if order.len() != self.expert_count {
                    return Err(Error::invalid(
                        "schedule",
                        "cyclic order length must equal the expert count",
                    ));
                }
                // Permutation check: each expert appears exactly once.
                let mut seen = vec![false; self.expert_count];
                for &idx in order {
                    if idx >= self.expert_count || seen[idx] {
                        return Err(Error::invalid(
                            "schedule",
                            format!("order is not a permutation of 0..{}", self.expert_count),
                        ));
                    }
                    seen[idx] = true;
                }
            }
        }
        Ok(())
    }

    /// The expert index that plans at tick `t`.
    pub fn expert_at(&self, t: u64) -> usize {
        match &self.variant {
            ScheduleVariant::Periodic { period } => sigma(t, *period),
            ScheduleVariant::Cyclic { order } => sigma_cyclic(t, order),
        }
    }
}

/// A set of expert networks driven by a schedule. At every plan tick the
/// scheduled expert, and only that expert, runs a forward pass.
pub struct SoePolicy {
    pub schedule: ScheduleSpec,
    pub labels: Vec<String>,
    experts: Vec<Network>,
    stats: NormStats,
    bounds: ActionBounds,
    forwards: AtomicU64,
}

impl SoePolicy {
    pub fn from_checkpoints(
        checkpoints: &[Checkpoint],
        labels: &[String],
        stats: &NormStats,
        schedule: ScheduleSpec,
    ) -> Result<Self> {
        schedule.validate()?;
        if checkpoints.len() != schedule.expert_count {
            return Err(Error::invalid(
                "alternating policy",
                format!(
                    "schedule expects {} experts, got {}",
                    schedule.expert_count,
                    checkpoints.len()
                ),
            ));
        }
        if labels.len() != checkpoints.len() {
            return Err(Error::invalid("alternating policy", "label count mismatch"));
        }
        let arch = &checkpoints[0].arch_hash;
        if checkpoints.iter().any(|c| &c.arch_hash != arch) {
            return Err(Error::invalid("alternating policy", "mixed architectures"));
        }
        if checkpoints[0].network.input_dim() != FEATURE_LEN || stats.mean.len() != FEATURE_LEN {
            return Err(Error::Shape {
                context: "alternating policy input",
                expected: FEATURE_LEN,
                got: checkpoints[0].network.input_dim(),
            });
        }
        Ok(SoePolicy {
            schedule,
            labels: labels.to_vec(),
            experts: checkpoints.iter().map(|c| c.network.clone()).collect(),
            stats: stats.clone(),
            bounds: SimParams::default().action_bounds(),
            forwards: AtomicU64::new(0),
        })
    }

    /// Assemble from model-set members, in the order given by `indices`.
    pub fn from_model_set(set: &ModelSet, indices: &[usize], schedule: ScheduleSpec) -> Result<Self> {
        let checkpoints: Vec<Checkpoint> = indices
            .iter()
            .map(|&i| set.members[i].clone())
            .collect();
        let labels: Vec<String> = indices.iter().map(|&i| set.labels[i].clone()).collect();
        SoePolicy::from_checkpoints(&checkpoints, &labels, &set.stats, schedule)
    }

    pub fn expert_count(&self) -> usize {
        self.experts.len()
    }

    pub fn forward_count(&self) -> u64 {
        self.forwards.load(Ordering::Relaxed)
    }

    /// Dispatch one tick: exactly one expert forward pass. Returns the
    /// action and the index of the expert that produced it.
    pub fn act(&self, features: &FeatureVector, t: u64) -> Result<(Action, usize)> {
        let k = self.schedule.expert_at(t);
        self.forwards.fetch_add(1, Ordering::Relaxed);
        let action = self.experts[k].forward(&self.stats.normalize(features), &self.bounds)?;
        Ok((action, k))
    }
}

impl PlanningPolicy for SoePolicy {
    fn plan(&self, view: &WorldView<'_>) -> PlanOutput {
        let f = featurize(view);
        match self.act(&f, view.tick) {
            Ok((action, k)) => PlanOutput {
                action,
                expert_index: k,
            },
            // Surfaces as a policy fault in the rollout.
            Err(_) => PlanOutput::single(Action::new(f64::NAN, f64::NAN)),
        }
    }
}

/// Evaluate every ordered pair of model-set members under a period-n
/// schedule. Cell (i, j) alternates member i (expert 0) with member j
/// (expert 1); the diagonal evaluates members alone.
pub fn enumerate_pairs(
    set: &ModelSet,
    period: u64,
    eval: &EvalSet,
    mode: Mode,
) -> Result<ScoreMatrix> {
    enumerate_pairs_reusing(set, period, eval, mode, None)
}

/// Same as [`enumerate_pairs`] but can reuse previously computed diagonal
/// cells. The diagonal does not depend on the period, so period sweeps
/// evaluate it once.
pub fn enumerate_pairs_reusing(
    set: &ModelSet,
    period: u64,
    eval: &EvalSet,
    mode: Mode,
    diagonal: Option<&[EvalBreakdown]>,
) -> Result<ScoreMatrix> {
    set.validate()?;
    ScheduleSpec::periodic(period).validate()?;
    let m = set.m();
    if let Some(d) = diagonal {
        if d.len() != m {
            return Err(Error::invalid("pair enumeration", "diagonal length mismatch"));
        }
    }
    let flat: Vec<EvalBreakdown> = (0..m * m)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / m, idx % m);
            if i == j {
                if let Some(d) = diagonal {
                    return Ok(d[i].clone());
                }
                let policy = set.policy(i)?;
                cl_validate(&policy, eval, mode)
            } else {
                let policy = SoePolicy::from_model_set(set, &[i, j], ScheduleSpec::periodic(period))?;
                cl_validate(&policy, eval, mode)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::with_capacity(m);
    let mut rest = flat;
    for _ in 0..m {
        let tail = rest.split_off(m);
        cells.push(rest);
        rest = tail;
    }
    let matrix = ScoreMatrix {
        split: eval.split.clone(),
        mode,
        period,
        member_labels: set.labels.clone(),
        cells,
    };
    matrix.validate()?;
    Ok(matrix)
}

/// The winning cell of a score matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub row: usize,
    pub col: usize,
    pub row_label: String,
    pub col_label: String,
    pub score: f64,
    /// Improvement of the winning cell over the better of its two solo
    /// scores; zero when a diagonal cell wins.
    pub theta: f64,
}

impl Selection {
    pub fn is_pair(&self) -> bool {
        self.row != self.col
    }
}

/// Argmax over all cells, diagonal included; ties break toward the
/// smallest (row, column) in row-major order. Including the diagonal means
/// alternation is never selected when a member alone scores strictly
/// higher.
pub fn select_best_soe(matrix: &ScoreMatrix) -> Selection {
    let (row, col) = matrix.argmax();
    Selection {
        row,
        col,
        row_label: matrix.member_labels[row].clone(),
        col_label: matrix.member_labels[col].clone(),
        score: matrix.score(row, col),
        theta: matrix.theta(row, col),
    }
}

/// A selected cell instantiated as a runnable policy.
pub enum CellPolicy {
    Single(LearnedPolicy),
    Alternating(SoePolicy),
}

impl CellPolicy {
    pub fn build(set: &ModelSet, row: usize, col: usize, period: u64) -> Result<Self> {
        if row == col {
            Ok(CellPolicy::Single(set.policy(row)?))
        } else {
            Ok(CellPolicy::Alternating(SoePolicy::from_model_set(
                set,
                &[row, col],
                ScheduleSpec::periodic(period),
            )?))
        }
    }

    pub fn label(&self) -> String {
        match self {
            CellPolicy::Single(p) => p.label.clone(),
            CellPolicy::Alternating(p) => p.labels.join("+"),
        }
    }
}

impl PlanningPolicy for CellPolicy {
    fn plan(&self, view: &WorldView<'_>) -> PlanOutput {
        match self {
            CellPolicy::Single(p) => p.plan(view),
            CellPolicy::Alternating(p) => p.plan(view),
        }
    }
}
