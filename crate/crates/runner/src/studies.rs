//! Follow-up studies over a completed pipeline: period sweeps, the
//! same-run ablation, and three-expert cyclic orderings.

use crate::config::Split;
use crate::report;
use crate::stages::{
    load_dataset, load_matrix, load_model_set, load_runs, modes_needed, prepare_eval, save_matrix,
};
use crate::store::RunStore;
use log::info;
use serde::{Deserialize, Serialize};
use soelab_core::env::Mode;
use soelab_core::pipeline::{build_same_run_topk, cl_validate};
use soelab_core::scoring::EvalBreakdown;
use soelab_core::soe::{enumerate_pairs, enumerate_pairs_reusing, ScheduleSpec, SoePolicy};
use soelab_core::{Error, Result};
use std::fmt::Write as _;

fn require_stages(store: &RunStore, through: &str) -> Result<()> {
    for stage in crate::stages::STAGE_ORDER {
        if !store.is_complete(stage) {
            return Err(Error::invalid(
                "study",
                format!("stage {stage} has not completed; run the pipeline first"),
            ));
        }
        if stage == through {
            return Ok(());
        }
    }
    Ok(())
}

/// Refresh the report so it picks up the new study artifacts.
fn refresh_report(store: &mut RunStore) -> Result<()> {
    let outputs = report::write_report(store)?;
    store.record_stage("report", &outputs)
}

// ---- period sweep -------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodRow {
    pub period: u64,
    pub mode: Mode,
    pub lambda: f64,
    pub max_theta: f64,
    /// Cell achieving the maximal improvement.
    pub theta_row: usize,
    pub theta_col: usize,
    pub theta_pair: String,
    pub best_score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodSweep {
    pub split: String,
    pub member_labels: Vec<String>,
    pub rows: Vec<PeriodRow>,
}

pub const SWEEP_REL: &str = "studies/period_sweep.json";

/// Evaluate the full combination matrix for every requested period. The
/// diagonal does not depend on the period and is evaluated once per mode.
pub fn sweep_period(store: &mut RunStore, periods: &[u64]) -> Result<PeriodSweep> {
    require_stages(store, "enumerate")?;
    if periods.is_empty() {
        return Err(Error::invalid("period sweep", "no periods given"));
    }
    for &n in periods {
        if n < 2 {
            return Err(Error::invalid("period sweep", format!("period {n} < 2")));
        }
    }
    let config = store.config().clone();
    let (set, _) = load_model_set(store)?;
    let eval = prepare_eval(store, Split::Val)?;
    let mut rows = Vec::new();
    let mut outputs = Vec::new();
    for mode in modes_needed(&config) {
        let diagonal: Vec<EvalBreakdown> = (0..set.m())
            .map(|i| cl_validate(&set.policy(i)?, &eval, mode))
            .collect::<Result<_>>()?;
        for &period in periods {
            info!("period sweep: n={period} mode={mode}");
            let matrix = enumerate_pairs_reusing(&set, period, &eval, mode, Some(&diagonal))?;
            outputs.extend(save_matrix(store, &matrix, "")?);
            let (theta, ti, tj) = matrix
                .max_theta()
                .ok_or_else(|| Error::invalid("period sweep", "matrix has no pairs"))?;
            let (bi, bj) = matrix.argmax();
            rows.push(PeriodRow {
                period,
                mode,
                lambda: matrix.lambda()?,
                max_theta: theta,
                theta_row: ti,
                theta_col: tj,
                theta_pair: format!("{}+{}", matrix.member_labels[ti], matrix.member_labels[tj]),
                best_score: matrix.score(bi, bj),
            });
        }
    }
    let sweep = PeriodSweep {
        split: Split::Val.name().to_string(),
        member_labels: set.labels.clone(),
        rows,
    };
    store.write_json(SWEEP_REL, &sweep)?;
    let mut csv = String::from("period,mode,lambda,max_theta,theta_pair,best_score\n");
    for r in &sweep.rows {
        let _ = writeln!(
            csv,
            "{},{},{:.6},{:.6},{},{:.6}",
            r.period,
            r.mode.name(),
            r.lambda,
            r.max_theta,
            r.theta_pair,
            r.best_score
        );
    }
    std::fs::write(store.path("studies/period_sweep.csv"), csv)?;
    outputs.push(SWEEP_REL.to_string());
    outputs.push("studies/period_sweep.csv".to_string());
    store.record_stage("sweep-period", &outputs)?;
    refresh_report(store)?;
    Ok(sweep)
}

// ---- same-run ablation --------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SameRunRow {
    pub mode: Mode,
    pub lambda_cross: f64,
    pub lambda_same: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SameRunStudy {
    pub split: String,
    /// The training run whose epochs form the same-run set: the run whose
    /// selected checkpoint validated best.
    pub chosen_run: usize,
    pub cross_labels: Vec<String>,
    pub same_labels: Vec<String>,
    pub rows: Vec<SameRunRow>,
}

pub const SAME_RUN_REL: &str = "studies/same_run.json";

/// Compare seed diversity against epoch diversity: the cross-run matrix
/// (one member per training) versus a matrix over the k best epochs of the
/// single best training.
pub fn ablate_same_run(store: &mut RunStore) -> Result<SameRunStudy> {
    require_stages(store, "enumerate")?;
    let config = store.config().clone();
    let dataset = load_dataset(store)?;
    let (cross_set, selection) = load_model_set(store)?;
    let eval = prepare_eval(store, Split::Val)?;
    let mut runs = load_runs(store)?;

    let chosen_run = selection
        .runs
        .iter()
        .max_by(|a, b| {
            a.chosen
                .score
                .partial_cmp(&b.chosen.score)
                .expect("validation scores are finite")
        })
        .map(|r| r.run_index)
        .expect("selection report covers every run");
    let run = &mut runs[chosen_run - 1];
    if run.checkpoints.len() < config.runs {
        return Err(Error::invalid(
            "same-run ablation",
            format!(
                "run {chosen_run} has {} epochs, need at least {}",
                run.checkpoints.len(),
                config.runs
            ),
        ));
    }
    let same_set = build_same_run_topk(run, config.runs, &dataset.stats, &eval, config.selection)?;

    let mut rows = Vec::new();
    let mut outputs = Vec::new();
    for mode in modes_needed(&config) {
        let cross = load_matrix(store, "val", mode, config.period)?;
        let same = enumerate_pairs(&same_set, config.period, &eval, mode)?;
        outputs.extend(save_matrix(store, &same, "_same_run")?);
        rows.push(SameRunRow {
            mode,
            lambda_cross: cross.lambda()?,
            lambda_same: same.lambda()?,
        });
    }
    let study = SameRunStudy {
        split: Split::Val.name().to_string(),
        chosen_run,
        cross_labels: cross_set.labels.clone(),
        same_labels: same_set.labels.clone(),
        rows,
    };
    store.write_json(SAME_RUN_REL, &study)?;
    outputs.push(SAME_RUN_REL.to_string());
    store.record_stage("ablate-same-run", &outputs)?;
    refresh_report(store)?;
    Ok(study)
}

// ---- three-expert orderings ---------------------------------------------

const TRIPLE_ORDERS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderingRow {
    pub absent: usize,
    pub absent_label: String,
    /// Member indices in acting order.
    pub sequence: Vec<usize>,
    pub sequence_labels: String,
    pub mode: Mode,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockStats {
    pub absent: usize,
    pub absent_label: String,
    pub mode: Mode,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Population variance over the six orderings.
    pub variance: f64,
    /// Best ordered pair among the present members, from the stored
    /// two-expert matrix.
    pub best_pair: f64,
    /// Best present member alone.
    pub best_single: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TripleSanity {
    pub mode: Mode,
    /// One member cycled against two copies of itself.
    pub triple_score: f64,
    /// That member's stored standalone score.
    pub single_score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MoreExpertsStudy {
    pub split: String,
    pub member_labels: Vec<String>,
    pub rows: Vec<OrderingRow>,
    pub blocks: Vec<BlockStats>,
    pub sanity: TripleSanity,
}

pub const MORE_EXPERTS_REL: &str = "studies/more_experts.json";

/// For every leave-one-out block of the model set, evaluate all six cyclic
/// orderings of the remaining three members.
pub fn more_experts(store: &mut RunStore) -> Result<MoreExpertsStudy> {
    require_stages(store, "enumerate")?;
    let config = store.config().clone();
    let (set, _) = load_model_set(store)?;
    if set.m() < 4 {
        return Err(Error::invalid(
            "three-expert study",
            format!("needs at least 4 members, got {}", set.m()),
        ));
    }
    let eval = prepare_eval(store, Split::Val)?;
    let modes = modes_needed(&config);

    let mut rows = Vec::new();
    let mut blocks = Vec::new();
    for absent in 0..set.m() {
        let present: Vec<usize> = (0..set.m()).filter(|&i| i != absent).collect();
        for &mode in &modes {
            let pair_matrix = load_matrix(store, "val", mode, config.period)?;
            let mut scores = Vec::with_capacity(TRIPLE_ORDERS.len());
            for order in TRIPLE_ORDERS {
                let sequence: Vec<usize> = order.iter().map(|&p| present[p]).collect();
                let soe = SoePolicy::from_model_set(
                    &set,
                    &sequence,
                    ScheduleSpec::cyclic(vec![0, 1, 2]),
                )?;
                let breakdown = cl_validate(&soe, &eval, mode)?;
                let labels: Vec<&str> = sequence
                    .iter()
                    .map(|&i| set.labels[i].as_str())
                    .collect();
                rows.push(OrderingRow {
                    absent,
                    absent_label: set.labels[absent].clone(),
                    sequence: sequence.clone(),
                    sequence_labels: format!("({})", labels.join(", ")),
                    mode,
                    score: breakdown.score,
                });
                scores.push(breakdown.score);
            }
            let n = scores.len() as f64;
            let mean = scores.iter().sum::<f64>() / n;
            let variance = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
            let mut best_pair = f64::NEG_INFINITY;
            let mut best_single = f64::NEG_INFINITY;
            for &i in &present {
                best_single = best_single.max(pair_matrix.score(i, i));
                for &j in &present {
                    if i != j {
                        best_pair = best_pair.max(pair_matrix.score(i, j));
                    }
                }
            }
            blocks.push(BlockStats {
                absent,
                absent_label: set.labels[absent].clone(),
                mode,
                min: scores.iter().cloned().fold(f64::INFINITY, f64::min),
                max: scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                mean,
                variance,
                best_pair,
                best_single,
            });
        }
    }

    // Degenerate check: one expert cycled against copies of itself must
    // score exactly like that expert alone.
    let sanity_mode = modes[0];
    let triple = SoePolicy::from_checkpoints(
        &[
            set.members[0].clone(),
            set.members[0].clone(),
            set.members[0].clone(),
        ],
        &[
            set.labels[0].clone(),
            set.labels[0].clone(),
            set.labels[0].clone(),
        ],
        &set.stats,
        ScheduleSpec::cyclic(vec![0, 1, 2]),
    )?;
    let sanity = TripleSanity {
        mode: sanity_mode,
        triple_score: cl_validate(&triple, &eval, sanity_mode)?.score,
        single_score: load_matrix(store, "val", sanity_mode, config.period)?.score(0, 0),
    };

    let study = MoreExpertsStudy {
        split: Split::Val.name().to_string(),
        member_labels: set.labels.clone(),
        rows,
        blocks,
        sanity,
    };
    store.write_json(MORE_EXPERTS_REL, &study)?;
    let mut csv = String::from("absent,sequence,mode,score\n");
    for r in &study.rows {
        let _ = writeln!(
            csv,
            "{},\"{}\",{},{:.6}",
            r.absent_label,
            r.sequence_labels,
            r.mode.name(),
            r.score
        );
    }
    std::fs::write(store.path("studies/more_experts.csv"), csv)?;
    let outputs = vec![
        MORE_EXPERTS_REL.to_string(),
        "studies/more_experts.csv".to_string(),
    ];
    store.record_stage("more-experts", &outputs)?;
    refresh_report(store)?;
    Ok(study)
}
