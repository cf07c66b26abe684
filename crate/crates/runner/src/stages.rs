//! The resumable pipeline stages. Each stage reads the artifacts of the
//! stages before it, writes its own, and is recorded in the store manifest;
//! re-running a completed stage is a no-op.

use crate::config::{split_set, ExperimentConfig, Split};
use crate::report;
use crate::store::RunStore;
use log::info;
use serde::{Deserialize, Serialize};
use soelab_core::env::{Mode, Scenario, ScenarioSet, Termination};
use soelab_core::expert::{Dataset, ExpertParams};
use soelab_core::pipeline::{
    run_training, select_best, EpochRecord, EvalSet, ModelSet, SelectionKind, SelectionMode,
    TrainingRun,
};
use soelab_core::scoring::{failure_overlap, EvalBreakdown, KindBreakdown, OverlapTable, ScoreMatrix};
use soelab_core::soe::{enumerate_pairs, select_best_soe, Selection};
use soelab_core::tinynet::Checkpoint;
use soelab_core::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Stage names in execution order.
pub const STAGE_ORDER: [&str; 7] = [
    "scenarios",
    "collect",
    "train",
    "validate",
    "enumerate",
    "test",
    "report",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    Cached,
}

/// Run one stage if its outputs are not already recorded. Prerequisite
/// stages must be complete.
pub fn run_stage(store: &mut RunStore, name: &str) -> Result<StageOutcome> {
    let index = STAGE_ORDER
        .iter()
        .position(|&s| s == name)
        .ok_or_else(|| Error::invalid("stage", format!("unknown stage {name}")))?;
    for prereq in &STAGE_ORDER[..index] {
        if !store.is_complete(prereq) {
            return Err(Error::invalid(
                "stage",
                format!("{name} requires stage {prereq}, which has not completed"),
            ));
        }
    }
    if store.is_complete(name) {
        info!("stage {name}: cached, skipping");
        return Ok(StageOutcome::Cached);
    }
    info!("stage {name}: running");
    let outputs = match name {
        "scenarios" => stage_scenarios(store)?,
        "collect" => stage_collect(store)?,
        "train" => stage_train(store)?,
        "validate" => stage_validate(store)?,
        "enumerate" => stage_enumerate(store)?,
        "test" => stage_test(store)?,
        "report" => report::write_report(store)?,
        _ => unreachable!("stage list is exhaustive"),
    };
    store.record_stage(name, &outputs)?;
    info!("stage {name}: complete, {} artifacts", outputs.len());
    Ok(StageOutcome::Ran)
}

/// Run every stage in order.
pub fn run_pipeline(store: &mut RunStore) -> Result<()> {
    for name in STAGE_ORDER {
        run_stage(store, name)?;
    }
    Ok(())
}

// ---- scenarios ----------------------------------------------------------

fn scenario_rel(split: Split) -> String {
    format!("scenarios/{}.json", split.name())
}

fn stage_scenarios(store: &mut RunStore) -> Result<Vec<String>> {
    let config = store.config().clone();
    let mut outputs = Vec::new();
    for split in Split::ALL {
        let set = split_set(&config, split);
        // Shake out generation problems now rather than mid-pipeline.
        set.generate_all()?;
        let rel = scenario_rel(split);
        set.save(&store.path(&rel))?;
        outputs.push(rel);
    }
    Ok(outputs)
}

/// Load and regenerate one split's scenarios.
pub fn load_split(store: &RunStore, split: Split) -> Result<Vec<Scenario>> {
    let set = ScenarioSet::load(&store.path(&scenario_rel(split)))?;
    set.generate_all()
}

// ---- collect ------------------------------------------------------------

const DATASET_REL: &str = "dataset/train.bin";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExcludedScenario {
    pub id: String,
    pub termination: Termination,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollectSummary {
    pub scenario_count: usize,
    pub used_scenarios: usize,
    pub row_count: usize,
    pub excluded: Vec<ExcludedScenario>,
}

fn stage_collect(store: &mut RunStore) -> Result<Vec<String>> {
    let config = store.config().clone();
    let scenarios = load_split(store, Split::Train)?;
    let report = soelab_core::expert::collect(
        &scenarios,
        &ExpertParams::default(),
        config.experiment_seed,
    )?;
    report.dataset.save(&store.path(DATASET_REL))?;
    let summary = CollectSummary {
        scenario_count: scenarios.len(),
        used_scenarios: report.dataset.scenario_ids.len(),
        row_count: report.dataset.rows.len(),
        excluded: report
            .excluded
            .into_iter()
            .map(|(id, termination)| ExcludedScenario { id, termination })
            .collect(),
    };
    store.write_json("dataset/collect.json", &summary)?;
    Ok(vec![DATASET_REL.to_string(), "dataset/collect.json".to_string()])
}

pub fn load_dataset(store: &RunStore) -> Result<Dataset> {
    Dataset::load(&store.path(DATASET_REL))
}

// ---- train --------------------------------------------------------------

/// Per-run sidecar: seed plus the per-epoch records (losses after training,
/// validation scores filled in by the validate stage).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_index: usize,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
}

fn run_record_rel(run_index: usize) -> String {
    format!("runs/run_{run_index}/record.json")
}

fn checkpoint_rel(run_index: usize, epoch: u32) -> String {
    format!("runs/run_{run_index}/epoch_{epoch:03}.ckpt")
}

fn stage_train(store: &mut RunStore) -> Result<Vec<String>> {
    let config = store.config().clone();
    let dataset = load_dataset(store)?;
    let runs = run_training(
        &config.arch,
        &dataset,
        config.runs,
        config.experiment_seed,
        &config.train_config(),
    )?;
    let mut outputs = Vec::new();
    for run in &runs {
        for ck in &run.checkpoints {
            let rel = checkpoint_rel(run.run_index, ck.epoch);
            ck.save(&store.path(&rel))?;
            outputs.push(rel);
        }
        let rel = run_record_rel(run.run_index);
        store.write_json(
            &rel,
            &RunRecord {
                run_index: run.run_index,
                seed: run.seed,
                epochs: run.epochs.clone(),
            },
        )?;
        outputs.push(rel);
    }
    Ok(outputs)
}

/// Rebuild every training run from its stored record and checkpoints.
pub fn load_runs(store: &RunStore) -> Result<Vec<TrainingRun>> {
    let config = store.config();
    let mut runs = Vec::with_capacity(config.runs);
    for i in 1..=config.runs {
        let record: RunRecord = store.read_json(&run_record_rel(i))?;
        if record.run_index != i {
            return Err(Error::invalid("run record", "index mismatch"));
        }
        let mut checkpoints = Vec::with_capacity(record.epochs.len());
        for e in &record.epochs {
            let ck = Checkpoint::load(&store.path(&checkpoint_rel(i, e.epoch)))?;
            if ck.seed != record.seed || ck.epoch != e.epoch {
                return Err(Error::invalid(
                    "run record",
                    format!("checkpoint provenance mismatch in run {i}"),
                ));
            }
            checkpoints.push(ck);
        }
        let run = TrainingRun {
            run_index: i,
            seed: record.seed,
            checkpoints,
            epochs: record.epochs,
        };
        run.validate()?;
        runs.push(run);
    }
    Ok(runs)
}

// ---- validate -----------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestEpoch {
    pub epoch: u32,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSelection {
    pub run_index: usize,
    pub seed: u64,
    /// Member label of the chosen checkpoint, `r{run}e{epoch:02}`.
    pub label: String,
    /// Best epoch under the configured selection signal.
    pub chosen: BestEpoch,
    pub best_ol: BestEpoch,
    pub best_cl_nr: BestEpoch,
    pub best_cl_r: BestEpoch,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionReport {
    pub selection: SelectionMode,
    pub split: String,
    pub runs: Vec<RunSelection>,
}

const SELECTION_REL: &str = "selection/checkpoints.json";

/// Prepare one split for evaluation (expert reference rollouts included).
pub fn prepare_eval(store: &RunStore, split: Split) -> Result<EvalSet> {
    let config = store.config();
    EvalSet::prepare(
        split.name(),
        load_split(store, split)?,
        &ExpertParams::default(),
        config.sigma_ol,
        config.weights,
    )
}

fn stage_validate(store: &mut RunStore) -> Result<Vec<String>> {
    let config = store.config().clone();
    let dataset = load_dataset(store)?;
    let eval = prepare_eval(store, Split::Val)?;
    let mut runs = load_runs(store)?;
    let mut selections = Vec::with_capacity(runs.len());
    let mut outputs = Vec::new();
    for run in &mut runs {
        // Score every epoch under all three signals so the report can show
        // the full curves; the configured signal decides the member.
        let best = |mode: SelectionMode, run: &mut TrainingRun| -> Result<BestEpoch> {
            let outcome = select_best(run, &dataset.stats, &eval, mode)?;
            Ok(BestEpoch {
                epoch: run.checkpoints[outcome.epoch_index].epoch,
                score: outcome.score,
            })
        };
        let best_ol = best(SelectionMode::Ol, run)?;
        let best_cl_nr = best(SelectionMode::ClNr, run)?;
        let best_cl_r = best(SelectionMode::ClR, run)?;
        let chosen = match config.selection {
            SelectionMode::Ol => best_ol,
            SelectionMode::ClNr => best_cl_nr,
            SelectionMode::ClR => best_cl_r,
        };
        selections.push(RunSelection {
            run_index: run.run_index,
            seed: run.seed,
            label: format!("r{}e{:02}", run.run_index, chosen.epoch),
            chosen,
            best_ol,
            best_cl_nr,
            best_cl_r,
        });
        let rel = run_record_rel(run.run_index);
        store.write_json(
            &rel,
            &RunRecord {
                run_index: run.run_index,
                seed: run.seed,
                epochs: run.epochs.clone(),
            },
        )?;
        outputs.push(rel);
    }
    let report = SelectionReport {
        selection: config.selection,
        split: Split::Val.name().to_string(),
        runs: selections,
    };
    store.write_json(SELECTION_REL, &report)?;
    outputs.push(SELECTION_REL.to_string());
    Ok(outputs)
}

/// Rebuild the cross-run model set from the selection report.
pub fn load_model_set(store: &RunStore) -> Result<(ModelSet, SelectionReport)> {
    let report: SelectionReport = store.read_json(SELECTION_REL)?;
    let dataset = load_dataset(store)?;
    let mut members = Vec::with_capacity(report.runs.len());
    let mut labels = Vec::with_capacity(report.runs.len());
    for r in &report.runs {
        members.push(Checkpoint::load(
            &store.path(&checkpoint_rel(r.run_index, r.chosen.epoch)),
        )?);
        labels.push(r.label.clone());
    }
    let set = ModelSet {
        members,
        labels,
        selection: SelectionKind::CrossRun,
        split: report.split.clone(),
        mode: report.selection,
        stats: dataset.stats,
    };
    set.validate()?;
    Ok((set, report))
}

// ---- enumerate ----------------------------------------------------------

pub fn matrix_rel(split: &str, mode: Mode, period: u64, suffix: &str) -> String {
    format!("matrices/{split}_{}_n{period}{suffix}", mode.name())
}

/// Render a score matrix as a comma-separated table, rows = first expert,
/// columns = second.
pub fn matrix_csv(matrix: &ScoreMatrix) -> String {
    let mut s = String::new();
    s.push_str("pi_a\\pi_b");
    for l in &matrix.member_labels {
        let _ = write!(s, ",{l}");
    }
    s.push('\n');
    for (i, label) in matrix.member_labels.iter().enumerate() {
        s.push_str(label);
        for j in 0..matrix.m() {
            let _ = write!(s, ",{:.6}", matrix.score(i, j));
        }
        s.push('\n');
    }
    s
}

pub fn save_matrix(store: &RunStore, matrix: &ScoreMatrix, name_suffix: &str) -> Result<Vec<String>> {
    let json_rel = matrix_rel(&matrix.split, matrix.mode, matrix.period, &format!("{name_suffix}.json"));
    let csv_rel = matrix_rel(&matrix.split, matrix.mode, matrix.period, &format!("{name_suffix}.csv"));
    store.write_json(&json_rel, matrix)?;
    std::fs::write(store.path(&csv_rel), matrix_csv(matrix))?;
    Ok(vec![json_rel, csv_rel])
}

/// Evaluation modes to cover: the configured list, plus the combination
/// selection mode if it is missing from it.
pub fn modes_needed(config: &ExperimentConfig) -> Vec<Mode> {
    let mut modes = config.eval_modes.clone();
    let combo = config.combination_mode();
    if !modes.contains(&combo) {
        modes.push(combo);
    }
    modes
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CombinationReport {
    pub period: u64,
    pub mode: Mode,
    pub split: String,
    pub selection: Selection,
}

const COMBINATION_REL: &str = "selection/combination.json";

fn stage_enumerate(store: &mut RunStore) -> Result<Vec<String>> {
    let config = store.config().clone();
    let (set, _) = load_model_set(store)?;
    let mut outputs = Vec::new();
    let mut combination = None;
    for split in [Split::Val, Split::ShiftedVal] {
        let eval = prepare_eval(store, split)?;
        for mode in modes_needed(&config) {
            let matrix = enumerate_pairs(&set, config.period, &eval, mode)?;
            outputs.extend(save_matrix(store, &matrix, "")?);
            if split == Split::Val && mode == config.combination_mode() {
                combination = Some(CombinationReport {
                    period: config.period,
                    mode,
                    split: split.name().to_string(),
                    selection: select_best_soe(&matrix),
                });
            }
        }
    }
    let combination = combination.expect("the validation matrix for the combination mode was evaluated");
    store.write_json(COMBINATION_REL, &combination)?;
    outputs.push(COMBINATION_REL.to_string());
    Ok(outputs)
}

pub fn load_combination(store: &RunStore) -> Result<CombinationReport> {
    store.read_json(COMBINATION_REL)
}

pub fn load_matrix(store: &RunStore, split: &str, mode: Mode, period: u64) -> Result<ScoreMatrix> {
    store.read_json(&matrix_rel(split, mode, period, ".json"))
}

// ---- test ---------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledScore {
    pub label: String,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CellScore {
    pub row: usize,
    pub col: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ThetaCell {
    pub row: usize,
    pub col: usize,
    pub theta: f64,
}

/// Held-out results in one closed-loop mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestModeReport {
    pub mode: Mode,
    /// Diagonal of the held-out matrix, labeled.
    pub singles: Vec<LabeledScore>,
    /// Mean off-diagonal minus mean diagonal on held-out scenarios.
    pub lambda: f64,
    pub best_cell: CellScore,
    pub max_theta: ThetaCell,
    /// The validation-selected cell, re-evaluated here.
    pub selected: CellScore,
    pub selected_theta: f64,
    /// Failure cross-tabulation for the selected pair; absent when a single
    /// expert was selected.
    pub overlap: Option<OverlapTable>,
    /// Per-kind mean scores; columns are `kind_columns`.
    pub per_kind: Vec<KindBreakdown>,
    pub kind_columns: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestReport {
    pub split: String,
    pub period: u64,
    pub selection_mode: SelectionMode,
    /// What validation selected, carried over verbatim.
    pub combination: CombinationReport,
    pub modes: BTreeMap<String, TestModeReport>,
}

const TEST_REL: &str = "test_results.json";

fn mode_report(
    matrix: &ScoreMatrix,
    combination: &CombinationReport,
    mode: Mode,
) -> Result<TestModeReport> {
    let m = matrix.m();
    let (i, j) = (combination.selection.row, combination.selection.col);
    let singles = (0..m)
        .map(|k| LabeledScore {
            label: matrix.member_labels[k].clone(),
            score: matrix.score(k, k),
        })
        .collect();
    let (best_row, best_col) = matrix.argmax();
    let (max_theta, t_row, t_col) = matrix
        .max_theta()
        .ok_or_else(|| Error::invalid("test report", "matrix has no off-diagonal cells"))?;
    let overlap = if i == j {
        None
    } else {
        Some(failure_overlap(
            &matrix.cells[i][i].failure_cases(),
            &matrix.cells[j][j].failure_cases(),
            &matrix.cells[i][j].failure_cases(),
        )?)
    };
    let mut models: Vec<&EvalBreakdown> = (0..m).map(|k| &matrix.cells[k][k]).collect();
    let mut kind_columns = matrix.member_labels.clone();
    if i != j {
        models.push(&matrix.cells[i][j]);
        kind_columns.push(format!(
            "{}+{}",
            matrix.member_labels[i], matrix.member_labels[j]
        ));
    }
    Ok(TestModeReport {
        mode,
        singles,
        lambda: matrix.lambda()?,
        best_cell: CellScore {
            row: best_row,
            col: best_col,
            score: matrix.score(best_row, best_col),
        },
        max_theta: ThetaCell {
            row: t_row,
            col: t_col,
            theta: max_theta,
        },
        selected: CellScore {
            row: i,
            col: j,
            score: matrix.score(i, j),
        },
        selected_theta: matrix.theta(i, j),
        overlap,
        per_kind: soelab_core::scoring::grouped_scores(&models)?,
        kind_columns,
    })
}

fn stage_test(store: &mut RunStore) -> Result<Vec<String>> {
    let config = store.config().clone();
    let (set, _) = load_model_set(store)?;
    let combination = load_combination(store)?;
    let eval = prepare_eval(store, Split::Test)?;
    let mut outputs = Vec::new();
    let mut modes = BTreeMap::new();
    for mode in modes_needed(&config) {
        let matrix = enumerate_pairs(&set, config.period, &eval, mode)?;
        outputs.extend(save_matrix(store, &matrix, "")?);
        modes.insert(mode.name().to_string(), mode_report(&matrix, &combination, mode)?);
    }
    let report = TestReport {
        split: Split::Test.name().to_string(),
        period: config.period,
        selection_mode: config.selection,
        combination,
        modes,
    };
    store.write_json(TEST_REL, &report)?;
    outputs.push(TEST_REL.to_string());
    Ok(outputs)
}

pub fn load_test_report(store: &RunStore) -> Result<TestReport> {
    store.read_json(TEST_REL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::RunStore;
    use crate::testutil::tiny_config;

    #[test]
    fn stages_require_their_prerequisites() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = RunStore::open(dir.path(), Some(tiny_config())).unwrap();
        let err = run_stage(&mut store, "collect").unwrap_err().to_string();
        assert!(err.contains("scenarios"), "{err}");
        assert!(run_stage(&mut store, "nonsense").is_err());
    }

    #[test]
    fn pipeline_runs_end_to_end_then_caches() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = RunStore::open(dir.path(), Some(tiny_config())).unwrap();
        run_pipeline(&mut store).unwrap();
        for stage in STAGE_ORDER {
            assert!(store.is_complete(stage), "{stage} incomplete");
        }
        // Key artifacts exist.
        assert!(dir.path().join("dataset/train.bin").exists());
        assert!(dir.path().join("runs/run_1/epoch_002.ckpt").exists());
        assert!(dir.path().join("selection/checkpoints.json").exists());
        assert!(dir.path().join("matrices/val_cl-nr_n2.csv").exists());
        assert!(dir.path().join("test_results.json").exists());
        assert!(dir.path().join("reports/report.md").exists());

        // Re-running skips everything.
        for stage in STAGE_ORDER {
            assert_eq!(run_stage(&mut store, stage).unwrap(), StageOutcome::Cached);
        }

        // The test report's selected cell matches the stored combination and
        // its matrix, and the singles equal the matrix diagonal.
        let report = load_test_report(&store).unwrap();
        let combo = load_combination(&store).unwrap();
        assert_eq!(report.combination.selection, combo.selection);
        for (_, mr) in report.modes.iter() {
            let matrix = load_matrix(&store, "test", mr.mode, 2).unwrap();
            assert_eq!(mr.selected.score, matrix.score(combo.selection.row, combo.selection.col));
            for (k, s) in mr.singles.iter().enumerate() {
                assert_eq!(s.score, matrix.score(k, k));
            }
        }
    }

    #[test]
    fn deleted_artifact_rearms_and_reproduces_matrices() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = RunStore::open(dir.path(), Some(tiny_config())).unwrap();
        run_pipeline(&mut store).unwrap();
        let rel = "matrices/val_cl-nr_n2.csv";
        let before = std::fs::read(dir.path().join(rel)).unwrap();
        std::fs::remove_file(dir.path().join(rel)).unwrap();
        assert!(!store.is_complete("enumerate"));
        assert_eq!(run_stage(&mut store, "enumerate").unwrap(), StageOutcome::Ran);
        let after = std::fs::read(dir.path().join(rel)).unwrap();
        assert_eq!(before, after);
    }
}
