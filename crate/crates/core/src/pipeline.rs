//! Seed-diverse training orchestration, open- and closed-loop validation of
//! checkpoints, best-epoch selection, and model-set construction.

use crate::env::{
    plan_tick_worlds, rollout, Action, ActionBounds, Mode, PlanOutput, PlanningPolicy, Scenario,
    SimParams, Termination, WorldView,
};
use crate::expert::{featurize, Dataset, ExpertParams, ExpertPolicy, FeatureVector, NormStats, FEATURE_LEN};
use crate::rng;
use crate::scoring::{
    compute_metrics, route_motion, scenario_score, EvalBreakdown, ScenarioScore, Weights,
};
use crate::tinynet::{train_epoch, Checkpoint, Network, Optimizer, TrainConfig};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};

/// Per-epoch bookkeeping: training loss plus whichever validation scores
/// have been computed so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub train_loss: f64,
    pub ol_score: Option<f64>,
    pub cl_nr_score: Option<f64>,
    pub cl_r_score: Option<f64>,
}

/// One seeded training: a checkpoint per epoch plus their records.
#[derive(Debug, Clone)]
pub struct TrainingRun {
    /// 1-based index within the experiment.
    pub run_index: usize,
    pub seed: u64,
    pub checkpoints: Vec<Checkpoint>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainingRun {
    pub fn validate(&self) -> Result<()> {
        if self.checkpoints.is_empty() {
            return Err(Error::invalid("training run", "no checkpoints"));
        }
        if self.checkpoints.len() != self.epochs.len() {
            return Err(Error::invalid("training run", "records do not match checkpoints"));
        }
        let arch = &self.checkpoints[0].arch_hash;
        for w in self.checkpoints.windows(2) {
            if w[1].epoch <= w[0].epoch {
                return Err(Error::invalid("training run", "epochs not ascending"));
            }
        }
        if self.checkpoints.iter().any(|c| &c.arch_hash != arch) {
            return Err(Error::invalid("training run", "mixed architectures"));
        }
        Ok(())
    }

    pub fn final_loss(&self) -> f64 {
        self.epochs.last().map(|e| e.train_loss).unwrap_or(f64::NAN)
    }
}

/// Train `m` networks on the same dataset with seeds split from
/// `base_seed`, checkpointing after every epoch. Fully deterministic for a
/// fixed (arch, dataset, m, base_seed, config).
pub fn run_training(
    arch: &[usize],
    dataset: &Dataset,
    m: usize,
    base_seed: u64,
    config: &TrainConfig,
) -> Result<Vec<TrainingRun>> {
    if m < 2 {
        return Err(Error::invalid("run_training", "need at least 2 runs"));
    }
    config.validate()?;
    if arch.first() != Some(&FEATURE_LEN) {
        return Err(Error::invalid(
            "run_training",
            format!("input layer must be {FEATURE_LEN} wide"),
        ));
    }
    let prepared = crate::tinynet::PreparedDataset::from_dataset(dataset);
    (1..=m)
        .into_par_iter()
        .map(|i| {
            let seed = rng::split(base_seed, "train", i as u64);
            let mut net = Network::init(arch, seed)?;
            let mut opt = Optimizer::new(config.optimizer, config.learning_rate, &net);
            let cfg = TrainConfig { seed, ..*config };
            let mut checkpoints = Vec::with_capacity(config.epochs);
            let mut epochs = Vec::with_capacity(config.epochs);
            for e in 0..config.epochs {
                let loss =
                    train_epoch(&mut net, &mut opt, &prepared, &cfg, e).map_err(|err| {
                        Error::Diverged {
                            run_index: i,
                            detail: err.to_string(),
                        }
                    })?;
                checkpoints.push(Checkpoint::new(net.clone(), seed, (e + 1) as u32, loss)?);
                epochs.push(EpochRecord {
                    epoch: (e + 1) as u32,
                    train_loss: loss,
                    ol_score: None,
                    cl_nr_score: None,
                    cl_r_score: None,
                });
            }
            let run = TrainingRun {
                run_index: i,
                seed,
                checkpoints,
                epochs,
            };
            run.validate()?;
            Ok(run)
        })
        .collect()
}

/// Expert reference actions at every plan tick of one scenario, taken from
/// a non-reactive expert rollout.
#[derive(Debug, Clone)]
pub struct OlReference {
    pub scenario_id: String,
    pub features: Vec<FeatureVector>,
    pub actions: Vec<Action>,
}

/// A scenario split prepared for repeated evaluation: expert rollouts in
/// both closed-loop modes anchor the progress ratio, and the non-reactive
/// tick states anchor open-loop scoring.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub split: String,
    pub scenarios: Vec<Scenario>,
    pub sigma_ol: f64,
    pub weights: Weights,
    progress_nr: Vec<f64>,
    progress_r: Vec<f64>,
    ol_refs: Vec<OlReference>,
}

impl EvalSet {
    pub fn prepare(
        split: &str,
        scenarios: Vec<Scenario>,
        expert: &ExpertParams,
        sigma_ol: f64,
        weights: Weights,
    ) -> Result<EvalSet> {
        if scenarios.is_empty() {
            return Err(Error::invalid("eval set", "no scenarios"));
        }
        if !(sigma_ol > 0.0) {
            return Err(Error::invalid("eval set", format!("sigma_ol {sigma_ol}")));
        }
        weights.validate()?;
        let policy = ExpertPolicy { params: *expert };
        let rows: Vec<(f64, f64, OlReference)> = scenarios
            .par_iter()
            .map(|s| {
                let log_nr = rollout(&policy, s, Mode::NonReactive);
                let log_r = rollout(&policy, s, Mode::Reactive);
                let (p_nr, _) = route_motion(s, &log_nr);
                let (p_r, _) = route_motion(s, &log_r);
                let per_plan = s.steps_per_plan();
                let worlds = plan_tick_worlds(s, &log_nr);
                let features = worlds
                    .iter()
                    .map(|w| featurize(&w.view(&s.route, &s.params)))
                    .collect();
                let actions = worlds
                    .iter()
                    .map(|w| log_nr.records[w.tick as usize * per_plan].action)
                    .collect();
                (
                    p_nr,
                    p_r,
                    OlReference {
                        scenario_id: s.id.clone(),
                        features,
                        actions,
                    },
                )
            })
            .collect();
        let mut progress_nr = Vec::with_capacity(rows.len());
        let mut progress_r = Vec::with_capacity(rows.len());
        let mut ol_refs = Vec::with_capacity(rows.len());
        for (p_nr, p_r, r) in rows {
            progress_nr.push(p_nr);
            progress_r.push(p_r);
            ol_refs.push(r);
        }
        Ok(EvalSet {
            split: split.to_string(),
            scenarios,
            sigma_ol,
            weights,
            progress_nr,
            progress_r,
            ol_refs,
        })
    }

    /// Expert forward reach per scenario under the given traffic mode.
    pub fn reference_progress(&self, mode: Mode) -> &[f64] {
        match mode {
            Mode::NonReactive => &self.progress_nr,
            Mode::Reactive => &self.progress_r,
        }
    }

    pub fn ol_references(&self) -> &[OlReference] {
        &self.ol_refs
    }

    pub fn tick_count(&self) -> usize {
        self.ol_refs.iter().map(|r| r.features.len()).sum()
    }
}

/// Mean Euclidean action-space error of `act` against the expert's
/// recorded actions over every plan tick in the set.
pub fn ol_ade(eval: &EvalSet, mut act: impl FnMut(&FeatureVector) -> Action) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in &eval.ol_refs {
        for (f, target) in r.features.iter().zip(r.actions.iter()) {
            let a = act(f);
            let da = a.accel - target.accel;
            let ds = a.steer - target.steer;
            sum += (da * da + ds * ds).sqrt();
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Open-loop score of a checkpoint: `exp(-ADE / sigma_ol)`. States come
/// from expert rollouts; the policy never influences them.
pub fn ol_validate(ck: &Checkpoint, stats: &NormStats, eval: &EvalSet) -> Result<f64> {
    let bounds = SimParams::default().action_bounds();
    let mut failure = None;
    let ade = ol_ade(eval, |f| {
        match ck.network.forward(&stats.normalize(f), &bounds) {
            Ok(a) => a,
            Err(e) => {
                failure = Some(e);
                Action::default()
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((-ade / eval.sigma_ol).exp())
}

/// Closed-loop score of any planning policy: rollout every scenario in the
/// split, score each trajectory, average. A policy fault zeroes that
/// scenario's score and is annotated rather than propagated.
pub fn cl_validate(
    policy: &(dyn PlanningPolicy + Sync),
    eval: &EvalSet,
    mode: Mode,
) -> Result<EvalBreakdown> {
    let refs = eval.reference_progress(mode);
    let per: Vec<ScenarioScore> = eval
        .scenarios
        .par_iter()
        .zip(refs.par_iter())
        .map(|(s, &reference)| {
            let log = rollout(policy, s, mode);
            let metrics = compute_metrics(&log, s, reference);
            let fault = (log.termination == Termination::PolicyFault)
                .then(|| "policy emitted a non-finite action".to_string());
            let score = if fault.is_some() {
                0.0
            } else {
                scenario_score(&metrics, &eval.weights)
            };
            ScenarioScore {
                scenario_id: s.id.clone(),
                kind: s.kind,
                score,
                metrics,
                termination: log.termination,
                fault,
            }
        })
        .collect();
    EvalBreakdown::from_scenarios(per)
}

/// A checkpoint wrapped as a closed-loop planning policy: featurize the
/// world, normalize, one forward pass. Counts its forward passes so tests
/// can assert the one-forward-per-tick invariant.
pub struct LearnedPolicy {
    pub label: String,
    net: Network,
    stats: NormStats,
    bounds: ActionBounds,
    forwards: AtomicU64,
}

impl LearnedPolicy {
    pub fn new(label: &str, ck: &Checkpoint, stats: &NormStats) -> Result<Self> {
        if ck.network.input_dim() != FEATURE_LEN || stats.mean.len() != FEATURE_LEN {
            return Err(Error::Shape {
                context: "learned policy input",
                expected: FEATURE_LEN,
                got: ck.network.input_dim(),
            });
        }
        Ok(LearnedPolicy {
            label: label.to_string(),
            net: ck.network.clone(),
            stats: stats.clone(),
            bounds: SimParams::default().action_bounds(),
            forwards: AtomicU64::new(0),
        })
    }

    pub fn forward_count(&self) -> u64 {
        self.forwards.load(Ordering::Relaxed)
    }
}

impl PlanningPolicy for LearnedPolicy {
    fn plan(&self, view: &WorldView<'_>) -> PlanOutput {
        let f = featurize(view);
        self.forwards.fetch_add(1, Ordering::Relaxed);
        match self.net.forward(&self.stats.normalize(&f), &self.bounds) {
            Ok(a) => PlanOutput::single(a),
            // Surfaces as a policy fault in the rollout.
            Err(_) => PlanOutput::single(Action::new(f64::NAN, f64::NAN)),
        }
    }
}

/// Which validation signal drives checkpoint selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    Ol,
    ClNr,
    ClR,
}

impl SelectionMode {
    pub fn name(&self) -> &'static str {
        match self {
            SelectionMode::Ol => "ol",
            SelectionMode::ClNr => "cl-nr",
            SelectionMode::ClR => "cl-r",
        }
    }

    pub fn cl_mode(&self) -> Option<Mode> {
        match self {
            SelectionMode::Ol => None,
            SelectionMode::ClNr => Some(Mode::NonReactive),
            SelectionMode::ClR => Some(Mode::Reactive),
        }
    }
}

impl std::fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    /// 0-based index into the run's checkpoint list.
    pub epoch_index: usize,
    pub score: f64,
    /// Validation score of every epoch, in epoch order.
    pub scores: Vec<f64>,
}

/// Score every checkpoint of a run on the validation split and return the
/// argmax; ties break toward the earlier epoch. Scores are recorded into
/// the run's epoch records.
pub fn select_best(
    run: &mut TrainingRun,
    stats: &NormStats,
    eval: &EvalSet,
    selection: SelectionMode,
) -> Result<SelectionOutcome> {
    run.validate()?;
    let scores = score_all_epochs(run, stats, eval, selection)?;
    for (rec, &s) in run.epochs.iter_mut().zip(scores.iter()) {
        match selection {
            SelectionMode::Ol => rec.ol_score = Some(s),
            SelectionMode::ClNr => rec.cl_nr_score = Some(s),
            SelectionMode::ClR => rec.cl_r_score = Some(s),
        }
    }
    let mut best = 0usize;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(SelectionOutcome {
        epoch_index: best,
        score: scores[best],
        scores,
    })
}

fn score_all_epochs(
    run: &TrainingRun,
    stats: &NormStats,
    eval: &EvalSet,
    selection: SelectionMode,
) -> Result<Vec<f64>> {
    match selection.cl_mode() {
        None => run
            .checkpoints
            .iter()
            .map(|ck| ol_validate(ck, stats, eval))
            .collect(),
        Some(mode) => run
            .checkpoints
            .par_iter()
            .map(|ck| {
                let label = format!("r{}e{:02}", run.run_index, ck.epoch);
                let policy = LearnedPolicy::new(&label, ck, stats)?;
                Ok(cl_validate(&policy, eval, mode)?.score)
            })
            .collect(),
    }
}

/// How a model set was assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionKind {
    /// One best checkpoint from each independent training run.
    CrossRun,
    /// The k best epochs of a single run (seed-diversity ablation).
    SameRunTopK { run_index: usize },
}

/// The selected member checkpoints plus everything needed to evaluate them.
#[derive(Debug, Clone)]
pub struct ModelSet {
    pub members: Vec<Checkpoint>,
    pub labels: Vec<String>,
    pub selection: SelectionKind,
    pub split: String,
    pub mode: SelectionMode,
    pub stats: NormStats,
}

impl ModelSet {
    pub fn m(&self) -> usize {
        self.members.len()
    }

    pub fn policy(&self, index: usize) -> Result<LearnedPolicy> {
        LearnedPolicy::new(&self.labels[index], &self.members[index], &self.stats)
    }

    pub fn validate(&self) -> Result<()> {
        if self.members.len() < 2 {
            return Err(Error::invalid("model set", "need at least 2 members"));
        }
        if self.labels.len() != self.members.len() {
            return Err(Error::invalid("model set", "label count mismatch"));
        }
        let arch = &self.members[0].arch_hash;
        if self.members.iter().any(|c| &c.arch_hash != arch) {
            return Err(Error::invalid("model set", "mixed architectures"));
        }
        match self.selection {
            SelectionKind::CrossRun => {
                let mut seeds: Vec<u64> = self.members.iter().map(|c| c.seed).collect();
                seeds.sort_unstable();
                seeds.dedup();
                if seeds.len() != self.members.len() {
                    return Err(Error::invalid("model set", "cross-run members share a seed"));
                }
            }
            SelectionKind::SameRunTopK { .. } => {
                let seed = self.members[0].seed;
                if self.members.iter().any(|c| c.seed != seed) {
                    return Err(Error::invalid("model set", "same-run members span seeds"));
                }
                let mut epochs: Vec<u32> = self.members.iter().map(|c| c.epoch).collect();
                epochs.sort_unstable();
                epochs.dedup();
                if epochs.len() != self.members.len() {
                    return Err(Error::invalid("model set", "same-run members share an epoch"));
                }
            }
        }
        Ok(())
    }
}

/// Pick each run's best checkpoint to form the cross-run model set.
pub fn build_cross_run(
    runs: &mut [TrainingRun],
    stats: &NormStats,
    eval: &EvalSet,
    selection: SelectionMode,
) -> Result<(ModelSet, Vec<SelectionOutcome>)> {
    if runs.len() < 2 {
        return Err(Error::invalid("model set", "need at least 2 runs"));
    }
    let mut members = Vec::with_capacity(runs.len());
    let mut labels = Vec::with_capacity(runs.len());
    let mut outcomes = Vec::with_capacity(runs.len());
    for run in runs.iter_mut() {
        let outcome = select_best(run, stats, eval, selection)?;
        let ck = run.checkpoints[outcome.epoch_index].clone();
        labels.push(format!("r{}e{:02}", run.run_index, ck.epoch));
        members.push(ck);
        outcomes.push(outcome);
    }
    let set = ModelSet {
        members,
        labels,
        selection: SelectionKind::CrossRun,
        split: eval.split.clone(),
        mode: selection,
        stats: stats.clone(),
    };
    set.validate()?;
    Ok((set, outcomes))
}

/// Take the k best epochs of one run (distinct epochs, best first) to form
/// the same-run ablation model set.
pub fn build_same_run_topk(
    run: &mut TrainingRun,
    k: usize,
    stats: &NormStats,
    eval: &EvalSet,
    selection: SelectionMode,
) -> Result<ModelSet> {
    if k < 2 {
        return Err(Error::invalid("model set", "need at least 2 members"));
    }
    if k > run.checkpoints.len() {
        return Err(Error::invalid(
            "model set",
            format!("k = {k} exceeds {} epochs", run.checkpoints.len()),
        ));
    }
    let outcome = select_best(run, stats, eval, selection)?;
    let mut order: Vec<usize> = (0..outcome.scores.len()).collect();
    // Stable sort keeps earlier epochs first among ties.
    order.sort_by(|&a, &b| {
        outcome.scores[b]
            .partial_cmp(&outcome.scores[a])
            .expect("validation scores are finite")
    });
    let chosen = &order[..k];
    let members: Vec<Checkpoint> = chosen
        .iter()
        .map(|&i| run.checkpoints[i].clone())
        .collect();
    let labels = members
        .iter()
        .map(|c| format!("r{}e{:02}", run.run_index, c.epoch))
        .collect();
    let set = ModelSet {
        members,
        labels,
        selection: SelectionKind::SameRunTopK {
            run_index: run.run_index,
        },
        split: eval.split.clone(),
        mode: selection,
        stats: stats.clone(),
    };
    set.validate()?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_scenario, ScenarioKind};
    use crate::expert::collect;
    use crate::tinynet::OptimizerKind;

    fn tiny_dataset() -> Dataset {
        let scenarios = vec![
            generate_scenario(ScenarioKind::StraightWithLead, 300),
            generate_scenario(ScenarioKind::LeftTurn, 301),
            generate_scenario(ScenarioKind::HighSpeedCruise, 302),
        ];
        collect(&scenarios, &ExpertParams::default(), 3)
            .unwrap()
            .dataset
    }

    fn tiny_eval() -> EvalSet {
        let scenarios = vec![
            generate_scenario(ScenarioKind::StoppingWithLead, 310),
            generate_scenario(ScenarioKind::RightTurn, 311),
        ];
        EvalSet::prepare(
            "unit-val",
            scenarios,
            &ExpertParams::default(),
            0.5,
            Weights::default(),
        )
        .unwrap()
    }

    fn quick_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            optimizer: OptimizerKind::adam_default(),
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_is_deterministic_and_seed_diverse() {
        let ds = tiny_dataset();
        let arch = [FEATURE_LEN, 8, 2];
        let runs_a = run_training(&arch, &ds, 2, 99, &quick_config(2)).unwrap();
        let runs_b = run_training(&arch, &ds, 2, 99, &quick_config(2)).unwrap();
        assert_eq!(runs_a.len(), 2);
        for (a, b) in runs_a.iter().zip(runs_b.iter()) {
            assert_eq!(a.seed, b.seed);
            for (ca, cb) in a.checkpoints.iter().zip(b.checkpoints.iter()) {
                assert_eq!(
                    ca.content_digest().unwrap(),
                    cb.content_digest().unwrap()
                );
            }
        }
        assert_ne!(runs_a[0].seed, runs_a[1].seed);
        assert_ne!(
            runs_a[0].checkpoints[0].content_digest().unwrap(),
            runs_a[1].checkpoints[0].content_digest().unwrap()
        );
        // One checkpoint per epoch, ascending.
        assert_eq!(runs_a[0].checkpoints.len(), 2);
        assert_eq!(runs_a[0].checkpoints[1].epoch, 2);
    }

    #[test]
    fn training_rejects_single_run_and_bad_arch() {
        let ds = tiny_dataset();
        assert!(run_training(&[FEATURE_LEN, 8, 2], &ds, 1, 0, &quick_config(1)).is_err());
        assert!(run_training(&[13, 8, 2], &ds, 2, 0, &quick_config(1)).is_err());
    }

    #[test]
    fn ol_score_is_one_for_expert_replay_and_decreases_with_error() {
        let eval = tiny_eval();
        // Feed back the recorded expert actions: ADE 0, score 1.
        let mut replay: Vec<Action> = eval
            .ol_references()
            .iter()
            .flat_map(|r| r.actions.iter().copied())
            .collect();
        replay.reverse();
        let ade = ol_ade(&eval, |_| replay.pop().unwrap());
        assert_eq!(ade, 0.0);

        let ade_const = ol_ade(&eval, |_| Action::new(0.0, 0.0));
        assert!(ade_const > 0.0);
        let s0 = (-ade_const / eval.sigma_ol).exp();
        let worse = ol_ade(&eval, |_| Action::new(-4.0, 0.6));
        assert!(worse > ade_const);
        assert!((-worse / eval.sigma_ol).exp() < s0);
    }

    #[test]
    fn ol_validate_is_reproducible() {
        let ds = tiny_dataset();
        let eval = tiny_eval();
        let runs = run_training(&[FEATURE_LEN, 8, 2], &ds, 2, 5, &quick_config(2)).unwrap();
        let a = ol_validate(&runs[0].checkpoints[1], &ds.stats, &eval).unwrap();
        let b = ol_validate(&runs[0].checkpoints[1], &ds.stats, &eval).unwrap();
        assert!(a > 0.0 && a <= 1.0);
        assert_eq!(a, b);
    }

    struct Brake;
    impl PlanningPolicy for Brake {
        fn plan(&self, _view: &WorldView<'_>) -> PlanOutput {
            PlanOutput::single(Action::new(-4.0, 0.0))
        }
    }

    #[test]
    fn cl_expert_beats_full_brake() {
        let eval = tiny_eval();
        let expert = ExpertPolicy {
            params: ExpertParams::default(),
        };
        for mode in Mode::ALL {
            let e = cl_validate(&expert, &eval, mode).unwrap();
            let b = cl_validate(&Brake, &eval, mode).unwrap();
            assert!(
                e.score > b.score,
                "{mode}: expert {} vs brake {}",
                e.score,
                b.score
            );
            // Braking forever keeps the progress gate shut.
            assert!(b.score < 0.1, "brake score {}", b.score);
            let e2 = cl_validate(&expert, &eval, mode).unwrap();
            assert_eq!(e.score, e2.score);
        }
    }

    struct Faulty;
    impl PlanningPolicy for Faulty {
        fn plan(&self, _view: &WorldView<'_>) -> PlanOutput {
            PlanOutput::single(Action::new(f64::NAN, 0.0))
        }
    }

    #[test]
    fn policy_faults_become_zero_scores_with_annotation() {
        let eval = tiny_eval();
        let b = cl_validate(&Faulty, &eval, Mode::NonReactive).unwrap();
        assert_eq!(b.score, 0.0);
        for s in &b.per_scenario {
            assert_eq!(s.termination, Termination::PolicyFault);
            assert!(s.fault.is_some());
            assert_eq!(s.score, 0.0);
        }
    }

    #[test]
    fn learned_policy_counts_one_forward_per_plan_tick() {
        let ds = tiny_dataset();
        let runs = run_training(&[FEATURE_LEN, 8, 2], &ds, 2, 7, &quick_config(1)).unwrap();
        let policy =
            LearnedPolicy::new("r1e01", &runs[0].checkpoints[0], &ds.stats).unwrap();
        let scenario = generate_scenario(ScenarioKind::LaneChange, 320);
        let log = rollout(&policy, &scenario, Mode::NonReactive);
        assert_eq!(policy.forward_count(), log.plan_records.len() as u64);
    }

    #[test]
    fn selection_ties_break_toward_earlier_epoch() {
        let ds = tiny_dataset();
        let eval = tiny_eval();
        let runs = run_training(&[FEATURE_LEN, 8, 2], &ds, 2, 11, &quick_config(1)).unwrap();
        // Duplicate the lone checkpoint: equal scores at epochs 1 and 2.
        let mut twin = runs[0].checkpoints[0].clone();
        twin.epoch = 2;
        let mut run = TrainingRun {
            run_index: 1,
            seed: runs[0].seed,
            checkpoints: vec![runs[0].checkpoints[0].clone(), twin],
            epochs: vec![
                EpochRecord {
                    epoch: 1,
                    train_loss: 0.5,
                    ol_score: None,
                    cl_nr_score: None,
                    cl_r_score: None,
                },
                EpochRecord {
                    epoch: 2,
                    train_loss: 0.5,
                    ol_score: None,
                    cl_nr_score: None,
                    cl_r_score: None,
                },
            ],
        };
        let outcome = select_best(&mut run, &ds.stats, &eval, SelectionMode::Ol).unwrap();
        assert_eq!(outcome.scores[0], outcome.scores[1]);
        assert_eq!(outcome.epoch_index, 0);
        assert_eq!(run.epochs[0].ol_score, Some(outcome.score));
    }

    #[test]
    fn selected_score_dominates_all_epochs() {
        let ds = tiny_dataset();
        let eval = tiny_eval();
        let mut runs =
            run_training(&[FEATURE_LEN, 8, 2], &ds, 2, 13, &quick_config(3)).unwrap();
        for run in &mut runs {
            let outcome = select_best(run, &ds.stats, &eval, SelectionMode::ClNr).unwrap();
            for &s in &outcome.scores {
                assert!(outcome.score >= s);
            }
        }
    }

    #[test]
    fn model_set_invariants() {
        let ds = tiny_dataset();
        let eval = tiny_eval();
        let mut runs =
            run_training(&[FEATURE_LEN, 8, 2], &ds, 3, 17, &quick_config(2)).unwrap();
        let (set, outcomes) =
            build_cross_run(&mut runs, &ds.stats, &eval, SelectionMode::Ol).unwrap();
        assert_eq!(set.m(), 3);
        assert_eq!(outcomes.len(), 3);
        set.validate().unwrap();
        let mut seeds: Vec<u64> = set.members.iter().map(|c| c.seed).collect();
        seeds.dedup();
        assert_eq!(seeds.len(), 3);

        let same = build_same_run_topk(&mut runs[0], 2, &ds.stats, &eval, SelectionMode::Ol)
            .unwrap();
        same.validate().unwrap();
        assert!(same.members.iter().all(|c| c.seed == runs[0].seed));
        assert_ne!(same.members[0].epoch, same.members[1].epoch);
        // Best epoch leads the member list.
        let best = select_best(&mut runs[0], &ds.stats, &eval, SelectionMode::Ol).unwrap();
        assert_eq!(
            same.members[0].epoch,
            runs[0].checkpoints[best.epoch_index].epoch
        );
        assert!(
            build_same_run_topk(&mut runs[0], 9, &ds.stats, &eval, SelectionMode::Ol).is_err()
        );
    }
}
