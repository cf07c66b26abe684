//! Experiment configuration: one TOML file drives the whole pipeline.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use soelab_core::env::{Mode, Regime, ScenarioKind, ScenarioOverrides, ScenarioSet, ScenarioSetEntry};
use soelab_core::expert::FEATURE_LEN;
use soelab_core::pipeline::SelectionMode;
use soelab_core::scoring::Weights;
use soelab_core::tinynet::{OptimizerKind, TrainConfig};
use soelab_core::{Error, Result};
use std::path::Path;

/// Scenario counts per split. Seed ranges are disjoint by construction:
/// each split draws from its own offset window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub shifted_val: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        SplitSizes {
            train: 200,
            val: 60,
            shifted_val: 60,
            test: 60,
        }
    }
}

/// Training knobs, a subset of [`TrainConfig`] (the per-run seed is derived
/// from the experiment seed, never configured directly).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainKnobs {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainKnobs {
    fn default() -> Self {
        TrainKnobs {
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root seed; every other random stream derives from it.
    pub experiment_seed: u64,
    /// Number of independently seeded trainings.
    pub runs: usize,
    /// Alternation period for pair enumeration.
    pub period: u64,
    pub scenarios: SplitSizes,
    /// Layer widths, input to output.
    pub arch: Vec<usize>,
    pub train: TrainKnobs,
    /// Validation signal for checkpoint and combination selection.
    pub selection: SelectionMode,
    /// Closed-loop modes evaluated in matrices and held-out tests.
    pub eval_modes: Vec<Mode>,
    /// Open-loop score scale: score = exp(-ADE / sigma_ol).
    pub sigma_ol: f64,
    pub weights: Weights,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment_seed: 7,
            runs: 4,
            period: 2,
            scenarios: SplitSizes::default(),
            arch: vec![FEATURE_LEN, 64, 64, 2],
            train: TrainKnobs::default(),
            selection: SelectionMode::ClNr,
            eval_modes: vec![Mode::NonReactive, Mode::Reactive],
            sigma_ol: 0.5,
            weights: Weights::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::Format(format!("config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("config serialization: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs < 2 {
            return Err(Error::invalid("config", "runs must be at least 2"));
        }
        if self.period < 2 {
            return Err(Error::invalid("config", "period must be at least 2"));
        }
        if self.arch.first() != Some(&FEATURE_LEN) {
            return Err(Error::invalid(
                "config",
                format!("arch must start at the feature width {FEATURE_LEN}"),
            ));
        }
        if self.arch.last() != Some(&2) {
            return Err(Error::invalid("config", "arch must end at the action width 2"));
        }
        let s = &self.scenarios;
        if s.train == 0 || s.val == 0 || s.shifted_val == 0 || s.test == 0 {
            return Err(Error::invalid("config", "every split needs at least one scenario"));
        }
        let per_split = 100_000;
        if s.train.max(s.val).max(s.shifted_val).max(s.test) > per_split {
            return Err(Error::invalid(
                "config",
                format!("split sizes are capped at {per_split} to keep seed windows disjoint"),
            ));
        }
        if !(self.sigma_ol > 0.0) {
            return Err(Error::invalid("config", format!("sigma_ol {}", self.sigma_ol)));
        }
        self.train_config().validate()?;
        self.weights.validate()?;
        if self.eval_modes.is_empty() {
            return Err(Error::invalid("config", "need at least one eval mode"));
        }
        for (i, m) in self.eval_modes.iter().enumerate() {
            if self.eval_modes[..i].contains(m) {
                return Err(Error::invalid("config", "duplicate eval modes"));
            }
        }
        Ok(())
    }

    /// Full training configuration; the seed field is a placeholder that
    /// training replaces with a per-run derived seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.experiment_seed,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            optimizer: OptimizerKind::adam_default(),
        }
    }

    /// The closed-loop mode that scores candidate combinations. Falls back
    /// to non-reactive when checkpoint selection is open-loop, since a
    /// combination only expresses itself in closed loop.
    pub fn combination_mode(&self) -> Mode {
        self.selection.cl_mode().unwrap_or(Mode::NonReactive)
    }

    /// Canonical digest used to lock a run store to its configuration.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(&bytes);
        let out = h.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// The four split identities, in pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    ShiftedVal,
    Test,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Val, Split::ShiftedVal, Split::Test];

    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::ShiftedVal => "shifted_val",
            Split::Test => "test",
        }
    }

    fn seed_offset(&self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Val => 100_000,
            Split::ShiftedVal => 200_000,
            Split::Test => 300_000,
        }
    }

    fn count(&self, sizes: &SplitSizes) -> usize {
        match self {
            Split::Train => sizes.train,
            Split::Val => sizes.val,
            Split::ShiftedVal => sizes.shifted_val,
            Split::Test => sizes.test,
        }
    }

    fn regime(&self) -> Regime {
        match self {
            Split::Train | Split::Val => Regime::Nominal,
            Split::ShiftedVal | Split::Test => Regime::Shifted,
        }
    }

    /// Kind rotation for the split. Nominal splits cover every kind evenly;
    /// shifted splits overweight interaction-heavy kinds and drop plain
    /// cruising, so held-out evaluation sits off the training distribution
    /// in both parameters and composition.
    fn kind_mix(&self) -> &'static [ScenarioKind] {
        match self.regime() {
            Regime::Nominal => &ScenarioKind::ALL,
            Regime::Shifted => &[
                ScenarioKind::StoppingWithLead,
                ScenarioKind::PedestrianCrossing,
                ScenarioKind::ParkedVehiclePass,
                ScenarioKind::LeftTurn,
                ScenarioKind::RightTurn,
                ScenarioKind::LaneChange,
            ],
        }
    }
}

/// Build one split's scenario references. Seeds are
/// `experiment_seed * 1e6 + split_offset + index`, so splits never share a
/// generation seed and different experiment seeds never overlap.
pub fn split_set(config: &ExperimentConfig, split: Split) -> ScenarioSet {
    let base = config.experiment_seed * 1_000_000 + split.seed_offset();
    let mix = split.kind_mix();
    let overrides = ScenarioOverrides {
        regime: split.regime(),
        duration: None,
    };
    let entries = (0..split.count(&config.scenarios))
        .map(|j| ScenarioSetEntry {
            kind: mix[j % mix.len()],
            seed: base + j as u64,
            overrides,
        })
        .collect();
    ScenarioSet::new(entries)
}
