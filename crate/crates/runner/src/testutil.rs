//! Shared test fixtures.

use crate::config::{ExperimentConfig, SplitSizes, TrainKnobs};
use soelab_core::expert::FEATURE_LEN;

/// A configuration small enough for unit tests while exercising every stage
/// for real.
pub fn tiny_config() -> ExperimentConfig {
    ExperimentConfig {
        experiment_seed: 5,
        runs: 2,
        period: 2,
        scenarios: SplitSizes {
            train: 10,
            val: 4,
            shifted_val: 4,
            test: 4,
        },
        arch: vec![FEATURE_LEN, 8, 2],
        train: TrainKnobs {
            epochs: 2,
            batch_size: 64,
            learning_rate: 1e-3,
        },
        ..ExperimentConfig::default()
    }
}
