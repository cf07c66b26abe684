//! Epoch-level training loop.

use super::{Network, Optimizer, OptimizerKind, ACTION_DIM};
use crate::env::ActionBounds;
use crate::expert::Dataset;
use crate::rng::stream;
use crate::{Error, Result};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::adam_default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("train config", "epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("train config", "batch_size must be >= 1"));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid(
                "train config",
                format!("learning_rate {}", self.learning_rate),
            ));
        }
        Ok(())
    }
}

/// Dataset pre-normalized for training: inputs in normalized feature space,
/// targets in raw action space.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<[f64; ACTION_DIM]>,
}

impl PreparedDataset {
    pub fn from_dataset(ds: &Dataset) -> Self {
        PreparedDataset {
            inputs: ds.rows.iter().map(|r| ds.stats.normalize(&r.features)).collect(),
            targets: ds.rows.iter().map(|r| r.target.as_array()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// One pass over the data: shuffle with a stream derived from
/// `(config.seed, epoch_index)`, then one optimizer step per batch in
/// shuffle order. Returns the mean loss across the epoch.
pub fn train_epoch(
    net: &mut Network,
    opt: &mut Optimizer,
    data: &PreparedDataset,
    config: &TrainConfig,
    epoch_index: usize,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("train_epoch", "empty dataset"));
    }
    let bounds = training_bounds();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = stream(config.seed, &["epoch", &epoch_index.to_string()]);
    order.shuffle(&mut rng);

    let mut weighted = 0.0;
    for chunk in order.chunks(config.batch_size) {
        let inputs: Vec<&[f64]> = chunk.iter().map(|&i| data.inputs[i].as_slice()).collect();
        let targets: Vec<[f64; ACTION_DIM]> = chunk.iter().map(|&i| data.targets[i]).collect();
        let (loss, grads) = net.backward(&inputs, &targets, &bounds)?;
        opt.step(net, &grads);
        weighted += loss * chunk.len() as f64;
    }
    if !net.params_finite() {
        return Err(Error::non_finite("network parameters", "after epoch update"));
    }
    Ok(weighted / data.len() as f64)
}

/// Loss over the whole dataset without updating anything.
pub fn eval_loss(net: &Network, data: &PreparedDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("eval_loss", "empty dataset"));
    }
    let bounds = training_bounds();
    let denom = (data.len() * ACTION_DIM) as f64;
    let mut loss = 0.0;
    for (x, t) in data.inputs.iter().zip(data.targets.iter()) {
        let y = net.forward(x, &bounds)?.as_array();
        for j in 0..ACTION_DIM {
            let err = y[j] - t[j];
            loss += err * err / denom;
        }
    }
    if !loss.is_finite() {
        return Err(Error::non_finite("eval loss", format!("{loss}")));
    }
    Ok(loss)
}

/// The squash range is a property of the action space, shared by training
/// and inference.
pub fn training_bounds() -> ActionBounds {
    crate::env::SimParams::default().action_bounds()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    /// Targets realizable by a near-linear map through the squash.
    fn synthetic_linear(n: usize, seed: u64) -> PreparedDataset {
        let mut rng = stream(seed, &["synthetic"]);
        let bounds = training_bounds();
        let mut inputs = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let raw0 = 0.4 * x[0] - 0.3 * x[1] + 0.1;
            let raw1 = 0.2 * x[2] + 0.25 * x[3];
            let a = super::super::squash(&[raw0, raw1], &bounds);
            inputs.push(x);
            targets.push(a.as_array());
        }
        PreparedDataset { inputs, targets }
    }

    #[test]
    fn training_is_deterministic_given_config() {
        let data = synthetic_linear(256, 1);
        let config = TrainConfig {
            seed: 11,
            epochs: 3,
            ..TrainConfig::default()
        };
        let run = || {
            let mut net = Network::init(&[4, 16, 2], config.seed).unwrap();
            let mut opt = Optimizer::new(config.optimizer, config.learning_rate, &net);
            let mut losses = Vec::new();
            for e in 0..config.epochs {
                losses.push(train_epoch(&mut net, &mut opt, &data, &config, e).unwrap());
            }
            (net, losses)
        };
        let (net_a, loss_a) = run();
        let (net_b, loss_b) = run();
        assert_eq!(net_a, net_b);
        assert_eq!(loss_a, loss_b);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters_and_reports_eval_loss() {
        let data = synthetic_linear(128, 2);
        let config = TrainConfig {
            seed: 3,
            epochs: 1,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let mut net = Network::init(&[4, 8, 2], 5).unwrap();
        let before = net.clone();
        let expect = eval_loss(&net, &data).unwrap();
        let mut opt = Optimizer::new(config.optimizer, 0.0, &net);
        let loss = train_epoch(&mut net, &mut opt, &data, &config, 0).unwrap();
        assert_eq!(net, before);
        assert!((loss - expect).abs() < 1e-9);
    }

    #[test]
    fn losses_decrease_and_settle_on_realizable_data() {
        let data = synthetic_linear(1000, 4);
        let config = TrainConfig {
            seed: 7,
            epochs: 12,
            ..TrainConfig::default()
        };
        let mut net = Network::init(&[4, 16, 2], 7).unwrap();
        let mut opt = Optimizer::new(config.optimizer, config.learning_rate, &net);
        let mut losses = Vec::new();
        for e in 0..config.epochs {
            losses.push(train_epoch(&mut net, &mut opt, &data, &config, e).unwrap());
        }
        // Non-increasing after the early epochs.
        for i in 4..losses.len() {
            assert!(
                losses[i] <= losses[i - 1] + 1e-9,
                "epoch {i}: {} > {}",
                losses[i],
                losses[i - 1]
            );
        }
        assert!(
            losses.last().unwrap() < &(0.1 * losses[0]),
            "final {} vs initial {}",
            losses.last().unwrap(),
            losses[0]
        );
    }

    #[test]
    fn shuffle_depends_on_epoch_index() {
        // Same data, one epoch at index 0 vs index 1: different batch
        // order leads to different parameters.
        let data = synthetic_linear(256, 9);
        let config = TrainConfig {
            seed: 13,
            epochs: 1,
            ..TrainConfig::default()
        };
        let mut a = Network::init(&[4, 8, 2], 1).unwrap();
        let mut oa = Optimizer::new(config.optimizer, config.learning_rate, &a);
        train_epoch(&mut a, &mut oa, &data, &config, 0).unwrap();
        let mut b = Network::init(&[4, 8, 2], 1).unwrap();
        let mut ob = Optimizer::new(config.optimizer, config.learning_rate, &b);
        train_epoch(&mut b, &mut ob, &data, &config, 1).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        assert!(TrainConfig { epochs: 0, ..ok }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..ok }.validate().is_err());
        assert!(TrainConfig {
            learning_rate: f64::NAN,
            ..ok
        }
        .validate()
        .is_err());
    }
}
