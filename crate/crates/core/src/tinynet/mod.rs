//! A small fully-connected network with tanh hidden layers, bounded action
//! outputs, hand-rolled backpropagation, and seeded initialization.

mod checkpoint;
mod optim;
mod train;

pub use checkpoint::{arch_hash, Checkpoint, ACTIVATION_TAG};
pub use optim::{Optimizer, OptimizerKind};
pub use train::{eval_loss, train_epoch, PreparedDataset, TrainConfig};

use crate::env::{Action, ActionBounds};
use crate::rng::stream;
use crate::{Error, Result};
use rand::Rng;

pub const ACTION_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Row-major `[out x in]` weight matrix.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layer_dims: Vec<usize>,
    pub layers: Vec<Layer>,
}

/// Per-parameter gradients, mirroring [`Network`] layout.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    fn zeros_like(net: &Network) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
            .fold(0.0f64, |acc, g| acc.max(g.abs()))
    }
}

fn validate_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::invalid("network", "need at least input and output dims"));
    }
    if layer_dims.iter().any(|&d| d == 0) {
        return Err(Error::invalid("network", "zero-width layer"));
    }
    if *layer_dims.last().unwrap() != ACTION_DIM {
        return Err(Error::invalid(
            "network",
            format!("output dim must be {ACTION_DIM}"),
        ));
    }
    Ok(())
}

impl Network {
    /// Seeded uniform initialization with range `+-sqrt(6/(fan_in+fan_out))`
    /// per layer; biases zero.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Network> {
        validate_dims(layer_dims)?;
        let mut rng = stream(seed, &["net-init"]);
        let mut layers = Vec::with_capacity(layer_dims.len() - 1);
        for w in layer_dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            layers.push(Layer {
                w: weights,
                b: vec![0.0; fan_out],
                rows: fan_out,
                cols: fan_in,
            });
        }
        Ok(Network {
            layer_dims: layer_dims.to_vec(),
            layers,
        })
    }

    /// Network with every parameter zero (useful as a fixture).
    pub fn zeros(layer_dims: &[usize]) -> Result<Network> {
        let mut net = Network::init(layer_dims, 0)?;
        for l in &mut net.layers {
            l.w.iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn params_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    /// Pre-squash output of the final layer.
    fn forward_cached(&self, input: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let prev = activations.last().unwrap();
            let mut z = vec![0.0; layer.rows];
            for r in 0..layer.rows {
                let row = &layer.w[r * layer.cols..(r + 1) * layer.cols];
                let mut acc = layer.b[r];
                for (wv, av) in row.iter().zip(prev.iter()) {
                    acc += wv * av;
                }
                z[r] = acc;
            }
            if li == last {
                return (activations, z);
            }
            activations.push(z.iter().map(|v| v.tanh()).collect());
        }
        unreachable!("network has at least one layer");
    }

    pub fn forward_raw(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape {
                context: "forward input",
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(self.forward_cached(input).1)
    }

    /// Forward pass ending in the bound squash
    /// `action = center + half_width * tanh(raw)`.
    pub fn forward(&self, input: &[f64], bounds: &ActionBounds) -> Result<Action> {
        let raw = self.forward_raw(input)?;
        Ok(squash(&raw, bounds))
    }

    /// Mean squared error over batch and action components of the squashed
    /// outputs, plus gradients for every parameter.
    pub fn backward(
        &self,
        inputs: &[&[f64]],
        targets: &[[f64; ACTION_DIM]],
        bounds: &ActionBounds,
    ) -> Result<(f64, Gradients)> {
        if inputs.is_empty() {
            return Err(Error::invalid("backward", "empty batch"));
        }
        if inputs.len() != targets.len() {
            return Err(Error::Shape {
                context: "backward batch",
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        let centers = bounds.centers();
        let halves = bounds.half_widths();
        let batch = inputs.len() as f64;
        let denom = batch * ACTION_DIM as f64;
        let mut grads = Gradients::zeros_like(self);
        let mut loss = 0.0;

        for (input, target) in inputs.iter().zip(targets.iter()) {
            if input.len() != self.input_dim() {
                return Err(Error::Shape {
                    context: "backward input",
                    expected: self.input_dim(),
                    got: input.len(),
                });
            }
            let (activations, z_out) = self.forward_cached(input);
            // delta = dL/dz for the current layer, walking backwards.
            let mut delta = vec![0.0; ACTION_DIM];
            for j in 0..ACTION_DIM {
                let th = z_out[j].tanh();
                let y = centers[j] + halves[j] * th;
                let err = y - target[j];
                loss += err * err / denom;
                delta[j] = 2.0 * err / denom * halves[j] * (1.0 - th * th);
            }
            for li in (0..self.layers.len()).rev() {
                let layer = &self.layers[li];
                let prev = &activations[li];
                let (gw, gb) = &mut grads.layers[li];
                for r in 0..layer.rows {
                    gb[r] += delta[r];
                    let row = &mut gw[r * layer.cols..(r + 1) * layer.cols];
                    for (g, a) in row.iter_mut().zip(prev.iter()) {
                        *g += delta[r] * a;
                    }
                }
                if li > 0 {
                    let mut next = vec![0.0; layer.cols];
                    for c in 0..layer.cols {
                        let mut acc = 0.0;
                        for r in 0..layer.rows {
                            acc += layer.w[r * layer.cols + c] * delta[r];
                        }
                        // activations[li] is the tanh output feeding layer li.
                        let a = activations[li][c];
                        next[c] = acc * (1.0 - a * a);
                    }
                    delta = next;
                }
            }
        }
        if !loss.is_finite() {
            return Err(Error::non_finite("loss", format!("{loss}")));
        }
        Ok((loss, grads))
    }
}

pub fn squash(raw: &[f64], bounds: &ActionBounds) -> Action {
    let centers = bounds.centers();
    let halves = bounds.half_widths();
    Action {
        accel: centers[0] + halves[0] * raw[0].tanh(),
        steer: centers[1] + halves[1] * raw[1].tanh(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::SimParams;

    fn bounds() -> ActionBounds {
        SimParams::default().action_bounds()
    }

    #[test]
    fn init_is_seed_deterministic_and_seed_sensitive() {
        let dims = [14, 8, 2];
        let a = Network::init(&dims, 42).unwrap();
        let b = Network::init(&dims, 42).unwrap();
        assert_eq!(a, b);
        let c = Network::init(&dims, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_bounds_and_zero_biases() {
        let net = Network::init(&[14, 64, 64, 2], 1).unwrap();
        for (layer, w) in net.layers.iter().zip(net.layer_dims.windows(2)) {
            let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
            assert!(layer.w.iter().all(|v| v.abs() < bound));
            assert!(layer.b.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn parameter_count_matches_counting_formula() {
        // sum over layers of in*out + out.
        let net = Network::init(&[14, 64, 64, 2], 0).unwrap();
        let by_formula: usize = net
            .layer_dims
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        assert_eq!(net.param_count(), by_formula);
        assert_eq!(net.param_count(), 5250);
    }

    #[test]
    fn zero_weights_output_action_center() {
        let net = Network::zeros(&[14, 8, 2]).unwrap();
        let b = bounds();
        let a = net.forward(&vec![0.3; 14], &b).unwrap();
        let centers = b.centers();
        assert!((a.accel - centers[0]).abs() < 1e-12);
        assert!((a.steer - centers[1]).abs() < 1e-12);
        // Default bounds center acceleration at -1 and steer at 0.
        assert!((a.accel - (-1.0)).abs() < 1e-12);
        assert_eq!(a.steer, 0.0);
    }

    #[test]
    fn forward_matches_hand_computation() {
        // dims [2, 2, 2], hand-set weights:
        //   hidden: h = tanh(W1 x + b1), out: z = W2 h + b2, y = squash(z).
        let mut net = Network::zeros(&[2, 2, 2]).unwrap();
        net.layers[0].w = vec![0.5, -0.25, 0.1, 0.3];
        net.layers[0].b = vec![0.01, -0.02];
        net.layers[1].w = vec![1.0, -1.0, 0.5, 0.25];
        net.layers[1].b = vec![0.1, 0.0];
        let x = [0.4, -0.6];
        let h0 = (0.5f64 * 0.4 + (-0.25) * (-0.6) + 0.01).tanh();
        let h1 = (0.1f64 * 0.4 + 0.3 * (-0.6) + (-0.02)).tanh();
        let z0 = 1.0 * h0 - 1.0 * h1 + 0.1;
        let z1 = 0.5 * h0 + 0.25 * h1;
        let b = bounds();
        let want_accel = -1.0 + 3.0 * z0.tanh();
        let want_steer = 0.0 + 0.6 * z1.tanh();
        let got = net.forward(&x, &b).unwrap();
        assert!((got.accel - want_accel).abs() < 1e-9);
        assert!((got.steer - want_steer).abs() < 1e-9);
    }

    #[test]
    fn forward_stays_in_bounds_for_wild_inputs() {
        let net = Network::init(&[14, 16, 2], 9).unwrap();
        let b = bounds();
        for k in 0..50 {
            let x: Vec<f64> = (0..14).map(|i| ((i + k) as f64 * 37.7) % 1000.0 - 500.0).collect();
            let a = net.forward(&x, &b).unwrap();
            assert!(b.contains(&a));
            assert!(a.is_finite());
        }
    }

    #[test]
    fn forward_rejects_wrong_length() {
        let net = Network::init(&[14, 8, 2], 0).unwrap();
        assert!(net.forward(&[0.0; 13], &bounds()).is_err());
        assert!(net.forward(&[0.0; 15], &bounds()).is_err());
    }

    #[test]
    fn backward_zero_when_targets_equal_outputs() {
        let net = Network::init(&[4, 6, 2], 3).unwrap();
        let b = bounds();
        let xs: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..4).map(|j| (i * 4 + j) as f64 * 0.13 - 1.0).collect())
            .collect();
        let targets: Vec<[f64; 2]> = xs
            .iter()
            .map(|x| net.forward(x, &b).unwrap().as_array())
            .collect();
        let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        let (loss, grads) = net.backward(&refs, &targets, &b).unwrap();
        assert!(loss < 1e-24);
        assert!(grads.max_abs() < 1e-12);
    }

    #[test]
    fn duplicated_batch_leaves_loss_and_gradients_unchanged() {
        let net = Network::init(&[4, 6, 2], 5).unwrap();
        let b = bounds();
        let xs: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..4).map(|j| ((i + j) as f64).sin()).collect())
            .collect();
        let ts: Vec<[f64; 2]> = vec![[0.5, 0.1], [-2.0, -0.3], [0.0, 0.0]];
        let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        let (l1, g1) = net.backward(&refs, &ts, &b).unwrap();

        let mut xs2 = xs.clone();
        xs2.extend(xs.iter().cloned());
        let mut ts2 = ts.clone();
        ts2.extend(ts.iter().cloned());
        let refs2: Vec<&[f64]> = xs2.iter().map(|v| v.as_slice()).collect();
        let (l2, g2) = net.backward(&refs2, &ts2, &b).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, bb) in g1.layers.iter().zip(g2.layers.iter()) {
            for (x, y) in a.0.iter().zip(bb.0.iter()) {
                assert!((x - y).abs() < 1e-12);
            }
            for (x, y) in a.1.iter().zip(bb.1.iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    /// Central finite differences with the documented step and floor.
    fn finite_diff_check(dims: &[usize], seed: u64) -> f64 {
        let b = bounds();
        let net = Network::init(dims, seed).unwrap();
        let mut rng = stream(seed, &["fd-batch"]);
        let n = dims[0];
        let xs: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect())
            .collect();
        let ts: Vec<[f64; 2]> = (0..4)
            .map(|_| [rng.gen_range(-3.9..1.9), rng.gen_range(-0.59..0.59)])
            .collect();
        let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        let (_, grads) = net.backward(&refs, &ts, &b).unwrap();

        let eval = |net: &Network| -> f64 {
            let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
            net.backward(&refs, &ts, &b).unwrap().0
        };
        let step = 1e-4;
        let mut max_rel = 0.0f64;
        for li in 0..net.layers.len() {
            for (kind, len) in [(0usize, net.layers[li].w.len()), (1, net.layers[li].b.len())] {
                for i in 0..len {
                    let mut plus = net.clone();
                    let mut minus = net.clone();
                    {
                        let (p, m) = (&mut plus.layers[li], &mut minus.layers[li]);
                        if kind == 0 {
                            p.w[i] += step;
                            m.w[i] -= step;
                        } else {
                            p.b[i] += step;
                            m.b[i] -= step;
                        }
                    }
                    let numeric = (eval(&plus) - eval(&minus)) / (2.0 * step);
                    let analytic = if kind == 0 {
                        grads.layers[li].0[i]
                    } else {
                        grads.layers[li].1[i]
                    };
                    let rel = (analytic - numeric).abs()
                        / analytic.abs().max(numeric.abs()).max(1e-8);
                    max_rel = max_rel.max(rel);
                }
            }
        }
        max_rel
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..5 {
            let rel = finite_diff_check(&[3, 5, 2], seed);
            assert!(rel < 1e-5, "seed {seed}: max relative error {rel}");
        }
    }
}
