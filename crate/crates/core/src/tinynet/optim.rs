//! First-order optimizers over [`Network`] parameters.

use super::{Gradients, Network};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam_default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer with per-parameter state laid out to mirror the network.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// First/second moment estimates per layer, `(w, b)` each.
    m: Vec<(Vec<f64>, Vec<f64>)>,
    v: Vec<(Vec<f64>, Vec<f64>)>,
    t: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, net: &Network) -> Self {
        let zeros = || {
            net.layers
                .iter()
                .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
                .collect::<Vec<_>>()
        };
        Optimizer {
            kind,
            learning_rate,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn step(&mut self, net: &mut Network, grads: &Gradients) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (layer, (gw, gb)) in net.layers.iter_mut().zip(grads.layers.iter()) {
                    for (p, g) in layer.w.iter_mut().zip(gw.iter()) {
                        *p -= self.learning_rate * g;
                    }
                    for (p, g) in layer.b.iter_mut().zip(gb.iter()) {
                        *p -= self.learning_rate * g;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                self.t += 1;
                let c1 = 1.0 - beta1.powi(self.t as i32);
                let c2 = 1.0 - beta2.powi(self.t as i32);
                for li in 0..net.layers.len() {
                    let layer = &mut net.layers[li];
                    let (gw, gb) = &grads.layers[li];
                    let (mw, mb) = &mut self.m[li];
                    let (vw, vb) = &mut self.v[li];
                    adam_update(&mut layer.w, gw, mw, vw, self.learning_rate, beta1, beta2, eps, c1, c2);
                    adam_update(&mut layer.b, gb, mb, vb, self.learning_rate, beta1, beta2, eps, c1, c2);
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    c1: f64,
    c2: f64,
) {
    for i in 0..params.len() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::SimParams;

    #[test]
    fn sgd_moves_against_gradient() {
        let mut net = Network::zeros(&[2, 2]).unwrap();
        let mut grads = super::super::Gradients::zeros_like(&net);
        grads.layers[0].0[0] = 1.0;
        grads.layers[0].1[1] = -2.0;
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.1, &net);
        opt.step(&mut net, &grads);
        assert!((net.layers[0].w[0] + 0.1).abs() < 1e-12);
        assert!((net.layers[0].b[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // With zero state, the first Adam step is lr * sign(g) up to eps.
        let mut net = Network::zeros(&[2, 2]).unwrap();
        let mut grads = super::super::Gradients::zeros_like(&net);
        grads.layers[0].0[0] = 0.5;
        grads.layers[0].0[1] = -3.0;
        let mut opt = Optimizer::new(OptimizerKind::adam_default(), 1e-3, &net);
        opt.step(&mut net, &grads);
        assert!((net.layers[0].w[0] + 1e-3).abs() < 1e-6);
        assert!((net.layers[0].w[1] - 1e-3).abs() < 1e-6);
        // Untouched parameters stay put.
        assert_eq!(net.layers[0].w[2], 0.0);
    }

    #[test]
    fn adam_drives_a_quadratic_toward_target() {
        // Minimize the squash MSE toward a fixed action; Adam should get
        // close within a few hundred steps.
        let bounds = SimParams::default().action_bounds();
        let mut net = Network::zeros(&[1, 2]).unwrap();
        let mut opt = Optimizer::new(OptimizerKind::adam_default(), 0.01, &net);
        let x = [1.0];
        let target = [[0.5, 0.2]];
        for _ in 0..2000 {
            let (_, grads) = net.backward(&[&x], &target, &bounds).unwrap();
            opt.step(&mut net, &grads);
        }
        let out = net.forward(&x, &bounds).unwrap();
        assert!((out.accel - 0.5).abs() < 1e-3, "accel {}", out.accel);
        assert!((out.steer - 0.2).abs() < 1e-3, "steer {}", out.steer);
    }

    #[test]
    fn zero_learning_rate_never_moves_parameters() {
        let mut net = Network::init(&[3, 4, 2], 7).unwrap();
        let before = net.clone();
        let bounds = SimParams::default().action_bounds();
        let x = [0.1, -0.2, 0.3];
        let mut opt = Optimizer::new(OptimizerKind::adam_default(), 0.0, &net);
        for _ in 0..10 {
            let (_, grads) = net.backward(&[&x], &[[1.0, 0.0]], &bounds).unwrap();
            opt.step(&mut net, &grads);
        }
        assert_eq!(net, before);
    }
}
