//! Adam optimizer with standard defaults.

use crate::error::{Error, Result};

use super::grad::Gradients;
use super::model::MlpModel;

pub const DEFAULT_LR: f64 = 1e-3;
pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPS: f64 = 1e-8;

/// First/second moment estimates plus hyperparameters. One state per
/// training run; created fresh for each curriculum stage.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Completed update count (the bias-correction exponent).
    pub step: u64,
    m: Gradients,
    v: Gradients,
}

impl AdamState {
    pub fn new(model: &MlpModel) -> AdamState {
        AdamState::with_lr(model, DEFAULT_LR)
    }

    pub fn with_lr(model: &MlpModel, lr: f64) -> AdamState {
        AdamState {
            lr,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            eps: DEFAULT_EPS,
            step: 0,
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
        }
    }
}

/// One Adam update in place. Deterministic; zero gradients leave the
/// parameters bit-exactly unchanged.
pub fn optimizer_step(
    model: &mut MlpModel,
    grads: &Gradients,
    state: &mut AdamState,
) -> Result<()> {
    let shapes_match = grads.weights.len() == model.weights.len()
        && grads.biases.len() == model.biases.len()
        && grads
            .weights
            .iter()
            .zip(&model.weights)
            .all(|(g, p)| g.len() == p.len())
        && grads
            .biases
            .iter()
            .zip(&model.biases)
            .all(|(g, p)| g.len() == p.len());
    if !shapes_match {
        return Err(Error::config(
            "gradient shapes do not match model parameters",
        ));
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);

    let update = |params: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for i in 0..params.len() {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            params[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    };
    for l in 0..model.weights.len() {
        update(
            &mut model.weights[l],
            &grads.weights[l],
            &mut state.m.weights[l],
            &mut state.v.weights[l],
        );
    }
    for l in 0..model.biases.len() {
        update(
            &mut model.biases[l],
            &grads.biases[l],
            &mut state.m.biases[l],
            &mut state.v.biases[l],
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::grad::{loss_and_gradients, TrainBatch};
    use crate::mlp::model::Activation;

    #[test]
    fn defaults_are_standard() {
        let model = MlpModel::init(&[2, 2], Activation::Tanh, 0).unwrap();
        let s = AdamState::new(&model);
        assert_eq!(s.lr, 1e-3);
        assert_eq!(s.beta1, 0.9);
        assert_eq!(s.beta2, 0.999);
        assert_eq!(s.eps, 1e-8);
        assert_eq!(s.step, 0);
    }

    #[test]
    fn zero_gradients_leave_parameters_bit_exact() {
        let mut model = MlpModel::init(&[5, 4, 3], Activation::Tanh, 2).unwrap();
        let before = model.clone();
        let grads = Gradients::zeros_like(&model);
        let mut state = AdamState::new(&model);
        optimizer_step(&mut model, &grads, &mut state).unwrap();
        assert_eq!(model, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn step_moves_toward_quadratic_minimum() {
        // L(w) = (w − 3)², gradient 2(w − 3); from w = 0 one step must
        // increase w.
        let mut model = MlpModel::init(&[1, 1], Activation::Tanh, 3).unwrap();
        model.weights[0][0] = 0.0;
        let mut grads = Gradients::zeros_like(&model);
        grads.weights[0][0] = 2.0 * (0.0 - 3.0);
        let mut state = AdamState::new(&model);
        optimizer_step(&mut model, &grads, &mut state).unwrap();
        assert!(model.weights[0][0] > 0.0);
        assert!(model.weights[0][0] < 3.0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut model = MlpModel::init(&[3, 2], Activation::Tanh, 4).unwrap();
        let other = MlpModel::init(&[3, 3], Activation::Tanh, 4).unwrap();
        let grads = Gradients::zeros_like(&other);
        let mut state = AdamState::new(&model);
        assert!(optimizer_step(&mut model, &grads, &mut state).is_err());
    }

    #[test]
    fn converges_on_tiny_regression() {
        // Learn y = 0.5·x − 0.25 (exactly representable) with a linear
        // 1→1 net. lr raised to 0.01 so 2000 steps are ample.
        let mut model = MlpModel::init(&[1, 1], Activation::Tanh, 5).unwrap();
        let batch = TrainBatch {
            inputs: vec![-1.0, -0.5, 0.25, 1.0],
            targets: vec![-0.75, -0.5, -0.125, 0.25],
            rows: 4,
        };
        let mut state = AdamState::with_lr(&model, 1e-2);
        let mut last = f64::INFINITY;
        for _ in 0..2000 {
            let (loss, grads) = loss_and_gradients(&model, &batch).unwrap();
            last = loss.sum;
            optimizer_step(&mut model, &grads, &mut state).unwrap();
        }
        assert!(last < 1e-6, "final loss {last}");
        assert!((model.weights[0][0] - 0.5).abs() < 1e-3);
        assert!((model.biases[0][0] + 0.25).abs() < 1e-3);
    }

    #[test]
    fn deterministic_across_runs() {
        let run = || {
            let mut model = MlpModel::init(&[4, 3, 2], Activation::Tanh, 6).unwrap();
            let batch = TrainBatch {
                inputs: vec![0.1, -0.2, 0.3, -0.4, 0.5, -0.6, 0.7, -0.8],
                targets: vec![0.0, 1.0, -1.0, 0.5],
                rows: 2,
            };
            let mut state = AdamState::new(&model);
            for _ in 0..50 {
                let (_, grads) = loss_and_gradients(&model, &batch).unwrap();
                optimizer_step(&mut model, &grads, &mut state).unwrap();
            }
            model
        };
        assert_eq!(run(), run());
    }
}
