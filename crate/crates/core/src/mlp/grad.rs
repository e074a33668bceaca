//! Loss and analytic gradients via backpropagation.
//!
//! The training loss over a batch is the unnormalized squared error
//! Σ_n ‖x̂_n − x_n‖², summed over rows and output components. Gradients are
//! exact derivatives of that sum. `BatchLoss` also carries the per-element
//! mean so stopping thresholds can stay batch-size-independent.

use crate::error::{Error, Result};

use super::model::{ForwardBufs, MlpModel};

/// One optimizer step's worth of training data, already scaled. Row-major:
/// `inputs` is rows×in_dim, `targets` rows×out_dim.
#[derive(Clone, Debug)]
pub struct TrainBatch {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub rows: usize,
}

impl TrainBatch {
    pub fn validate(&self, model: &MlpModel) -> Result<()> {
        if self.inputs.len() != self.rows * model.in_dim()
            || self.targets.len() != self.rows * model.out_dim()
        {
            return Err(Error::config(format!(
                "batch of {} rows does not match model {}→{}",
                self.rows,
                model.in_dim(),
                model.out_dim()
            )));
        }
        if self.rows == 0 {
            return Err(Error::config("empty training batch"));
        }
        Ok(())
    }
}

/// Same shape as the model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Gradients {
        Gradients {
            weights: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }
}

/// Batch loss under both conventions: `sum` is the raw summed squared
/// error, `mean` divides by rows × output width.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchLoss {
    pub sum: f64,
    pub mean: f64,
}

/// Scratch space reused across training steps.
pub(crate) struct GradWorkspace {
    pub fwd: ForwardBufs,
    /// Per non-input layer, rows×dim delta buffers.
    deltas: Vec<Vec<f64>>,
}

impl GradWorkspace {
    pub fn new(model: &MlpModel, capacity: usize) -> GradWorkspace {
        GradWorkspace {
            fwd: ForwardBufs::new(model, capacity),
            deltas: model.layer_dims[1..]
                .iter()
                .map(|d| vec![0.0; capacity * d])
                .collect(),
        }
    }
}

/// Forward + backward over one batch. Gradients are written into `grads`
/// (overwritten, not accumulated).
pub fn loss_and_gradients(model: &MlpModel, batch: &TrainBatch) -> Result<(BatchLoss, Gradients)> {
    let mut ws = GradWorkspace::new(model, batch.rows);
    let mut grads = Gradients::zeros_like(model);
    let loss = loss_and_gradients_into(model, batch, &mut ws, &mut grads)?;
    Ok((loss, grads))
}

pub(crate) fn loss_and_gradients_into(
    model: &MlpModel,
    batch: &TrainBatch,
    ws: &mut GradWorkspace,
    grads: &mut Gradients,
) -> Result<BatchLoss> {
    batch.validate(model)?;
    let rows = batch.rows;
    assert!(rows <= ws.fwd.capacity, "workspace too small for batch");

    ws.fwd.input_mut()[..batch.inputs.len()].copy_from_slice(&batch.inputs);
    model.forward_batch_into(rows, &mut ws.fwd);
    for (l, acts) in ws.fwd.acts.iter().enumerate().skip(1) {
        let dim = model.layer_dims[l];
        if !acts[..rows * dim].iter().all(|a| a.is_finite()) {
            return Err(Error::numerical(format!(
                "numerical blow-up in layer {l} activations"
            )));
        }
    }

    let layers = model.layer_count();
    let out_dim = model.out_dim();

    // Output delta: d(sum loss)/dz = 2(x̂ − x). Loss accumulates alongside.
    let mut loss_sum = 0.0;
    {
        let preds = ws.fwd.output(rows);
        let delta = &mut ws.deltas[layers - 1][..rows * out_dim];
        for i in 0..rows * out_dim {
            let r = preds[i] - batch.targets[i];
            loss_sum += r * r;
            delta[i] = 2.0 * r;
        }
    }
    if !loss_sum.is_finite() {
        return Err(Error::numerical("numerical blow-up in loss"));
    }

    for l in (0..layers).rev() {
        let (fan_in, fan_out) = (model.layer_dims[l], model.layer_dims[l + 1]);
        // dW_l = δ_lᵀ · a_{l−1}; db_l = column sums of δ_l.
        {
            let delta = &ws.deltas[l][..rows * fan_out];
            let prev = &ws.fwd.acts[l][..rows * fan_in];
            let dw = &mut grads.weights[l];
            dw.fill(0.0);
            super::linalg::gemm_atb_acc(delta, prev, dw, rows, fan_out, fan_in);
            let db = &mut grads.biases[l];
            db.fill(0.0);
            for r in 0..rows {
                for o in 0..fan_out {
                    db[o] += delta[r * fan_out + o];
                }
            }
        }
        if l == 0 {
            break;
        }
        // δ_{l−1} = (δ_l · W_l) ⊙ f'(a_{l−1}).
        let (lower, upper) = ws.deltas.split_at_mut(l);
        let next = &mut lower[l - 1][..rows * fan_in];
        super::linalg::gemm_ab(
            &upper[0][..rows * fan_out],
            &model.weights[l],
            next,
            rows,
            fan_out,
            fan_in,
        );
        let acts = &ws.fwd.acts[l][..rows * fan_in];
        for (d, a) in next.iter_mut().zip(acts) {
            *d *= model.activation.derivative_from_output(*a);
        }
    }

    Ok(BatchLoss {
        sum: loss_sum,
        mean: loss_sum / (rows * out_dim) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::model::Activation;
    use crate::trajectory::{ChannelMode, ChannelScaler};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_model(w: f64, b: f64) -> MlpModel {
        MlpModel {
            layer_dims: vec![1, 1],
            weights: vec![vec![w]],
            biases: vec![vec![b]],
            activation: Activation::Tanh,
            channels: ChannelMode::Full,
            scaler: ChannelScaler::identity(),
            trained_stage: 0,
        }
    }

    #[test]
    fn perfect_predictions_give_zero_loss_and_gradients() {
        let model = MlpModel::init(&[6, 5, 3], Activation::Tanh, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let rows = 4;
        let inputs: Vec<f64> = (0..rows * 6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let targets = model.forward_batch(&inputs, rows).unwrap();
        let batch = TrainBatch { inputs, targets, rows };
        let (loss, grads) = loss_and_gradients(&model, &batch).unwrap();
        assert_eq!(loss.sum, 0.0);
        assert_eq!(loss.mean, 0.0);
        for g in grads.weights.iter().chain(grads.biases.iter()) {
            assert!(g.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn single_row_single_output_bias_gradient_is_two_delta() {
        // x̂ = w·x + b with x = 0: residual δ = b − target.
        let model = tiny_model(0.7, 0.5);
        let batch = TrainBatch {
            inputs: vec![0.0],
            targets: vec![0.2],
            rows: 1,
        };
        let delta = 0.3;
        let (loss, grads) = loss_and_gradients(&model, &batch).unwrap();
        assert!((loss.sum - delta * delta).abs() < 1e-15);
        assert!((loss.mean - delta * delta).abs() < 1e-15);
        assert!((grads.biases[0][0] - 2.0 * delta).abs() < 1e-15);
        // Weight gradient 2δ·x = 0 since the input is zero.
        assert_eq!(grads.weights[0][0], 0.0);
    }

    #[test]
    fn loss_positive_when_predictions_differ() {
        let model = tiny_model(1.0, 0.0);
        let batch = TrainBatch {
            inputs: vec![1.0, 2.0],
            targets: vec![0.0, 0.0],
            rows: 2,
        };
        let (loss, _) = loss_and_gradients(&model, &batch).unwrap();
        assert!((loss.sum - 5.0).abs() < 1e-15);
        assert!((loss.mean - 2.5).abs() < 1e-15);
    }

    #[test]
    fn saturating_output_layer_reports_blow_up() {
        let mut model = MlpModel::init(&[1, 2, 1], Activation::Tanh, 1).unwrap();
        // Saturate the hidden layer, then overflow the linear output.
        model.weights[0] = vec![1e3, 1e3];
        model.weights[1] = vec![f64::MAX, f64::MAX];
        let batch = TrainBatch {
            inputs: vec![1.0],
            targets: vec![0.0],
            rows: 1,
        };
        let err = loss_and_gradients(&model, &batch).unwrap_err();
        assert!(err.to_string().contains("numerical blow-up"), "{err}");
    }

    fn param_slot(m: &mut MlpModel, layer: usize, weight: bool, idx: usize) -> &mut f64 {
        if weight {
            &mut m.weights[layer][idx]
        } else {
            &mut m.biases[layer][idx]
        }
    }

    /// Central finite differences of the sum loss for one parameter.
    fn fd_gradient(
        model: &MlpModel,
        batch: &TrainBatch,
        layer: usize,
        weight: bool,
        idx: usize,
        step: f64,
    ) -> f64 {
        let mut probe = model.clone();
        let eval = |m: &MlpModel| {
            let preds = m.forward_batch(&batch.inputs, batch.rows).unwrap();
            preds
                .iter()
                .zip(&batch.targets)
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
        };
        let orig = *param_slot(&mut probe, layer, weight, idx);
        *param_slot(&mut probe, layer, weight, idx) = orig + step;
        let hi = eval(&probe);
        *param_slot(&mut probe, layer, weight, idx) = orig - step;
        let lo = eval(&probe);
        (hi - lo) / (2.0 * step)
    }

    #[test]
    fn gradients_match_finite_differences() {
        // 20 random nets up to [10, 8, 8, 8, 4]; every component within
        // 1e-4 relative (1e-6 absolute floor) of central differences.
        let shapes: [&[usize]; 5] = [
            &[10, 8, 8, 8, 4],
            &[3, 5, 2],
            &[1, 1],
            &[7, 4, 4, 3],
            &[2, 9, 1],
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for net in 0..20 {
            let dims = shapes[net % shapes.len()];
            let model = MlpModel::init(dims, Activation::Tanh, 500 + net as u64).unwrap();
            let rows = 1 + net % 4;
            let inputs: Vec<f64> = (0..rows * dims[0]).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let targets: Vec<f64> = (0..rows * dims[dims.len() - 1])
                .map(|_| rng.gen_range(-1.5..1.5))
                .collect();
            let batch = TrainBatch { inputs, targets, rows };
            let (_, grads) = loss_and_gradients(&model, &batch).unwrap();
            for l in 0..model.layer_count() {
                for (weight, n) in [(true, grads.weights[l].len()), (false, grads.biases[l].len())] {
                    for idx in 0..n {
                        let analytic = if weight {
                            grads.weights[l][idx]
                        } else {
                            grads.biases[l][idx]
                        };
                        let fd = fd_gradient(&model, &batch, l, weight, idx, 1e-5);
                        let scale = analytic.abs().max(fd.abs()).max(1e-6);
                        assert!(
                            (analytic - fd).abs() / scale < 1e-4,
                            "net {net} layer {l} weight={weight} idx {idx}: {analytic} vs {fd}"
                        );
                    }
                }
            }
        }
    }
}
