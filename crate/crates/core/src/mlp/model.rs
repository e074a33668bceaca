//! The network itself: topology, initialization, forward evaluation.
//!
//! The default shape is the one-step predictor's: 900 inputs (150 steps of
//! 6 scaled channels), three tanh hidden layers of 100, and a linear
//! 6-output layer giving the next step's channels. The struct is plain data
//! so training, serialization, and tests can reach everything.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::trajectory::{ChannelMode, ChannelScaler};

use super::linalg;

/// Hidden-layer nonlinearity. The output layer is always linear.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation value a = f(z).
    #[inline]
    pub fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// A feed-forward network plus everything needed to use it on raw
/// trajectories: the channel scaler it was trained with, which channels it
/// consumes, and the highest curriculum stage it converged through.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    /// Layer widths, input first: e.g. [900, 100, 100, 100, 6].
    pub layer_dims: Vec<usize>,
    /// Per layer, row-major out×in.
    pub weights: Vec<Vec<f64>>,
    /// Per layer, length = layer output width.
    pub biases: Vec<Vec<f64>>,
    pub activation: Activation,
    /// Channels the model consumes and emits.
    pub channels: ChannelMode,
    /// Scaler applied to inputs and inverted on outputs.
    pub scaler: ChannelScaler,
    /// Highest curriculum stage k this model converged through (0 = base
    /// one-step training only). Recorded so training can resume.
    pub trained_stage: u32,
}

impl MlpModel {
    /// Fresh network: weights uniform in ±√(6/(fan_in+fan_out)) (the
    /// variance-preserving choice for tanh layers), biases zero, identity
    /// scaler. Deterministic per seed.
    pub fn init(layer_dims: &[usize], activation: Activation, seed: u64) -> Result<MlpModel> {
        if layer_dims.len() < 2 {
            return Err(Error::config(format!(
                "need at least input and output layer dims, got {layer_dims:?}"
            )));
        }
        if layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::config(format!(
                "zero-size layer in dims {layer_dims:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        let mut biases = Vec::with_capacity(layer_dims.len() - 1);
        for l in 1..layer_dims.len() {
            let (fan_in, fan_out) = (layer_dims[l - 1], layer_dims[l]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-limit..limit))
                .collect();
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(MlpModel {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            activation,
            channels: ChannelMode::Full,
            scaler: ChannelScaler::identity(),
            trained_stage: 0,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.layer_dims.last().expect("dims are non-empty")
    }

    pub fn layer_count(&self) -> usize {
        self.layer_dims.len() - 1
    }

    /// History length implied by the input width and channel mode, if the
    /// width divides evenly.
    pub fn history_len(&self) -> Option<usize> {
        let w = self.channels.width();
        (self.in_dim() % w == 0).then(|| self.in_dim() / w)
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Structural soundness: dims chain, finite parameters.
    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 || self.weights.len() != self.layer_count() {
            return Err(Error::config("model layer bookkeeping is inconsistent"));
        }
        for l in 0..self.layer_count() {
            let (rows, cols) = (self.layer_dims[l + 1], self.layer_dims[l]);
            if self.weights[l].len() != rows * cols || self.biases[l].len() != rows {
                return Err(Error::config(format!(
                    "layer {l}: parameter sizes do not match dims {rows}×{cols}"
                )));
            }
        }
        let finite = self
            .weights
            .iter()
            .chain(self.biases.iter())
            .flat_map(|v| v.iter())
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::numerical("model contains non-finite parameters"));
        }
        Ok(())
    }

    /// One input row in, one output row out.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.in_dim() {
            return Err(Error::config(format!(
                "forward: input length {} does not match input width {}",
                input.len(),
                self.in_dim()
            )));
        }
        let mut bufs = ForwardBufs::new(self, 1);
        bufs.input_mut().copy_from_slice(input);
        self.forward_batch_into(1, &mut bufs);
        Ok(bufs.output(1).to_vec())
    }

    /// Forward over `rows` inputs packed row-major. Returns rows×out values.
    pub fn forward_batch(&self, inputs: &[f64], rows: usize) -> Result<Vec<f64>> {
        if inputs.len() != rows * self.in_dim() {
            return Err(Error::config(format!(
                "forward_batch: got {} values for {} rows of width {}",
                inputs.len(),
                rows,
                self.in_dim()
            )));
        }
        let mut bufs = ForwardBufs::new(self, rows);
        bufs.input_mut()[..inputs.len()].copy_from_slice(inputs);
        self.forward_batch_into(rows, &mut bufs);
        Ok(bufs.output(rows).to_vec())
    }

    /// Core forward: consumes the input already placed in `bufs.input_mut()`
    /// (first `rows` rows) and fills every layer activation. `rows` may be
    /// smaller than the buffer capacity.
    pub(crate) fn forward_batch_into(&self, rows: usize, bufs: &mut ForwardBufs) {
        debug_assert!(rows <= bufs.capacity);
        let layers = self.layer_count();
        for l in 0..layers {
            let (fan_in, fan_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let (src, dst) = bufs.pair(l);
            linalg::gemm_abt(
                &src[..rows * fan_in],
                &self.weights[l],
                &mut dst[..rows * fan_out],
                rows,
                fan_in,
                fan_out,
            );
            let bias = &self.biases[l];
            let last = l + 1 == layers;
            for r in 0..rows {
                let out = &mut dst[r * fan_out..(r + 1) * fan_out];
                if last {
                    for (o, b) in out.iter_mut().zip(bias) {
                        *o += b;
                    }
                } else {
                    for (o, b) in out.iter_mut().zip(bias) {
                        *o = self.activation.apply(*o + b);
                    }
                }
            }
        }
    }
}

/// Reusable per-layer activation storage for batched forward/backward
/// passes. Layer 0 is the input itself.
pub(crate) struct ForwardBufs {
    /// One buffer per layer (input included), each capacity×dim.
    pub acts: Vec<Vec<f64>>,
    pub capacity: usize,
}

impl ForwardBufs {
    pub fn new(model: &MlpModel, capacity: usize) -> ForwardBufs {
        ForwardBufs {
            acts: model
                .layer_dims
                .iter()
                .map(|d| vec![0.0; capacity * d])
                .collect(),
            capacity,
        }
    }

    pub fn input_mut(&mut self) -> &mut [f64] {
        &mut self.acts[0]
    }

    pub fn output(&self, rows: usize) -> &[f64] {
        let last = self.acts.len() - 1;
        let dim = self.acts[last].len() / self.capacity;
        &self.acts[last][..rows * dim]
    }

    /// Borrows (activations of layer l, buffer for layer l+1) disjointly.
    fn pair(&mut self, l: usize) -> (&[f64], &mut [f64]) {
        let (head, tail) = self.acts.split_at_mut(l + 1);
        (&head[l], &mut tail[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand_model(dims: &[usize], weights: Vec<Vec<f64>>, biases: Vec<Vec<f64>>) -> MlpModel {
        MlpModel {
            layer_dims: dims.to_vec(),
            weights,
            biases,
            activation: Activation::Tanh,
            channels: ChannelMode::Full,
            scaler: ChannelScaler::identity(),
            trained_stage: 0,
        }
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a = MlpModel::init(&[12, 7, 6], Activation::Tanh, 3).unwrap();
        let b = MlpModel::init(&[12, 7, 6], Activation::Tanh, 3).unwrap();
        let c = MlpModel::init(&[12, 7, 6], Activation::Tanh, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_rejects_bad_dims() {
        assert!(MlpModel::init(&[9], Activation::Tanh, 0).is_err());
        assert!(MlpModel::init(&[9, 0, 3], Activation::Tanh, 0).is_err());
    }

    #[test]
    fn fresh_net_maps_zero_to_zero() {
        let m = MlpModel::init(&[10, 8, 8, 4], Activation::Tanh, 11).unwrap();
        let y = m.forward(&vec![0.0; 10]).unwrap();
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn preactivation_std_near_one_on_square_layer() {
        // Monte-Carlo over 1000 unit-variance inputs. For fan_in = fan_out
        // the scheme targets unit pre-activation variance exactly.
        let dims = [64, 64, 6];
        let m = MlpModel::init(&dims, Activation::Tanh, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let (mut sumsq, mut count) = (0.0, 0usize);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..dims[0])
                .map(|_| {
                    // Uniform ±√3 has unit variance.
                    rng.gen_range(-1.0f64..1.0) * 3f64.sqrt()
                })
                .collect();
            // First-layer pre-activations by hand.
            for o in 0..dims[1] {
                let w = &m.weights[0][o * dims[0]..(o + 1) * dims[0]];
                let z = linalg::dot(&x, w);
                sumsq += z * z;
                count += 1;
            }
        }
        let std = (sumsq / count as f64).sqrt();
        assert!((std - 1.0).abs() < 0.3, "pre-activation std {std}");
    }

    #[test]
    fn preactivation_std_matches_scheme_on_wide_layer() {
        // For asymmetric fan-in/fan-out the scheme's own prediction is
        // √(2·fan_in/(fan_in+fan_out)); the 900→100 first layer gives 1.342.
        let dims = [900, 100, 6];
        let m = MlpModel::init(&dims, Activation::Tanh, 22).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let (mut sumsq, mut count) = (0.0, 0usize);
        for _ in 0..200 {
            let x: Vec<f64> = (0..dims[0])
                .map(|_| rng.gen_range(-1.0f64..1.0) * 3f64.sqrt())
                .collect();
            for o in 0..dims[1] {
                let w = &m.weights[0][o * dims[0]..(o + 1) * dims[0]];
                let z = linalg::dot(&x, w);
                sumsq += z * z;
                count += 1;
            }
        }
        let std = (sumsq / count as f64).sqrt();
        let want = (2.0 * 900.0 / 1000.0f64).sqrt();
        assert!((std - want).abs() < 0.1 * want, "std {std} vs scheme {want}");
    }

    #[test]
    fn single_linear_layer_hand_computation() {
        // 1→1, weight 2, bias 1, input 3: output 7.
        let m = hand_model(&[1, 1], vec![vec![2.0]], vec![vec![1.0]]);
        assert_eq!(m.forward(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn two_layer_tanh_matches_hand_evaluation() {
        // 2→2→1: hidden tanh, linear output.
        let m = hand_model(
            &[2, 2, 1],
            vec![vec![0.5, -0.25, 0.75, 0.1], vec![1.5, -2.0]],
            vec![vec![0.1, -0.2], vec![0.05]],
        );
        let (x0, x1): (f64, f64) = (0.3, -0.7);
        let h0 = (0.5 * x0 - 0.25 * x1 + 0.1).tanh();
        let h1 = (0.75 * x0 + 0.1 * x1 - 0.2).tanh();
        let want = 1.5 * h0 - 2.0 * h1 + 0.05;
        let got = m.forward(&[x0, x1]).unwrap()[0];
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn batched_forward_equals_individual_forwards() {
        let m = MlpModel::init(&[10, 8, 8, 4], Activation::Tanh, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rows = 32;
        let inputs: Vec<f64> = (0..rows * 10).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let batched = m.forward_batch(&inputs, rows).unwrap();
        for r in 0..rows {
            let single = m.forward(&inputs[r * 10..(r + 1) * 10]).unwrap();
            assert_eq!(&batched[r * 4..(r + 1) * 4], single.as_slice(), "row {r}");
        }
    }

    #[test]
    fn forward_is_pure() {
        let m = MlpModel::init(&[10, 8, 4], Activation::Tanh, 7).unwrap();
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.1 - 0.5).collect();
        let a = m.forward(&x).unwrap();
        let b = m.forward(&x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forward_rejects_wrong_length() {
        let m = MlpModel::init(&[10, 4], Activation::Tanh, 8).unwrap();
        assert!(m.forward(&[0.0; 9]).is_err());
        assert!(m.forward_batch(&[0.0; 25], 2).is_err());
    }
}
