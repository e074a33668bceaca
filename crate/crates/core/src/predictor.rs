//! Iterated multi-step forecasting.
//!
//! A one-step network is turned into a 50-step forecaster by feeding each
//! prediction back in: the oldest history entry is dropped, the prediction
//! is appended, and the network is applied again. All six channels are fed
//! back, so velocity forecasts build on the acceleration forecasts of
//! earlier steps (a velocity-only model feeds back just the three velocity
//! channels and reports zero acceleration).
//!
//! The whole loop runs in scaled units; histories come in and forecasts go
//! out in physical units via the model's bundled scaler.

use crate::error::{Error, Result};
use crate::mlp::model::ForwardBufs;
use crate::mlp::MlpModel;
use crate::trajectory::Sample;

/// Windows rolled forward together per forward pass. Keeps the batch GEMM
/// wide without letting the activation buffers outgrow cache.
const ROLLOUT_CHUNK: usize = 512;

/// A multi-step prediction in physical units. `steps[0]` is one step past
/// the end of the history.
#[derive(Clone, Debug, PartialEq)]
pub struct Forecast {
    pub steps: Vec<Sample>,
    pub horizon: usize,
}

/// The model's input width must be channel-width × history length and its
/// output width one sample.
pub fn check_model_shape(model: &MlpModel, history_len: usize) -> Result<()> {
    let width = model.channels.width();
    if model.in_dim() != width * history_len || model.out_dim() != width {
        return Err(Error::config(format!(
            "model {}→{} cannot roll a {}-sample history of {} channels",
            model.in_dim(),
            model.out_dim(),
            history_len,
            width
        )));
    }
    Ok(())
}

/// Forecast `horizon` steps from one history window.
pub fn rollout(model: &MlpModel, history: &[Sample], horizon: usize) -> Result<Forecast> {
    let mut out = rollout_many(model, &[history], horizon)?;
    out.pop().expect("one window in, one forecast out")
}

/// Forecast many windows in lockstep. The outer `Result` covers structural
/// problems (wrong shapes, zero horizon); each window then succeeds or
/// fails on its own, so one diverging rollout cannot sink a whole
/// evaluation run.
pub fn rollout_many(
    model: &MlpModel,
    histories: &[&[Sample]],
    horizon: usize,
) -> Result<Vec<Result<Forecast>>> {
    if horizon == 0 {
        return Err(Error::config("rollout horizon must be at least 1"));
    }
    let width = model.channels.width();
    let history_len = match histories.first() {
        Some(h) => h.len(),
        None => return Ok(Vec::new()),
    };
    check_model_shape(model, history_len)?;
    for (i, h) in histories.iter().enumerate() {
        if h.len() != history_len {
            return Err(Error::config(format!(
                "window {i} has {} samples, expected {history_len}",
                h.len()
            )));
        }
    }

    let in_dim = model.in_dim();
    let capacity = histories.len().min(ROLLOUT_CHUNK);
    let mut bufs = ForwardBufs::new(model, capacity);
    let mut results = Vec::with_capacity(histories.len());

    for chunk in histories.chunks(capacity) {
        let rows = chunk.len();
        // Scaled state lives directly in the forward pass's input buffer
        // and is shifted in place between steps.
        for (r, h) in chunk.iter().enumerate() {
            let row = &mut bufs.input_mut()[r * in_dim..(r + 1) * in_dim];
            for (j, &s) in h.iter().enumerate() {
                model
                    .scaler
                    .scale_into(s, model.channels, &mut row[j * width..(j + 1) * width]);
            }
        }

        let mut forecasts: Vec<Vec<Sample>> = vec![Vec::with_capacity(horizon); rows];
        let mut diverged: Vec<Option<usize>> = vec![None; rows];
        for step in 1..=horizon {
            model.forward_batch_into(rows, &mut bufs);
            for r in 0..rows {
                if diverged[r].is_some() {
                    continue;
                }
                let pred = &bufs.output(rows)[r * width..(r + 1) * width];
                if pred.iter().all(|v| v.is_finite()) {
                    forecasts[r].push(model.scaler.unscale_from(pred, model.channels));
                } else {
                    diverged[r] = Some(step);
                }
            }
            if step == horizon {
                break;
            }
            // Shift each live row left one sample and append its prediction.
            for r in 0..rows {
                if diverged[r].is_some() {
                    continue;
                }
                let pred_start = r * width;
                let pred: Vec<f64> =
                    bufs.output(rows)[pred_start..pred_start + width].to_vec();
                let row = &mut bufs.input_mut()[r * in_dim..(r + 1) * in_dim];
                row.copy_within(width.., 0);
                row[in_dim - width..].copy_from_slice(&pred);
            }
        }

        for (r, steps) in forecasts.into_iter().enumerate() {
            results.push(match diverged[r] {
                Some(step) => Err(Error::numerical(format!(
                    "rollout diverged at step {step}"
                ))),
                None => Ok(Forecast { steps, horizon }),
            });
        }
    }
    Ok(results)
}
