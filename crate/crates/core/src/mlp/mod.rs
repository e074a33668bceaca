//! From-scratch feed-forward network: forward pass, backpropagation, Adam,
//! and a versioned binary file format.
//!
//! The architecture is fixed-topology (dense layers, tanh hidden units,
//! linear output) but arbitrary widths, so tests can exercise tiny nets
//! while the predictor uses the full 900→100→100→100→6 shape.

pub mod adam;
pub mod grad;
pub mod io;
mod linalg;
pub mod model;

pub use adam::{optimizer_step, AdamState};
pub use grad::{loss_and_gradients, BatchLoss, Gradients, TrainBatch};
pub use io::{load, save};
pub use model::{Activation, MlpModel};
