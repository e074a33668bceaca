//! Forecasting the short-horizon motion of a jointly carried object.
//!
//! When two partners carry an object together, its measured velocity and
//! acceleration betray where the leading partner intends to take it next.
//! This crate predicts that intent: given 150 steps (0.75 s at 200 Hz) of
//! the object's six motion channels, it forecasts the next 50 steps by
//! iterating a one-step multilayer perceptron on its own output.
//!
//! The pieces:
//!
//! * [`trajectory`]: samples, trials, windows, channel scaling, dyad splits.
//! * [`io`]: the trajectory CSV interchange format.
//! * [`synth`]: a synthetic dyad corpus (minimum-jerk leader plans driven
//!   through an impedance-follower simulation) standing in for recordings of
//!   human pairs.
//! * [`mlp`]: a small from-scratch MLP with backprop, Adam, and a binary
//!   model format.
//! * [`predictor`]: iterated rollout of the one-step model.
//! * [`trainer`]: the stabilization curriculum that retrains the model on
//!   its own rollouts for growing feedback depths.
//! * [`poly`]: the polynomial extrapolation baseline.
//! * [`eval`]: MSE-vs-horizon reports, noise robustness, overlays, and the
//!   simulated robot-in-the-loop check.
//! * [`pipeline`]: the end-to-end generate/train/evaluate driver.

pub mod error;
pub mod eval;
pub mod io;
pub mod mlp;
pub mod pipeline;
pub mod poly;
pub mod predictor;
pub mod seeds;
pub mod synth;
pub mod trainer;
pub mod trajectory;

pub use error::{Error, Result};
