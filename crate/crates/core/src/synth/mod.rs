//! Synthetic dyad corpus generation.
//!
//! The recordings this crate was designed around (pairs of people carrying a
//! table) are not available, so evaluation runs on a desk-scale surrogate: a
//! leader hand follows a piecewise plan of minimum-jerk reaches,
//! constant-velocity corridors, and rests; the carried object responds
//! through a mass-damper-spring follower model; white measurement noise is
//! added on top. Everything is deterministic under explicit seeds.

pub mod corpus;
pub mod dyad;
pub mod noise;
pub mod plan;

pub use corpus::{make_corpus, CorpusConfig};
pub use dyad::{simulate_dyad, FollowerImpedance};
pub use noise::NoiseSpec;
pub use plan::{gen_min_jerk, gen_trial, ConstVelPhase, MinJerkSegment, Plan, PlanSegment};
