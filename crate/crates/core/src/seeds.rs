//! Deterministic sub-seed derivation.
//!
//! Every random decision in the crate flows from one user-supplied seed.
//! Independent streams (one per dyad, per trial, per training stage) are
//! derived by mixing the base seed with small integer labels, so adding a
//! consumer never perturbs the stream of another.

/// SplitMix64 finalizer. Bijective on u64, breaks up low-entropy inputs.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent seed from a base seed and a list of labels.
/// Order matters: `mix(s, &[1, 2])` and `mix(s, &[2, 1])` differ.
pub fn mix(base: u64, labels: &[u64]) -> u64 {
    let mut state = splitmix(base);
    for &label in labels {
        state = splitmix(state ^ splitmix(label));
    }
    state
}
