//! Deterministic random substreams.
//!
//! Every random stream in an experiment is keyed by `(master_seed, index,
//! purpose)` and seeded through a SplitMix64 mixing chain, so any task can be
//! regenerated independently of scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

/// What a substream is used for. The discriminant is part of the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    TrainTask = 1,
    TrainLosses = 2,
    NoisySgd = 3,
    EvalTask = 4,
    EvalLosses = 5,
    RiskEstimate = 6,
    SweepValue = 7,
    /// Free-form streams for callers outside the harness.
    User = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `splitmix(splitmix(splitmix(master) ^ index) ^ purpose)`.
pub fn derive_seed(master_seed: u64, index: u64, purpose: Purpose) -> u64 {
    let a = splitmix64(master_seed);
    let b = splitmix64(a ^ index);
    splitmix64(b ^ (purpose as u64))
}

pub fn stream(master_seed: u64, index: u64, purpose: Purpose) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master_seed, index, purpose))
}
