//! Counter-keyed random substreams.
//!
//! Every random draw in a run comes from a ChaCha8 stream addressed by
//! `(root seed, purpose, iteration, index)`. The first three fields are
//! hashed into the 256-bit ChaCha key; the index selects the 64-bit ChaCha
//! stream (nonce). A proposal therefore sees the same numbers no matter which
//! thread evaluates it or in which order, so sequential and parallel sampling
//! draw from identical per-proposal streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a substream is used for. Distinct purposes never share keys.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    /// Plain rejection sampling; the iteration field is unused (0).
    Rejection,
    /// Adaptive sampler; iteration 0 is the prior pass.
    Adaptive,
    /// Measurement noise for synthetic scenarios.
    ScenarioNoise,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Rejection => 0x7265_6a65_6374_0001,
            Purpose::Adaptive => 0x6164_6170_7469_0002,
            Purpose::ScenarioNoise => 0x6e6f_6973_6500_0003,
        }
    }
}

/// Derive the substream for one unit of work.
pub fn substream(root_seed: u64, purpose: Purpose, iteration: u64, index: u64) -> ChaCha8Rng {
    let mut state = mix64(root_seed ^ purpose.tag());
    state = mix64(state ^ iteration.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        chunk.copy_from_slice(&mix64(state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

// splitmix64 finaliser
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
