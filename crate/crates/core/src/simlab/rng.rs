//! Counter-based RNG streams.
//!
//! Every random quantity in an experiment is drawn from a ChaCha8 stream
//! selected by `(master seed, purpose, key, index)`, so a replication's draws
//! do not depend on which worker runs it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Latent = 1,
    Noise = 2,
    Arrivals = 3,
    NoiseModel = 4,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// RNG for one `(purpose, key)` family, positioned on stream `index`.
pub fn stream(master: u64, purpose: Purpose, key: u64, index: u64) -> ChaCha8Rng {
    let seed = splitmix64(splitmix64(master ^ splitmix64(purpose as u64)) ^ key);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
