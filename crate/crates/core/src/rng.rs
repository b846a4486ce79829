//! Deterministic random streams.
//!
//! Every stochastic unit of work (a market path, an outer trajectory, the
//! inner transitions of one visited state) draws from its own generator keyed
//! by the run seed plus a path of indices. Results therefore do not depend on
//! the order in which units are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for the unit identified by `seed` and `key`.
pub fn stream(seed: u64, key: &[u64]) -> StreamRng {
    let mut h = splitmix(seed);
    for &k in key {
        h = splitmix(h ^ splitmix(k.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Domain tags keep streams for different purposes apart.
pub mod tag {
    pub const MARKET: u64 = 1;
    pub const KAPPA: u64 = 2;
    pub const INIT_POLICY: u64 = 3;
    pub const INIT_CRITIC: u64 = 4;
    pub const OUTER: u64 = 5;
    pub const CRITIC: u64 = 6;
    pub const ACTOR: u64 = 7;
    pub const EVAL: u64 = 8;
    pub const SYNTHETIC: u64 = 9;
    pub const WARMUP: u64 = 10;
}
