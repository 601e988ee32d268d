//! Counter-derived random streams.
//!
//! Every unit of work (a simulated gene, a bootstrap replicate) draws from its
//! own ChaCha stream seeded from the master seed and the unit's indices, so
//! results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DOMAIN_SIMULATION: u64 = 0x5349_4d55;
pub const DOMAIN_BOOTSTRAP: u64 = 0x424f_4f54;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for `(master, domain, indices...)`.
pub fn stream(master: u64, domain: u64, indices: &[u64]) -> ChaCha8Rng {
    let mut state = splitmix64(master ^ splitmix64(domain));
    for &i in indices {
        state = splitmix64(state ^ splitmix64(i.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
