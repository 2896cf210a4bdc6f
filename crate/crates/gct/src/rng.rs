use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent deterministic stream from a base seed and a path of
/// sub-indices (e.g. `[seed_index, game_index]`).
pub fn stream(base_seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut state = splitmix64(base_seed ^ 0x6a09_e667_f3bc_c908);
    for &p in path {
        state = splitmix64(state ^ splitmix64(p.wrapping_add(0x9e37_79b9)));
    }
    ChaCha8Rng::seed_from_u64(state)
}
