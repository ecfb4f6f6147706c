//! Seed splitting.
//!
//! One root seed fans out into independent ChaCha streams addressed by a
//! path of integers (trajectory index, step index, ...). A stream depends
//! only on its path, so results never depend on execution order or on how
//! many worker threads ran the trajectories.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for `root` addressed by `path`.
pub fn stream(root: u64, path: &[u64]) -> StreamRng {
    let mut state = root;
    let mut acc = splitmix64(&mut state);
    for &p in path {
        state ^= p.wrapping_mul(0xD6E8_FEB8_6659_FD93).wrapping_add(acc);
        acc = splitmix64(&mut state);
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// A `u64` seed for a sub-run addressed by `path`.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    stream(root, path).next_u64()
}

pub fn standard_normal(rng: &mut impl Rng, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

pub fn normal_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    standard_normal(rng, &mut v);
    v
}
