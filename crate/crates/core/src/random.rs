//! Seedable, splittable random streams.
//!
//! Every stochastic routine in the crate takes a [`RandomStream`] explicitly. Parallel work
//! derives one substream per task from a path such as `(replication, iteration, particle)`, so
//! results never depend on scheduling or on the number of worker threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Deterministic random stream keyed by a seed and a substream path.
#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    path: Vec<u64>,
    rng: ChaCha12Rng,
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_key(seed: u64, path: &[u64]) -> [u8; 32] {
    // Absorb the seed, the path length and every element so that prefixes
    // of a path never collide with the path itself.
    let mut state = seed ^ 0x5DEE_CE66_D1CE_4E5B;
    let mut acc = splitmix(&mut state);
    for &p in std::iter::once(&(path.len() as u64)).chain(path) {
        state ^= p.wrapping_mul(0xD6E8_FEB8_6659_FD93).rotate_left(17) ^ acc;
        acc = splitmix(&mut state);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix(&mut state).to_le_bytes());
    }
    key
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self::with_path(seed, Vec::new())
    }

    fn with_path(seed: u64, path: Vec<u64>) -> Self {
        let rng = ChaCha12Rng::from_seed(derive_key(seed, &path));
        Self { seed, path, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Child stream at `self.path ++ [index]`. Independent of how much of
    /// `self` has already been consumed.
    pub fn substream(&self, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push(index);
        Self::with_path(self.seed, path)
    }

    /// Child stream at `self.path ++ suffix`.
    pub fn derive(&self, suffix: &[u64]) -> Self {
        let mut path = self.path.clone();
        path.extend_from_slice(suffix);
        Self::with_path(self.seed, path)
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn open01(&mut self) -> f64 {
        loop {
            let u = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            if u > 0.0 {
                return u;
            }
        }
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
