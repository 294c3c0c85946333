//! Counter-based hashing used to realize random fields without state.
//!
//! Every random quantity in the crate is a pure function of a 64-bit key and
//! a counter. Keys are built by folding seeds, stream tags, replicate ids and
//! lattice coordinates through the SplitMix64 finalizer, which is a bijection
//! on `u64`; the output for a given key never depends on evaluation order.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer (Stafford variant 13).
#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds one more word into a key.
#[inline(always)]
pub fn fold(key: u64, word: u64) -> u64 {
    mix64(key.wrapping_add(GOLDEN) ^ mix64(word.wrapping_add(GOLDEN)))
}

/// Derives an independent seed from a parent seed and a tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    fold(fold(0x5EED_0000_0000_0001, seed), tag)
}

/// Folds lattice coordinates into a key.
#[inline(always)]
pub fn fold_coords(mut key: u64, coords: &[i64]) -> u64 {
    for &c in coords {
        key = fold(key, c as u64);
    }
    key
}

/// The `n`-th 64-bit output for a key.
#[inline(always)]
pub fn draw(key: u64, n: u64) -> u64 {
    mix64(key ^ n.wrapping_add(1).wrapping_mul(GOLDEN))
}

/// Maps 64 random bits to the open interval (0, 1) with 52-bit resolution.
#[inline(always)]
pub fn unit_open(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Small sequential generator built on the same mixer, for auxiliary draws
/// whose keys are themselves derived deterministically.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let out = draw(self.key, self.counter);
        self.counter += 1;
        out
    }

    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        unit_open(self.next_u64())
    }

    /// Uniform integer in `0..bound`.
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        // Lemire multiply-shift; bias is below 2^-64 * bound and irrelevant here.
        ((self.next_u64() as u128 * bound as u128) >> 64) as u64
    }
}
