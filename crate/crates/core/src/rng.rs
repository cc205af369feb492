//! Portable pseudo-random stream used for every shuffle in the toolkit.
//!
//! Splits and mixes must be reproducible across machines and across
//! re-implementations in other languages, so the generator is fixed here
//! instead of delegating to a library whose stream may change between
//! versions:
//!
//! * generator: SplitMix64 (`state += 0x9E3779B97F4A7C15`, then the standard
//!   two xor-shift-multiply finalisation rounds), state initialised to the
//!   seed;
//! * bounded draws: `(next_u64() as u128 * bound as u128) >> 64`;
//! * shuffle: Fisher-Yates, iterating `i` from `len - 1` down to `1` and
//!   swapping `i` with a bounded draw in `0..=i`;
//! * uniform reals: `(next_u64() >> 11) * 2^-53`.

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in `0..bound`. `bound` must be positive.
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        ((self.next_u64() as u128 * bound as u128) >> 64) as u64
    }

    /// Uniform draw in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
