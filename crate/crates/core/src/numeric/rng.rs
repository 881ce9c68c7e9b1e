//! Deterministic seedable random streams on top of splitmix64.
//!
//! The generator is the splitmix64 reference: the state advances by the
//! 64-bit golden-ratio constant and each output is the standard two-round
//! mixer of the new state. Output `n` of stream `(seed, id)` is therefore a
//! pure hash of `(seed, id, n)`, which is what makes per-image and per-epoch
//! substreams cheap and order-independent.
//!
//! Stream derivation XORs the seed with `mix(id * GOLDEN)`, so stream id 0
//! reproduces plain splitmix64 on the seed, bit for bit.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(z: u64) -> u64 {
    let z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    let z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a stream id from structured parts (tags, epoch, image index, ...).
///
/// A fold of the splitmix64 mixer; stable across releases since checkpoints
/// and reproducibility depend on it.
pub fn stream_id(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0u64, |acc, &p| mix(acc.wrapping_add(GOLDEN).wrapping_add(p)))
}

/// A single-owner deterministic random stream.
///
/// Identical `(seed, stream id)` always yields the identical sequence,
/// independent of what other streams exist or on which thread it runs.
/// Parallel work never shares a stream; it derives children instead, either
/// with [`RandomStream::new`] and a [`stream_id`] or via [`RandomStream::fork`].
#[derive(Debug, Clone)]
pub struct RandomStream {
    state: u64,
    stream: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        RandomStream { state: seed ^ mix(stream.wrapping_mul(GOLDEN)), stream }
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Child stream derived from the current state; does not advance `self`.
    pub fn fork(&self, child: u64) -> RandomStream {
        RandomStream::new(mix(self.state), child)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[0, 1)` with 24 random bits. Consumes one `u64`, so f32
    /// and f64 paths advance the stream identically.
    #[inline]
    pub fn next_f32(&mut self) -> f32 {
        (self.next_u64() >> 40) as f32 * (1.0 / (1u32 << 24) as f32)
    }

    /// Uniform in `[lo, hi)`.
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)` via the widening-multiply reduction.
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Bernoulli draw with probability `p`.
    #[inline]
    pub fn chance(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            xs.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent transcription of the published splitmix64 algorithm,
    // kept separate from the implementation above on purpose.
    struct RefSplitMix(u64);
    impl RefSplitMix {
        fn next(&mut self) -> u64 {
            self.0 = self.0.wrapping_add(0x9E3779B97F4A7C15);
            let mut z = self.0;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
            z ^ (z >> 31)
        }
    }

    #[test]
    fn stream_zero_matches_reference_generator() {
        // First output for seed 0 is the widely published test value.
        let mut s = RandomStream::new(0, 0);
        assert_eq!(s.next_u64(), 0xE220_A839_7B1D_CDAF);

        let mut s = RandomStream::new(0xDEAD_BEEF, 0);
        let mut r = RefSplitMix(0xDEAD_BEEF);
        for _ in 0..100 {
            assert_eq!(s.next_u64(), r.next());
        }
    }

    #[test]
    fn same_seed_same_sequence() {
        let mut a = RandomStream::new(42, 7);
        let mut b = RandomStream::new(42, 7);
        for _ in 0..64 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_streams_differ_immediately() {
        let mut a = RandomStream::new(42, 1);
        let mut b = RandomStream::new(42, 2);
        for _ in 0..4 {
            assert_ne!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn unit_draws_stay_in_range() {
        let mut s = RandomStream::new(3, 9);
        for _ in 0..1000 {
            let x = s.next_f64();
            assert!((0.0..1.0).contains(&x));
            let y = s.next_f32();
            assert!((0.0..1.0).contains(&y));
        }
    }

    #[test]
    fn fork_does_not_advance_parent() {
        let parent = RandomStream::new(5, 0);
        let mut c0 = parent.fork(0);
        let mut c1 = parent.fork(1);
        assert_ne!(c0.next_u64(), c1.next_u64());
        let mut again = parent.fork(0);
        let mut c0b = parent.fork(0);
        assert_eq!(again.next_u64(), c0b.next_u64());
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut s = RandomStream::new(11, 0);
        let mut xs: Vec<usize> = (0..100).collect();
        s.shuffle(&mut xs);
        let mut sorted = xs.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
        assert_ne!(xs, (0..100).collect::<Vec<_>>());
    }
}
