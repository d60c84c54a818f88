use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Seedable, splittable source of randomness.
#[derive(Clone, Debug)]
pub struct RandomSource(ChaCha12Rng);

impl RandomSource {
    pub fn seed(seed: u64) -> Self {
        RandomSource(ChaCha12Rng::seed_from_u64(seed))
    }

    /// Independent child stream; advances this source.
    pub fn split(&mut self) -> Self {
        let mut seed = [0u8; 32];
        self.0.fill_bytes(&mut seed);
        RandomSource(ChaCha12Rng::from_seed(seed))
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.0.gen::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeding_is_deterministic() {
        let mut a = RandomSource::seed(7);
        let mut b = RandomSource::seed(7);
        assert_eq!(a.next_u64(), b.next_u64());
        let mut ca = a.split();
        let mut cb = b.split();
        assert_eq!(ca.uniform(), cb.uniform());
        assert_ne!(RandomSource::seed(8).next_u64(), RandomSource::seed(7).next_u64());
    }
}
