use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable seed for one sentence: a function of the global seed and the
/// sentence's position only, so results do not depend on processing order.
pub fn sentence_seed(global_seed: u64, source_id: &str, index: u64) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &global_seed.to_le_bytes());
    h = fnv1a(h, source_id.as_bytes());
    h = fnv1a(h, &[0xff]);
    h = fnv1a(h, &index.to_le_bytes());
    mix64(h)
}

/// Derives an independent child seed from a parent seed and a label.
pub fn child_seed(seed: u64, label: &str) -> u64 {
    mix64(fnv1a(fnv1a(FNV_OFFSET, &seed.to_le_bytes()), label.as_bytes()))
}

/// Seeded random stream; identical seeds produce identical draws.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn for_sentence(global_seed: u64, source_id: &str, index: u64) -> Self {
        Self::new(sentence_seed(global_seed, source_id, index))
    }

    /// A fresh stream for a labelled sub-task of this stream's seed.
    pub fn child(&self, label: &str) -> Self {
        Self::new(child_seed(self.seed, label))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// Uniform float in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn coin(&mut self) -> bool {
        self.inner.gen::<bool>()
    }

    /// Standard normal draw (Box-Muller).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}
