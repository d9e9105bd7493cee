//! Counter-based, splittable random streams.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// A ChaCha20 keystream addressed by `(seed, stream, counter)`.
///
/// The same triple yields the same words on every platform. Workers in a
/// parallel Monte-Carlo loop take `fork(i)` of a shared parent so the merged
/// result does not depend on how the work was scheduled.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha20Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self::at(seed, stream, 0)
    }

    pub fn at(seed: u64, stream: u64, counter: u128) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng.set_word_pos(counter);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Position in the keystream, in 32-bit words.
    pub fn counter(&self) -> u128 {
        self.rng.get_word_pos()
    }

    /// Child stream `index`, independent of the parent's counter.
    pub fn fork(&self, index: u64) -> Self {
        let stream = splitmix64(self.stream ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)));
        Self::new(self.seed, stream)
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Fills `out` with independent N(0, 1) draws (Box–Muller, pairs).
    pub fn standard_normals(&mut self, out: &mut [f64]) {
        let mut chunks = out.chunks_mut(2);
        for chunk in &mut chunks {
            let u1 = self.uniform_open();
            let u2 = self.uniform_open();
            let r = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
            chunk[0] = r * c;
            if chunk.len() > 1 {
                chunk[1] = r * s;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        let mut z = [0.0];
        self.standard_normals(&mut z);
        z[0]
    }

    /// Exp(1).
    pub fn exponential(&mut self) -> f64 {
        -self.uniform_open().ln()
    }
}

impl RngCore for RngStream {
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
