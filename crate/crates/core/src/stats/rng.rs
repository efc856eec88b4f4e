use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded random stream backed by ChaCha8.
///
/// The same seed and the same sequence of calls reproduce the same draws.
/// `position` counts the 32-bit words consumed so far.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    position: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Independent stream `stream` under the same seed. Used to give
    /// replicate chains or per-order fits their own generator.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        RngStream {
            seed,
            stream,
            position: 0,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        loop {
            let bits = self.next_u64() >> 11;
            if bits != 0 {
                return bits as f64 * (1.0 / (1u64 << 53) as f64);
            }
        }
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.position += 1;
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.position += 2;
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.position += dst.len().div_ceil(4) as u64;
        self.inner.fill_bytes(dst)
    }
}
