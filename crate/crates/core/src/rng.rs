//! Deterministic random streams keyed by `(seed, label)`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the label bytes. Stable across platforms and releases, unlike
/// `std`'s default hasher.
pub fn label_digest(label: &str) -> u64 {
    fnv1a(label.as_bytes())
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// A single-owner pseudo-random stream.
///
/// Two streams built from the same seed and label produce the same sequence;
/// different labels under one seed are independent ChaCha streams, so the
/// sender, receiver, channel and eavesdropper each draw from their own.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    label: String,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, label: impl Into<String>) -> Self {
        let label = label.into();
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(label_digest(&label));
        Self { seed, label, inner }
    }

    /// Derives a child stream with label `"{parent}/{child}"`.
    pub fn fork(&self, child: &str) -> Self {
        Self::new(self.seed, format!("{}/{}", self.label, child))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Uniform draw in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn bit(&mut self) -> bool {
        self.inner.next_u64() >> 63 == 1
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
