//! Counter-based random streams.
//!
//! The generator is SplitMix64 used in counter mode. A stream is keyed by
//! `key = mix64(seed ^ stream_id)` and draw `k` (0-based) is
//! `mix64(key + (k + 1) * 0x9E3779B97F4A7C15)` with wrapping arithmetic, where
//! `mix64` is the SplitMix64 finalizer. Any draw can be computed directly from
//! `(seed, stream_id, k)`, so streams are reproducible in any language and
//! independent of evaluation order.
//!
//! Uniform doubles take the top 53 bits. Normals use Box-Muller on two
//! consecutive uniforms and return the cosine branch only.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream tags. The top 16 bits of a stream id name the purpose, the low 48 an index.
pub mod tag {
    pub const NET_CANDIDATES: u64 = 1;
    pub const OMEGA: u64 = 2;
    pub const BERRY: u64 = 3;
    pub const PROBES: u64 = 4;
    pub const BOOTSTRAP: u64 = 5;
    pub const SYNTHETIC_PHASE: u64 = 6;
    pub const POINTS: u64 = 7;
}

pub fn stream_id(tag: u64, index: u64) -> u64 {
    (tag << 48) | (index & 0xFFFF_FFFF_FFFF)
}

#[derive(Debug, Clone)]
pub struct Stream {
    key: u64,
    counter: u64,
}

impl Stream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Stream { key: mix64(seed ^ stream_id), counter: 0 }
    }

    pub fn tagged(seed: u64, tag: u64, index: u64) -> Self {
        Self::new(seed, stream_id(tag, index))
    }

    /// Draw `k` of this stream without advancing it.
    pub fn at(&self, k: u64) -> u64 {
        mix64(self.key.wrapping_add(k.wrapping_add(1).wrapping_mul(GOLDEN)))
    }

    pub fn next_u64(&mut self) -> u64 {
        let x = self.at(self.counter);
        self.counter += 1;
        x
    }

    /// Uniform on [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform index in 0..n (n > 0), by multiply-shift.
    pub fn index(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }
}
