//! Counter-based random streams.
//!
//! Every random bit in the crate is a pure function of `(seed, stream index,
//! position)`. The mixing function is the SplitMix64 finalizer applied to a
//! Weyl-sequence counter; it is versioned by [`RNG_VERSION`] and must never
//! change without bumping that tag, since golden tests and run manifests
//! depend on it.
//!
//! Sample `i` of a run uses stream `i`; edge `j` of that sample consumes
//! position `j`. Nothing depends on evaluation order, so results are the
//! same for any number of workers.

pub const RNG_VERSION: &str = "splitmix64-ctr/1";

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_SALT: u64 = 0xD1B5_4A32_D192_ED03;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key of stream `index` under master seed `seed`.
#[inline]
pub fn stream_key(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_mul(GAMMA) ^ STREAM_SALT))
}

/// Raw 64-bit value at `pos` of the stream with key `key`.
#[inline]
pub fn value_at(key: u64, pos: u64) -> u64 {
    mix64(key.wrapping_add(pos.wrapping_add(1).wrapping_mul(GAMMA)))
}

/// Top 53 bits as a uniform in [0,1).
#[inline]
pub fn unit_f64(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Open/closed draw used for every edge in the crate.
#[inline]
pub fn bernoulli_at(key: u64, pos: u64, p: f64) -> bool {
    unit_f64(value_at(key, pos)) < p
}

/// Derive an independent seed for a labelled sub-experiment.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix64(seed.wrapping_add(mix64(tag ^ 0x5851_F42D_4C95_7F2D)))
}

/// Sequential reader over one stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    key: u64,
    pos: u64,
}

impl RngStream {
    pub fn new(seed: u64, index: u64) -> Self {
        Self {
            key: stream_key(seed, index),
            pos: 0,
        }
    }

    /// Start reading at `pos`.
    pub fn at(seed: u64, index: u64, pos: u64) -> Self {
        Self {
            key: stream_key(seed, index),
            pos,
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = value_at(self.key, self.pos);
        self.pos += 1;
        v
    }

    pub fn next_f64(&mut self) -> f64 {
        unit_f64(self.next_u64())
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Standard normal via Box-Muller (consumes two positions).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }
}
