//! Counter-based random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream keyed by
//! `(seed, stream)`. Disorder always uses stream 0 and replica `r` uses
//! stream `r + 1`, so parallel chains never share generator state and the
//! results do not depend on scheduling.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use statrs::function::erf::erfc_inv;

pub const DISORDER_STREAM: u64 = 0;
const ETA_STREAM_BASE: u64 = 1 << 40;

pub fn replica_stream(replica: usize) -> u64 {
    replica as u64 + 1
}

/// Stream for the `draw`-th independent cavity field.
pub fn eta_stream(draw: usize) -> u64 {
    ETA_STREAM_BASE + draw as u64
}

/// SplitMix64 finalizer applied to `base ^ f(index)`; used to derive
/// per-draw seeds from a single experiment seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Quantile function of the standard normal distribution.
#[inline]
pub fn inverse_normal_cdf(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

#[derive(Debug, Clone)]
pub struct StreamRng {
    inner: ChaCha8Rng,
}

impl StreamRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        StreamRng { inner }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on the open interval (0, 1), on a 2^-53 grid.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal variate by inversion.
    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        inverse_normal_cdf(self.uniform())
    }

    #[inline]
    pub fn spin(&mut self) -> i8 {
        if self.inner.next_u64() >> 63 == 1 {
            1
        } else {
            -1
        }
    }
}
