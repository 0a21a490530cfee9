//! Seeded, splittable random streams.
//!
//! Every Monte Carlo replica owns one [`RngStream`] identified by a
//! `(seed, stream_id)` pair. Identical pairs reproduce identical output byte
//! for byte; distinct pairs are independent for all practical purposes. The
//! concrete generator is ChaCha8 with the stream id mapped onto the cipher's
//! 64-bit stream counter, so replicas can be scheduled on any number of
//! threads without affecting results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Identifier of one reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Instantiate the generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// A derived stream, for operations that internally need several
    /// independent sources (e.g. the two halves of a two-sided path).
    /// Substreams of distinct `(stream_id, k)` pairs never collide because the
    /// mixing function is a bijection applied to distinct inputs.
    pub fn substream(&self, k: u64) -> RngStream {
        RngStream {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        }
    }
}

/// splitmix64 finalizer; a bijection on u64 with good avalanche behavior.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Two independent uniforms in (0,1) from a single counter value, used by the
/// counter-based Gaussian below.
fn counter_uniforms(key: u64, counter: u64) -> (f64, f64) {
    let a = splitmix64(key ^ counter);
    let b = splitmix64(a ^ 0xD1B5_4A32_D192_ED03);
    // 53-bit mantissas, offset by half an ulp so the result is never 0.
    let u1 = ((a >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0);
    let u2 = ((b >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0);
    (u1, u2)
}

/// Standard normal draw that is a pure function of `(key, counter)`.
///
/// Used by the lazily sampled white-noise columns, which must regenerate
/// identically when replayed. Box–Muller on two counter uniforms.
pub fn counter_gaussian(key: u64, counter: u64) -> f64 {
    let (u1, u2) = counter_uniforms(key, counter);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
