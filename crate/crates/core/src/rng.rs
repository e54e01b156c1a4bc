//! Seeded random streams.
//!
//! Every random quantity in the toolkit comes from a ChaCha8 generator, which is
//! counter-based: a `(seed, stream)` pair selects an independent keystream. The
//! stream-splitting rule is fixed:
//!
//! * model tensors use `stream = fnv1a64(tensor_name)`, so adding a tensor never
//!   shifts the draws of another one;
//! * probe `i` of a probe set uses `stream = i`;
//! * the two null-baseline matrices of a trial use streams `1` and `2`.
//!
//! Determinism holds within this implementation; no cross-implementation
//! bit-exactness is promised.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha8Rng;

/// 64-bit FNV-1a hash, used to key named substreams.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Opens substream `stream` of the generator seeded with `seed`.
pub fn substream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Substream keyed by a name.
pub fn named_stream(seed: u64, name: &str) -> StreamRng {
    substream(seed, fnv1a64(name.as_bytes()))
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Normal with standard deviation `std`, truncated (by rejection) to two
/// standard deviations.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    loop {
        let z = standard_normal(rng);
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}
