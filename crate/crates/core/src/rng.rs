//! Counter-addressed random streams.
//!
//! Every random draw in the crate comes from a stream keyed by the master
//! seed plus a tuple of counters (domain, round, worker, step, ...). Streams
//! never share state, so results are independent of execution order and
//! thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;

/// Stream type handed to every sampler.
pub type StreamRng = ChaCha8Rng;

/// Domain tags separating independent families of streams.
pub mod domain {
    pub const OPTIM: u64 = 0x6f70_7469_6d00_0001;
    pub const SDE: u64 = 0x7364_6500_0000_0002;
    pub const EPOCH: u64 = 0x6570_6f63_6800_0003;
    pub const HARNESS: u64 = 0x6861_726e_6573_0004;
    pub const MODEL: u64 = 0x6d6f_6465_6c00_0005;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed and a counter tuple into a 64-bit key.
pub fn derive_key(seed: u64, counters: &[u64]) -> u64 {
    counters
        .iter()
        .fold(splitmix64(seed), |h, &c| splitmix64(h ^ splitmix64(c.wrapping_add(0x5851_f42d_4c95_7f2d))))
}

/// Opens the stream addressed by `(seed, counters)`.
pub fn stream(seed: u64, counters: &[u64]) -> StreamRng {
    let key = derive_key(seed, counters);
    let mut bytes = [0u8; 32];
    for (i, chunk) in bytes.chunks_mut(8).enumerate() {
        chunk.copy_from_slice(&splitmix64(key.wrapping_add(i as u64)).to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// Standard normal draw truncated (by rejection) to `[-bound, bound]`.
pub fn truncated_normal<T: Real, R: Rng + ?Sized>(rng: &mut R, bound: f64) -> T {
    loop {
        let g: f64 = rng.sample(StandardNormal);
        if g.abs() <= bound {
            return T::lit(g);
        }
    }
}

/// Untruncated standard normal draw.
pub fn standard_normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(rng.sample::<f64, _>(StandardNormal))
}
