//! Counter-addressed random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 stream selected
//! by `(seed, stream_id, key)`, where `key` is the Fourier mode, path index, or
//! time step being generated. Draws therefore never depend on iteration order
//! or thread count.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoiseSeed {
    pub seed: u64,
    pub stream_id: u64,
}

impl NoiseSeed {
    pub fn new(seed: u64) -> Self {
        NoiseSeed { seed, stream_id: 0 }
    }

    pub fn with_stream(self, stream_id: u64) -> Self {
        NoiseSeed { stream_id, ..self }
    }

    /// Independent seed for a sub-stage, keyed by `tag`.
    pub fn child(&self, tag: u64) -> NoiseSeed {
        NoiseSeed {
            seed: splitmix64(self.seed ^ splitmix64(tag.wrapping_add(0x5851_f42d_4c95_7f2d))),
            stream_id: self.stream_id,
        }
    }

    /// Named sub-stage; the name is hashed with FNV-1a.
    pub fn child_named(&self, name: &str) -> NoiseSeed {
        self.child(fnv1a(name.as_bytes()))
    }

    /// Generator positioned at the start of stream `key`.
    pub fn rng(&self, key: u64) -> ChaCha8Rng {
        let mut state = self.seed ^ splitmix64(self.stream_id);
        let mut bytes = [0u8; 32];
        for chunk in bytes.chunks_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(bytes);
        rng.set_stream(key);
        rng
    }
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Uniform on `[0, 1)` from the top 53 bits of one word.
pub fn uniform(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Two independent standard normals (Box-Muller). Consumes exactly two
/// 64-bit words, so stream positions stay predictable.
pub fn normal_pair(rng: &mut impl RngCore) -> (f64, f64) {
    let u1 = 1.0 - uniform(rng);
    let u2 = uniform(rng);
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    (r * c, r * s)
}

/// Fill `out` with standard normals, consuming `2 * ceil(len / 2)` words.
pub fn fill_normal(rng: &mut impl RngCore, out: &mut [f64]) {
    let mut chunks = out.chunks_mut(2);
    for c in &mut chunks {
        let (a, b) = normal_pair(rng);
        c[0] = a;
        if c.len() > 1 {
            c[1] = b;
        }
    }
}
