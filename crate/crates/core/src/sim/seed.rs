//! Counter-based stream derivation.
//!
//! Every random stream is a ChaCha8 keystream whose key is derived from the
//! master seed and a purpose tag, and whose 64-bit stream id is the subject
//! index. A subject's draws therefore depend only on `(master, purpose,
//! subject)` and never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SubjectRng = ChaCha8Rng;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a hash of a tag string.
pub fn tag(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Mixes a master seed with a path of integers into a child seed.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

fn key_from(seed: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    let mut s = seed;
    for chunk in key.chunks_exact_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    key
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Path,
    Censoring,
}

/// Key material for all subject streams of one cohort.
#[derive(Debug, Clone)]
pub struct SubjectStreams {
    path_key: [u8; 32],
    censor_key: [u8; 32],
}

impl SubjectStreams {
    pub fn new(master_seed: u64) -> Self {
        SubjectStreams {
            path_key: key_from(derive_seed(master_seed, &[tag("path")])),
            censor_key: key_from(derive_seed(master_seed, &[tag("censoring")])),
        }
    }

    pub fn stream(&self, subject: u64, purpose: Purpose) -> SubjectRng {
        let key = match purpose {
            Purpose::Path => self.path_key,
            Purpose::Censoring => self.censor_key,
        };
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(subject);
        rng
    }
}
