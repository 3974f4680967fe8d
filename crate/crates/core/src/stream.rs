//! Splittable, counter-based uniform streams.
//!
//! A stream is a 64-bit key plus a draw counter. Draws are SplitMix64 outputs
//! indexed by `(key, counter)`; splitting derives fresh keys from the parent's
//! next output, so a stream and its descendants are reproducible from the
//! root seed and the sequence of operations applied to it.

use rand::RngCore;

/// Identifier recorded in output files.
pub const STREAM_ALGORITHM: &str = "splitmix64-keyed-split-v1";

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const LEFT_SALT: u64 = 0x243F_6A88_85A3_08D3;
const RIGHT_SALT: u64 = 0x1319_8A2E_0370_7344;
const JOIN_SALT: u64 = 0xA409_3822_299F_31D0;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RandomStream {
    key: u64,
    counter: u64,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self {
            key: mix64(seed ^ GOLDEN_GAMMA),
            counter: 0,
        }
    }

    /// The stream reached from `seed` by following `path` through successive
    /// splits (`false` = first child, `true` = second child).
    pub fn from_path(seed: u64, path: &[bool]) -> Self {
        path.iter().fold(Self::new(seed), |s, &right| {
            let (a, b) = s.split();
            if right {
                b
            } else {
                a
            }
        })
    }

    /// Independent stream for replicate `index` of a run seeded with `seed`.
    pub fn for_replicate(seed: u64, index: u64) -> Self {
        Self {
            key: mix64(mix64(seed ^ GOLDEN_GAMMA) ^ mix64(index.wrapping_add(RIGHT_SALT))),
            counter: 0,
        }
    }

    pub fn next_raw(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn next_uniform(&mut self) -> f64 {
        (self.next_raw() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn split(mut self) -> (RandomStream, RandomStream) {
        let base = self.next_raw();
        (
            RandomStream {
                key: mix64(base ^ LEFT_SALT),
                counter: 0,
            },
            RandomStream {
                key: mix64(base ^ RIGHT_SALT),
                counter: 0,
            },
        )
    }

    /// Splits off a child stream and continues with the other half in place.
    pub fn fork(&mut self) -> RandomStream {
        let (child, rest) = self.clone().split();
        *self = rest;
        child
    }

    /// Deterministically merges several streams into one.
    pub fn join(streams: &[RandomStream]) -> RandomStream {
        let key = streams.iter().fold(JOIN_SALT, |acc, s| {
            mix64(acc ^ mix64(s.key.wrapping_add(s.counter.wrapping_mul(GOLDEN_GAMMA))))
        });
        RandomStream { key, counter: 0 }
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_raw() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next_raw()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_raw().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
