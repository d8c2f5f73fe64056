//! Counter-based random streams.
//!
//! A draw is a pure function of `(key, counter)`, where the key is derived
//! from `(run_seed, question_id, purpose)`. Execution order therefore never
//! changes what a given question sees at a given step.

use rand::RngCore;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stable 64-bit FNV-1a, used to turn question ids into stream keys.
pub fn hash_id(id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in id.as_bytes() {
        h ^= *byte as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Independent sub-streams of one question.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Chain = 1,
    VerifierNoise = 2,
    Dataset = 3,
    Trial = 4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn new(run_seed: u64, question: u64, purpose: Purpose) -> Self {
        let k = mix64(run_seed ^ GOLDEN);
        let k = mix64(k ^ question.wrapping_mul(GOLDEN));
        Self(mix64(k ^ (purpose as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93)))
    }

    pub fn for_question(run_seed: u64, question_id: &str, purpose: Purpose) -> Self {
        Self::new(run_seed, hash_id(question_id), purpose)
    }

    /// Child key, e.g. one per Monte Carlo trial.
    pub fn split(self, index: u64) -> Self {
        Self(mix64(self.0 ^ mix64(index.wrapping_add(GOLDEN))))
    }

    pub fn bits(self, counter: u64) -> u64 {
        mix64(mix64(self.0 ^ counter.wrapping_mul(GOLDEN)).wrapping_add(self.0))
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(self, counter: u64) -> f64 {
        (self.bits(counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn stream(self) -> CounterRng {
        CounterRng { key: self, counter: 0 }
    }
}

/// Sequential view of a stream for use with `rand` distributions.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: StreamKey,
    counter: u64,
}

impl CounterRng {
    pub fn at(key: StreamKey, counter: u64) -> Self {
        Self { key, counter }
    }
}

impl RngCore for CounterRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        let v = self.key.bits(self.counter);
        self.counter = self.counter.wrapping_add(1);
        v
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let v = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }
}
