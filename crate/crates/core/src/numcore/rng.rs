//! Seeded, splittable random streams.
//!
//! Every stream is a ChaCha8 keystream (a counter-based generator) keyed by the
//! 64-bit run seed. A stream is addressed by a label path such as
//! `"init/rnn.w_i"`; the 64-bit FNV-1a hash of that path selects the ChaCha
//! stream id. Streams with different labels never overlap, so adding a new
//! random site leaves every existing site's draws untouched.

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const RNG_ALGORITHM: &str = "chacha8-fnv1a-streams";

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    label: String,
    inner: ChaCha8Rng,
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Rng {
    /// Root stream for a run seed.
    pub fn new(seed: u64) -> Self {
        Self::at(seed, String::new())
    }

    fn at(seed: u64, label: String) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(fnv1a(&label));
        Self { seed, label, inner }
    }

    /// Independent child stream named `label` (nested as `parent/label`).
    pub fn substream(&self, label: &str) -> Self {
        let path = if self.label.is_empty() { label.to_string() } else { format!("{}/{}", self.label, label) };
        Self::at(self.seed, path)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Number of 32-bit words consumed so far in this stream.
    pub fn position(&self) -> u128 {
        self.inner.get_word_pos()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.gen()
    }

    /// Draw from U[lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.gen::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        xs.shuffle(&mut self.inner);
    }
}
