//! Seeded random generation with splittable substreams.
//!
//! Every random draw in the crate flows through [`SeedRng`]. A substream is a
//! pure function of `(master seed, label, index)`: the 256-bit ChaCha8 key is
//! derived by running splitmix64 over the master seed, an FNV-1a hash of the
//! label, and the index. Identical `(seed, label, index)` triples therefore
//! produce bit-identical streams on every run, and distinct triples produce
//! statistically independent streams.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{CoreError, Result};
use crate::tensor::ImageTensor;

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic generator; the unit of ownership for one worker or one job.
#[derive(Clone, Debug)]
pub struct SeedRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeedRng {
    /// Root stream for a master seed (equivalent to `substream("root", 0)`).
    pub fn new(seed: u64) -> Self {
        Self::derive(seed, "root", 0)
    }

    /// Master seed this stream (and all of its substreams) descends from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream keyed by `(master seed, label, index)`.
    ///
    /// Derivation does not consume state: two calls with the same key return
    /// identical streams regardless of draws made on `self` in between.
    pub fn substream(&self, label: &str, index: u64) -> Self {
        Self::derive(self.seed, label, index)
    }

    fn derive(seed: u64, label: &str, index: u64) -> Self {
        let mut state = seed ^ fnv1a(label.as_bytes()).rotate_left(17) ^ index.wrapping_mul(0x9e3779b97f4a7c15);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self {
            seed,
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn uniform01(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform01()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// Uniform integer in `[1, t_max]` (diffusion timestep draw).
    pub fn timestep(&mut self, t_max: usize) -> usize {
        self.inner.gen_range(1..=t_max)
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.standard_normal();
        }
    }
}

/// Tensor of i.i.d. standard normal entries drawn from `rng`.
pub fn gaussian_noise(
    rng: &mut SeedRng,
    channels: usize,
    height: usize,
    width: usize,
) -> Result<ImageTensor> {
    if channels == 0 || height == 0 || width == 0 {
        return Err(CoreError::invalid(format!(
            "gaussian_noise requires a positive shape, got [{channels}, {height}, {width}]"
        )));
    }
    let mut t = ImageTensor::zeros(channels, height, width);
    rng.fill_standard_normal(t.data_mut());
    Ok(t)
}
