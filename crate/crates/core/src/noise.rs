//! Style noise and seed derivation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::shape::ModelShape;

pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Mixes a base seed with a path of stream identifiers (step index, stream
/// tag, ...) into an independent seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix(base), |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// The four style chunks. `z[0]` multiplies the filter bank; `z[1..4]`
/// drive the conditional normalization of generator blocks 1..3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseBundle {
    pub z: [Vec<f64>; 4],
}

impl NoiseBundle {
    pub fn zeros(dim: usize) -> Self {
        Self {
            z: std::array::from_fn(|_| vec![0.0; dim]),
        }
    }

    pub fn draw<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Self {
        Self {
            z: std::array::from_fn(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect()),
        }
    }

    pub fn dim(&self) -> usize {
        self.z[0].len()
    }

    pub fn z1(&self) -> &[f64] {
        &self.z[0]
    }

    /// `(1 - t) * a + t * b`, chunk by chunk.
    pub fn lerp(a: &NoiseBundle, b: &NoiseBundle, t: f64) -> NoiseBundle {
        Self {
            z: std::array::from_fn(|k| {
                a.z[k]
                    .iter()
                    .zip(&b.z[k])
                    .map(|(&x, &y)| (1.0 - t) * x + t * y)
                    .collect()
            }),
        }
    }

    pub fn scaled(&self, s: f64) -> NoiseBundle {
        Self {
            z: std::array::from_fn(|k| self.z[k].iter().map(|v| v * s).collect()),
        }
    }
}

/// Draws `count` bundles of standard-normal coordinates. Bundle `i` depends
/// only on `(seed, i)`, so prefixes of different counts agree.
pub fn sample_noise(seed: u64, count: usize, shape: &ModelShape) -> Vec<NoiseBundle> {
    (0..count)
        .map(|i| {
            let mut rng = rng_from_seed(derive_seed(seed, &[i as u64]));
            NoiseBundle::draw(&mut rng, shape.noise_chunk_dim)
        })
        .collect()
}
