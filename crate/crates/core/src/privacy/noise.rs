use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

/// Mixes a master seed with a path of indices (SplitMix64 finalizer per
/// step), so `(master, [cell, client])` names an independent stream.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    path.iter()
        .fold(mix(master), |acc, &idx| mix(acc ^ mix(idx)))
}

/// A seedable Gaussian noise source. Streams built from the same seed but
/// different stream ids never overlap.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha20Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    pub fn gaussian(&mut self, sigma: f64, dimension: usize) -> Array1<f64> {
        sample_gaussian_noise(sigma, dimension, &mut self.rng)
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }
}

/// `dimension` independent `N(0, σ²)` draws. `σ = 0` yields zeros without
/// consuming randomness.
pub fn sample_gaussian_noise<R: Rng + ?Sized>(
    sigma: f64,
    dimension: usize,
    rng: &mut R,
) -> Array1<f64> {
    if sigma == 0.0 {
        return Array1::zeros(dimension);
    }
    Array1::from_shape_fn(dimension, |_| sigma * rng.sample::<f64, _>(StandardNormal))
}
