//! Seedable noise source for Gumbel draws and dropout masks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Transform a uniform draw z in (0,1) into Gumbel(0,1) noise, g = -log(-log z).
pub fn gumbel_from_uniform(z: f64) -> f64 {
    -(-z.ln()).ln()
}

/// Deterministic pseudo-random stream. The same (seed, stream_id, draw
/// sequence) always reproduces the same noise; distinct stream ids give
/// independent streams of the same keyed generator.
#[derive(Debug, Clone)]
pub struct GumbelSampler {
    rng: ChaCha8Rng,
    stream_id: u64,
}

impl GumbelSampler {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        GumbelSampler { rng, stream_id }
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw clamped into [1e-12, 1 - 1e-12] so the double log is
    /// always finite.
    pub fn uniform_open(&mut self) -> f64 {
        self.rng.gen::<f64>().clamp(1e-12, 1.0 - 1e-12)
    }

    /// One Gumbel(0,1) draw.
    pub fn gumbel(&mut self) -> f64 {
        gumbel_from_uniform(self.uniform_open())
    }

    pub fn gumbel_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.gumbel()).collect()
    }

    /// Inverted-dropout mask: each entry is 0 with probability p, otherwise
    /// 1/(1-p).
    pub fn dropout_mask(&mut self, n: usize, p: f64) -> Vec<f64> {
        let keep = 1.0 / (1.0 - p);
        (0..n).map(|_| if self.rng.gen::<f64>() < p { 0.0 } else { keep }).collect()
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    #[test]
    fn gumbel_transform_analytic_points() {
        assert_abs_diff_eq!(gumbel_from_uniform((-1.0f64).exp()), 0.0, epsilon = 1e-15);
        let z = (-(-1.0f64).exp()).exp(); // e^{-e^{-1}}
        assert_abs_diff_eq!(gumbel_from_uniform(z), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn identical_seed_and_stream_reproduce_noise() {
        let a: Vec<f64> = GumbelSampler::new(9, 3).gumbel_vec(32);
        let b: Vec<f64> = GumbelSampler::new(9, 3).gumbel_vec(32);
        assert_eq!(a, b);
        let c: Vec<f64> = GumbelSampler::new(9, 4).gumbel_vec(32);
        assert_ne!(a, c);
    }

    #[test]
    fn gumbel_moments_match_the_distribution() {
        // mean = Euler-Mascheroni, variance = pi^2 / 6
        let mut s = GumbelSampler::new(2024, 0);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let g = s.gumbel();
            sum += g;
            sumsq += g * g;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!((mean - 0.5772156649).abs() < 0.01, "mean {mean}");
        assert!((var - std::f64::consts::PI.powi(2) / 6.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn dropout_mask_scales_by_inverse_keep_probability() {
        let p = 0.25;
        let mask = GumbelSampler::new(1, 0).dropout_mask(10_000, p);
        let keep = 1.0 / (1.0 - p);
        assert!(mask.iter().all(|&v| v == 0.0 || v == keep));
        let kept = mask.iter().filter(|&&v| v != 0.0).count() as f64 / 10_000.0;
        assert!((kept - 0.75).abs() < 0.02, "kept {kept}");
    }
}
