//! Seeded synthetic data: two Gaussian embedding clusters and random images.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::features::{EmbeddingDataset, EmbeddingRecord, ImageBuffer, Label};

/// Spread of the shared cluster centre around zero.
const CENTRE_SCALE: f64 = 0.05;

/// Two isotropic Gaussian clusters in the concatenated `3 × dim` embedding
/// space. The class means sit at `centre ± (separation·σ/2)·s` for a random
/// sign vector `s`, so they differ by `separation·σ` in every coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoClusters {
    pub dim: usize,
    pub sigma: f64,
    pub separation: f64,
    centre: Vec<f64>,
    direction: Vec<f64>,
}

impl TwoClusters {
    pub fn new(dim: usize, sigma: f64, separation: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, CENTRE_SCALE).expect("finite scale");
        let centre = (0..3 * dim).map(|_| normal.sample(&mut rng)).collect();
        let direction = (0..3 * dim).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        TwoClusters {
            dim,
            sigma,
            separation,
            centre,
            direction,
        }
    }

    /// Class mean, concatenated over the three modalities.
    pub fn mean(&self, label: Label) -> Vec<f64> {
        let half = 0.5 * self.separation * self.sigma;
        let sign = if label == Label::Fake { 1.0 } else { -1.0 };
        self.centre.iter().zip(&self.direction).map(|(c, s)| c + sign * half * s).collect()
    }

    /// Unit-step direction from the real mean towards the fake mean.
    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    /// `n` records with alternating labels (fake first), ids `{prefix}-{i}`.
    pub fn sample(&self, n: usize, seed: u64, prefix: &str) -> EmbeddingDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, self.sigma).expect("finite sigma");
        let means = [self.mean(Label::Real), self.mean(Label::Fake)];
        let records = (0..n)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Fake } else { Label::Real };
                let x: Vec<f32> = means[label.index()]
                    .iter()
                    .map(|m| (m + noise.sample(&mut rng)) as f32)
                    .collect();
                EmbeddingRecord {
                    id: format!("{prefix}-{i}"),
                    label,
                    visual: x[..self.dim].to_vec(),
                    text: x[self.dim..2 * self.dim].to_vec(),
                    freq: x[2 * self.dim..].to_vec(),
                }
            })
            .collect();
        EmbeddingDataset::new(records)
    }
}

/// Uniform random pixels.
pub fn random_image(height: usize, width: usize, channels: usize, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageBuffer::from_fn(height, width, channels, |_, _, _| rng.random()).expect("valid size")
}

/// Smooth gradient plus sinusoidal texture and mild noise, values inside `[0.1, 0.9]`.
pub fn textured_image(height: usize, width: usize, channels: usize, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: [f64; 3] = [rng.random(), rng.random(), rng.random()];
    let freq = 0.3 + rng.random::<f64>();
    ImageBuffer::from_fn(height, width, channels, |y, x, c| {
        let ramp = (y + x) as f64 / (height + width) as f64;
        let wave = (freq * x as f64 + 6.0 * phase[c]).sin() * (0.7 * freq * y as f64).cos();
        let value = 0.5 + 0.2 * (ramp - 0.5) + 0.15 * wave + 0.05 * (rng.random::<f64>() - 0.5);
        value.clamp(0.1, 0.9)
    })
    .expect("valid size")
}
