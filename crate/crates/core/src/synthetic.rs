//! Seeded synthetic data sets for tests and demonstrations.

use ndarray::{Array1, Array2, Array4};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::io::{ActivationBundle, HumanJudgmentMatrix, Layout, PoolSpec, WeightBundle};

/// Parameters of a planted-subspace data set: a few channels encode a latent
/// variable that also drives the human judgments, the rest are noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedConfig {
    pub n_images: usize,
    pub n_channels: usize,
    pub n_planted: usize,
    pub map_size: usize,
    /// Upper bound of the uniform noise channels.
    pub noise_scale: f64,
    /// Half-width of the uniform noise added to each judgment.
    pub judgment_noise: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            n_images: 24,
            n_channels: 16,
            n_planted: 6,
            map_size: 4,
            noise_scale: 1.5,
            judgment_noise: 0.05,
            seed: 20_240_611,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedDataset {
    pub activations: ActivationBundle,
    pub judgments: HumanJudgmentMatrix,
    /// Sorted indices of the planted channels.
    pub planted: Vec<usize>,
    pub latent: Array2<f64>,
}

pub fn planted(cfg: &PlantedConfig) -> Result<PlantedDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, k, s) = (cfg.n_images, cfg.n_channels, cfg.map_size);

    let mut channels: Vec<usize> = (0..k).collect();
    channels.shuffle(&mut rng);
    let mut planted = channels[..cfg.n_planted].to_vec();
    planted.sort_unstable();

    let latent = Array2::from_shape_fn((n, cfg.n_planted), |_| rng.random::<f64>());
    let mut data = Array4::zeros((n, k, s, s));
    for t in 0..n {
        for c in 0..k {
            let level = match planted.binary_search(&c) {
                Ok(j) => 0.2 + latent[[t, j]],
                Err(_) => cfg.noise_scale * rng.random::<f64>(),
            };
            for r in 0..s {
                for q in 0..s {
                    data[[t, c, r, q]] = level * (0.9 + 0.2 * rng.random::<f64>());
                }
            }
        }
    }

    // closer latents, more similar
    let mut h = Array2::eye(n);
    for t in 0..n {
        for u in t + 1..n {
            let d2: f64 = latent
                .row(t)
                .iter()
                .zip(latent.row(u))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let noise = cfg.judgment_noise * (2.0 * rng.random::<f64>() - 1.0);
            h[[t, u]] = (-d2 / 0.5).exp() + noise;
            h[[u, t]] = h[[t, u]];
        }
    }
    Ok(PlantedDataset {
        activations: ActivationBundle::new(data, Layout::ChannelMajor)?,
        judgments: HumanJudgmentMatrix::new(h)?,
        planted,
        latent,
    })
}

/// Random non-negative activations with roughly `zero_fraction` exact zeros.
pub fn random_activations(
    rng: &mut impl Rng,
    shape: (usize, usize, usize, usize),
    zero_fraction: f64,
) -> Array4<f64> {
    Array4::from_shape_fn(shape, |_| {
        if rng.random::<f64>() < zero_fraction {
            0.0
        } else {
            rng.random::<f64>() * 2.0
        }
    })
}

/// Random two-stage head sized for `[K × H × W]` maps under `pool`.
pub fn random_weights(
    rng: &mut impl Rng,
    channels: usize,
    map: (usize, usize),
    pool: PoolSpec,
    hidden: usize,
    out: usize,
) -> Result<WeightBundle> {
    let d0 = channels * pool.output_len(map.0) * pool.output_len(map.1);
    let scale1 = 1.0 / (d0.max(1) as f64).sqrt();
    let scale2 = 1.0 / (hidden.max(1) as f64).sqrt();
    let mut uni = |scale: f64| (rng.random::<f64>() * 2.0 - 1.0) * scale;
    let w1 = Array2::from_shape_fn((hidden, d0), |_| uni(scale1));
    let b1 = Array1::from_shape_fn(hidden, |_| uni(0.1));
    let w2 = Array2::from_shape_fn((out, hidden), |_| uni(scale2));
    let b2 = Array1::from_shape_fn(out, |_| uni(0.1) + 0.05);
    WeightBundle::new(pool, w1, b1, w2, b2)
}

/// Symmetric judgments with unit diagonal and uniform off-diagonal entries.
pub fn random_judgments(rng: &mut impl Rng, n: usize) -> Result<HumanJudgmentMatrix> {
    let mut h = Array2::eye(n);
    for i in 0..n {
        for j in i + 1..n {
            let v = rng.random::<f64>();
            h[[i, j]] = v;
            h[[j, i]] = v;
        }
    }
    HumanJudgmentMatrix::new(h)
}
