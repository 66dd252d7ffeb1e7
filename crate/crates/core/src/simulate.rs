//! Exact Gaussian sampling of latent error models.
//!
//! Each replicate draws from its own ChaCha stream keyed by `(seed,
//! replicate)`, so any replicate can be regenerated alone and parallel
//! batches are reproducible.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::models::{validate, BlockValues, LatentBlock, ModelSpec, ParamVector};
use crate::signal::MultiSignal;

/// Shortest series `simulate` produces.
pub const MIN_LENGTH: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub spec: ModelSpec,
    pub theta: ParamVector,
    pub length: usize,
    pub seed: u64,
    pub replicate: u64,
}

impl SimConfig {
    pub fn new(spec: ModelSpec, theta: ParamVector, length: usize, seed: u64) -> Self {
        Self {
            spec,
            theta,
            length,
            seed,
            replicate: 0,
        }
    }

    pub fn with_replicate(&self, replicate: u64) -> Self {
        Self {
            replicate,
            ..self.clone()
        }
    }

    fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.replicate);
        rng
    }
}

/// One trajectory of `cfg.length` samples per channel.
pub fn simulate(cfg: &SimConfig) -> Result<MultiSignal> {
    let violations = validate(&cfg.spec, &cfg.theta);
    if !violations.is_empty() {
        return Err(Error::InvalidSpec(violations));
    }
    if cfg.length < MIN_LENGTH {
        return Err(Error::TooFewSamples(cfg.length));
    }
    let values = cfg.spec.unpack(&cfg.theta)?;
    let mut rng = cfg.rng();
    let mut channels = vec![vec![0.0; cfg.length]; cfg.spec.channels];
    for (block, v) in cfg.spec.blocks.iter().zip(&values) {
        add_block(&mut channels, block, v, &mut rng)?;
    }
    MultiSignal::new(channels)
}

/// Replicates `0..replicates` of `template`, generated lazily.
pub fn simulate_batch(
    template: &SimConfig,
    replicates: u64,
) -> impl Iterator<Item = Result<MultiSignal>> + '_ {
    (0..replicates).map(move |r| simulate(&template.with_replicate(r)))
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn standard_normals(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| normal(rng))
}

fn cholesky_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    cov.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::InvalidParameters("covariance is not positive definite".into()))
}

fn add_block(
    channels: &mut [Vec<f64>],
    block: &LatentBlock,
    values: &BlockValues,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let length = channels[0].len();
    let d = block.dimension();
    match values {
        BlockValues::WhiteNoise { cov } => {
            let factor = cholesky_factor(cov)?;
            for t in 0..length {
                let draw = &factor * standard_normals(rng, d);
                for (a, &c) in block.channels.iter().enumerate() {
                    channels[c][t] += draw[a];
                }
            }
        }
        BlockValues::RandomWalk { cov } => {
            let factor = cholesky_factor(cov)?;
            let mut level = DVector::zeros(d);
            for t in 0..length {
                level += &factor * standard_normals(rng, d);
                for (a, &c) in block.channels.iter().enumerate() {
                    channels[c][t] += level[a];
                }
            }
        }
        BlockValues::Quantization { q2 } => {
            for (a, &c) in block.channels.iter().enumerate() {
                let sd = q2[a].sqrt();
                let mut previous = sd * normal(rng);
                for t in 0..length {
                    let current = sd * normal(rng);
                    channels[c][t] += current - previous;
                    previous = current;
                }
            }
        }
        BlockValues::Drift { omega } => {
            for (a, &c) in block.channels.iter().enumerate() {
                for t in 0..length {
                    channels[c][t] += omega[a] * (t + 1) as f64;
                }
            }
        }
        BlockValues::Ar1 { phi, cov } => {
            let factor = cholesky_factor(cov)?;
            let stationary = DMatrix::from_fn(d, d, |a, b| cov[(a, b)] / (1.0 - phi[a] * phi[b]));
            let mut state = cholesky_factor(&stationary)? * standard_normals(rng, d);
            for t in 0..length {
                let shock = &factor * standard_normals(rng, d);
                for a in 0..d {
                    state[a] = phi[a] * state[a] + shock[a];
                }
                for (a, &c) in block.channels.iter().enumerate() {
                    channels[c][t] += state[a];
                }
            }
        }
    }
    Ok(())
}
