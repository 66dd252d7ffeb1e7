//! Latent error models: sums of independent white-noise, random-walk,
//! quantization, drift and first-order autoregressive blocks, each routed
//! to a subset of the observed channels.

mod dd;
mod params;
mod theory;
mod validate;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use params::{ParamEntry, ParamLayout, ParamRole, ParamVector, Transform};
pub use theory::{
    ar1_wavelet_covariance, block_diff_crosscov, closed_form_moment, drift_mean, jacobian,
    quadratic_form_moment, theoretical_moment, theoretical_vector, Method, TheoryCache,
};
pub use validate::{identifiability_warnings, validate, validate_structure, Rule, Violation};

/// Kind of latent block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BlockKind {
    #[serde(rename = "WN")]
    WhiteNoise,
    #[serde(rename = "RW")]
    RandomWalk,
    #[serde(rename = "QN")]
    Quantization,
    #[serde(rename = "DR")]
    Drift,
    #[serde(rename = "AR1")]
    Ar1,
}

impl BlockKind {
    pub fn label(&self) -> &'static str {
        match self {
            BlockKind::WhiteNoise => "WN",
            BlockKind::RandomWalk => "RW",
            BlockKind::Quantization => "QN",
            BlockKind::Drift => "DR",
            BlockKind::Ar1 => "AR1",
        }
    }

    /// Whether the block may carry cross-channel covariance terms.
    pub fn supports_cross(&self) -> bool {
        matches!(
            self,
            BlockKind::WhiteNoise | BlockKind::RandomWalk | BlockKind::Ar1
        )
    }
}

impl std::fmt::Display for BlockKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Which off-diagonal covariance entries of a block are free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CrossStructure {
    /// Off-diagonal entries fixed at zero.
    #[default]
    None,
    /// Every off-diagonal entry is a free parameter.
    Full,
}

/// One latent process and the channels it appears in.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatentBlock {
    pub kind: BlockKind,
    /// Loaded channels, 0-based and strictly increasing.
    pub channels: Vec<usize>,
    pub cross: CrossStructure,
}

impl LatentBlock {
    pub fn new(kind: BlockKind, channels: Vec<usize>) -> Self {
        Self {
            kind,
            channels,
            cross: CrossStructure::None,
        }
    }

    pub fn with_cross(mut self, cross: CrossStructure) -> Self {
        self.cross = cross;
        self
    }

    /// Position of `channel` within the block, if loaded.
    pub fn slot(&self, channel: usize) -> Option<usize> {
        self.channels.iter().position(|&c| c == channel)
    }

    pub fn loads(&self, channel: usize) -> bool {
        self.slot(channel).is_some()
    }

    pub fn dimension(&self) -> usize {
        self.channels.len()
    }

    /// Slot pairs `(a, b)`, `a < b`, whose covariance is free.
    pub fn cross_pairs(&self) -> Vec<(usize, usize)> {
        if self.cross == CrossStructure::None || !self.kind.supports_cross() {
            return Vec::new();
        }
        let d = self.dimension();
        (0..d)
            .flat_map(|a| (a + 1..d).map(move |b| (a, b)))
            .collect()
    }
}

/// Admissible model classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum ModelClass {
    /// White noise, random walk, quantization noise and drift.
    M1,
    /// White noise, quantization noise and any number of AR1 blocks.
    M2,
    /// Any combination; identifiability is not guaranteed.
    #[default]
    #[serde(rename = "custom")]
    Custom,
}

/// Declarative description of a multivariate latent model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub channels: usize,
    pub blocks: Vec<LatentBlock>,
    pub class: ModelClass,
}

impl ModelSpec {
    pub fn new(channels: usize, blocks: Vec<LatentBlock>, class: ModelClass) -> Self {
        Self {
            channels,
            blocks,
            class,
        }
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self)
    }

    pub fn param_count(&self) -> usize {
        self.layout().len()
    }

    pub fn has_cross_params(&self) -> bool {
        self.blocks.iter().any(|b| !b.cross_pairs().is_empty())
    }

    /// Same blocks with every cross-channel covariance fixed at zero.
    pub fn without_cross(&self) -> ModelSpec {
        let mut out = self.clone();
        for b in &mut out.blocks {
            b.cross = CrossStructure::None;
        }
        out
    }

    /// Univariate model of one channel: the blocks loading it, restricted
    /// to that channel. Returns the model and, per restricted block, the
    /// index of the originating block.
    pub fn restrict_to_channel(&self, channel: usize) -> (ModelSpec, Vec<usize>) {
        let mut blocks = Vec::new();
        let mut origin = Vec::new();
        for (k, b) in self.blocks.iter().enumerate() {
            if b.loads(channel) {
                blocks.push(LatentBlock::new(b.kind, vec![0]));
                origin.push(k);
            }
        }
        (ModelSpec::new(1, blocks, self.class), origin)
    }

    /// Unpacks, validates the domain and returns per-block values.
    pub fn unpack(&self, theta: &ParamVector) -> crate::Result<Vec<BlockValues>> {
        params::unpack(self, theta)
    }

    pub fn pack(&self, values: &[BlockValues]) -> crate::Result<ParamVector> {
        params::pack(self, values)
    }
}

/// Parameter values of one block, over its loaded channels.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockValues {
    WhiteNoise { cov: DMatrix<f64> },
    RandomWalk { cov: DMatrix<f64> },
    Quantization { q2: Vec<f64> },
    Drift { omega: Vec<f64> },
    Ar1 { phi: Vec<f64>, cov: DMatrix<f64> },
}

impl BlockValues {
    pub fn kind(&self) -> BlockKind {
        match self {
            BlockValues::WhiteNoise { .. } => BlockKind::WhiteNoise,
            BlockValues::RandomWalk { .. } => BlockKind::RandomWalk,
            BlockValues::Quantization { .. } => BlockKind::Quantization,
            BlockValues::Drift { .. } => BlockKind::Drift,
            BlockValues::Ar1 { .. } => BlockKind::Ar1,
        }
    }

    pub fn white_noise(cov: DMatrix<f64>) -> Self {
        BlockValues::WhiteNoise { cov }
    }

    pub fn random_walk(cov: DMatrix<f64>) -> Self {
        BlockValues::RandomWalk { cov }
    }

    pub fn ar1(phi: Vec<f64>, cov: DMatrix<f64>) -> Self {
        BlockValues::Ar1 { phi, cov }
    }

    /// Covariance matrix of the innovations, when the block has one.
    pub fn covariance(&self) -> Option<&DMatrix<f64>> {
        match self {
            BlockValues::WhiteNoise { cov }
            | BlockValues::RandomWalk { cov }
            | BlockValues::Ar1 { cov, .. } => Some(cov),
            _ => None,
        }
    }

    /// Number of channels the values describe.
    pub fn dimension(&self) -> usize {
        match self {
            BlockValues::WhiteNoise { cov } | BlockValues::RandomWalk { cov } => cov.nrows(),
            BlockValues::Quantization { q2 } => q2.len(),
            BlockValues::Drift { omega } => omega.len(),
            BlockValues::Ar1 { phi, .. } => phi.len(),
        }
    }
}

/// Sorts AR1 blocks that are interchangeable (same channels and cross
/// structure) by ascending coefficient on their first channel, removing
/// label switching between otherwise identical components.
pub fn canonicalize(spec: &ModelSpec, theta: &ParamVector) -> crate::Result<ParamVector> {
    let mut values = spec.unpack(theta)?;
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (k, b) in spec.blocks.iter().enumerate() {
        if b.kind != BlockKind::Ar1 {
            continue;
        }
        match groups
            .iter_mut()
            .find(|g| spec.blocks[g[0]].channels == b.channels && spec.blocks[g[0]].cross == b.cross)
        {
            Some(g) => g.push(k),
            None => groups.push(vec![k]),
        }
    }
    for group in groups.into_iter().filter(|g| g.len() > 1) {
        let mut members: Vec<BlockValues> = group.iter().map(|&k| values[k].clone()).collect();
        members.sort_by(|a, b| first_phi(a).total_cmp(&first_phi(b)));
        for (&k, v) in group.iter().zip(members) {
            values[k] = v;
        }
    }
    spec.pack(&values)
}

fn first_phi(v: &BlockValues) -> f64 {
    match v {
        BlockValues::Ar1 { phi, .. } => phi[0],
        _ => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_pairs_follow_structure() {
        let b = LatentBlock::new(BlockKind::RandomWalk, vec![0, 1, 2]).with_cross(CrossStructure::Full);
        assert_eq!(b.cross_pairs(), vec![(0, 1), (0, 2), (1, 2)]);
        let q = LatentBlock::new(BlockKind::Quantization, vec![0, 1]).with_cross(CrossStructure::Full);
        assert!(q.cross_pairs().is_empty());
    }

    #[test]
    fn restriction_keeps_blocks_loading_the_channel() {
        let spec = ModelSpec::new(
            2,
            vec![
                LatentBlock::new(BlockKind::Ar1, vec![0, 1]).with_cross(CrossStructure::Full),
                LatentBlock::new(BlockKind::Ar1, vec![1]),
                LatentBlock::new(BlockKind::RandomWalk, vec![0]),
            ],
            ModelClass::Custom,
        );
        let (uni, origin) = spec.restrict_to_channel(1);
        assert_eq!(origin, vec![0, 1]);
        assert_eq!(uni.channels, 1);
        assert!(uni.blocks.iter().all(|b| b.channels == vec![0]));
        assert!(!spec.without_cross().has_cross_params());
        assert!(spec.has_cross_params());
    }

    #[test]
    fn canonical_order_sorts_interchangeable_ar1() {
        let spec = ModelSpec::new(
            1,
            vec![
                LatentBlock::new(BlockKind::Ar1, vec![0]),
                LatentBlock::new(BlockKind::Ar1, vec![0]),
            ],
            ModelClass::M2,
        );
        let theta = ParamVector::new(vec![0.9, 2.0, 0.1, 3.0]);
        let sorted = canonicalize(&spec, &theta).unwrap();
        assert_eq!(sorted.values, vec![0.1, 3.0, 0.9, 2.0]);
    }
}
