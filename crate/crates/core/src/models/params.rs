use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{BlockKind, BlockValues, LatentBlock, ModelSpec};
use crate::error::{Error, Result};

/// Role of one free parameter. Channels are global, 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamRole {
    /// Diagonal covariance entry (WN, RW, AR1 innovations).
    Variance { channel: usize },
    /// Off-diagonal covariance entry, `channel < channel2`.
    Covariance { channel: usize, channel2: usize },
    /// Quantization power `Q^2`.
    QuantizationPower { channel: usize },
    /// Drift slope `omega`.
    DriftSlope { channel: usize },
    /// Autoregressive coefficient `phi`.
    Autoregressive { channel: usize },
}

/// Map from a raw parameter to the unconstrained optimization space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Log,
    Atanh,
    /// `atanh(c / sqrt(v_a v_b))` where `v_a`, `v_b` are the diagonal
    /// entries at the given parameter positions.
    Correlation { first: usize, second: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamEntry {
    pub block: usize,
    pub kind: BlockKind,
    pub role: ParamRole,
    pub transform: Transform,
}

impl ParamEntry {
    /// Human-readable name with 1-based channels, e.g. `RW[2].cov(1,3)`.
    pub fn name(&self) -> String {
        let prefix = format!("{}[{}]", self.kind.label(), self.block + 1);
        match self.role {
            ParamRole::Variance { channel } => format!("{prefix}.var({})", channel + 1),
            ParamRole::Covariance { channel, channel2 } => {
                format!("{prefix}.cov({},{})", channel + 1, channel2 + 1)
            }
            ParamRole::QuantizationPower { channel } => format!("{prefix}.q2({})", channel + 1),
            ParamRole::DriftSlope { channel } => format!("{prefix}.omega({})", channel + 1),
            ParamRole::Autoregressive { channel } => format!("{prefix}.phi({})", channel + 1),
        }
    }

    pub fn unit(&self) -> &'static str {
        match (self.kind, self.role) {
            (_, ParamRole::Autoregressive { .. }) => "1",
            (_, ParamRole::DriftSlope { .. }) => "signal/sample",
            (BlockKind::RandomWalk, _) => "signal^2/sample",
            _ => "signal^2",
        }
    }

    pub fn is_cross(&self) -> bool {
        matches!(self.role, ParamRole::Covariance { .. })
    }
}

/// Stable ordering of the free parameters: blocks in order; within a block
/// `phi` per channel (AR1 only), then diagonal entries per channel, then
/// free off-diagonal entries in lexicographic slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    entries: Vec<ParamEntry>,
    ranges: Vec<Range<usize>>,
}

impl ParamLayout {
    pub fn new(spec: &ModelSpec) -> Self {
        let mut entries = Vec::new();
        let mut ranges = Vec::new();
        for (k, block) in spec.blocks.iter().enumerate() {
            let start = entries.len();
            push_block(&mut entries, k, block);
            ranges.push(start..entries.len());
        }
        Self { entries, ranges }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn block_range(&self, block: usize) -> Range<usize> {
        self.ranges[block].clone()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(ParamEntry::name).collect()
    }

    pub fn cross_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&p| self.entries[p].is_cross()).collect()
    }
}

fn push_block(entries: &mut Vec<ParamEntry>, k: usize, block: &LatentBlock) {
    let base = entries.len();
    let mut push = |role, transform| {
        entries.push(ParamEntry {
            block: k,
            kind: block.kind,
            role,
            transform,
        })
    };
    match block.kind {
        BlockKind::Quantization => {
            for &channel in &block.channels {
                push(ParamRole::QuantizationPower { channel }, Transform::Log);
            }
        }
        BlockKind::Drift => {
            for &channel in &block.channels {
                push(ParamRole::DriftSlope { channel }, Transform::Log);
            }
        }
        BlockKind::WhiteNoise | BlockKind::RandomWalk | BlockKind::Ar1 => {
            let d = block.dimension();
            let diag_base = if block.kind == BlockKind::Ar1 {
                for &channel in &block.channels {
                    push(ParamRole::Autoregressive { channel }, Transform::Atanh);
                }
                base + d
            } else {
                base
            };
            for &channel in &block.channels {
                push(ParamRole::Variance { channel }, Transform::Log);
            }
            for (a, b) in block.cross_pairs() {
                push(
                    ParamRole::Covariance {
                        channel: block.channels[a],
                        channel2: block.channels[b],
                    },
                    Transform::Correlation {
                        first: diag_base + a,
                        second: diag_base + b,
                    },
                );
            }
        }
    }
}

/// Flat vector of raw (constrained) parameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Maps to the unconstrained space (log, atanh, atanh-correlation).
    pub fn to_unconstrained(&self, layout: &ParamLayout) -> Result<Vec<f64>> {
        check_len(layout, self)?;
        let v = &self.values;
        let out: Vec<f64> = layout
            .entries()
            .iter()
            .zip(v)
            .map(|(e, &x)| match e.transform {
                Transform::Log => x.ln(),
                Transform::Atanh => x.atanh(),
                Transform::Correlation { first, second } => (x / (v[first] * v[second]).sqrt()).atanh(),
            })
            .collect();
        if out.iter().all(|x| x.is_finite()) {
            Ok(out)
        } else {
            Err(Error::InvalidParameters(
                "parameter outside its domain (non-positive variance, |phi| >= 1 or |correlation| >= 1)"
                    .into(),
            ))
        }
    }

    /// Inverse of [`ParamVector::to_unconstrained`].
    pub fn from_unconstrained(layout: &ParamLayout, u: &[f64]) -> Self {
        let entries = layout.entries();
        let mut values: Vec<f64> = entries
            .iter()
            .zip(u)
            .map(|(e, &x)| match e.transform {
                Transform::Log => x.exp(),
                Transform::Atanh => x.tanh(),
                Transform::Correlation { .. } => x.tanh(),
            })
            .collect();
        for (p, e) in entries.iter().enumerate() {
            if let Transform::Correlation { first, second } = e.transform {
                values[p] *= (values[first] * values[second]).sqrt();
            }
        }
        Self { values }
    }
}

fn check_len(layout: &ParamLayout, theta: &ParamVector) -> Result<()> {
    if layout.len() != theta.len() {
        return Err(Error::InvalidParameters(format!(
            "expected {} parameters, got {}",
            layout.len(),
            theta.len()
        )));
    }
    Ok(())
}

/// Per-block values from a flat vector. Off-diagonal entries that are not
/// free are zero. Domain checks beyond finiteness are left to validation.
pub(super) fn unpack(spec: &ModelSpec, theta: &ParamVector) -> Result<Vec<BlockValues>> {
    let layout = spec.layout();
    check_len(&layout, theta)?;
    if let Some(p) = theta.values.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidParameters(format!(
            "{} is not finite",
            layout.entries()[p].name()
        )));
    }
    Ok(spec
        .blocks
        .iter()
        .enumerate()
        .map(|(k, block)| {
            let slice = &theta.values[layout.block_range(k)];
            let d = block.dimension();
            match block.kind {
                BlockKind::Quantization => BlockValues::Quantization { q2: slice.to_vec() },
                BlockKind::Drift => BlockValues::Drift {
                    omega: slice.to_vec(),
                },
                BlockKind::WhiteNoise => BlockValues::WhiteNoise {
                    cov: covariance_from(block, slice),
                },
                BlockKind::RandomWalk => BlockValues::RandomWalk {
                    cov: covariance_from(block, slice),
                },
                BlockKind::Ar1 => BlockValues::Ar1 {
                    phi: slice[..d].to_vec(),
                    cov: covariance_from(block, &slice[d..]),
                },
            }
        })
        .collect())
}

fn covariance_from(block: &LatentBlock, slice: &[f64]) -> DMatrix<f64> {
    let d = block.dimension();
    let mut cov = DMatrix::zeros(d, d);
    for a in 0..d {
        cov[(a, a)] = slice[a];
    }
    for (p, (a, b)) in block.cross_pairs().into_iter().enumerate() {
        cov[(a, b)] = slice[d + p];
        cov[(b, a)] = slice[d + p];
    }
    cov
}

pub(super) fn pack(spec: &ModelSpec, values: &[BlockValues]) -> Result<ParamVector> {
    if values.len() != spec.blocks.len() {
        return Err(Error::InvalidParameters(format!(
            "expected values for {} blocks, got {}",
            spec.blocks.len(),
            values.len()
        )));
    }
    let mut out = Vec::new();
    for (k, (block, v)) in spec.blocks.iter().zip(values).enumerate() {
        if v.kind() != block.kind || v.dimension() != block.dimension() {
            return Err(Error::InvalidParameters(format!(
                "block {} expects {} over {} channel(s), got {} over {}",
                k + 1,
                block.kind,
                block.dimension(),
                v.kind(),
                v.dimension()
            )));
        }
        match v {
            BlockValues::Quantization { q2 } => out.extend_from_slice(q2),
            BlockValues::Drift { omega } => out.extend_from_slice(omega),
            BlockValues::WhiteNoise { cov } | BlockValues::RandomWalk { cov } => {
                push_covariance(&mut out, block, cov)
            }
            BlockValues::Ar1 { phi, cov } => {
                out.extend_from_slice(phi);
                push_covariance(&mut out, block, cov);
            }
        }
    }
    Ok(ParamVector::new(out))
}

fn push_covariance(out: &mut Vec<f64>, block: &LatentBlock, cov: &DMatrix<f64>) {
    for a in 0..block.dimension() {
        out.push(cov[(a, a)]);
    }
    for (a, b) in block.cross_pairs() {
        out.push(cov[(a, b)]);
    }
}
