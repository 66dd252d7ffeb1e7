use std::fmt;

use serde::Serialize;

use super::{BlockKind, BlockValues, CrossStructure, ModelClass, ModelSpec, ParamVector};

/// Validation rule that a specification or parameter vector broke.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    ChannelOutOfRange,
    EmptyBlock,
    DuplicateChannel,
    CrossNotAllowed,
    RepeatedKindOnChannel,
    ClassMismatch,
    WrongParameterCount,
    NonFinite,
    NonPositive,
    NotPositiveDefinite,
    AutoregressiveRange,
    DistinctAutoregressive,
}

impl Rule {
    pub fn describe(&self) -> &'static str {
        match self {
            Rule::ChannelOutOfRange => "channel out of range",
            Rule::EmptyBlock => "block loads no channel",
            Rule::DuplicateChannel => "channels must be listed once, in increasing order",
            Rule::CrossNotAllowed => "block kind carries no cross terms",
            Rule::RepeatedKindOnChannel => "block kind repeated on a channel",
            Rule::ClassMismatch => "block kind not admissible in the model class",
            Rule::WrongParameterCount => "wrong number of parameters",
            Rule::NonFinite => "parameter is not finite",
            Rule::NonPositive => "parameter must be positive",
            Rule::NotPositiveDefinite => "covariance is not positive definite",
            Rule::AutoregressiveRange => "autoregressive coefficient must satisfy 0 < |phi| < 1",
            Rule::DistinctAutoregressive => {
                "autoregressive coefficients on a channel must be distinct"
            }
        }
    }
}

/// One failed rule. `block` is 0-based; displayed 1-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub block: Option<usize>,
    pub rule: Rule,
    pub message: String,
}

impl Violation {
    fn new(block: Option<usize>, rule: Rule, message: impl Into<String>) -> Self {
        Self {
            block,
            rule,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.block {
            Some(k) => write!(f, "block {}: {}: {}", k + 1, self.rule.describe(), self.message),
            None => write!(f, "{}: {}", self.rule.describe(), self.message),
        }
    }
}

/// Structural checks that do not need parameter values.
pub fn validate_structure(spec: &ModelSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    for (k, block) in spec.blocks.iter().enumerate() {
        let at = Some(k);
        if block.channels.is_empty() {
            out.push(Violation::new(at, Rule::EmptyBlock, format!("{} block", block.kind)));
        }
        if let Some(&c) = block.channels.iter().find(|&&c| c >= spec.channels) {
            out.push(Violation::new(
                at,
                Rule::ChannelOutOfRange,
                format!("channel {} but the model has {}", c + 1, spec.channels),
            ));
        }
        if block.channels.windows(2).any(|w| w[0] >= w[1]) {
            out.push(Violation::new(at, Rule::DuplicateChannel, format!("{:?}", one_based(&block.channels))));
        }
        if block.cross == CrossStructure::Full && !block.kind.supports_cross() {
            out.push(Violation::new(at, Rule::CrossNotAllowed, block.kind.label()));
        }
        let admissible = match spec.class {
            ModelClass::M1 => block.kind != BlockKind::Ar1,
            ModelClass::M2 => matches!(
                block.kind,
                BlockKind::WhiteNoise | BlockKind::Quantization | BlockKind::Ar1
            ),
            ModelClass::Custom => true,
        };
        if !admissible {
            out.push(Violation::new(
                at,
                Rule::ClassMismatch,
                format!("{} in class {:?}", block.kind, spec.class),
            ));
        }
    }
    if spec.class != ModelClass::Custom {
        for (channel, kind, blocks) in repeated_kinds(spec) {
            out.push(Violation::new(
                Some(blocks[1]),
                Rule::RepeatedKindOnChannel,
                format!("{kind} loads channel {} in blocks {:?}", channel + 1, one_based(&blocks)),
            ));
        }
    }
    out
}

/// Non-AR1 kinds loading the same channel more than once.
fn repeated_kinds(spec: &ModelSpec) -> Vec<(usize, BlockKind, Vec<usize>)> {
    let mut out = Vec::new();
    for channel in 0..spec.channels {
        for kind in [
            BlockKind::WhiteNoise,
            BlockKind::RandomWalk,
            BlockKind::Quantization,
            BlockKind::Drift,
        ] {
            let blocks: Vec<usize> = spec
                .blocks
                .iter()
                .enumerate()
                .filter(|(_, b)| b.kind == kind && b.loads(channel))
                .map(|(k, _)| k)
                .collect();
            if blocks.len() > 1 {
                out.push((channel, kind, blocks));
            }
        }
    }
    out
}

fn one_based(v: &[usize]) -> Vec<usize> {
    v.iter().map(|c| c + 1).collect()
}

/// Structural checks plus domain checks on `theta`. Empty iff valid.
pub fn validate(spec: &ModelSpec, theta: &ParamVector) -> Vec<Violation> {
    let mut out = validate_structure(spec);
    if !out.is_empty() {
        return out;
    }
    let layout = spec.layout();
    if layout.len() != theta.len() {
        out.push(Violation::new(
            None,
            Rule::WrongParameterCount,
            format!("expected {}, got {}", layout.len(), theta.len()),
        ));
        return out;
    }
    for (entry, x) in layout.entries().iter().zip(&theta.values) {
        if !x.is_finite() {
            out.push(Violation::new(Some(entry.block), Rule::NonFinite, entry.name()));
        }
    }
    if !out.is_empty() {
        return out;
    }
    let Ok(values) = spec.unpack(theta) else {
        return out;
    };
    for (k, (block, v)) in spec.blocks.iter().zip(&values).enumerate() {
        let at = Some(k);
        let positive = |xs: &[f64], what: &str, out: &mut Vec<Violation>| {
            for (a, x) in xs.iter().enumerate() {
                if *x <= 0.0 {
                    out.push(Violation::new(
                        at,
                        Rule::NonPositive,
                        format!("{what} on channel {} is {x}", block.channels[a] + 1),
                    ));
                }
            }
        };
        match v {
            BlockValues::Quantization { q2 } => positive(q2, "Q^2", &mut out),
            BlockValues::Drift { omega } => positive(omega, "omega", &mut out),
            _ => {}
        }
        if let BlockValues::Ar1 { phi, .. } = v {
            for (a, p) in phi.iter().enumerate() {
                if !(p.abs() < 1.0 && *p != 0.0) {
                    out.push(Violation::new(
                        at,
                        Rule::AutoregressiveRange,
                        format!("phi on channel {} is {p}", block.channels[a] + 1),
                    ));
                }
            }
        }
        if let Some(cov) = v.covariance() {
            let diag: Vec<f64> = (0..cov.nrows()).map(|a| cov[(a, a)]).collect();
            positive(&diag, "variance", &mut out);
            if diag.iter().all(|&d| d > 0.0) && cov.clone().cholesky().is_none() {
                out.push(Violation::new(at, Rule::NotPositiveDefinite, format!("{cov:?}").replace('\n', " ")));
            }
        }
    }
    for channel in 0..spec.channels {
        let mut phis: Vec<(f64, usize)> = Vec::new();
        for (k, (block, v)) in spec.blocks.iter().zip(&values).enumerate() {
            if let (Some(a), BlockValues::Ar1 { phi, .. }) = (block.slot(channel), v) {
                phis.push((phi[a], k));
            }
        }
        for x in 0..phis.len() {
            for y in x + 1..phis.len() {
                if phis[x].0 == phis[y].0 {
                    out.push(Violation::new(
                        Some(phis[y].1),
                        Rule::DistinctAutoregressive,
                        format!(
                            "blocks {} and {} share phi = {} on channel {}",
                            phis[x].1 + 1,
                            phis[y].1 + 1,
                            phis[x].0,
                            channel + 1
                        ),
                    ));
                }
            }
        }
    }
    out
}

/// Warnings for specifications outside the classes with known
/// identifiability. Never blocks a fit.
pub fn identifiability_warnings(spec: &ModelSpec) -> Vec<String> {
    let mut out = Vec::new();
    if spec.class == ModelClass::Custom {
        out.push("custom model class: identifiability is not guaranteed".to_string());
        for (channel, kind, blocks) in repeated_kinds(spec) {
            out.push(format!(
                "{kind} loads channel {} in blocks {:?}; their sum is not identifiable",
                channel + 1,
                one_based(&blocks)
            ));
        }
    }
    for channel in 0..spec.channels {
        if !spec.blocks.iter().any(|b| b.loads(channel)) {
            out.push(format!("channel {} is loaded by no block", channel + 1));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LatentBlock;

    fn gyro_triad_spec() -> ModelSpec {
        ModelSpec::new(
            3,
            vec![
                LatentBlock::new(BlockKind::WhiteNoise, vec![0, 1, 2]),
                LatentBlock::new(BlockKind::RandomWalk, vec![0, 1, 2]).with_cross(CrossStructure::Full),
            ],
            ModelClass::M1,
        )
    }

    #[test]
    fn gyro_triad_spec_is_valid() {
        let theta = ParamVector::new(vec![
            0.1010e-3, 0.0712e-3, 0.0490e-3, 0.0119, 0.0220, 0.1628, -0.0004, 0.0048, 0.0093,
        ]);
        assert!(validate(&gyro_triad_spec(), &theta).is_empty());
    }

    #[test]
    fn equal_autoregressive_coefficients_are_flagged() {
        let spec = ModelSpec::new(
            1,
            vec![
                LatentBlock::new(BlockKind::Ar1, vec![0]),
                LatentBlock::new(BlockKind::Ar1, vec![0]),
            ],
            ModelClass::M2,
        );
        let v = validate(&spec, &ParamVector::new(vec![0.5, 1.0, 0.5, 2.0]));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::DistinctAutoregressive);
        assert_eq!(v[0].block, Some(1));
    }

    #[test]
    fn indefinite_covariance_is_flagged() {
        let spec = ModelSpec::new(
            2,
            vec![LatentBlock::new(BlockKind::WhiteNoise, vec![0, 1]).with_cross(CrossStructure::Full)],
            ModelClass::M1,
        );
        let v = validate(&spec, &ParamVector::new(vec![1.0, 1.0, 2.0]));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::NotPositiveDefinite);
    }

    #[test]
    fn structural_rules() {
        let spec = ModelSpec::new(
            2,
            vec![
                LatentBlock::new(BlockKind::Ar1, vec![0, 2]),
                LatentBlock::new(BlockKind::Quantization, vec![1]).with_cross(CrossStructure::Full),
                LatentBlock::new(BlockKind::WhiteNoise, vec![1, 1]),
                LatentBlock::new(BlockKind::WhiteNoise, vec![1]),
                LatentBlock::new(BlockKind::WhiteNoise, vec![]),
            ],
            ModelClass::M1,
        );
        let rules: Vec<Rule> = validate_structure(&spec).iter().map(|v| v.rule).collect();
        for expected in [
            Rule::ChannelOutOfRange,
            Rule::ClassMismatch,
            Rule::CrossNotAllowed,
            Rule::DuplicateChannel,
            Rule::EmptyBlock,
            Rule::RepeatedKindOnChannel,
        ] {
            assert!(rules.contains(&expected), "{expected:?} missing from {rules:?}");
        }
    }

    #[test]
    fn domain_rules() {
        let spec = ModelSpec::new(
            1,
            vec![
                LatentBlock::new(BlockKind::Ar1, vec![0]),
                LatentBlock::new(BlockKind::Drift, vec![0]),
            ],
            ModelClass::Custom,
        );
        let rules: Vec<Rule> = validate(&spec, &ParamVector::new(vec![1.0, 1.0, -1.0]))
            .iter()
            .map(|v| v.rule)
            .collect();
        assert_eq!(rules, vec![Rule::AutoregressiveRange, Rule::NonPositive]);
        let short = validate(&spec, &ParamVector::new(vec![0.5]));
        assert_eq!(short[0].rule, Rule::WrongParameterCount);
        let nan = validate(&spec, &ParamVector::new(vec![0.5, f64::NAN, 1.0]));
        assert_eq!(nan[0].rule, Rule::NonFinite);
    }

    #[test]
    fn custom_class_warns() {
        let spec = ModelSpec::new(
            2,
            vec![
                LatentBlock::new(BlockKind::WhiteNoise, vec![0]),
                LatentBlock::new(BlockKind::WhiteNoise, vec![0]),
            ],
            ModelClass::Custom,
        );
        let w = identifiability_warnings(&spec);
        assert_eq!(w.len(), 3);
        assert!(validate_structure(&spec).is_empty());
    }
}
