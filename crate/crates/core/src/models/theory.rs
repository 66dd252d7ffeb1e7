//! Model-implied wavelet variances and cross-covariances.
//!
//! Two routes are provided. The quadratic-form route builds the lag
//! cross-covariance of each first-differenced block and contracts it with
//! the differenced Haar taps; it is slow but needs no algebra. The
//! closed-form route is what the estimator uses.

use nalgebra::DMatrix;

use super::dd::Dd;
use super::{BlockKind, BlockValues, LatentBlock, ModelSpec, ParamRole, ParamVector};
use crate::error::{Error, Result};
use crate::moments::{MomentIndex, MomentLayout, MomentVector};
use crate::wavelet::HaarLevel;

/// How block contributions are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    ClosedForm,
    QuadraticForm,
}

fn slots(block: &LatentBlock, i: usize, i2: usize) -> Result<(usize, usize)> {
    let a = block.slot(i).ok_or(Error::ChannelNotLoaded { channel: i })?;
    let b = block.slot(i2).ok_or(Error::ChannelNotLoaded { channel: i2 })?;
    Ok((a, b))
}

fn check_values(block: &LatentBlock, values: &BlockValues) -> Result<()> {
    if values.kind() != block.kind || values.dimension() != block.dimension() {
        return Err(Error::InvalidParameters(format!(
            "values for {} over {} channel(s) do not match a {} block over {}",
            values.kind(),
            values.dimension(),
            block.kind,
            block.dimension()
        )));
    }
    Ok(())
}

/// `Cov(dX^(i)_t, dX^(i2)_{t+lag})` for the stochastic part of one block,
/// where `dX` is the first difference of the block process.
pub fn block_diff_crosscov(
    block: &LatentBlock,
    values: &BlockValues,
    i: usize,
    i2: usize,
    lag: i64,
) -> Result<f64> {
    check_values(block, values)?;
    let (a, b) = slots(block, i, i2)?;
    Ok(match values {
        BlockValues::WhiteNoise { cov } => match lag.abs() {
            0 => 2.0 * cov[(a, b)],
            1 => -cov[(a, b)],
            _ => 0.0,
        },
        BlockValues::RandomWalk { cov } => {
            if lag == 0 {
                cov[(a, b)]
            } else {
                0.0
            }
        }
        BlockValues::Quantization { q2 } => {
            if a != b {
                0.0
            } else {
                match lag.abs() {
                    0 => 6.0 * q2[a],
                    1 => -4.0 * q2[a],
                    2 => q2[a],
                    _ => 0.0,
                }
            }
        }
        BlockValues::Drift { .. } => 0.0,
        BlockValues::Ar1 { phi, cov } => {
            let level = |l: i64| ar1_crosscov(phi[a], phi[b], cov[(a, b)], l);
            2.0 * level(lag) - level(lag - 1) - level(lag + 1)
        }
    })
}

/// `Cov(X^(i)_t, X^(i2)_{t+lag})` of a stationary bivariate AR1 pair.
fn ar1_crosscov(phi_i: f64, phi_i2: f64, z: f64, lag: i64) -> f64 {
    let base = z / (1.0 - phi_i * phi_i2);
    if lag >= 0 {
        base * phi_i2.powi(lag as i32)
    } else {
        base * phi_i.powi((-lag) as i32)
    }
}

/// Coefficient mean of the drift `omega * t` at `level`: `omega * 2^(j-2)`.
pub fn drift_mean(omega: f64, level: usize) -> f64 {
    omega * (level as f64 - 2.0).exp2()
}

/// Reference evaluation `c_j' Gamma c_j` (plus the block's own drift mean
/// product), contracting every pair of differenced taps with the lag
/// cross-covariances of [`block_diff_crosscov`]. Accumulated in
/// double-double precision.
pub fn quadratic_form_moment(
    block: &LatentBlock,
    values: &BlockValues,
    i: usize,
    i2: usize,
    level: usize,
) -> Result<f64> {
    check_values(block, values)?;
    let (a, b) = slots(block, i, i2)?;
    let taps = HaarLevel::new(level)?.diff_taps();
    let n = taps.len();
    if let BlockValues::Drift { omega } = values {
        let sum: f64 = taps.iter().sum();
        return Ok(omega[a] * sum * omega[b] * sum);
    }
    let diffs = exact_diff_crosscov(values, a, b, n);
    // group the double sum by lag through the tap autocorrelation, which
    // is exact for the dyadic taps
    let mut total = Dd::ZERO;
    for lag in 0..n {
        let overlap: f64 = (0..n - lag).map(|l| taps[l] * taps[l + lag]).sum();
        let paired = if lag == 0 {
            diffs[n - 1]
        } else {
            diffs[n - 1 + lag] + diffs[n - 1 - lag]
        };
        total = total + Dd::from(overlap) * paired;
    }
    Ok(total.value())
}

/// [`block_diff_crosscov`] at lags `-(n-1)..=n-1`, in double-double.
fn exact_diff_crosscov(values: &BlockValues, a: usize, b: usize, n: usize) -> Vec<Dd> {
    let mut out = vec![Dd::ZERO; 2 * n - 1];
    let centre = n - 1;
    let mut set = |lag: usize, x: Dd| {
        if lag < n {
            out[centre + lag] = x;
            out[centre - lag] = x;
        }
    };
    match values {
        BlockValues::WhiteNoise { cov } => {
            set(0, Dd::from(2.0) * Dd::from(cov[(a, b)]));
            set(1, -Dd::from(cov[(a, b)]));
        }
        BlockValues::RandomWalk { cov } => set(0, Dd::from(cov[(a, b)])),
        BlockValues::Quantization { q2 } => {
            if a == b {
                set(0, Dd::from(6.0) * Dd::from(q2[a]));
                set(1, Dd::from(-4.0) * Dd::from(q2[a]));
                set(2, Dd::from(q2[a]));
            }
        }
        BlockValues::Drift { .. } => {}
        BlockValues::Ar1 { phi, cov } => {
            let (pi, pi2) = (Dd::from(phi[a]), Dd::from(phi[b]));
            let base = Dd::from(cov[(a, b)]).div(Dd::from(1.0) - pi * pi2);
            // level covariances at lags -n..=n
            let mut forward = vec![base; n + 1];
            let mut backward = vec![base; n + 1];
            for l in 1..=n {
                forward[l] = forward[l - 1] * pi2;
                backward[l] = backward[l - 1] * pi;
            }
            let level = |lag: i64| {
                if lag >= 0 {
                    forward[lag as usize]
                } else {
                    backward[(-lag) as usize]
                }
            };
            let two = Dd::from(2.0);
            for lag in -(n as i64 - 1)..n as i64 {
                out[(centre as i64 + lag) as usize] =
                    two * level(lag) - level(lag - 1) - level(lag + 1);
            }
        }
    }
    out
}

/// Closed-form counterpart of [`quadratic_form_moment`].
pub fn closed_form_moment(
    block: &LatentBlock,
    values: &BlockValues,
    i: usize,
    i2: usize,
    level: usize,
) -> Result<f64> {
    check_values(block, values)?;
    HaarLevel::new(level)?;
    let (a, b) = slots(block, i, i2)?;
    let tau = (level as f64).exp2();
    Ok(match values {
        BlockValues::WhiteNoise { cov } => cov[(a, b)] / tau,
        BlockValues::RandomWalk { cov } => cov[(a, b)] * (tau * tau + 2.0) / (12.0 * tau),
        BlockValues::Quantization { q2 } => {
            if a == b {
                6.0 * q2[a] / (tau * tau)
            } else {
                0.0
            }
        }
        BlockValues::Drift { omega } => drift_mean(omega[a], level) * drift_mean(omega[b], level),
        BlockValues::Ar1 { phi, cov } => ar1_wavelet_covariance(phi[a], phi[b], cov[(a, b)], level),
    })
}

/// Haar wavelet cross-covariance at `level` of two AR1 components with
/// coefficients `phi_i`, `phi_i2` and innovation covariance `z`.
pub fn ar1_wavelet_covariance(phi_i: f64, phi_i2: f64, z: f64, level: usize) -> f64 {
    let (phi_i, phi_i2) = if phi_i <= phi_i2 { (phi_i, phi_i2) } else { (phi_i2, phi_i) };
    let half = 1usize << (level - 1);
    let one_minus_product = (1.0 - phi_i2) + phi_i2 * (1.0 - phi_i);
    let bracket = scaled_kernel(phi_i2, half) + scaled_kernel(phi_i, half);
    (-2.0 * level as f64).exp2() * z / one_minus_product * bracket
}

/// `(1 - x) Q(x)` where `Q` collects the Haar-weighted geometric sums.
/// The closed form loses precision as `x -> 1`, where the finite sum
/// `-sum_d p_d (1 - x^d)` is used instead.
fn scaled_kernel(x: f64, half: usize) -> f64 {
    let m = half as f64;
    let y = 1.0 - x;
    if x > 0.0 && y * m < 1.0 {
        let mut total = 0.0;
        // g = 1 - x^d, advanced by g_{d+1} = g_d + (1 - g_d) y
        let mut g = y;
        for d in 1..2 * half {
            let weight = if d <= half {
                2.0 * m - 3.0 * d as f64
            } else {
                d as f64 - 2.0 * m
            };
            total -= weight * g;
            g += (1.0 - g) * y;
        }
        total
    } else {
        let numerator = m * (1.0 - x * x) - 3.0 * x + 4.0 * x.powi(half as i32 + 1)
            - x.powi(2 * half as i32 + 1);
        numerator / (y * y)
    }
}

/// Model-implied moment: the sum of every block's contribution, with the
/// drift means of all drift blocks combined before taking the product.
pub fn theoretical_moment(
    spec: &ModelSpec,
    theta: &ParamVector,
    idx: MomentIndex,
    method: Method,
) -> Result<f64> {
    let values = spec.unpack(theta)?;
    moment_from_values(spec, &values, idx, method)
}

fn moment_from_values(
    spec: &ModelSpec,
    values: &[BlockValues],
    idx: MomentIndex,
    method: Method,
) -> Result<f64> {
    let mut total = 0.0;
    let mut drift_i = 0.0;
    let mut drift_i2 = 0.0;
    for (block, v) in spec.blocks.iter().zip(values) {
        if let BlockValues::Drift { omega } = v {
            if let Some(a) = block.slot(idx.i) {
                drift_i += omega[a];
            }
            if let Some(b) = block.slot(idx.i2) {
                drift_i2 += omega[b];
            }
            continue;
        }
        if !(block.loads(idx.i) && block.loads(idx.i2)) {
            continue;
        }
        total += match method {
            Method::ClosedForm => closed_form_moment(block, v, idx.i, idx.i2, idx.level)?,
            Method::QuadraticForm => quadratic_form_moment(block, v, idx.i, idx.i2, idx.level)?,
        };
    }
    Ok(total + drift_mean(drift_i, idx.level) * drift_mean(drift_i2, idx.level))
}

/// `nu(theta)` over `levels` levels in canonical order.
pub fn theoretical_vector(spec: &ModelSpec, theta: &ParamVector, levels: usize) -> Result<MomentVector> {
    TheoryCache::new(spec, levels)?.evaluate(theta)
}

/// Precomputed evaluation plan for repeated `nu(theta)` calls.
#[derive(Debug, Clone)]
pub struct TheoryCache {
    spec: ModelSpec,
    layout: MomentLayout,
}

impl TheoryCache {
    pub fn new(spec: &ModelSpec, levels: usize) -> Result<Self> {
        if levels > 0 {
            HaarLevel::new(levels)?;
        }
        Ok(Self {
            spec: spec.clone(),
            layout: MomentLayout::new(spec.channels, levels),
        })
    }

    pub fn layout(&self) -> MomentLayout {
        self.layout
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn evaluate(&self, theta: &ParamVector) -> Result<MomentVector> {
        let values = self.spec.unpack(theta)?;
        self.evaluate_values(&values)
    }

    pub fn evaluate_values(&self, values: &[BlockValues]) -> Result<MomentVector> {
        let levels = self.layout.levels();
        let mut out = MomentVector::zeros(self.layout);
        let channels = self.spec.channels;
        let mut drift = vec![0.0; channels];
        for (block, v) in self.spec.blocks.iter().zip(values) {
            if let BlockValues::Drift { omega } = v {
                for (a, &c) in block.channels.iter().enumerate() {
                    drift[c] += omega[a];
                }
                continue;
            }
            let d = block.dimension();
            for a in 0..d {
                for b in a..d {
                    if a != b && !is_cross_nonzero(v, a, b) {
                        continue;
                    }
                    let (i, i2) = (block.channels[a], block.channels[b]);
                    let base = self.layout.pair_position(i, i2) * levels;
                    for level in 1..=levels {
                        out.values[base + level - 1] += closed_form_moment(block, v, i, i2, level)?;
                    }
                }
            }
        }
        for i in 0..channels {
            for i2 in i..channels {
                if drift[i] == 0.0 || drift[i2] == 0.0 {
                    continue;
                }
                let base = self.layout.pair_position(i, i2) * levels;
                for level in 1..=levels {
                    out.values[base + level - 1] +=
                        drift_mean(drift[i], level) * drift_mean(drift[i2], level);
                }
            }
        }
        Ok(out)
    }
}

fn is_cross_nonzero(v: &BlockValues, a: usize, b: usize) -> bool {
    v.covariance().is_some_and(|cov| cov[(a, b)] != 0.0)
}

/// `A(theta) = d nu / d theta'` (rows: moments, columns: parameters).
/// Covariance entries and `Q^2` enter linearly and drift slopes
/// quadratically, so those columns are exact; autoregressive columns use
/// central differences with step `1e-6 * max(1, |phi|)`.
pub fn jacobian(spec: &ModelSpec, theta: &ParamVector, levels: usize) -> Result<DMatrix<f64>> {
    let cache = TheoryCache::new(spec, levels)?;
    let layout = spec.layout();
    let mlayout = cache.layout();
    let values = spec.unpack(theta)?;
    let mut drift = vec![0.0; spec.channels];
    for (block, v) in spec.blocks.iter().zip(&values) {
        if let BlockValues::Drift { omega } = v {
            for (a, &c) in block.channels.iter().enumerate() {
                drift[c] += omega[a];
            }
        }
    }
    let mut jac = DMatrix::zeros(mlayout.dim(), layout.len());
    for (p, entry) in layout.entries().iter().enumerate() {
        let block = &spec.blocks[entry.block];
        let v = &values[entry.block];
        match entry.role {
            ParamRole::Variance { channel } | ParamRole::Covariance { channel, .. } => {
                let channel2 = match entry.role {
                    ParamRole::Covariance { channel2, .. } => channel2,
                    _ => channel,
                };
                let (a, b) = slots(block, channel, channel2)?;
                let base = mlayout.pair_position(channel, channel2) * levels;
                for level in 1..=levels {
                    jac[(base + level - 1, p)] = unit_moment(block.kind, v, a, b, level);
                }
            }
            ParamRole::QuantizationPower { channel } => {
                let base = mlayout.pair_position(channel, channel) * levels;
                for level in 1..=levels {
                    jac[(base + level - 1, p)] = 6.0 / (level as f64 * 2.0).exp2();
                }
            }
            ParamRole::DriftSlope { channel } => {
                for other in 0..spec.channels {
                    let base = mlayout.pair_position(channel, other) * levels;
                    let factor = if other == channel { 2.0 } else { 1.0 };
                    for level in 1..=levels {
                        let unit = drift_mean(1.0, level);
                        jac[(base + level - 1, p)] = factor * unit * drift_mean(drift[other], level);
                    }
                }
            }
            ParamRole::Autoregressive { .. } => {
                let phi = theta.values[p];
                let step = 1e-6 * phi.abs().max(1.0);
                let (lo, hi) = (phi - step, phi + step);
                let shifted = |x: f64| {
                    let mut t = theta.clone();
                    t.values[p] = x;
                    cache.evaluate(&t)
                };
                let (f_lo, x_lo) = if lo > -1.0 { (shifted(lo)?, lo) } else { (cache.evaluate(theta)?, phi) };
                let (f_hi, x_hi) = if hi < 1.0 { (shifted(hi)?, hi) } else { (cache.evaluate(theta)?, phi) };
                for r in 0..mlayout.dim() {
                    jac[(r, p)] = (f_hi.values[r] - f_lo.values[r]) / (x_hi - x_lo);
                }
            }
        }
    }
    Ok(jac)
}

/// Moment contribution per unit of covariance entry `(a, b)`.
fn unit_moment(kind: BlockKind, v: &BlockValues, a: usize, b: usize, level: usize) -> f64 {
    let tau = (level as f64).exp2();
    match (kind, v) {
        (BlockKind::WhiteNoise, _) => 1.0 / tau,
        (BlockKind::RandomWalk, _) => (tau * tau + 2.0) / (12.0 * tau),
        (_, BlockValues::Ar1 { phi, .. }) => ar1_wavelet_covariance(phi[a], phi[b], 1.0, level),
        _ => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{CrossStructure, ModelClass};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn single(kind: BlockKind) -> LatentBlock {
        LatentBlock::new(kind, vec![0])
    }

    fn scalar(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    #[test]
    fn white_noise_level_two() {
        let b = single(BlockKind::WhiteNoise);
        let v = BlockValues::white_noise(scalar(1.0));
        assert_relative_eq!(quadratic_form_moment(&b, &v, 0, 0, 2).unwrap(), 0.25, epsilon = 1e-15);
        assert_relative_eq!(closed_form_moment(&b, &v, 0, 0, 2).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn random_walk_level_one() {
        let b = single(BlockKind::RandomWalk);
        let v = BlockValues::random_walk(scalar(1.0));
        assert_eq!(block_diff_crosscov(&b, &v, 0, 0, 0).unwrap(), 1.0);
        assert_eq!(block_diff_crosscov(&b, &v, 0, 0, 1).unwrap(), 0.0);
        assert_relative_eq!(quadratic_form_moment(&b, &v, 0, 0, 1).unwrap(), 0.25, epsilon = 1e-15);
        assert_relative_eq!(closed_form_moment(&b, &v, 0, 0, 1).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn quantization_difference_covariances() {
        let b = single(BlockKind::Quantization);
        let v = BlockValues::Quantization { q2: vec![1.0] };
        let got: Vec<f64> = (0..4).map(|l| block_diff_crosscov(&b, &v, 0, 0, l).unwrap()).collect();
        assert_eq!(got, vec![6.0, -4.0, 1.0, 0.0]);
    }

    #[test]
    fn ar1_at_zero_is_white_noise() {
        let b = LatentBlock::new(BlockKind::Ar1, vec![0, 1]).with_cross(CrossStructure::Full);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let v = BlockValues::ar1(vec![0.0, 0.0], cov);
        let got: Vec<f64> = (0..3).map(|l| block_diff_crosscov(&b, &v, 0, 1, l).unwrap()).collect();
        assert_relative_eq!(got[0], 0.6, epsilon = 1e-15);
        assert_relative_eq!(got[1], -0.3, epsilon = 1e-15);
        assert_eq!(got[2], 0.0);
    }

    #[test]
    fn unloaded_channel_is_an_error() {
        let b = single(BlockKind::WhiteNoise);
        let v = BlockValues::white_noise(scalar(1.0));
        assert!(matches!(
            block_diff_crosscov(&b, &v, 0, 1, 0),
            Err(Error::ChannelNotLoaded { channel: 1 })
        ));
    }

    #[test]
    fn drift_mean_matches_filtered_ramp() {
        for level in 1..=8 {
            let filter = HaarLevel::new(level).unwrap();
            let ramp: Vec<f64> = (1..=filter.len() + 5).map(|t| 0.7 * t as f64).collect();
            let coefs = filter.apply(&ramp).unwrap();
            for c in coefs {
                assert_relative_eq!(c, drift_mean(0.7, level), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn disjoint_channels_have_zero_cross_moment() {
        let spec = ModelSpec::new(
            2,
            vec![
                LatentBlock::new(BlockKind::WhiteNoise, vec![0]),
                LatentBlock::new(BlockKind::RandomWalk, vec![1]),
            ],
            ModelClass::Custom,
        );
        let theta = ParamVector::new(vec![1.0, 2.0]);
        let nu = theoretical_vector(&spec, &theta, 5).unwrap();
        assert!(nu.pair(0, 1).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn white_noise_derivative_is_inverse_scale() {
        let spec = ModelSpec::new(1, vec![single(BlockKind::WhiteNoise)], ModelClass::M1);
        let jac = jacobian(&spec, &ParamVector::new(vec![3.0]), 6).unwrap();
        for level in 1..=6 {
            assert_eq!(jac[(level - 1, 0)], (-(level as f64)).exp2());
        }
    }

    fn mixed_spec() -> ModelSpec {
        ModelSpec::new(
            2,
            vec![
                LatentBlock::new(BlockKind::WhiteNoise, vec![0, 1]).with_cross(CrossStructure::Full),
                LatentBlock::new(BlockKind::Quantization, vec![1]),
                LatentBlock::new(BlockKind::Drift, vec![0, 1]),
                LatentBlock::new(BlockKind::Ar1, vec![0, 1]).with_cross(CrossStructure::Full),
                LatentBlock::new(BlockKind::Ar1, vec![0]),
            ],
            ModelClass::Custom,
        )
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let spec = mixed_spec();
        let theta = ParamVector::new(vec![
            1.0, 0.5, 0.2, 0.3, 0.01, 0.02, 0.6, -0.4, 2.0, 1.5, 0.7, 0.95, 0.8,
        ]);
        let levels = 7;
        let jac = jacobian(&spec, &theta, levels).unwrap();
        let base = theoretical_vector(&spec, &theta, levels).unwrap();
        for p in 0..theta.len() {
            let step = 1e-5 * theta.values[p].abs().max(1e-3);
            let mut up = theta.clone();
            up.values[p] += step;
            let mut down = theta.clone();
            down.values[p] -= step;
            let f_up = theoretical_vector(&spec, &up, levels).unwrap();
            let f_down = theoretical_vector(&spec, &down, levels).unwrap();
            for r in 0..base.dim() {
                let fd = (f_up.values[r] - f_down.values[r]) / (2.0 * step);
                let scale = jac[(r, p)].abs().max(fd.abs()).max(1e-8);
                assert!(
                    (fd - jac[(r, p)]).abs() / scale < 1e-6,
                    "row {r} column {p}: {fd} vs {}",
                    jac[(r, p)]
                );
            }
        }
    }

    fn random_values(kind: BlockKind, seeds: &[f64]) -> BlockValues {
        let cov = DMatrix::from_row_slice(
            2,
            2,
            &[seeds[0] + 0.1, seeds[2] * 0.9 * ((seeds[0] + 0.1) * (seeds[1] + 0.1)).sqrt(), 0.0, seeds[1] + 0.1],
        );
        let cov = DMatrix::from_fn(2, 2, |r, c| if r > c { cov[(c, r)] } else { cov[(r, c)] });
        match kind {
            BlockKind::WhiteNoise => BlockValues::white_noise(cov),
            BlockKind::RandomWalk => BlockValues::random_walk(cov),
            BlockKind::Quantization => BlockValues::Quantization {
                q2: vec![seeds[0] + 0.1, seeds[1] + 0.1],
            },
            BlockKind::Drift => BlockValues::Drift {
                omega: vec![seeds[0] + 0.1, seeds[1] + 0.1],
            },
            BlockKind::Ar1 => BlockValues::ar1(vec![seeds[3], seeds[4]], cov),
        }
    }

    proptest! {
        #[test]
        fn closed_form_matches_quadratic_form(
            kind in prop::sample::select(vec![
                BlockKind::WhiteNoise, BlockKind::RandomWalk, BlockKind::Quantization,
                BlockKind::Drift, BlockKind::Ar1,
            ]),
            seeds in prop::collection::vec(-0.999f64..0.999, 5),
            level in 1usize..=8,
        ) {
            let seeds: Vec<f64> = seeds.iter().enumerate()
                .map(|(k, s)| if k < 2 { s.abs() } else { *s }).collect();
            let block = LatentBlock::new(kind, vec![0, 1]).with_cross(CrossStructure::Full);
            let v = random_values(kind, &seeds);
            for (i, i2) in [(0, 0), (0, 1), (1, 1)] {
                let slow = quadratic_form_moment(&block, &v, i, i2, level).unwrap();
                let fast = closed_form_moment(&block, &v, i, i2, level).unwrap();
                prop_assert!((slow - fast).abs() <= 1e-10 * slow.abs().max(1e-300),
                    "{kind} ({i},{i2}) level {level}: {slow} vs {fast}");
            }
        }

        #[test]
        fn moments_add_across_blocks(
            u in prop::collection::vec(-1.5f64..1.5, 13),
            level in 1usize..=9,
        ) {
            let spec = mixed_spec();
            let theta = ParamVector::from_unconstrained(&spec.layout(), &u);
            let nu = theoretical_vector(&spec, &theta, level).unwrap();
            let values = spec.unpack(&theta).unwrap();
            // one drift block, so per-block contributions add exactly
            for idx in nu.layout.indices() {
                let mut sum = 0.0;
                let mut swapped = 0.0;
                for (k, block) in spec.blocks.iter().enumerate() {
                    if block.loads(idx.i) && block.loads(idx.i2) {
                        sum += closed_form_moment(block, &values[k], idx.i, idx.i2, idx.level).unwrap();
                        swapped += closed_form_moment(block, &values[k], idx.i2, idx.i, idx.level).unwrap();
                    }
                }
                prop_assert!((sum - nu.at(idx)).abs() <= 1e-12 * sum.abs().max(1e-300));
                prop_assert!((swapped - sum).abs() <= 1e-12 * sum.abs().max(1e-300));
                let direct = theoretical_moment(&spec, &theta, idx, Method::ClosedForm).unwrap();
                prop_assert!((direct - sum).abs() <= 1e-12 * sum.abs().max(1e-300));
            }
        }

        #[test]
        fn ar1_near_unit_root_stays_accurate(
            gap in 1e-6f64..1e-2,
            level in 1usize..=8,
        ) {
            let block = LatentBlock::new(BlockKind::Ar1, vec![0]);
            let v = BlockValues::ar1(vec![1.0 - gap], scalar(1.0));
            let slow = quadratic_form_moment(&block, &v, 0, 0, level).unwrap();
            let fast = closed_form_moment(&block, &v, 0, 0, level).unwrap();
            prop_assert!((slow - fast).abs() <= 1e-8 * slow.abs());
        }
    }
}
