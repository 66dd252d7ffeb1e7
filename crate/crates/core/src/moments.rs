//! Empirical wavelet variances and cross-covariances, their canonical
//! ordering, and a long-run covariance estimate for the stacked vector.
//!
//! Everything is computed at lag 0. The covariance of the stacked
//! estimator is a Bartlett-kernel HAC estimate built from the coefficient
//! product series, each demeaned over its own support and aligned in time.
//! A pair of moments uses the truncation lag of its coarser level.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::signal::MultiSignal;
use crate::wavelet::{decompose_levels, max_level, CoefficientSeries};

/// Position of one moment: channels `i <= i2` (0-based) at `level` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MomentIndex {
    pub i: usize,
    pub i2: usize,
    pub level: usize,
}

impl MomentIndex {
    pub fn new(i: usize, i2: usize, level: usize) -> Self {
        let (i, i2) = if i <= i2 { (i, i2) } else { (i2, i) };
        Self { i, i2, level }
    }

    pub fn is_diagonal(&self) -> bool {
        self.i == self.i2
    }

    pub fn scale(&self) -> f64 {
        (self.level as f64).exp2()
    }
}

/// Canonical flattening: channel pairs `(0,0), (0,1), .., (0,I-1), (1,1), ..`
/// in lexicographic order, and levels `1..=J` ascending within each pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MomentLayout {
    channels: usize,
    levels: usize,
}

impl MomentLayout {
    pub fn new(channels: usize, levels: usize) -> Self {
        Self { channels, levels }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn pair_count(&self) -> usize {
        self.channels * (self.channels + 1) / 2
    }

    pub fn dim(&self) -> usize {
        self.pair_count() * self.levels
    }

    pub fn pair_position(&self, i: usize, i2: usize) -> usize {
        let (i, i2) = if i <= i2 { (i, i2) } else { (i2, i) };
        // pairs preceding row i: sum_{r<i} (I - r)
        i * self.channels - i * (i.saturating_sub(1)) / 2 + (i2 - i)
    }

    pub fn position(&self, idx: MomentIndex) -> usize {
        self.pair_position(idx.i, idx.i2) * self.levels + idx.level - 1
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        (0..self.channels)
            .flat_map(|i| (i..self.channels).map(move |i2| (i, i2)))
            .collect()
    }

    pub fn index(&self, position: usize) -> MomentIndex {
        let pair = position / self.levels;
        let (i, i2) = self.pairs()[pair];
        MomentIndex {
            i,
            i2,
            level: position % self.levels + 1,
        }
    }

    pub fn indices(&self) -> Vec<MomentIndex> {
        self.pairs()
            .into_iter()
            .flat_map(|(i, i2)| (1..=self.levels).map(move |level| MomentIndex { i, i2, level }))
            .collect()
    }
}

/// Stacked wavelet variances and cross-covariances in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    pub layout: MomentLayout,
    pub values: Vec<f64>,
}

impl MomentVector {
    pub fn zeros(layout: MomentLayout) -> Self {
        Self {
            layout,
            values: vec![0.0; layout.dim()],
        }
    }

    pub fn get(&self, i: usize, i2: usize, level: usize) -> f64 {
        self.values[self.layout.position(MomentIndex::new(i, i2, level))]
    }

    pub fn at(&self, idx: MomentIndex) -> f64 {
        self.values[self.layout.position(idx)]
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// The `levels` entries for one channel pair.
    pub fn pair(&self, i: usize, i2: usize) -> &[f64] {
        let start = self.layout.pair_position(i, i2) * self.layout.levels();
        &self.values[start..start + self.layout.levels()]
    }
}

/// Estimated covariance matrix of the stacked moment estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentCovariance {
    pub matrix: DMatrix<f64>,
    /// Bartlett truncation lag at the finest level.
    pub bandwidth: usize,
    /// Truncation lag per level, finest first.
    pub lags: Vec<usize>,
}

impl MomentCovariance {
    pub fn standard_errors(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

/// Truncation lag of the Bartlett kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// `max(floor(T^(1/3)), 2^(j+1))` at level `j`, capped at half the
    /// level's coefficient count. Level-`j` products stay correlated over about `2^j`
    /// lags, so a single cube-root lag badly understates coarse levels.
    #[default]
    LevelAdaptive,
    /// `floor(T^(1/3))` for every entry.
    CubeRoot,
    /// The same user-chosen lag for every entry.
    Fixed(usize),
}

impl Bandwidth {
    /// Lag at the finest level.
    pub fn resolve(&self, samples: usize) -> usize {
        self.lag(samples, 1, usize::MAX)
    }

    /// Lag at `level`, where `support` is the level's coefficient count.
    pub fn lag(&self, samples: usize, level: usize, support: usize) -> usize {
        let cube_root = (samples as f64).cbrt().floor() as usize;
        match *self {
            Bandwidth::LevelAdaptive => cube_root.max(1 << (level + 1).min(62)).min(support / 2),
            Bandwidth::CubeRoot => cube_root,
            Bandwidth::Fixed(b) => b,
        }
    }
}

/// Lag-0 wavelet cross-covariance: the uncentered mean of the pointwise
/// products over the common coefficients.
pub fn wccv(a: &CoefficientSeries, b: &CoefficientSeries) -> Result<f64> {
    if a.level != b.level {
        return Err(Error::CoefficientMismatch(format!(
            "levels {} and {}",
            a.level, b.level
        )));
    }
    if a.len() != b.len() {
        return Err(Error::CoefficientMismatch(format!(
            "lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::CoefficientMismatch("empty series".into()));
    }
    Ok(dot(&a.values, &b.values) / a.len() as f64)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut lanes = [0.0; 8];
    let mut chunks_a = a.chunks_exact(8);
    let mut chunks_b = b.chunks_exact(8);
    for (x, y) in (&mut chunks_a).zip(&mut chunks_b) {
        for k in 0..8 {
            lanes[k] += x[k] * y[k];
        }
    }
    let tail: f64 = chunks_a.remainder().iter().zip(chunks_b.remainder()).map(|(x, y)| x * y).sum();
    lanes.iter().sum::<f64>() + tail
}

/// All wavelet coefficients of a signal, kept around so the moment vector
/// and its covariance can share one decomposition.
#[derive(Debug, Clone)]
pub struct WaveletMoments {
    layout: MomentLayout,
    samples: usize,
    /// `coefficients[channel][level - 1]`
    coefficients: Vec<Vec<CoefficientSeries>>,
}

impl WaveletMoments {
    pub fn compute(signal: &MultiSignal, levels: usize) -> Result<Self> {
        let samples = signal.len();
        let max = max_level(samples)?;
        if levels == 0 || levels > max {
            return Err(Error::TooManyLevels {
                requested: levels,
                max,
            });
        }
        let coefficients = signal
            .channels()
            .iter()
            .enumerate()
            .map(|(i, x)| decompose_levels(x, levels, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            layout: MomentLayout::new(signal.channel_count(), levels),
            samples,
            coefficients,
        })
    }

    pub fn layout(&self) -> MomentLayout {
        self.layout
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn coefficients(&self, channel: usize, level: usize) -> &CoefficientSeries {
        &self.coefficients[channel][level - 1]
    }

    pub fn vector(&self) -> MomentVector {
        let values = self
            .layout
            .indices()
            .into_iter()
            .map(|idx| {
                let a = &self.coefficients[idx.i][idx.level - 1];
                let b = &self.coefficients[idx.i2][idx.level - 1];
                dot(&a.values, &b.values) / a.len() as f64
            })
            .collect();
        MomentVector {
            layout: self.layout,
            values,
        }
    }

    /// Length of the support `t = L_J..T` shared by all levels.
    pub fn common_support(&self) -> usize {
        self.samples + 1 - (1 << self.layout.levels())
    }

    fn coefficient_count(&self, level: usize) -> usize {
        self.samples + 1 - (1 << level)
    }

    /// Product series of one moment, demeaned over its support and placed
    /// on the time grid `0..T` with zeros before the first coefficient.
    fn product_series(&self, idx: MomentIndex) -> Vec<f64> {
        let mut u = Vec::with_capacity(self.samples);
        self.product_series_into(idx, &mut u);
        u
    }

    fn product_series_into(&self, idx: MomentIndex, u: &mut Vec<f64>) {
        let a = &self.coefficients[idx.i][idx.level - 1].values;
        let b = &self.coefficients[idx.i2][idx.level - 1].values;
        let mean = dot(a, b) / a.len() as f64;
        u.clear();
        u.resize(self.samples - a.len(), 0.0);
        u.extend(a.iter().zip(b).map(|(x, y)| x * y - mean));
    }

    /// Truncation lag per level, finest first.
    pub fn lags(&self, bandwidth: Bandwidth) -> Result<Vec<usize>> {
        let lags: Vec<usize> = (1..=self.layout.levels())
            .map(|j| bandwidth.lag(self.samples, j, self.coefficient_count(j)))
            .collect();
        for (j, &lag) in (1..).zip(&lags) {
            let support = self.coefficient_count(j);
            if support < 2 * lag.max(1) {
                return Err(Error::BandwidthTooLarge {
                    support,
                    bandwidth: lag,
                });
            }
        }
        Ok(lags)
    }

    /// Gaussian approximation to each moment variance evaluated at
    /// `reference` (empirical or model-implied moments):
    /// `(nu_ii nu_i'i' + gamma_ii'^2) / eta_j` with `eta_j = max(2 M_j / 2^j, 1)`
    /// equivalent degrees of freedom (about right for random-walk-like
    /// coefficients, an underestimate of the variance for white noise).
    /// The HAC estimate cannot see dependence longer than its support, so
    /// it is floored by this value.
    pub fn gaussian_variances(&self, reference: &MomentVector) -> Vec<f64> {
        self.layout
            .indices()
            .into_iter()
            .map(|idx| {
                let j = idx.level;
                let eta = (2.0 * self.coefficient_count(j) as f64 / (j as f64).exp2()).max(1.0);
                let gamma = reference.get(idx.i, idx.i2, j);
                (reference.get(idx.i, idx.i, j) * reference.get(idx.i2, idx.i2, j) + gamma * gamma) / eta
            })
            .collect()
    }

    /// Bartlett-kernel HAC variances of the moment estimators, the
    /// diagonal of [`WaveletMoments::hac_covariance`].
    pub fn hac_variances(&self, bandwidth: Bandwidth) -> Result<Vec<f64>> {
        let lags = self.lags(bandwidth)?;
        let mut u = Vec::with_capacity(self.samples);
        let mut sums = Vec::new();
        Ok(self
            .layout
            .indices()
            .into_iter()
            .map(|idx| {
                self.product_series_into(idx, &mut u);
                let width = lags[idx.level - 1] + 1;
                box_sums(&u, width, &mut sums);
                let m = self.coefficient_count(idx.level) as f64;
                (dot(&sums, &sums) / width as f64 / (m * m)).max(0.0)
            })
            .collect())
    }

    /// Variances of the moment estimators: the HAC variances floored by
    /// their Gaussian approximation at the empirical moments. Equal to the
    /// diagonal of [`WaveletMoments::covariance`] without its ridge.
    pub fn variances(&self, bandwidth: Bandwidth) -> Result<Vec<f64>> {
        let floor = self.gaussian_variances(&self.vector());
        Ok(floor_variances(&self.hac_variances(bandwidth)?, &floor))
    }

    /// Bartlett-kernel HAC estimate of the moment covariance, before the
    /// Gaussian floor and the positive semidefinite repair.
    pub fn hac_covariance(&self, bandwidth: Bandwidth) -> Result<DMatrix<f64>> {
        let lags = self.lags(bandwidth)?;
        let indices = self.layout.indices();
        let dim = indices.len();
        let products: Vec<Vec<f64>> = indices.iter().map(|&idx| self.product_series(idx)).collect();
        let counts: Vec<f64> = indices
            .iter()
            .map(|idx| self.coefficient_count(idx.level) as f64)
            .collect();
        let mut lrv = DMatrix::zeros(dim, dim);
        let mut sums: Vec<Vec<f64>> = vec![Vec::new(); dim];
        // a pair whose coarser member sits at level j uses that level's lag
        for (j, &lag) in (1..).zip(&lags) {
            let width = lag + 1;
            let finer: Vec<usize> = (0..dim).filter(|&c| indices[c].level <= j).collect();
            for &c in &finer {
                box_sums(&products[c], width, &mut sums[c]);
            }
            let rows: Vec<usize> = (0..dim).filter(|&a| indices[a].level == j).collect();
            let mut acc = vec![0.0; rows.len() * finer.len()];
            let len = sums[finer[0]].len();
            // blocked over time so the working set stays in cache
            for start in (0..len).step_by(2048) {
                let end = (start + 2048).min(len);
                for (r, &a) in rows.iter().enumerate() {
                    let x = &sums[a][start..end];
                    for (k, &c) in finer.iter().enumerate() {
                        acc[r * finer.len() + k] += dot(x, &sums[c][start..end]);
                    }
                }
            }
            for (r, &a) in rows.iter().enumerate() {
                for (k, &c) in finer.iter().enumerate() {
                    let s = acc[r * finer.len() + k] / width as f64 / (counts[a] * counts[c]);
                    lrv[(a, c)] = s;
                    lrv[(c, a)] = s;
                }
            }
        }
        Ok(lrv)
    }

    /// Full covariance estimate of the moment vector: the HAC estimate
    /// floored by the Gaussian approximation at the empirical moments
    /// (see [`floor_covariance`]).
    pub fn covariance(&self, bandwidth: Bandwidth) -> Result<MomentCovariance> {
        let lags = self.lags(bandwidth)?;
        let floor = self.gaussian_variances(&self.vector());
        Ok(MomentCovariance {
            matrix: floor_covariance(self.hac_covariance(bandwidth)?, &floor),
            bandwidth: lags[0],
            lags,
        })
    }
}

/// Elementwise maximum of `variances` and `floor`.
pub fn floor_variances(variances: &[f64], floor: &[f64]) -> Vec<f64> {
    variances.iter().zip(floor).map(|(v, f)| v.max(*f)).collect()
}

/// Raises each variance of `covariance` to at least `floor`, keeping the
/// correlations, and repairs the result to be positive semidefinite.
pub fn floor_covariance(covariance: DMatrix<f64>, floor: &[f64]) -> DMatrix<f64> {
    let dim = covariance.nrows();
    let stretch: Vec<f64> = (0..dim)
        .map(|k| {
            let d = covariance[(k, k)];
            if d > 0.0 && floor[k] > d {
                (floor[k] / d).sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let raised = DMatrix::from_fn(dim, dim, |a, c| {
        if a == c && covariance[(a, a)] <= 0.0 {
            floor[a]
        } else {
            covariance[(a, c)] * stretch[a] * stretch[c]
        }
    });
    repair_psd(raised)
}

/// Sums of `u` over every window of `width` consecutive indices that
/// overlaps the series, so that `dot(s, s) / width` is the Bartlett-weighted
/// sum of lagged cross-products with truncation lag `width - 1`.
fn box_sums(u: &[f64], width: usize, out: &mut Vec<f64>) {
    let n = u.len();
    out.clear();
    out.reserve(n + width - 1);
    let mut running = 0.0;
    for t in 0..n + width - 1 {
        if t < n {
            running += u[t];
        }
        if t >= width {
            running -= u[t - width];
        }
        out.push(running);
    }
}

/// Nearby positive semidefinite matrix with the same diagonal: negative
/// eigenvalues of the correlation matrix are clipped to zero, the result is
/// rescaled to unit diagonal and mapped back to the original scale. Each
/// diagonal entry is then inflated by a relative ridge of `1e-12`; a
/// zero diagonal entry gets `1e-12 * trace / dim`.
pub fn repair_psd(matrix: DMatrix<f64>) -> DMatrix<f64> {
    let dim = matrix.nrows();
    if dim == 0 {
        return matrix;
    }
    let sym = (&matrix + matrix.transpose()) * 0.5;
    let scale: Vec<f64> = sym
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 && d.is_finite() { d.sqrt() } else { 0.0 })
        .collect();
    let unit = |k: usize| if scale[k] > 0.0 { scale[k] } else { 1.0 };
    let scaled = DMatrix::from_fn(dim, dim, |a, c| sym[(a, c)] / (unit(a) * unit(c)));
    let eigen = SymmetricEigen::new(scaled);
    let clipped = eigen.eigenvalues.map(|v| v.max(0.0));
    let vectors = &eigen.eigenvectors;
    let repaired = vectors * DMatrix::from_diagonal(&clipped) * vectors.transpose();
    let norm: Vec<f64> = (0..dim)
        .map(|k| {
            let d = repaired[(k, k)];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut out = DMatrix::zeros(dim, dim);
    for a in 0..dim {
        for c in a..dim {
            let v = 0.5 * (repaired[(a, c)] + repaired[(c, a)]) * norm[a] * norm[c] * scale[a] * scale[c];
            out[(a, c)] = v;
            out[(c, a)] = v;
        }
        if norm[a] == 0.0 {
            out[(a, a)] = scale[a] * scale[a];
        }
    }
    let fallback = 1e-12 * out.trace() / dim as f64;
    for k in 0..dim {
        let d = out[(k, k)];
        out[(k, k)] = if d > 0.0 { d * (1.0 + 1e-12) } else { fallback };
    }
    out
}

pub fn moment_vector(signal: &MultiSignal, levels: usize) -> Result<MomentVector> {
    Ok(WaveletMoments::compute(signal, levels)?.vector())
}

pub fn moment_covariance(
    signal: &MultiSignal,
    levels: usize,
    bandwidth: Bandwidth,
) -> Result<MomentCovariance> {
    WaveletMoments::compute(signal, levels)?.covariance(bandwidth)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Normal-theory intervals `estimate -/+ z_{1-alpha/2} se`; wavelet
/// variances (diagonal entries) are floored at zero.
pub fn confidence_intervals(
    estimate: &MomentVector,
    covariance: &MomentCovariance,
    alpha: f64,
) -> Result<Vec<(f64, f64)>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    if covariance.matrix.nrows() != estimate.dim() {
        return Err(Error::CoefficientMismatch(format!(
            "covariance is {}x{} for {} moments",
            covariance.matrix.nrows(),
            covariance.matrix.ncols(),
            estimate.dim()
        )));
    }
    let z = normal_quantile(1.0 - alpha / 2.0);
    Ok(estimate
        .layout
        .indices()
        .into_iter()
        .zip(&estimate.values)
        .zip(covariance.standard_errors())
        .map(|((idx, &value), se)| {
            let (lo, hi) = (value - z * se, value + z * se);
            if idx.is_diagonal() {
                (lo.max(0.0), hi.max(0.0))
            } else {
                (lo, hi)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn canonical_layout_is_a_bijection() {
        let layout = MomentLayout::new(4, 3);
        assert_eq!(layout.dim(), 30);
        let indices = layout.indices();
        assert_eq!(indices[0], MomentIndex::new(0, 0, 1));
        assert_eq!(indices[3], MomentIndex::new(0, 1, 1));
        assert_eq!(indices[12], MomentIndex::new(1, 1, 1));
        for (pos, idx) in indices.iter().enumerate() {
            assert_eq!(layout.position(*idx), pos);
            assert_eq!(layout.index(pos), *idx);
        }
        assert_eq!(layout.pair_position(3, 2), layout.pair_position(2, 3));
    }

    #[test]
    fn wccv_examples() {
        let w = CoefficientSeries {
            level: 1,
            channel: 0,
            values: vec![-1.0, 1.0, -1.0],
        };
        assert_eq!(wccv(&w, &w).unwrap(), 1.0);
        let zero = CoefficientSeries {
            values: vec![0.0; 3],
            ..w.clone()
        };
        assert_eq!(wccv(&w, &zero).unwrap(), 0.0);
        let other_level = CoefficientSeries { level: 2, ..w.clone() };
        assert!(wccv(&w, &other_level).is_err());
        let shorter = CoefficientSeries {
            values: vec![1.0, 2.0],
            ..w.clone()
        };
        assert!(wccv(&w, &shorter).is_err());
    }

    #[test]
    fn single_channel_vector_is_the_wavelet_variance() {
        let x = noise(512, 1);
        let nu = moment_vector(&MultiSignal::single(x.clone()), 6).unwrap();
        assert_eq!(nu.dim(), 6);
        for j in 1..=6 {
            let w = crate::wavelet::decompose(&x, j).unwrap();
            let wv = w.values.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
            assert_relative_eq!(nu.get(0, 0, j), wv, max_relative = 1e-12);
        }
    }

    #[test]
    fn duplicated_channel_gives_identical_cross_entries() {
        let x = noise(1024, 2);
        let nu = moment_vector(&MultiSignal::new(vec![x.clone(), x]).unwrap(), 8).unwrap();
        for j in 1..=8 {
            assert_eq!(nu.get(0, 1, j), nu.get(0, 0, j));
            assert_eq!(nu.get(1, 1, j), nu.get(0, 0, j));
        }
    }

    #[test]
    fn ragged_and_oversized_requests_fail() {
        assert!(matches!(
            MultiSignal::new(vec![vec![0.0; 10], vec![0.0; 9]]),
            Err(Error::RaggedChannels(_))
        ));
        let s = MultiSignal::single(vec![0.0; 64]);
        assert!(matches!(
            moment_vector(&s, 6),
            Err(Error::TooManyLevels { requested: 6, max: 5 })
        ));
    }

    #[test]
    fn box_sums_give_bartlett_weights() {
        let u = noise(50, 3);
        let v = noise(50, 9);
        let mut su = Vec::new();
        let mut sv = Vec::new();
        for b in [0usize, 1, 3, 7, 60] {
            box_sums(&u, b + 1, &mut su);
            box_sums(&v, b + 1, &mut sv);
            let fast = dot(&su, &sv) / (b + 1) as f64;
            let mut direct = 0.0;
            for t in 0..50i64 {
                for s in 0..50i64 {
                    let w = 1.0 - (t - s).abs() as f64 / (b + 1) as f64;
                    direct += w.max(0.0) * u[t as usize] * v[s as usize];
                }
            }
            assert_relative_eq!(fast, direct, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn variances_match_the_covariance_diagonal() {
        let x = noise(3000, 8);
        let y: Vec<f64> = x.iter().scan(0.0, |s, v| {
            *s += v;
            Some(*s)
        }).collect();
        let wm = WaveletMoments::compute(&MultiSignal::new(vec![x, y]).unwrap(), 9).unwrap();
        let v = wm.variances(Bandwidth::LevelAdaptive).unwrap();
        let cov = wm.covariance(Bandwidth::LevelAdaptive).unwrap();
        for (k, var) in v.iter().enumerate() {
            assert_relative_eq!(cov.matrix[(k, k)], *var, max_relative = 1e-9);
        }
    }

    #[test]
    fn hac_matches_explicit_autocovariance_sum() {
        let x = noise(400, 4);
        let y: Vec<f64> = noise(400, 5).iter().zip(&x).map(|(a, b)| a + 0.5 * b).collect();
        let wm = WaveletMoments::compute(&MultiSignal::new(vec![x, y]).unwrap(), 3).unwrap();
        let b = 4;
        let hac = wm.hac_covariance(Bandwidth::Fixed(b)).unwrap();
        let indices = wm.layout().indices();
        let n = wm.samples();
        let (ia, ic) = (indices[1], indices[5]);
        let ua = wm.product_series(ia);
        let uc = wm.product_series(ic);
        let gamma = |l: i64| -> f64 {
            // sum_t u_a(t) u_c(t - l)
            let mut s = 0.0;
            for t in 0..n as i64 {
                let k = t - l;
                if k >= 0 && k < n as i64 {
                    s += ua[t as usize] * uc[k as usize];
                }
            }
            s
        };
        let mut lrv = gamma(0);
        for l in 1..=b as i64 {
            let w = 1.0 - l as f64 / (b + 1) as f64;
            lrv += w * (gamma(l) + gamma(-l));
        }
        let expected = lrv / ((n + 1 - 4) * (n + 1 - 8)) as f64;
        assert_relative_eq!(hac[(1, 5)], expected, max_relative = 1e-6);
    }

    #[test]
    fn covariance_is_symmetric_psd() {
        let x = noise(2048, 6);
        let cov = moment_covariance(&MultiSignal::single(x), 9, Bandwidth::CubeRoot).unwrap();
        let m = &cov.matrix;
        assert_eq!(cov.bandwidth, 12);
        for a in 0..m.nrows() {
            for c in 0..m.ncols() {
                assert_eq!(m[(a, c)], m[(c, a)]);
            }
        }
        let eig = SymmetricEigen::new(m.clone());
        assert!(eig.eigenvalues.iter().all(|&v| v >= -1e-18));
    }

    #[test]
    fn bandwidth_must_fit_support() {
        let s = MultiSignal::single(noise(40, 7));
        let wm = WaveletMoments::compute(&s, 4).unwrap();
        assert_eq!(wm.common_support(), 25);
        assert!(matches!(
            wm.covariance(Bandwidth::Fixed(13)),
            Err(Error::BandwidthTooLarge { .. })
        ));
        assert!(wm.covariance(Bandwidth::Fixed(12)).is_ok());
    }

    #[test]
    fn interval_examples() {
        let layout = MomentLayout::new(2, 1);
        let nu = MomentVector {
            layout,
            values: vec![0.0, 0.0, 2.0],
        };
        let cov = MomentCovariance {
            matrix: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0, 0.0])),
            bandwidth: 0,
            lags: vec![0],
        };
        let ci = confidence_intervals(&nu, &cov, 0.05).unwrap();
        assert_eq!(ci[0].0, 0.0);
        assert_relative_eq!(ci[0].1, 1.959963984540054, max_relative = 1e-12);
        assert_relative_eq!(ci[1].0, -1.959963984540054, max_relative = 1e-12);
        assert_eq!(ci[2], (2.0, 2.0));
        assert!(confidence_intervals(&nu, &cov, 1.0).is_err());
        assert!(confidence_intervals(&nu, &cov, 0.0).is_err());
    }

    #[test]
    fn repair_keeps_the_diagonal() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 3.0, -3.0, 3.0, 1e-6, 0.0, -3.0, 0.0, 9.0]);
        let r = repair_psd(m.clone());
        let eig = SymmetricEigen::new(r.clone());
        assert!(eig.eigenvalues.iter().all(|&v| v >= 0.0), "{:?}", eig.eigenvalues);
        for k in 0..3 {
            assert_relative_eq!(r[(k, k)], m[(k, k)], max_relative = 1e-9);
        }
        let psd = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        assert_relative_eq!(repair_psd(psd.clone()), psd, max_relative = 1e-9);
    }

    proptest! {
        #[test]
        fn scaling_equivariance(a in 0.1f64..10.0, seed in 0u64..1000) {
            let x = noise(256, seed);
            let y = noise(256, seed + 1);
            let base = moment_vector(&MultiSignal::new(vec![x.clone(), y.clone()]).unwrap(), 5).unwrap();
            let xs: Vec<f64> = x.iter().map(|v| a * v).collect();
            let scaled = moment_vector(&MultiSignal::new(vec![xs, y]).unwrap(), 5).unwrap();
            for j in 1..=5 {
                prop_assert!((scaled.get(0, 0, j) - a * a * base.get(0, 0, j)).abs() <= 1e-10 * scaled.get(0, 0, j).abs().max(1e-300));
                prop_assert!((scaled.get(0, 1, j) - a * base.get(0, 1, j)).abs() <= 1e-10 * (a * base.get(0, 1, j)).abs().max(1e-12));
                prop_assert_eq!(scaled.get(1, 1, j), base.get(1, 1, j));
            }
        }

        #[test]
        fn cauchy_schwarz_holds(seed in 0u64..1000, rho in -1.0f64..1.0) {
            let x = noise(300, seed);
            let y: Vec<f64> = noise(300, seed + 7).iter().zip(&x).map(|(e, v)| rho * v + e).collect();
            let nu = moment_vector(&MultiSignal::new(vec![x, y]).unwrap(), 6).unwrap();
            for j in 1..=6 {
                prop_assert!(nu.get(0, 0, j) >= 0.0);
                prop_assert!(nu.get(0, 1, j).abs() <= (nu.get(0, 0, j) * nu.get(1, 1, j)).sqrt() * (1.0 + 1e-12));
            }
        }
    }
}
