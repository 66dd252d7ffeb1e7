//! Multivariate wavelet moment matching.
//!
//! [`fit`] computes the empirical moments, builds per-channel starting
//! values, minimizes the weighted distance to the model-implied moments
//! and attaches a sandwich covariance for the estimate.
//! [`dependence_test`] calibrates the gain from cross-channel parameters
//! by parametric bootstrap.

mod dependence;
mod optim;
mod starts;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use dependence::{dependence_test, DepTestOptions, DepTestResult};
pub use optim::{minimize, Minimum, NelderMeadOptions};
pub use starts::{nnls, univariate_fit, UnivariateFit};

use crate::error::{Error, Result};
use crate::models::{
    canonicalize, identifiability_warnings, jacobian, validate, validate_structure, BlockValues,
    ModelSpec, ParamRole, ParamVector, TheoryCache, Transform,
};
use crate::moments::{floor_covariance, floor_variances, repair_psd, Bandwidth, MomentVector, WaveletMoments};
use crate::signal::MultiSignal;
use crate::wavelet::max_level;

/// Weighting matrix used in the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Inverse of the diagonal of the moment covariance.
    #[default]
    #[serde(rename = "diag")]
    Diagonal,
    /// Inverse of the full moment covariance.
    Full,
}

/// Coordinates the optimizer works in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    /// Log, atanh and atanh-correlation coordinates.
    #[default]
    Transformed,
    /// Raw parameters; out-of-domain points are rejected.
    Raw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Number of levels; defaults to the largest usable.
    pub levels: Option<usize>,
    pub weighting: Weighting,
    pub bandwidth: Bandwidth,
    pub space: Space,
    pub seed: u64,
    pub restarts: usize,
    /// Compute the sandwich covariance of the estimate.
    pub compute_covariance: bool,
    /// Starting point; per-channel fits are used when absent.
    pub start: Option<ParamVector>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            levels: None,
            weighting: Weighting::Diagonal,
            bandwidth: Bandwidth::LevelAdaptive,
            space: Space::Transformed,
            seed: 0,
            restarts: 3,
            compute_covariance: true,
            start: None,
        }
    }
}

/// Weighting of moment residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    /// Inverse moment variances; also drives the per-channel fits.
    pub inverse_variances: Vec<f64>,
    /// Full weighting matrix, when not diagonal.
    pub full: Option<DMatrix<f64>>,
}

impl Weights {
    pub fn diagonal(variances: &[f64]) -> Result<Self> {
        Ok(Self {
            inverse_variances: inverse_variances(variances)?,
            full: None,
        })
    }

    /// Inverse of a moment covariance whose correlation eigenvalues are
    /// raised to at least [`FULL_WEIGHT_EIGEN_FLOOR`] times the largest.
    pub fn full(covariance: &DMatrix<f64>) -> Result<Self> {
        let variances: Vec<f64> = covariance.diagonal().iter().copied().collect();
        let inverse_variances = inverse_variances(&variances)?;
        let inverse = scaled_inverse(&condition(&repair_psd(covariance.clone()), FULL_WEIGHT_EIGEN_FLOOR))
            .ok_or_else(|| Error::Singular("moment covariance cannot be inverted".into()))?;
        Ok(Self {
            inverse_variances,
            full: Some(inverse),
        })
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        match &self.full {
            Some(m) => m.clone(),
            None => DMatrix::from_diagonal(&self.inverse_variances.clone().into()),
        }
    }

    pub fn quadratic(&self, residual: &[f64]) -> f64 {
        match &self.full {
            None => residual
                .iter()
                .zip(&self.inverse_variances)
                .map(|(r, w)| w * r * r)
                .sum(),
            Some(m) => {
                let n = residual.len();
                let mut total = 0.0;
                for a in 0..n {
                    let row: f64 = (0..n).map(|b| m[(a, b)] * residual[b]).sum();
                    total += residual[a] * row;
                }
                total
            }
        }
    }
}

/// Zero variances (exactly cancelling moments) take the smallest positive
/// variance present so that their weight stays finite.
fn inverse_variances(variances: &[f64]) -> Result<Vec<f64>> {
    let floor = variances
        .iter()
        .copied()
        .filter(|v| *v > 0.0 && v.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !floor.is_finite() {
        return Err(Error::Singular("every moment variance is zero".into()));
    }
    Ok(variances
        .iter()
        .map(|&v| 1.0 / if v > 0.0 && v.is_finite() { v } else { floor })
        .collect())
}

/// Inverse of a symmetric positive definite matrix after equilibrating
/// its diagonal; `None` when numerically singular.
/// Smallest correlation eigenvalue kept by [`Weights::full`], relative to
/// the largest. The HAC estimate of a long moment vector is far from
/// positive definite, and directions clipped to zero would otherwise get
/// weights near `1e12`.
pub const FULL_WEIGHT_EIGEN_FLOOR: f64 = 1e-2;

/// Raises the eigenvalues of the correlation matrix of `m` to at least
/// `floor` times the largest, keeping the variances.
fn condition(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let sd: Vec<f64> = (0..n).map(|k| m[(k, k)].max(0.0).sqrt()).collect();
    let unit = |k: usize| if sd[k] > 0.0 { sd[k] } else { 1.0 };
    let corr = DMatrix::from_fn(n, n, |a, b| m[(a, b)] / (unit(a) * unit(b)));
    let eig = corr.symmetric_eigen();
    let max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let raised = eig.eigenvalues.map(|v| v.max(floor * max));
    let c = &eig.eigenvectors * DMatrix::from_diagonal(&raised) * eig.eigenvectors.transpose();
    let norm: Vec<f64> = (0..n).map(|k| 1.0 / c[(k, k)].sqrt()).collect();
    DMatrix::from_fn(n, n, |a, b| {
        let v = 0.5 * (c[(a, b)] + c[(b, a)]) * norm[a] * norm[b];
        v * unit(a) * unit(b)
    })
}

fn scaled_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    let scale: Vec<f64> = (0..n)
        .map(|k| {
            let d = m[(k, k)];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let scaled = DMatrix::from_fn(n, n, |a, b| m[(a, b)] * scale[a] * scale[b]);
    let eig = scaled.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if max <= 0.0 || min <= 1e-13 * max {
        return None;
    }
    let inv = scaled.cholesky()?.inverse();
    Some(DMatrix::from_fn(n, n, |a, b| inv[(a, b)] * scale[a] * scale[b]))
}

/// `Q(theta) = (nu_hat - nu(theta))' W (nu_hat - nu(theta))`.
#[derive(Debug, Clone)]
pub struct Objective {
    target: MomentVector,
    weights: Weights,
    cache: TheoryCache,
}

impl Objective {
    pub fn new(spec: &ModelSpec, target: MomentVector, weights: Weights) -> Result<Self> {
        if target.layout.channels() != spec.channels {
            return Err(Error::InvalidParameters(format!(
                "moments cover {} channels but the model has {}",
                target.layout.channels(),
                spec.channels
            )));
        }
        if weights.inverse_variances.len() != target.dim() {
            return Err(Error::InvalidParameters(format!(
                "{} weights for {} moments",
                weights.inverse_variances.len(),
                target.dim()
            )));
        }
        let cache = TheoryCache::new(spec, target.layout.levels())?;
        Ok(Self {
            target,
            weights,
            cache,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        self.cache.spec()
    }

    pub fn target(&self) -> &MomentVector {
        &self.target
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn levels(&self) -> usize {
        self.target.layout.levels()
    }

    pub fn value(&self, theta: &ParamVector) -> Result<f64> {
        let nu = self.cache.evaluate(theta)?;
        Ok(self.residual_norm(&nu))
    }

    fn residual_norm(&self, nu: &MomentVector) -> f64 {
        let residual: Vec<f64> = self
            .target
            .values
            .iter()
            .zip(&nu.values)
            .map(|(a, b)| a - b)
            .collect();
        self.weights.quadratic(&residual)
    }

    /// Objective at a raw point, or NaN outside the parameter domain.
    fn value_checked(&self, theta: &ParamVector) -> f64 {
        let Ok(values) = self.spec().unpack(theta) else {
            return f64::NAN;
        };
        if !in_domain(&values) {
            return f64::NAN;
        }
        match self.cache.evaluate_values(&values) {
            Ok(nu) => self.residual_norm(&nu),
            Err(_) => f64::NAN,
        }
    }
}

fn in_domain(values: &[BlockValues]) -> bool {
    values.iter().all(|v| match v {
        BlockValues::Quantization { q2 } => q2.iter().all(|&x| x > 0.0),
        BlockValues::Drift { omega } => omega.iter().all(|&x| x > 0.0),
        BlockValues::Ar1 { phi, cov } => {
            phi.iter().all(|p| p.abs() < 1.0) && cov.clone().cholesky().is_some()
        }
        BlockValues::WhiteNoise { cov } | BlockValues::RandomWalk { cov } => {
            cov.clone().cholesky().is_some()
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub evaluations: usize,
    pub restarts: usize,
    pub converged: bool,
    pub start: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Minimizer of an [`Objective`].
#[derive(Debug, Clone, PartialEq)]
pub struct MomentFit {
    pub theta: ParamVector,
    pub objective: f64,
    pub diagnostics: Diagnostics,
}

/// Starting values: per-channel fits mapped back block by block, cross
/// terms at zero. AR1 blocks on a channel take the univariate estimates in
/// ascending coefficient order.
pub fn starting_values(objective: &Objective, seed: u64) -> Result<(ParamVector, Vec<String>)> {
    let spec = objective.spec();
    let levels = objective.levels();
    let layout = spec.layout();
    let target = objective.target();
    let mut values = vec![f64::NAN; layout.len()];
    let mut warnings = Vec::new();
    for channel in 0..spec.channels {
        let (uni, origin) = spec.restrict_to_channel(channel);
        if uni.blocks.is_empty() {
            continue;
        }
        let base = target.layout.pair_position(channel, channel) * levels;
        let wv = &target.values[base..base + levels];
        let weights = &objective.weights.inverse_variances[base..base + levels];
        let fit = univariate_fit(&uni, wv, weights, seed ^ channel as u64)?;
        if !fit.converged {
            warnings.push(format!(
                "starting-value fit for channel {} did not converge; using its best point",
                channel + 1
            ));
        }
        let uni_layout = uni.layout();
        for (u, entry) in uni_layout.entries().iter().enumerate() {
            let block = origin[entry.block];
            let role = match entry.role {
                ParamRole::Variance { .. } => ParamRole::Variance { channel },
                ParamRole::QuantizationPower { .. } => ParamRole::QuantizationPower { channel },
                ParamRole::DriftSlope { .. } => ParamRole::DriftSlope { channel },
                ParamRole::Autoregressive { .. } => ParamRole::Autoregressive { channel },
                ParamRole::Covariance { .. } => continue,
            };
            if let Some(p) = layout
                .entries()
                .iter()
                .position(|e| e.block == block && e.role == role)
            {
                values[p] = fit.theta.values[u];
            }
        }
    }
    for (p, entry) in layout.entries().iter().enumerate() {
        if entry.is_cross() {
            values[p] = 0.0;
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameters("starting values are incomplete".into()));
    }
    separate_equal_phis(spec, &mut values);
    Ok((ParamVector::new(values), warnings))
}

/// Nudges AR1 coefficients that coincide on a channel so the start is
/// inside the admissible set.
fn separate_equal_phis(spec: &ModelSpec, values: &mut [f64]) {
    let layout = spec.layout();
    for channel in 0..spec.channels {
        let positions: Vec<usize> = layout
            .entries()
            .iter()
            .enumerate()
            .filter(|(_, e)| e.role == ParamRole::Autoregressive { channel })
            .map(|(p, _)| p)
            .collect();
        for (k, &p) in positions.iter().enumerate() {
            if positions[..k].iter().any(|&q| values[q] == values[p]) {
                values[p] = (values[p] * (1.0 - 1e-3 * (k as f64))).clamp(-0.999, 0.999);
            }
        }
    }
}

/// Minimizes `objective` from `options.start` or from [`starting_values`].
pub fn fit_moments(objective: &Objective, options: &FitOptions) -> Result<MomentFit> {
    let spec = objective.spec();
    let layout = spec.layout();
    let (start, mut warnings) = match &options.start {
        Some(s) => (s.clone(), Vec::new()),
        None => starting_values(objective, options.seed)?,
    };
    let violations = validate(spec, &start);
    if !violations.is_empty() {
        return Err(Error::InvalidSpec(violations));
    }
    let nm = NelderMeadOptions {
        seed: options.seed,
        restarts: options.restarts,
        ..NelderMeadOptions::for_dimension(layout.len())
    };
    let (theta, m) = match options.space {
        Space::Transformed => {
            let u0 = start.to_unconstrained(&layout)?;
            let steps: Vec<f64> = layout
                .entries()
                .iter()
                .map(|e| match e.transform {
                    Transform::Log => 0.3,
                    _ => 0.2,
                })
                .collect();
            let f = |u: &[f64]| objective.value_checked(&ParamVector::from_unconstrained(&layout, u));
            let m = minimize(f, &u0, &steps, &nm);
            (ParamVector::from_unconstrained(&layout, &m.x), m)
        }
        Space::Raw => {
            let x0 = &start.values;
            let steps: Vec<f64> = layout
                .entries()
                .iter()
                .enumerate()
                .map(|(p, e)| match e.transform {
                    Transform::Correlation { first, second } => 0.1 * (x0[first] * x0[second]).sqrt(),
                    Transform::Atanh => 0.1 * (1.0 - x0[p].abs()).max(1e-6),
                    Transform::Log => 0.1 * x0[p],
                })
                .collect();
            let f = |x: &[f64]| objective.value_checked(&ParamVector::new(x.to_vec()));
            let m = minimize(f, &start.values, &steps, &nm);
            (ParamVector::new(m.x.clone()), m)
        }
    };
    let theta = canonicalize(spec, &theta)?;
    if !m.converged {
        warnings.push(format!(
            "optimizer stopped after {} iterations without meeting the tolerance",
            m.iterations
        ));
    }
    Ok(MomentFit {
        objective: objective.value(&theta)?,
        theta,
        diagnostics: Diagnostics {
            iterations: m.iterations,
            evaluations: m.evaluations,
            restarts: m.restarts,
            converged: m.converged,
            start: start.values,
            warnings,
        },
    })
}

/// Complete estimate with moments and uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub theta: ParamVector,
    pub names: Vec<String>,
    /// Covariance of the estimate (sandwich form).
    pub covariance: Option<DMatrix<f64>>,
    pub standard_errors: Option<Vec<f64>>,
    pub objective: f64,
    pub empirical: MomentVector,
    pub implied: MomentVector,
    pub moment_standard_errors: Vec<f64>,
    pub samples: usize,
    /// HAC truncation lag per level, finest first.
    pub lags: Vec<usize>,
    pub weighting: Weighting,
    pub diagnostics: Diagnostics,
}

/// Estimates `spec` from `signal`.
pub fn fit(signal: &MultiSignal, spec: &ModelSpec, options: &FitOptions) -> Result<FitResult> {
    let violations = validate_structure(spec);
    if !violations.is_empty() {
        return Err(Error::InvalidSpec(violations));
    }
    if signal.channel_count() != spec.channels {
        return Err(Error::InvalidParameters(format!(
            "data has {} channels but the model has {}",
            signal.channel_count(),
            spec.channels
        )));
    }
    let levels = match options.levels {
        Some(j) => j,
        None => max_level(signal.len())?,
    };
    let moments = WaveletMoments::compute(signal, levels)?;
    let empirical = moments.vector();
    let lags = moments.lags(options.bandwidth)?;
    let need_full = options.compute_covariance || options.weighting == Weighting::Full;
    let hac = if need_full {
        Some(moments.hac_covariance(options.bandwidth)?)
    } else {
        None
    };
    let hac_variances = match &hac {
        Some(c) => c.diagonal().iter().copied().collect(),
        None => moments.hac_variances(options.bandwidth)?,
    };
    // first pass floors the HAC estimate at the empirical moments, the
    // second at the moments implied by the first estimate
    let cache = TheoryCache::new(spec, levels)?;
    let mut reference = empirical.clone();
    let mut start = options.start.clone();
    let mut stage = None;
    let mut initial = None;
    for _ in 0..2 {
        let floor = moments.gaussian_variances(&reference);
        let covariance = hac.clone().map(|c| floor_covariance(c, &floor));
        let variances = match &covariance {
            Some(c) => c.diagonal().iter().copied().collect(),
            None => floor_variances(&hac_variances, &floor),
        };
        let weights = match options.weighting {
            Weighting::Diagonal => Weights::diagonal(&variances)?,
            Weighting::Full => Weights::full(covariance.as_ref().expect("computed above"))?,
        };
        let objective = Objective::new(spec, empirical.clone(), weights)?;
        let found = fit_moments(
            &objective,
            &FitOptions {
                start: start.clone(),
                ..options.clone()
            },
        )?;
        reference = cache.evaluate(&found.theta)?;
        start = Some(found.theta.clone());
        initial.get_or_insert_with(|| found.diagnostics.start.clone());
        stage = Some((objective, found, covariance, variances));
    }
    let (objective, mut found, covariance, variances) = stage.expect("two passes");
    found.diagnostics.start = initial.expect("two passes");
    found
        .diagnostics
        .warnings
        .extend(identifiability_warnings(spec));
    let implied = reference;
    let (cov, se) = match &covariance {
        Some(v) if options.compute_covariance => {
            let xi = sandwich(spec, &found.theta, levels, objective.weights(), v)?;
            let se = xi.diagonal().iter().map(|d| d.max(0.0).sqrt()).collect();
            (Some(xi), Some(se))
        }
        _ => (None, None),
    };
    Ok(FitResult {
        spec: spec.clone(),
        names: spec.layout().names(),
        theta: found.theta,
        covariance: cov,
        standard_errors: se,
        objective: found.objective,
        empirical,
        implied,
        moment_standard_errors: variances.iter().map(|v| v.max(0.0).sqrt()).collect(),
        samples: signal.len(),
        lags,
        weighting: options.weighting,
        diagnostics: found.diagnostics,
    })
}

/// `(A'WA)^-1 A'W V W A (A'WA)^-1` with `A` the moment Jacobian at `theta`
/// and `V` the covariance of the empirical moments.
pub fn sandwich(
    spec: &ModelSpec,
    theta: &ParamVector,
    levels: usize,
    weights: &Weights,
    moment_covariance: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let a = jacobian(spec, theta, levels)?;
    let w = weights.matrix();
    let wa = &w * &a;
    let bread = a.transpose() * &wa;
    let bread_inv = scaled_inverse(&symmetrize(bread)).ok_or_else(|| {
        Error::Singular(
            "the moment Jacobian does not have full column rank at the estimate; \
             the parameters are not identified by these moments"
                .into(),
        )
    })?;
    let meat = wa.transpose() * moment_covariance * &wa;
    Ok(symmetrize(&bread_inv * meat * &bread_inv))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Re-expresses `theta` of `from` in the layout of `to`, matching entries
/// by block and role; entries absent from `from` are zero.
pub fn embed(from: &ModelSpec, theta: &ParamVector, to: &ModelSpec) -> ParamVector {
    let source = from.layout();
    let values = to
        .layout()
        .entries()
        .iter()
        .map(|e| {
            source
                .entries()
                .iter()
                .position(|s| s.block == e.block && s.role == e.role)
                .map_or(0.0, |p| theta.values[p])
        })
        .collect();
    ParamVector::new(values)
}
