use rayon::prelude::*;
use serde::Serialize;

use super::{embed, fit_moments, FitOptions, Objective, Weighting, Weights};
use crate::error::{Error, Result};
use crate::models::{ModelSpec, ParamVector};
use crate::moments::WaveletMoments;
use crate::signal::MultiSignal;
use crate::simulate::{simulate, SimConfig};
use crate::wavelet::max_level;

/// Smallest bootstrap count accepted: a p-value below 0.05 needs at
/// least 19 draws.
pub const MIN_BOOTSTRAP: usize = 19;

/// Largest share of bootstrap refits allowed to fail.
pub const MAX_DROP_RATE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct DepTestOptions {
    pub bootstrap: usize,
    pub seed: u64,
    /// Options for every fit; the covariance is never computed.
    pub fit: FitOptions,
}

impl Default for DepTestOptions {
    fn default() -> Self {
        Self {
            bootstrap: 99,
            seed: 0,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepTestResult {
    /// `Q(null fit) - Q(full fit)`, floored at zero.
    pub stat: f64,
    /// Statistic on each retained bootstrap sample, in replicate order.
    pub boot_dist: Vec<f64>,
    pub p_value: f64,
    /// Requested bootstrap count.
    pub bootstrap: usize,
    /// Replicates dropped because a refit did not converge.
    pub dropped: usize,
    pub null_theta: ParamVector,
    pub full_theta: ParamVector,
    pub null_objective: f64,
    pub full_objective: f64,
}

struct Gap {
    stat: f64,
    null: (ParamVector, f64),
    full: (ParamVector, f64),
    converged: bool,
}

/// Tests whether the cross-channel parameters of `spec_full` improve the
/// fit, with the null distribution simulated from the fitted null model.
pub fn dependence_test(
    signal: &MultiSignal,
    spec_full: &ModelSpec,
    options: &DepTestOptions,
) -> Result<DepTestResult> {
    if options.bootstrap < MIN_BOOTSTRAP {
        return Err(Error::DependenceTest(format!(
            "need at least {MIN_BOOTSTRAP} bootstrap replicates, got {}",
            options.bootstrap
        )));
    }
    if !spec_full.has_cross_params() {
        return Err(Error::DependenceTest(
            "the model has no cross-channel parameters to test".into(),
        ));
    }
    let spec_null = spec_full.without_cross();
    let mut fit_options = options.fit.clone();
    fit_options.compute_covariance = false;
    fit_options.start = None;
    let levels = match fit_options.levels {
        Some(j) => j,
        None => max_level(signal.len())?,
    };
    fit_options.levels = Some(levels);

    let observed = objective_gap(signal, spec_full, &spec_null, &fit_options)?;
    let template = SimConfig::new(spec_null.clone(), observed.null.0.clone(), signal.len(), options.seed);
    let draws: Vec<Option<f64>> = (0..options.bootstrap as u64)
        .into_par_iter()
        .map(|b| -> Result<Option<f64>> {
            let data = simulate(&template.with_replicate(b))?;
            Ok(match objective_gap(&data, spec_full, &spec_null, &fit_options) {
                Ok(g) if g.converged => Some(g.stat),
                Ok(_) | Err(Error::NonConvergence(_)) | Err(Error::Singular(_)) => None,
                Err(e) => return Err(e),
            })
        })
        .collect::<Result<_>>()?;
    let boot_dist: Vec<f64> = draws.iter().flatten().copied().collect();
    let dropped = options.bootstrap - boot_dist.len();
    if dropped as f64 > MAX_DROP_RATE * options.bootstrap as f64 {
        return Err(Error::DependenceTest(format!(
            "{dropped} of {} bootstrap refits failed to converge",
            options.bootstrap
        )));
    }
    let exceed = boot_dist.iter().filter(|&&s| s >= observed.stat).count();
    Ok(DepTestResult {
        stat: observed.stat,
        p_value: (1 + exceed) as f64 / (boot_dist.len() + 1) as f64,
        boot_dist,
        bootstrap: options.bootstrap,
        dropped,
        null_theta: observed.null.0,
        full_theta: observed.full.0,
        null_objective: observed.null.1,
        full_objective: observed.full.1,
    })
}

/// Fits both models with one weighting matrix. The full model starts from
/// the null estimate with zero cross terms.
fn objective_gap(
    signal: &MultiSignal,
    spec_full: &ModelSpec,
    spec_null: &ModelSpec,
    options: &FitOptions,
) -> Result<Gap> {
    let levels = options.levels.expect("levels fixed by the caller");
    let moments = WaveletMoments::compute(signal, levels)?;
    let weights = match options.weighting {
        Weighting::Diagonal => Weights::diagonal(&moments.variances(options.bandwidth)?)?,
        Weighting::Full => Weights::full(&moments.covariance(options.bandwidth)?.matrix)?,
    };
    let target = moments.vector();
    let null_objective = Objective::new(spec_null, target.clone(), weights.clone())?;
    let null = fit_moments(&null_objective, options)?;
    let full_objective = Objective::new(spec_full, target, weights)?;
    let start = embed(spec_null, &null.theta, spec_full);
    let full = fit_moments(
        &full_objective,
        &FitOptions {
            start: Some(start),
            ..options.clone()
        },
    )?;
    // the full model nests the null one, so its minimum cannot be higher
    let (full_theta, full_value) = if full.objective <= null.objective {
        (full.theta, full.objective)
    } else {
        (embed(spec_null, &null.theta, spec_full), null.objective)
    };
    Ok(Gap {
        stat: (null.objective - full_value).max(0.0),
        converged: null.diagnostics.converged && full.diagnostics.converged,
        null: (null.theta, null.objective),
        full: (full_theta, full_value),
    })
}
