//! The four workflows behind the command line: moment tables, fits,
//! simulation and the dependence test.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{dependence_test, fit, DepTestOptions, Diagnostics, FitOptions, FitResult, Weighting};
use crate::models::{theoretical_vector, ModelClass, ModelSpec, ParamVector};
use crate::moments::{normal_quantile, Bandwidth, MomentVector, WaveletMoments};
use crate::simulate::{simulate, SimConfig};
use crate::wavelet::max_level;

use super::dataset::{write_dataset, Dataset};
use super::output::write_atomic;
use super::specfile::SpecFile;

/// One row of a moment table; channels are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentRow {
    pub i: usize,
    pub i_prime: usize,
    pub j: usize,
    pub tau: f64,
    pub gamma_hat: f64,
    /// `+1` or `-1`, so `sign * abs_gamma` restores the value on a log axis.
    pub sign: i8,
    pub abs_gamma: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Model-implied value, in fit tables.
    pub implied: Option<f64>,
    /// Model-implied contribution of each block, in fit tables.
    pub blocks: Vec<f64>,
}

/// Header labels for the per-block columns, e.g. `implied_b2_RW`.
pub fn block_columns(spec: &ModelSpec) -> Vec<String> {
    spec.blocks
        .iter()
        .enumerate()
        .map(|(k, b)| format!("implied_b{}_{}", k + 1, b.kind))
        .collect()
}

fn rows(empirical: &MomentVector, standard_errors: &[f64], alpha: f64) -> Result<Vec<MomentRow>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    let z = normal_quantile(1.0 - alpha / 2.0);
    Ok(empirical
        .layout
        .indices()
        .into_iter()
        .zip(&empirical.values)
        .zip(standard_errors)
        .map(|((idx, &gamma), &se)| {
            let (mut lo, mut hi) = (gamma - z * se, gamma + z * se);
            if idx.is_diagonal() {
                lo = lo.max(0.0);
                hi = hi.max(0.0);
            }
            MomentRow {
                i: idx.i + 1,
                i_prime: idx.i2 + 1,
                j: idx.level,
                tau: idx.scale(),
                gamma_hat: gamma,
                sign: if gamma < 0.0 { -1 } else { 1 },
                abs_gamma: gamma.abs(),
                ci_lo: lo,
                ci_hi: hi,
                implied: None,
                blocks: Vec::new(),
            }
        })
        .collect())
}

/// Empirical moments with normal-theory intervals.
pub fn moment_table(dataset: &Dataset, levels: Option<usize>, alpha: f64, bandwidth: Bandwidth) -> Result<Vec<MomentRow>> {
    let levels = match levels {
        Some(j) => j,
        None => max_level(dataset.len())?,
    };
    let moments = WaveletMoments::compute(&dataset.signal, levels)?;
    let se: Vec<f64> = moments.variances(bandwidth)?.iter().map(|v| v.sqrt()).collect();
    rows(&moments.vector(), &se, alpha)
}

/// Renders rows as CSV; `block_names` labels the per-block columns.
pub fn format_moment_table(rows: &[MomentRow], block_names: &[String]) -> String {
    let mut out = String::from("i,i_prime,j,tau,gamma_hat,sign,abs_gamma,ci_lo,ci_hi");
    let with_implied = rows.iter().any(|r| r.implied.is_some());
    if with_implied {
        out.push_str(",implied");
        for name in block_names {
            out.push(',');
            out.push_str(name);
        }
    }
    out.push('\n');
    for r in rows {
        let _ = write!(
            out,
            "{},{},{},{},{:.16e},{},{:.16e},{:.16e},{:.16e}",
            r.i, r.i_prime, r.j, r.tau, r.gamma_hat, r.sign, r.abs_gamma, r.ci_lo, r.ci_hi
        );
        if with_implied {
            let _ = write!(out, ",{:.16e}", r.implied.unwrap_or(f64::NAN));
            for b in &r.blocks {
                let _ = write!(out, ",{b:.16e}");
            }
        }
        out.push('\n');
    }
    out
}

pub fn cmd_moments(dataset: &Dataset, levels: Option<usize>, alpha: f64, bandwidth: Bandwidth, out: &Path) -> Result<()> {
    let table = moment_table(dataset, levels, alpha, bandwidth)?;
    write_atomic(out, format_moment_table(&table, &[]).as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockReport {
    pub kind: String,
    /// 1-based.
    pub channels: Vec<usize>,
    pub cross: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelReport {
    pub channels: usize,
    pub class: ModelClass,
    pub blocks: Vec<BlockReport>,
}

impl From<&ModelSpec> for ModelReport {
    fn from(spec: &ModelSpec) -> Self {
        Self {
            channels: spec.channels,
            class: spec.class,
            blocks: spec
                .blocks
                .iter()
                .map(|b| BlockReport {
                    kind: b.kind.to_string(),
                    channels: b.channels.iter().map(|c| c + 1).collect(),
                    cross: !b.cross_pairs().is_empty(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataReport {
    pub channels: Vec<String>,
    pub samples: usize,
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterReport {
    pub name: String,
    pub unit: String,
    pub estimate: f64,
    pub std_error: Option<f64>,
    pub start: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub i: usize,
    pub i_prime: usize,
    pub j: usize,
    pub tau: f64,
    pub empirical: f64,
    pub implied: f64,
    pub std_error: f64,
}

/// Structured result of a fit, written as JSON.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub model: ModelReport,
    pub data: DataReport,
    pub levels: usize,
    pub weighting: Weighting,
    pub hac_lags: Vec<usize>,
    pub parameters: Vec<ParameterReport>,
    /// Covariance of the estimate, in parameter order.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub objective: f64,
    pub converged: bool,
    pub diagnostics: Diagnostics,
    pub moments: Vec<MomentReport>,
}

/// Fits the model of `spec_file`, starting from its values when given.
pub fn fit_report(dataset: &Dataset, spec_file: &SpecFile, options: &FitOptions, alpha: f64) -> Result<(FitReport, Vec<MomentRow>)> {
    let mut options = options.clone();
    if options.start.is_none() {
        options.start = spec_file.theta.clone();
    }
    let result = fit(&dataset.signal, &spec_file.spec, &options)?;
    let report = build_report(dataset, &result);
    let mut table = rows(&result.empirical, &result.moment_standard_errors, alpha)?;
    let contributions = block_contributions(&result)?;
    for (k, row) in table.iter_mut().enumerate() {
        row.implied = Some(result.implied.values[k]);
        row.blocks = contributions.iter().map(|c| c.values[k]).collect();
    }
    Ok((report, table))
}

fn build_report(dataset: &Dataset, result: &FitResult) -> FitReport {
    let layout = result.spec.layout();
    let parameters = layout
        .entries()
        .iter()
        .enumerate()
        .map(|(p, e)| ParameterReport {
            name: e.name(),
            unit: e.unit().to_string(),
            estimate: result.theta.values[p],
            std_error: result.standard_errors.as_ref().map(|se| se[p]),
            start: result.diagnostics.start[p],
        })
        .collect();
    let moments = result
        .empirical
        .layout
        .indices()
        .into_iter()
        .enumerate()
        .map(|(k, idx)| MomentReport {
            i: idx.i + 1,
            i_prime: idx.i2 + 1,
            j: idx.level,
            tau: idx.scale(),
            empirical: result.empirical.values[k],
            implied: result.implied.values[k],
            std_error: result.moment_standard_errors[k],
        })
        .collect();
    FitReport {
        model: ModelReport::from(&result.spec),
        data: DataReport {
            channels: dataset.names.clone(),
            samples: dataset.len(),
            rate: dataset.rate,
        },
        levels: result.empirical.layout.levels(),
        weighting: result.weighting,
        hac_lags: result.lags.clone(),
        parameters,
        covariance: result
            .covariance
            .as_ref()
            .map(|c| c.row_iter().map(|r| r.iter().copied().collect()).collect()),
        objective: result.objective,
        converged: result.diagnostics.converged,
        diagnostics: result.diagnostics.clone(),
        moments,
    }
}

/// Implied moments of each block on its own.
fn block_contributions(result: &FitResult) -> Result<Vec<MomentVector>> {
    let spec = &result.spec;
    let layout = spec.layout();
    let levels = result.empirical.layout.levels();
    spec.blocks
        .iter()
        .enumerate()
        .map(|(k, block)| {
            let single = ModelSpec::new(spec.channels, vec![block.clone()], ModelClass::Custom);
            let theta = ParamVector::new(result.theta.values[layout.block_range(k)].to_vec());
            theoretical_vector(&single, &theta, levels)
        })
        .collect()
}

/// Writes the JSON report and the moment table. Returns the report so the
/// caller can act on convergence.
pub fn cmd_fit(
    dataset: &Dataset,
    spec_file: &SpecFile,
    options: &FitOptions,
    alpha: f64,
    report_path: &Path,
    table_path: Option<&Path>,
) -> Result<FitReport> {
    let (report, table) = fit_report(dataset, spec_file, options, alpha)?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    write_atomic(report_path, json.as_bytes())?;
    if let Some(path) = table_path {
        write_atomic(path, format_moment_table(&table, &block_columns(&spec_file.spec)).as_bytes())?;
    }
    Ok(report)
}

/// Output path of replicate `r`: `out` itself for a single replicate,
/// otherwise `stem_r000.ext`, `stem_r001.ext`, ...
pub fn replicate_path(out: &Path, r: u64, replicates: u64) -> PathBuf {
    if replicates == 1 {
        return out.to_path_buf();
    }
    let stem = out.file_stem().map_or_else(|| "sim".into(), |s| s.to_string_lossy().into_owned());
    let name = match out.extension() {
        Some(ext) => format!("{stem}_r{r:03}.{}", ext.to_string_lossy()),
        None => format!("{stem}_r{r:03}"),
    };
    out.with_file_name(name)
}

/// Simulates `replicates` datasets from the model, using `theta` or the
/// values in the spec file.
pub fn cmd_simulate(
    spec_file: &SpecFile,
    theta: Option<&ParamVector>,
    length: usize,
    replicates: u64,
    seed: u64,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let theta = theta
        .or(spec_file.theta.as_ref())
        .cloned()
        .ok_or_else(|| Error::InvalidParameters("simulation needs parameter values in the spec file or on the command line".into()))?;
    let expected = spec_file.spec.param_count();
    if theta.len() != expected {
        return Err(Error::InvalidParameters(format!(
            "the model has {expected} parameters, got {}",
            theta.len()
        )));
    }
    let template = SimConfig::new(spec_file.spec.clone(), theta, length, seed);
    let names: Vec<String> = (1..=spec_file.spec.channels).map(|i| format!("x{i}")).collect();
    (0..replicates)
        .map(|r| {
            let signal = simulate(&template.with_replicate(r))?;
            let path = replicate_path(out, r, replicates);
            write_dataset(&path, &Dataset::new(names.clone(), signal)?)?;
            Ok(path)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestParameter {
    pub name: String,
    pub null: f64,
    pub full: f64,
}

/// Dependence test result, written as JSON.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestDepReport {
    pub model: ModelReport,
    pub data: DataReport,
    pub stat: f64,
    pub p_value: f64,
    pub bootstrap: usize,
    pub retained: usize,
    pub dropped: usize,
    pub seed: u64,
    pub null_objective: f64,
    pub full_objective: f64,
    pub parameters: Vec<TestParameter>,
    pub boot_dist: Vec<f64>,
}

pub fn cmd_testdep(dataset: &Dataset, spec_file: &SpecFile, options: &DepTestOptions, out: &Path) -> Result<TestDepReport> {
    let spec = &spec_file.spec;
    let result = dependence_test(&dataset.signal, spec, options)?;
    let full_layout = spec.layout();
    let null_theta = crate::estimator::embed(&spec.without_cross(), &result.null_theta, spec);
    let report = TestDepReport {
        model: ModelReport::from(spec),
        data: DataReport {
            channels: dataset.names.clone(),
            samples: dataset.len(),
            rate: dataset.rate,
        },
        stat: result.stat,
        p_value: result.p_value,
        bootstrap: result.bootstrap,
        retained: result.boot_dist.len(),
        dropped: result.dropped,
        seed: options.seed,
        null_objective: result.null_objective,
        full_objective: result.full_objective,
        parameters: full_layout
            .entries()
            .iter()
            .enumerate()
            .map(|(p, e)| TestParameter {
                name: e.name(),
                null: null_theta.values[p],
                full: result.full_theta.values[p],
            })
            .collect(),
        boot_dist: result.boot_dist,
    };
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    write_atomic(out, json.as_bytes())?;
    Ok(report)
}
