//! Per-channel starting values.
//!
//! For fixed autoregressive coefficients every univariate wavelet variance
//! is linear in the remaining parameters (with `omega^2` in place of the
//! drift slope), so a weighted non-negative least-squares fit over a grid
//! of coefficients gives a global start that Nelder–Mead then polishes.

use nalgebra::{DMatrix, DVector};

use super::optim::{minimize, NelderMeadOptions};
use crate::error::{Error, Result};
use crate::models::{ar1_wavelet_covariance, BlockKind, ModelSpec, ParamVector, TheoryCache};

/// Outcome of one univariate fit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnivariateFit {
    pub theta: ParamVector,
    pub objective: f64,
    pub converged: bool,
}

/// Fits a single-channel model to wavelet variances `wv` (levels `1..=J`)
/// with weights `weights` (inverse variances).
pub fn univariate_fit(spec: &ModelSpec, wv: &[f64], weights: &[f64], seed: u64) -> Result<UnivariateFit> {
    if spec.channels != 1 || spec.blocks.iter().any(|b| b.channels != [0]) {
        return Err(Error::InvalidParameters(
            "univariate fit needs a one-channel model".into(),
        ));
    }
    if wv.len() != weights.len() || wv.is_empty() {
        return Err(Error::InvalidParameters(format!(
            "{} wavelet variances but {} weights",
            wv.len(),
            weights.len()
        )));
    }
    let levels = wv.len();
    let ar1_count = spec.blocks.iter().filter(|b| b.kind == BlockKind::Ar1).count();
    let grid = phi_grid(levels, ar1_count);
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    for_each_increasing(&grid, ar1_count, &mut |phis| {
        let design = design_matrix(spec, phis, levels);
        let coefs = weighted_nnls(&design, wv, weights);
        let fitted = &design * DVector::from_column_slice(&coefs);
        let loss: f64 = (0..levels).map(|r| weights[r] * (wv[r] - fitted[r]).powi(2)).sum();
        if best.as_ref().is_none_or(|b| loss < b.0) {
            best = Some((loss, phis.to_vec(), coefs));
        }
    });
    let (loss, phis, coefs) = best.expect("grid is never empty");
    let start = assemble(spec, &phis, &coefs, wv);
    let needs_polish = ar1_count > 0 || coefs.iter().any(|&c| c <= 0.0);
    if !needs_polish {
        return Ok(UnivariateFit {
            theta: start,
            objective: loss,
            converged: true,
        });
    }
    let cache = TheoryCache::new(spec, levels)?;
    let layout = spec.layout();
    let objective = |u: &[f64]| {
        let theta = ParamVector::from_unconstrained(&layout, u);
        match cache.evaluate(&theta) {
            Ok(nu) => (0..levels).map(|r| weights[r] * (wv[r] - nu.values[r]).powi(2)).sum(),
            Err(_) => f64::NAN,
        }
    };
    let u0 = start.to_unconstrained(&layout)?;
    let opts = NelderMeadOptions {
        seed,
        ..NelderMeadOptions::for_dimension(u0.len())
    };
    let m = minimize(objective, &u0, &vec![0.3; u0.len()], &opts);
    let theta = ParamVector::from_unconstrained(&layout, &m.x);
    Ok(UnivariateFit {
        theta,
        objective: m.value,
        converged: m.converged,
    })
}

/// Candidate coefficients `1 - 2^(-s)`, spread over the scales in play.
fn phi_grid(levels: usize, ar1_count: usize) -> Vec<f64> {
    let step = match ar1_count {
        0 => return Vec::new(),
        1..=2 => 0.25,
        3 => 0.5,
        _ => 1.5,
    };
    let mut out = vec![0.05];
    let mut s: f64 = 0.25;
    while s <= levels as f64 + 2.0 {
        out.push(1.0 - (-s).exp2());
        s += step;
    }
    out
}

/// Calls `visit` with every strictly increasing `k`-tuple of `grid`.
fn for_each_increasing(grid: &[f64], k: usize, visit: &mut dyn FnMut(&[f64])) {
    fn recurse(grid: &[f64], k: usize, from: usize, acc: &mut Vec<f64>, visit: &mut dyn FnMut(&[f64])) {
        if acc.len() == k {
            visit(acc);
            return;
        }
        for idx in from..grid.len() {
            acc.push(grid[idx]);
            recurse(grid, k, idx + 1, acc, visit);
            acc.pop();
        }
    }
    recurse(grid, k, 0, &mut Vec::with_capacity(k), visit);
}

/// One column per block: the wavelet variance per unit of its linear
/// parameter (variance, `Q^2`, `omega^2` or innovation variance).
fn design_matrix(spec: &ModelSpec, phis: &[f64], levels: usize) -> DMatrix<f64> {
    let mut phis = phis.iter();
    let columns: Vec<Box<dyn Fn(f64, usize) -> f64>> = spec
        .blocks
        .iter()
        .map(|b| -> Box<dyn Fn(f64, usize) -> f64> {
            match b.kind {
                BlockKind::WhiteNoise => Box::new(|tau, _| 1.0 / tau),
                BlockKind::RandomWalk => Box::new(|tau, _| (tau * tau + 2.0) / (12.0 * tau)),
                BlockKind::Quantization => Box::new(|tau, _| 6.0 / (tau * tau)),
                BlockKind::Drift => Box::new(|tau, _| tau * tau / 16.0),
                BlockKind::Ar1 => {
                    let phi = *phis.next().expect("one coefficient per AR1 block");
                    Box::new(move |_, level| ar1_wavelet_covariance(phi, phi, 1.0, level))
                }
            }
        })
        .collect();
    DMatrix::from_fn(levels, columns.len(), |r, c| {
        let level = r + 1;
        columns[c]((level as f64).exp2(), level)
    })
}

fn weighted_nnls(design: &DMatrix<f64>, wv: &[f64], weights: &[f64]) -> Vec<f64> {
    let rows = design.nrows();
    let root: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let mut a = DMatrix::from_fn(rows, design.ncols(), |r, c| design[(r, c)] * root[r]);
    let b = DVector::from_fn(rows, |r, _| wv[r] * root[r]);
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm().max(f64::MIN_POSITIVE)).collect();
    for (c, n) in norms.iter().enumerate() {
        a.column_mut(c).scale_mut(1.0 / n);
    }
    nnls(&a, &b).iter().zip(&norms).map(|(x, n)| x / n).collect()
}

/// Lawson–Hanson non-negative least squares: `min |a x - b|`, `x >= 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-12 * a.norm().max(1.0) * b.norm().max(f64::MIN_POSITIVE);
    for _ in 0..3 * n + 3 {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        passive[j] = true;
        loop {
            let z = restricted_lstsq(a, b, &passive);
            if (0..n).all(|k| !passive[k] || z[k] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for k in 0..n {
                if passive[k] && z[k] <= 0.0 {
                    alpha = alpha.min(x[k] / (x[k] - z[k]));
                }
            }
            x += (z - &x) * alpha;
            for k in 0..n {
                if passive[k] && x[k] <= tol {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x
}

fn restricted_lstsq(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let cols: Vec<usize> = (0..a.ncols()).filter(|&k| passive[k]).collect();
    let sub = a.select_columns(&cols);
    let sol = sub
        .svd(true, true)
        .solve(b, 1e-14)
        .unwrap_or_else(|_| DVector::zeros(cols.len()));
    let mut out = DVector::zeros(a.ncols());
    for (idx, &k) in cols.iter().enumerate() {
        out[k] = sol[idx];
    }
    out
}

/// Parameter vector from grid coefficients and linear fits, with zero
/// components floored to a small positive share of the data.
fn assemble(spec: &ModelSpec, phis: &[f64], coefs: &[f64], wv: &[f64]) -> ParamVector {
    let design = design_matrix(spec, phis, wv.len());
    let mut phis = phis.iter();
    let mut out = Vec::new();
    for (k, block) in spec.blocks.iter().enumerate() {
        let floor = (0..wv.len())
            .map(|r| wv[r].abs() / design[(r, k)].abs())
            .filter(|x| x.is_finite())
            .fold(f64::INFINITY, f64::min)
            * 1e-4;
        let floor = if floor.is_finite() && floor > 0.0 { floor } else { 1e-12 };
        let value = coefs[k].max(floor);
        match block.kind {
            BlockKind::Ar1 => {
                out.push(*phis.next().expect("one coefficient per AR1 block"));
                out.push(value);
            }
            BlockKind::Drift => out.push(value.sqrt()),
            _ => out.push(value),
        }
    }
    ParamVector::new(out)
}
