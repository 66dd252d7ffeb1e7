//! Nelder–Mead simplex minimizer with seeded restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Relative spread of simplex values that counts as converged.
    pub ftol: f64,
    /// Absolute spread floor, for minima at zero.
    pub fabs: f64,
    /// Largest vertex distance from the best point, in units of the
    /// initial step per coordinate, allowed at convergence.
    pub xtol: f64,
    /// Iteration cap per run.
    pub max_iter: usize,
    /// Restarts from the incumbent after the first run.
    pub restarts: usize,
    pub seed: u64,
}

impl NelderMeadOptions {
    pub fn for_dimension(p: usize) -> Self {
        Self {
            ftol: 1e-8,
            fabs: 1e-14,
            xtol: 1e-6,
            max_iter: 5000 * p.max(1),
            restarts: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub restarts: usize,
    pub converged: bool,
}

/// Minimizes `f` from `start` with initial simplex offsets `steps`.
/// Non-finite values are treated as `+inf` (infeasible).
pub fn minimize<F>(f: F, start: &[f64], steps: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best = run(&eval, start, steps, opts);
    let mut restarts = 0;
    for _ in 0..opts.restarts {
        restarts += 1;
        let perturbed: Vec<f64> = best
            .x
            .iter()
            .zip(steps)
            .map(|(x, s)| x + 0.5 * s * rng.random_range(-1.0..1.0))
            .collect();
        let start = if eval(&perturbed).is_finite() {
            perturbed
        } else {
            best.x.clone()
        };
        let next = run(&eval, &start, steps, opts);
        let improved = next.value < best.value;
        let iterations = best.iterations + next.iterations;
        let evaluations = best.evaluations + next.evaluations;
        let close = (best.value - next.value).abs() <= opts.ftol * best.value.abs() + opts.fabs;
        if improved {
            best = next;
        }
        best.iterations = iterations;
        best.evaluations = evaluations;
        if close && best.converged {
            break;
        }
    }
    best.restarts = restarts;
    best
}

fn run<F>(f: &F, start: &[f64], steps: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = start.len();
    let mut evaluations = 0;
    let mut call = |x: &[f64]| {
        evaluations += 1;
        f(x)
    };
    if n == 0 {
        let value = call(start);
        return Minimum {
            x: Vec::new(),
            value,
            iterations: 0,
            evaluations,
            restarts: 0,
            converged: true,
        };
    }
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for k in 0..n {
        let mut vertex = start.to_vec();
        vertex[k] += steps[k];
        if !call(&vertex).is_finite() {
            vertex[k] = start[k] - steps[k];
        }
        simplex.push(vertex);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| call(x)).collect();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&k| simplex[k].clone()).collect();
        values = order.iter().map(|&k| values[k]).collect();
        let spread = values[n] - values[0];
        let diameter = simplex[1..]
            .iter()
            .flat_map(|v| {
                v.iter()
                    .zip(&simplex[0])
                    .zip(steps)
                    .map(|((a, b), s)| (a - b).abs() / s.abs())
            })
            .fold(0.0, f64::max);
        if values[0].is_finite()
            && spread <= opts.ftol * values[0].abs() + opts.fabs
            && diameter <= opts.xtol
        {
            converged = true;
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / n as f64)
            .collect();
        let toward = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let reflected = toward(-alpha);
        let f_reflected = call(&reflected);
        if f_reflected < values[0] {
            let expanded = toward(-gamma);
            let f_expanded = call(&expanded);
            if f_expanded < f_reflected {
                simplex[n] = expanded;
                values[n] = f_expanded;
            } else {
                simplex[n] = reflected;
                values[n] = f_reflected;
            }
            continue;
        }
        if f_reflected < values[n - 1] {
            simplex[n] = reflected;
            values[n] = f_reflected;
            continue;
        }
        let (contracted, f_contracted) = if f_reflected < values[n] {
            let x = toward(-rho);
            let v = call(&x);
            (x, v)
        } else {
            let x = toward(rho);
            let v = call(&x);
            (x, v)
        };
        if f_contracted < values[n].min(f_reflected) {
            simplex[n] = contracted;
            values[n] = f_contracted;
            continue;
        }
        for k in 1..=n {
            let shrunk: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[k])
                .map(|(b, x)| b + sigma * (x - b))
                .collect();
            values[k] = call(&shrunk);
            simplex[k] = shrunk;
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    Minimum {
        x: simplex[best].clone(),
        value: values[best],
        iterations,
        evaluations,
        restarts: 0,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn finds_rosenbrock_minimum() {
        let opts = NelderMeadOptions {
            xtol: 1e-8,
            ..NelderMeadOptions::for_dimension(2)
        };
        let m = minimize(rosenbrock, &[-1.2, 1.0], &[0.5, 0.5], &opts);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{:?}", m.x);
        assert!(m.value < 1e-10);
    }

    #[test]
    fn respects_infeasible_region() {
        let f = |x: &[f64]| if x[0] < 0.5 { f64::NAN } else { (x[0] - 0.7).powi(2) + x[1] * x[1] };
        let m = minimize(f, &[1.0, 1.0], &[0.2, 0.2], &NelderMeadOptions::for_dimension(2));
        assert!((m.x[0] - 0.7).abs() < 1e-4 && m.x[1].abs() < 1e-4);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let opts = NelderMeadOptions::for_dimension(2);
        let a = minimize(rosenbrock, &[0.0, 0.0], &[0.1, 0.1], &opts);
        let b = minimize(rosenbrock, &[0.0, 0.0], &[0.1, 0.1], &opts);
        assert_eq!(a, b);
    }

    #[test]
    fn quadratic_in_many_dimensions() {
        let f = |x: &[f64]| x.iter().enumerate().map(|(k, v)| (k as f64 + 1.0) * (v - 1.0).powi(2)).sum();
        let m = minimize(f, &[0.0; 8], &[0.5; 8], &NelderMeadOptions::for_dimension(8));
        assert!(m.converged);
        assert!(m.x.iter().all(|v| (v - 1.0).abs() < 1e-4), "{:?}", m.x);
    }
}
