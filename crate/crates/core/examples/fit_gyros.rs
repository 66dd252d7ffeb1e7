//! Fits the three-gyroscope model to simulated data and prints estimates
//! with sandwich standard errors.

use wavecal::estimator::{fit, FitOptions, Weighting};
use wavecal::models::{BlockKind, CrossStructure, LatentBlock, ModelClass, ModelSpec, ParamVector};
use wavecal::simulate::{simulate, SimConfig};

fn main() -> wavecal::Result<()> {
    let spec = ModelSpec::new(
        3,
        vec![
            LatentBlock::new(BlockKind::WhiteNoise, vec![0, 1, 2]),
            LatentBlock::new(BlockKind::RandomWalk, vec![0, 1, 2]).with_cross(CrossStructure::Full),
        ],
        ModelClass::M1,
    );
    let truth = ParamVector::new(vec![
        1.010e-4, 7.12e-5, 4.90e-5, 0.0119, 0.0220, 0.1628, -0.0004, 0.0048, 0.0093,
    ]);
    let x = simulate(&SimConfig::new(spec.clone(), truth.clone(), 1 << 15, 9))?;
    for weighting in [Weighting::Diagonal, Weighting::Full] {
        let result = fit(
            &x,
            &spec,
            &FitOptions {
                weighting,
                ..FitOptions::default()
            },
        )?;
        println!("{weighting:?} weighting, objective {:.2}", result.objective);
        let se = result.standard_errors.as_deref().unwrap_or_default();
        for (k, name) in result.names.iter().enumerate() {
            println!(
                "  {name:<12} {:>11.4e} +- {:<10.2e} truth {:>11.4e}",
                result.theta.values[k],
                se.get(k).copied().unwrap_or(f64::NAN),
                truth.values[k]
            );
        }
    }
    Ok(())
}
