//! Wavelet variances and cross-covariances of two channels that share a
//! random walk, with 95% confidence intervals from the HAC covariance.

use wavecal::models::{BlockKind, CrossStructure, LatentBlock, ModelClass, ModelSpec, ParamVector};
use wavecal::moments::{confidence_intervals, Bandwidth, WaveletMoments};
use wavecal::simulate::{simulate, SimConfig};

fn main() -> wavecal::Result<()> {
    let spec = ModelSpec::new(
        2,
        vec![
            LatentBlock::new(BlockKind::WhiteNoise, vec![0, 1]),
            LatentBlock::new(BlockKind::RandomWalk, vec![0, 1]).with_cross(CrossStructure::Full),
        ],
        ModelClass::M1,
    );
    // white-noise variances, then random-walk variances and covariance
    let theta = ParamVector::new(vec![1.0, 2.0, 1e-3, 2e-3, 1.2e-3]);
    let x = simulate(&SimConfig::new(spec, theta, 1 << 14, 7))?;
    let moments = WaveletMoments::compute(&x, 10)?;
    let estimate = moments.vector();
    let covariance = moments.covariance(Bandwidth::LevelAdaptive)?;
    let intervals = confidence_intervals(&estimate, &covariance, 0.05)?;
    println!("pair  level  estimate      95% interval");
    for (k, idx) in estimate.layout.indices().into_iter().enumerate() {
        let (lo, hi) = intervals[k];
        println!(
            "({},{}) {:>5} {:>10.3e}  [{lo:.3e}, {hi:.3e}]",
            idx.i + 1,
            idx.i2 + 1,
            idx.level,
            estimate.values[k]
        );
    }
    Ok(())
}
