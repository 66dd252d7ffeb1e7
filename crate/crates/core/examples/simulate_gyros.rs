//! Simulates three gyroscopes with independent white noise and a correlated
//! random walk, and compares sample and model moments.

use wavecal::models::{theoretical_vector, BlockKind, CrossStructure, LatentBlock, ModelClass, ModelSpec, ParamVector};
use wavecal::moments::moment_vector;
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
    let theta = ParamVector::new(vec![
        1.010e-4, 7.12e-5, 4.90e-5, 0.0119, 0.0220, 0.1628, -0.0004, 0.0048, 0.0093,
    ]);
    let config = SimConfig::new(spec.clone(), theta.clone(), 1 << 15, 42);
    let x = simulate(&config)?;
    println!("{} channels, {} samples; replicate 1 differs from replicate 0", x.channel_count(), x.len());
    let levels = 10;
    let sample = moment_vector(&x, levels)?;
    let model = theoretical_vector(&spec, &theta, levels)?;
    println!("level  (1,3) sample  (1,3) model");
    for j in 1..=levels {
        println!("{j:>5}  {:>12.4e}  {:>11.4e}", sample.get(0, 2, j), model.get(0, 2, j));
    }
    let other = simulate(&config.with_replicate(1))?;
    assert_ne!(other.channel(0), x.channel(0));
    Ok(())
}
