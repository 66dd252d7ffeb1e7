//! Model-implied wavelet moments of a composite model, block by block, and
//! the closed forms checked against the filter quadratic form.

use nalgebra::DMatrix;
use wavecal::models::{
    closed_form_moment, quadratic_form_moment, theoretical_vector, BlockKind, BlockValues, CrossStructure,
    LatentBlock, ModelClass, ModelSpec, ParamVector,
};

fn main() -> wavecal::Result<()> {
    let ar1 = LatentBlock::new(BlockKind::Ar1, vec![0, 1]).with_cross(CrossStructure::Full);
    let values = BlockValues::ar1(vec![0.9, 0.5], DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]));
    println!("AR1 cross moment, closed form vs quadratic form:");
    for level in 1..=6 {
        let closed = closed_form_moment(&ar1, &values, 0, 1, level)?;
        let oracle = quadratic_form_moment(&ar1, &values, 0, 1, level)?;
        println!("  level {level}: {closed:.12e}  {oracle:.12e}");
    }

    let spec = ModelSpec::new(
        2,
        vec![
            LatentBlock::new(BlockKind::WhiteNoise, vec![0, 1]),
            LatentBlock::new(BlockKind::Quantization, vec![0, 1]),
            LatentBlock::new(BlockKind::RandomWalk, vec![0, 1]).with_cross(CrossStructure::Full),
            LatentBlock::new(BlockKind::Drift, vec![0, 1]),
        ],
        ModelClass::M1,
    );
    let theta = ParamVector::new(vec![4e-4, 2.5e-4, 1e-6, 2e-6, 1e-7, 2e-7, 5e-8, 1e-6, 5e-7]);
    let names = spec.layout().names();
    let nu = theoretical_vector(&spec, &theta, 12)?;
    println!("\nparameters: {}", names.join(", "));
    println!("level  nu(1,1)      nu(1,2)      nu(2,2)");
    for level in 1..=12 {
        println!(
            "{level:>5}  {:.4e}  {:.4e}  {:.4e}",
            nu.get(0, 0, level),
            nu.get(0, 1, level),
            nu.get(1, 1, level)
        );
    }
    Ok(())
}
