#![allow(dead_code)]

use wavecal::models::{BlockKind, CrossStructure, LatentBlock, ModelClass, ModelSpec, ParamVector};

/// Three gyroscopes: independent white noise plus a fully correlated
/// random walk.
pub fn gyro_triad() -> (ModelSpec, ParamVector) {
    let spec = ModelSpec::new(
        3,
        vec![
            LatentBlock::new(BlockKind::WhiteNoise, vec![0, 1, 2]),
            LatentBlock::new(BlockKind::RandomWalk, vec![0, 1, 2]).with_cross(CrossStructure::Full),
        ],
        ModelClass::M1,
    );
    let theta = ParamVector::new(vec![
        0.1010e-3, 0.0712e-3, 0.0490e-3, 0.0119, 0.0220, 0.1628, -0.0004, 0.0048, 0.0093,
    ]);
    (spec, theta)
}

/// The triad with the random-walk cross terms set to zero.
pub fn independent_triad() -> (ModelSpec, ParamVector) {
    let (spec, mut theta) = gyro_triad();
    theta.values[6..].iter_mut().for_each(|v| *v = 0.0);
    (spec, theta)
}

pub const TRIAD_NAMES: [&str; 9] = [
    "sigma_1", "sigma_2", "sigma_3", "lambda_11", "lambda_22", "lambda_33", "lambda_12", "lambda_13", "lambda_23",
];

/// Two accelerometers: per channel a random walk and a slow AR1, plus a
/// fast AR1 shared by both channels.
pub fn accelerometer_pair() -> (ModelSpec, ParamVector) {
    let spec = ModelSpec::new(
        2,
        vec![
            LatentBlock::new(BlockKind::Ar1, vec![0, 1]).with_cross(CrossStructure::Full),
            LatentBlock::new(BlockKind::Ar1, vec![0]),
            LatentBlock::new(BlockKind::Ar1, vec![1]),
            LatentBlock::new(BlockKind::RandomWalk, vec![0, 1]),
        ],
        ModelClass::Custom,
    );
    let theta = ParamVector::new(vec![
        // shared AR1: phi per channel, z11, z22, z12
        0.1300635,
        0.07466659,
        8.142854e-05,
        1.255179e-04,
        -4.603401e-05,
        // slow AR1 on channel 1 and on channel 2
        0.9989909,
        1.612509e-10,
        0.9999121,
        2.075570e-10,
        // random walk variances
        1.756252e-11,
        5.015933e-12,
    ]);
    (spec, theta)
}
