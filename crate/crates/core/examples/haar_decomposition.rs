//! Haar MODWT of a random walk and its wavelet variance per level, next to
//! the closed-form value `lambda (tau^2 + 2) / (12 tau)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use wavecal::wavelet::{decompose, max_level};

fn main() -> wavecal::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut level = 0.0;
    let walk: Vec<f64> = (0..1 << 14)
        .map(|_| {
            let step: f64 = StandardNormal.sample(&mut rng);
            level += step;
            level
        })
        .collect();
    println!("{:>5} {:>8} {:>12} {:>12}", "level", "coeffs", "empirical", "theory");
    for j in 1..=max_level(walk.len())? {
        let w = decompose(&walk, j)?;
        let wv = w.values.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        let tau = (j as f64).exp2();
        println!("{j:>5} {:>8} {wv:>12.4} {:>12.4}", w.len(), (tau * tau + 2.0) / (12.0 * tau));
    }
    Ok(())
}
