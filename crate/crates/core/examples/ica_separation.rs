//! Recover independent Laplace sources from a linear mixture.

use nalgebra::{dmatrix, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regime_causal::ica::{fixed_point_ica, IcaConfig};
use regime_causal::synth::laplace;

fn main() -> regime_causal::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sources = DMatrix::from_fn(3, 2000, |_, _| laplace(1.0, &mut rng));
    let mixing = dmatrix![1.0, 0.4, -0.3; 0.2, 1.0, 0.5; -0.6, 0.1, 1.0];
    let x = &mixing * &sources;

    let result = fixed_point_ica(&x, &IcaConfig::default())?;
    println!("converged={} after {} iterations", result.converged, result.iterations);

    // W·A should be a scaled permutation: one dominant entry per row.
    let product = &result.w.0 * &mixing;
    println!("W·A ={product:.3}");
    for row in product.row_iter() {
        let max = row.amax();
        let rest: f64 = row.iter().map(|v| v.abs()).sum::<f64>() - max;
        println!("dominance {:.1}", max / rest.max(1e-12));
    }
    Ok(())
}
