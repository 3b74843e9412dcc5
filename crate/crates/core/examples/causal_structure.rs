//! Estimate a causal graph from data generated by a linear non-Gaussian SEM.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regime_causal::causal::identify_causality;
use regime_causal::ica::{fixed_point_ica, IcaConfig};
use regime_causal::metrics::{shd, sid};
use regime_causal::synth::{laplace, sample_dag, sample_weights};

fn main() -> regime_causal::Result<()> {
    let d = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dag = sample_dag(d, 0.5, &mut rng);
    let b = sample_weights(&dag, (0.5, 2.0), &mut rng);

    // x = (I - B)⁻¹ e
    let noise = DMatrix::from_fn(d, 1000, |_, _| laplace(1.0, &mut rng));
    let mix = (DMatrix::identity(d, d) - &b.0).try_inverse().expect("acyclic B");
    let x = mix * noise;

    let w = fixed_point_ica(&x, &IcaConfig::default())?.w.0;
    let est = identify_causality(&w, 0.3)?;
    println!("true B:{:.2}", b.0);
    println!("estimated B:{:.2}", est.adjacency.0);
    println!("causal order {:?}", est.order);
    println!("SHD {} SID {}", shd(&dag, &est.digraph)?, sid(&dag, &est.digraph)?);
    Ok(())
}
