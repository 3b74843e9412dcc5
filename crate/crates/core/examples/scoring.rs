//! Graph and forecast scores on small hand-made inputs.

use regime_causal::causal::CausalDigraph;
use regime_causal::metrics::{mae, rmse, shd, sid};

fn main() -> regime_causal::Result<()> {
    let truth = CausalDigraph::from_edges(3, &[(0, 1), (1, 2)]);
    let guesses = [
        ("exact", CausalDigraph::from_edges(3, &[(0, 1), (1, 2)])),
        ("reversed", CausalDigraph::from_edges(3, &[(2, 1), (1, 0)])),
        ("empty", CausalDigraph::empty(3)),
        ("extra edge", CausalDigraph::from_edges(3, &[(0, 1), (1, 2), (0, 2)])),
    ];
    for (name, g) in &guesses {
        println!("{name:<10} SHD {} SID {}", shd(&truth, g)?, sid(&truth, g)?);
    }

    let actual = vec![vec![1.0, 0.0], vec![0.5, -0.5], vec![0.0, 1.0]];
    let forecast = vec![vec![0.8, 0.1], vec![0.5, 0.0], vec![-0.2, 1.3]];
    println!("RMSE {:.4} MAE {:.4}", rmse(&forecast, &actual)?, mae(&forecast, &actual)?);
    Ok(())
}
