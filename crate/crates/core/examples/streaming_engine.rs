//! Feed a regime-switching stream through the engine one tick at a time.

use regime_causal::engine::{calibrate_tau_unit, Engine, EngineConfig};
use regime_causal::synth::{generate_stream, GenConfig};

fn main() -> regime_causal::Result<()> {
    let gen = GenConfig { d: 3, segment_len: 400, sequence: vec![1, 2, 1], seed: 2, ..GenConfig::default() };
    let (x, truth) = generate_stream(&gen)?;

    let cfg = EngineConfig::default();
    let prefix = x.columns(0, x.ncols() / 3).into_owned();
    let tau_unit = calibrate_tau_unit(&prefix, &cfg, 1.0, 2.0)?;
    println!("tau_unit={tau_unit:.3}");
    let mut engine = Engine::new(EngineConfig { tau_unit, ..cfg }, x.nrows())?;

    for t in 0..x.ncols() {
        let sample: Vec<f64> = x.column(t).iter().copied().collect();
        let Some(out) = engine.process_tick(&sample)? else { continue };
        if out.created_new || out.switched {
            println!(
                "t={:<5} regime {} ({}) fit {:.2}",
                out.t,
                out.regime_id,
                if out.created_new { "new" } else { "switch" },
                out.fit_error
            );
        }
        if out.t % 200 == 0 {
            let truth_edges = truth.adjacency_at(out.t).map(|b| b.binarize(0.0).edge_count());
            println!(
                "t={:<5} {} edges (truth {:?}), forecast {:?}",
                out.t,
                out.digraph.edge_count(),
                truth_edges,
                out.forecast.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>()
            );
        }
    }
    // A malformed sample is rejected and leaves the engine untouched.
    let before = engine.ticks();
    assert!(engine.process_tick(&[f64::NAN, 0.0, 0.0]).is_err());
    assert_eq!(engine.ticks(), before);
    println!("{} regimes after {} ticks", engine.regimes().len(), engine.ticks());
    Ok(())
}
