//! Generate a stream that switches between causal clusters.

use regime_causal::synth::{generate_stream, GenConfig};

fn main() -> regime_causal::Result<()> {
    let cfg = GenConfig { d: 4, segment_len: 300, sequence: vec![1, 2, 1], seed: 7, ..GenConfig::default() };
    let (x, truth) = generate_stream(&cfg)?;
    println!("{} variables x {} samples", x.nrows(), x.ncols());
    for seg in &truth.segments {
        let g = truth.clusters[&seg.cluster].binarize(0.0);
        println!("ticks {:>4}-{:<4} cluster {} with {} edges", seg.start, seg.end, seg.cluster, g.edge_count());
    }
    for (id, b) in &truth.clusters {
        println!("cluster {id}:{:.2}", b.0);
    }
    // The exogenous shocks are heavy-tailed with slowly varying scale.
    let e = truth.exogenous.row(0);
    let early = e.columns(0, 100).variance();
    let late = e.columns(800, 100).variance();
    println!("shock variance, first vs last 100 ticks: {early:.3} / {late:.3}");
    Ok(())
}
