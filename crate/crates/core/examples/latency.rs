//! Per-tick latency on a stationary stream.

use regime_causal::cli::{cmd_bench, render_bench, RunConfig};

fn main() -> regime_causal::Result<()> {
    let length = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3000);
    let report = cmd_bench(&RunConfig::default(), length)?;
    print!("{}", render_bench(&report));
    Ok(())
}
