//! The gen / run / eval workflow of the command-line tool, driven from code.

use regime_causal::cli::{cmd_eval, cmd_gen, cmd_run, render_report, RunConfig};

fn main() -> regime_causal::Result<()> {
    let dir = std::env::temp_dir().join(format!("regime-causal-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let mut cfg = RunConfig::default();
    for (k, v) in [("d", "4"), ("segment_len", "300"), ("sequence", "1,2,1"), ("seed", "5")] {
        cfg.set(k, v)?;
    }
    cfg.validate()?;

    let data = dir.join("stream");
    cmd_gen(&cfg, &data)?;
    let csv = dir.join("stream.csv");
    let truth = dir.join("stream.truth.json");

    let summary = cmd_run(&cfg, &csv, &dir.join("engine"), false)?;
    println!("engine: {} ticks, {} regimes", summary.ticks, summary.regimes);
    print!("{}", render_report(&cmd_eval(&truth, &dir.join("engine"), &csv, cfg.engine.l_s)?));

    cmd_run(&cfg, &csv, &dir.join("static"), true)?;
    println!("\nstatic baseline:");
    print!("{}", render_report(&cmd_eval(&truth, &dir.join("static"), &csv, cfg.engine.l_s)?));

    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
