//! Delay vectors and the Hankel / shift-pair matrices built from them.

use regime_causal::embedding::{build_hankel, build_shift_pairs, embed, invert_embed};

fn main() -> regime_causal::Result<()> {
    let series: Vec<f64> = (0..8).map(|t| t as f64 * 0.5).collect();
    let h = 3;

    let v = embed(&series, h, 5)?;
    println!("delay vector at t=5 (newest first): {:?}", v.as_slice());
    println!("recovered sample: {}", invert_embed(v.as_slice())?);

    let hankel = build_hankel(&series, h)?;
    println!("hankel {}x{}:{}", hankel.h(), hankel.columns(), hankel.matrix());

    // `next` is `prev` advanced by one tick.
    let (next, prev) = build_shift_pairs(&hankel)?;
    println!("prev:{prev}next:{next}");
    Ok(())
}
