//! Fit a damped oscillation, read off its modes, forecast it, and keep the
//! transition matrix current with recursive updates.

use regime_causal::dynamics::{evolve, interpret_eigenvalue, reconstruct, refresh_eigen, rls_step, LatentState};
use regime_causal::dynamics::estimate_factor;
use regime_causal::embedding::embed;
use regime_causal::linalg::complex_pinv;
use nalgebra::{Complex, DVector};

fn main() -> regime_causal::Result<()> {
    let signal: Vec<f64> = (0..300).map(|t| 0.99f64.powi(t) * (0.2 * t as f64).cos()).collect();
    let h = 6;
    let (factor, mut state) = estimate_factor(&signal[..150], h, 1.0)?;

    for &lambda in factor.lambda.iter() {
        let m = interpret_eigenvalue(lambda, 1.0)?;
        println!("lambda {lambda:.4}: decay {:+.4}/tick, frequency {:.4} rad/tick", m.decay_rate, m.frequency);
    }

    // Latent state for the last delay vector, then roll it forward.
    let last = embed(&signal, h, 149)?;
    let s = LatentState(complex_pinv(&factor.phi) * DVector::from_iterator(h, last.as_slice().iter().map(|v| Complex::new(*v, 0.0))));
    for steps in [1u32, 10, 50] {
        let pred = reconstruct(&evolve(&s, &factor, steps), &factor)?;
        println!("t={:<3} forecast {pred:+.5} actual {:+.5}", 149 + steps, signal[149 + steps as usize]);
    }

    // Stream the second half through the recursive update.
    for t in 150..signal.len() {
        state = rls_step(&state, &embed(&signal, h, t - 1)?, &embed(&signal, h, t)?)?;
    }
    let (refreshed, flags) = refresh_eigen(&state, factor.rank())?;
    println!("after streaming: {:?} (defective={})", refreshed.lambda.as_slice(), flags.defective);
    Ok(())
}
