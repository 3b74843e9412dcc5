//! Per-signal latent dynamics.
//!
//! A scalar signal is lifted into delay coordinates; a weighted dynamic mode
//! decomposition of the shifted Hankel pair gives modes `Φ` and eigenvalues
//! `Λ` with `s(t+1) = Λ s(t)` and `e(t) = g⁻¹(Φ s(t))`. The full transition
//! matrix `A` and `P = (R M Rᵀ)⁻¹` are kept so that `A` can be refined one
//! sample at a time by recursive least squares with forgetting.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector};

use crate::embedding::{build_hankel, build_shift_pairs, invert_embed_complex, DelayVector};
use crate::error::{Error, Result};
use crate::linalg::{ordered_svd, real_eigen, spectral_order, symmetrize, C64};

/// Modes (columns of `phi`, `h x k`) and their eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfDynamicsFactor {
    pub phi: DMatrix<C64>,
    pub lambda: DVector<C64>,
}

impl SelfDynamicsFactor {
    pub fn rank(&self) -> usize {
        self.lambda.len()
    }

    pub fn h(&self) -> usize {
        self.phi.nrows()
    }
}

/// Transition matrix with its inverse weighted Gram matrix and forgetting factor.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionState {
    pub a: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentState(pub DVector<C64>);

impl LatentState {
    pub fn zeros(k: usize) -> Self {
        LatentState(DVector::zeros(k))
    }
}

/// Continuous-time reading of one eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeInterpretation {
    /// `ln|λ| / Δt`; positive means growth.
    pub decay_rate: f64,
    /// `arg(λ) / Δt` in radians per unit time.
    pub frequency: f64,
    pub delta_t: f64,
}

/// Result flags of an eigen refresh.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EigenFlags {
    /// The eigenvector basis was rank deficient and was replaced by an
    /// orthonormal basis of the same invariant subspace.
    pub defective: bool,
    /// Every retained eigenvalue is zero.
    pub zero_spectrum: bool,
}

/// `λ*(β)`: optimal threshold coefficient for known noise level.
fn lambda_star(beta: f64) -> f64 {
    let w = 8.0 * beta / (beta + 1.0 + (beta * beta + 14.0 * beta + 1.0).sqrt());
    (2.0 * (beta + 1.0) + w).sqrt()
}

/// Median of the Marchenko-Pastur law with aspect ratio `beta` in (0, 1].
fn marchenko_pastur_median(beta: f64) -> f64 {
    let lo = (1.0 - beta.sqrt()).powi(2);
    let hi = (1.0 + beta.sqrt()).powi(2);
    let half = 0.5 * (hi - lo);
    // With x = lo + half (1 - cos θ) the density times dx is smooth in θ.
    let integrand = |th: f64| {
        let x = lo + half * (1.0 - th.cos());
        let s = th.sin();
        if x <= 0.0 {
            // β = 1 and θ = 0: the limit of s² / x is 2 / half.
            return half * half * (2.0 / half) / (2.0 * PI * beta);
        }
        half * half * s * s / (2.0 * PI * beta * x)
    };
    let cdf = |theta: f64| simpson(&integrand, 0.0, theta, 2000);
    let (mut a, mut b) = (0.0, PI);
    for _ in 0..80 {
        let mid = 0.5 * (a + b);
        if cdf(mid) < 0.5 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let th = 0.5 * (a + b);
    lo + half * (1.0 - th.cos())
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let step = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * step);
    }
    acc * step / 3.0
}

/// `ω(β)` for the median-based optimal hard threshold (unknown noise level).
pub fn optimal_threshold_coefficient(beta: f64) -> f64 {
    lambda_star(beta) / marchenko_pastur_median(beta).sqrt()
}

/// Number of singular values above `ω(β) · median(σ)`, at least 1.
///
/// Values at or below numerical noise (`max(rows, cols) · ε · σ_max`) are
/// never counted.
pub fn optimal_rank(singular_values: &[f64], rows: usize, cols: usize) -> Result<usize> {
    if singular_values.is_empty() || rows == 0 || cols == 0 {
        return Err(Error::InvalidInput("empty spectrum".into()));
    }
    if singular_values.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::InvalidInput("singular values must be finite and non-negative".into()));
    }
    let smax = singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return Err(Error::Degenerate("all singular values are zero".into()));
    }
    let mut sorted = singular_values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = sorted.len();
    let median = if m % 2 == 1 { sorted[m / 2] } else { 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]) };
    let beta = rows.min(cols) as f64 / rows.max(cols) as f64;
    let cutoff = optimal_threshold_coefficient(beta) * median;
    let noise = rows.max(cols) as f64 * f64::EPSILON * smax;
    let k = singular_values.iter().filter(|&&s| s > cutoff && s > noise).count();
    Ok(k.max(1))
}

/// Forgetting weights `μ^{m-1}, ..., μ^0` for `m` columns.
pub fn forgetting_weights(m: usize, mu: f64) -> Vec<f64> {
    (0..m).map(|j| mu.powi((m - 1 - j) as i32)).collect()
}

/// Direct weighted least-squares solve `A = (L M Rᵀ)(R M Rᵀ)⁻¹`, `P = (R M Rᵀ)⁻¹`.
///
/// A ridge of `1e-10 · trace / h` keeps `P` finite on rank-deficient windows.
pub fn batch_transition(l: &DMatrix<f64>, r: &DMatrix<f64>, mu: f64) -> Result<TransitionState> {
    let h = r.nrows();
    let weights = forgetting_weights(r.ncols(), mu);
    let mut rm = r.clone();
    for (j, w) in weights.iter().enumerate() {
        rm.column_mut(j).scale_mut(*w);
    }
    let mut gram = &rm * r.transpose();
    let cross = l * rm.transpose();
    let trace = gram.trace();
    if !(trace > 0.0) {
        return Err(Error::Degenerate("delay vectors are all zero".into()));
    }
    let ridge = 1e-10 * trace / h as f64;
    for i in 0..h {
        gram[(i, i)] += ridge;
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Degenerate("weighted Gram matrix is not positive-definite".into()))?;
    let mut p = chol.inverse();
    symmetrize(&mut p);
    let a = cross * &p;
    Ok(TransitionState { a, p, mu })
}

/// Fit modes and eigenvalues of one signal, plus the streaming state.
pub fn estimate_factor(signal: &[f64], h: usize, mu: f64) -> Result<(SelfDynamicsFactor, TransitionState)> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::InvalidInput(format!("forgetting factor {mu} outside (0, 1]")));
    }
    if signal.len() < h + 2 {
        return Err(Error::InvalidInput(format!(
            "signal length {} < h + 2 = {}",
            signal.len(),
            h + 2
        )));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("signal".into()));
    }
    let hankel = build_hankel(signal, h)?;
    let (l, r) = build_shift_pairs(&hankel)?;
    let m = r.ncols();
    let weights = forgetting_weights(m, mu);
    let mut rm = r.clone();
    let mut lm = l.clone();
    for (j, w) in weights.iter().enumerate() {
        rm.column_mut(j).scale_mut(*w);
        lm.column_mut(j).scale_mut(*w);
    }

    let svd = ordered_svd(&rm);
    if svd.sigma.first().copied().unwrap_or(0.0) == 0.0 {
        return Err(Error::Degenerate("weighted delay matrix is zero".into()));
    }
    let k = optimal_rank(&svd.sigma, h, m)?;
    let u_k = svd.u.columns(0, k).into_owned();
    let v_k = svd.v.columns(0, k).into_owned();
    let sigma_inv = DMatrix::from_diagonal(&DVector::from_iterator(k, svd.sigma[..k].iter().map(|s| 1.0 / s)));
    let a_tilde = u_k.transpose() * &lm * v_k * sigma_inv;

    let eig = real_eigen(&a_tilde)?;
    let phi = u_k.map(|x| Complex::new(x, 0.0)) * &eig.vectors;
    let factor = SelfDynamicsFactor { phi, lambda: DVector::from_vec(eig.values) };

    let state = batch_transition(&l, &r, mu)?;
    Ok((factor, state))
}

/// One recursive least-squares update of `A` and `P` with forgetting.
pub fn rls_step(state: &TransitionState, prev: &DelayVector, new: &DelayVector) -> Result<TransitionState> {
    let mut next = state.clone();
    rls_step_in_place(&mut next, prev, new)?;
    Ok(next)
}

pub fn rls_step_in_place(state: &mut TransitionState, prev: &DelayVector, new: &DelayVector) -> Result<()> {
    let h = state.a.nrows();
    if prev.len() != h || new.len() != h {
        return Err(Error::DimensionMismatch(format!(
            "delay vectors of length {}/{} for h={h}",
            prev.len(),
            new.len()
        )));
    }
    let x = &prev.0;
    let px = &state.p * x;
    let denom = state.mu + x.dot(&px);
    // γ = xᵀP / (μ + xᵀPx); P is symmetric so γᵀ = Px / denom.
    let gamma = &px / denom;
    let innovation = &new.0 - &state.a * x;
    state.a += &innovation * gamma.transpose();
    state.p -= &px * gamma.transpose();
    state.p /= state.mu;
    symmetrize(&mut state.p);
    Ok(())
}

/// Leading `k` eigenpairs of the transition matrix as a factor.
pub fn refresh_eigen(state: &TransitionState, k: usize) -> Result<(SelfDynamicsFactor, EigenFlags)> {
    let h = state.a.nrows();
    if k == 0 || k > h {
        return Err(Error::InvalidInput(format!("rank {k} outside 1..={h}")));
    }
    let eig = real_eigen(&state.a)?;
    // Keep conjugate pairs together when the cut would split one.
    let mut keep = k;
    if keep < h && eig.values[keep - 1].im != 0.0 && (eig.values[keep] - eig.values[keep - 1].conj()).norm() < 1e-12 {
        keep += 1;
    }
    let mut phi = eig.vectors.columns(0, keep).into_owned();
    let lambda = DVector::from_iterator(keep, eig.values[..keep].iter().copied());
    let mut flags = EigenFlags {
        defective: eig.defective,
        zero_spectrum: lambda.iter().all(|l| l.norm() == 0.0),
    };
    if flags.defective {
        // Orthonormal basis of the eigenvector span: Schur vectors of the
        // retained invariant subspace.
        let qr = phi.clone().qr();
        phi = qr.q();
        flags.defective = true;
    }
    Ok((SelfDynamicsFactor { phi, lambda }, flags))
}

/// `s ← Λ^steps s`.
pub fn evolve(s: &LatentState, factor: &SelfDynamicsFactor, steps: u32) -> LatentState {
    LatentState(s.0.zip_map(&factor.lambda, |si, li| si * li.powu(steps)))
}

/// `g⁻¹(Φ s)`.
pub fn reconstruct(s: &LatentState, factor: &SelfDynamicsFactor) -> Result<f64> {
    if s.0.len() != factor.rank() {
        return Err(Error::DimensionMismatch(format!(
            "latent state of length {} for rank {}",
            s.0.len(),
            factor.rank()
        )));
    }
    // Only slot 0 of Φ s is needed.
    let v = (factor.phi.row(0) * &s.0)[(0, 0)];
    invert_embed_complex(&[v])
}

pub fn interpret_eigenvalue(lambda: C64, delta_t: f64) -> Result<ModeInterpretation> {
    if !(delta_t > 0.0) {
        return Err(Error::InvalidInput("sampling interval must be positive".into()));
    }
    if lambda.norm() == 0.0 {
        return Err(Error::InvalidInput("zero eigenvalue has no logarithm".into()));
    }
    Ok(ModeInterpretation {
        decay_rate: lambda.norm().ln() / delta_t,
        frequency: lambda.arg() / delta_t,
        delta_t,
    })
}

/// Sort helper exposed for callers that merge spectra.
pub fn sort_spectrum(values: &mut [C64]) {
    values.sort_by(spectral_order);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn threshold_coefficient_matches_polynomial_fit() {
        // Published cubic approximation of ω(β), accurate to about 0.02.
        for i in 1..=20 {
            let beta = i as f64 / 20.0;
            let approx = 0.56 * beta.powi(3) - 0.95 * beta.powi(2) + 1.82 * beta + 1.43;
            let exact = optimal_threshold_coefficient(beta);
            assert!((exact - approx).abs() < 0.02, "β={beta}: {exact} vs {approx}");
        }
    }

    #[test]
    fn rank_of_low_rank_plus_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (rows, cols) = (8, 200);
        let mut a = DMatrix::<f64>::zeros(rows, cols);
        let u1 = DVector::from_fn(rows, |_, _| rng.random::<f64>() - 0.5).normalize();
        let mut u2 = DVector::from_fn(rows, |_, _| rng.random::<f64>() - 0.5);
        u2 -= &u1 * u1.dot(&u2);
        let u2 = u2.normalize();
        let v1 = DVector::from_fn(cols, |_, _| rng.random::<f64>() - 0.5).normalize();
        let mut v2 = DVector::from_fn(cols, |_, _| rng.random::<f64>() - 0.5);
        v2 -= &v1 * v1.dot(&v2);
        let v2 = v2.normalize();
        a += &u1 * v1.transpose() * 10.0 + &u2 * v2.transpose() * 9.8;
        a += DMatrix::from_fn(rows, cols, |_, _| (rng.random::<f64>() - 0.5) * 2e-4);
        let svd = ordered_svd(&a);
        assert!((svd.sigma[0] - 10.0).abs() < 0.01);
        assert_eq!(optimal_rank(&svd.sigma, rows, cols).unwrap(), 2);
    }

    #[test]
    fn rank_edge_cases() {
        assert_eq!(optimal_rank(&[5.0], 1, 40).unwrap(), 1);
        assert!(matches!(optimal_rank(&[0.0, 0.0, 0.0], 3, 10), Err(Error::Degenerate(_))));
    }

    #[test]
    fn geometric_signal_has_one_mode() {
        let sig: Vec<f64> = (1..=60).map(|t| 0.9f64.powi(t)).collect();
        let (f, _) = estimate_factor(&sig, 4, 1.0).unwrap();
        assert_eq!(f.rank(), 1);
        assert!((f.lambda[0] - C64::new(0.9, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn damped_sinusoid_pair() {
        let sig: Vec<f64> = (1..=200).map(|t| 0.95f64.powi(t) * (0.3 * t as f64).cos()).collect();
        let (f, _) = estimate_factor(&sig, 8, 1.0).unwrap();
        let target = C64::from_polar(0.95, 0.3);
        assert_eq!(f.rank(), 2);
        assert!((f.lambda[0] - target.conj()).norm() < 1e-2);
        assert!((f.lambda[1] - target).norm() < 1e-2);
    }

    #[test]
    fn zero_signal_is_degenerate() {
        assert!(matches!(estimate_factor(&[0.0; 30], 4, 1.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn scalar_rls_solves_normal_equations() {
        let mut st = TransitionState {
            a: DMatrix::zeros(1, 1),
            p: DMatrix::from_element(1, 1, 1e6),
            mu: 1.0,
        };
        let dv = |v: f64| DelayVector(DVector::from_element(1, v));
        st = rls_step(&st, &dv(1.0), &dv(2.0)).unwrap();
        st = rls_step(&st, &dv(2.0), &dv(4.0)).unwrap();
        assert!((st.a[(0, 0)] - 2.0).abs() < 1e-3);
        let pinv = 1.0 / st.p[(0, 0)];
        assert!((pinv - (1e-6 + 1.0 + 4.0)).abs() < 1e-9);
    }

    #[test]
    fn zero_regressor_is_a_no_op() {
        let st = TransitionState {
            a: DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3]),
            p: DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            mu: 1.0,
        };
        let zero = DelayVector(DVector::zeros(2));
        let new = DelayVector(DVector::from_vec(vec![1.0, -1.0]));
        let next = rls_step(&st, &zero, &new).unwrap();
        assert_eq!(next, st);
    }

    #[test]
    fn refresh_examples() {
        let st = TransitionState { a: DMatrix::from_diagonal(&DVector::from_vec(vec![0.9, 0.1])), p: DMatrix::identity(2, 2), mu: 1.0 };
        let (f, flags) = refresh_eigen(&st, 1).unwrap();
        assert_eq!(f.lambda.len(), 1);
        assert!((f.lambda[0].re - 0.9).abs() < 1e-14);
        assert!((f.phi[(0, 0)].re.abs() - 1.0).abs() < 1e-12 && f.phi[(1, 0)].norm() < 1e-12);
        assert_eq!(flags, EigenFlags::default());

        let th: f64 = 0.3;
        let rot = TransitionState {
            a: DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]),
            p: DMatrix::identity(2, 2),
            mu: 1.0,
        };
        let (f, _) = refresh_eigen(&rot, 2).unwrap();
        assert!((f.lambda[0] - C64::from_polar(1.0, -th)).norm() < 1e-12);
        assert!((f.lambda[1] - C64::from_polar(1.0, th)).norm() < 1e-12);

        let zero = TransitionState { a: DMatrix::zeros(3, 3), p: DMatrix::identity(3, 3), mu: 1.0 };
        let (f, flags) = refresh_eigen(&zero, 1).unwrap();
        assert_eq!(f.lambda[0], C64::new(0.0, 0.0));
        assert!(flags.zero_spectrum);
    }

    #[test]
    fn evolve_examples() {
        let f = SelfDynamicsFactor {
            phi: DMatrix::from_element(1, 1, C64::new(1.0, 0.0)),
            lambda: DVector::from_element(1, C64::new(0.5, 0.0)),
        };
        let s = LatentState(DVector::from_element(1, C64::new(1.0, 0.0)));
        assert_eq!(evolve(&s, &f, 0), s);
        assert!((evolve(&s, &f, 3).0[0] - C64::new(0.125, 0.0)).norm() < 1e-15);
        let rot = SelfDynamicsFactor { phi: f.phi.clone(), lambda: DVector::from_element(1, C64::new(0.0, 1.0)) };
        assert!((evolve(&s, &rot, 4).0[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn reconstruct_examples() {
        let f = SelfDynamicsFactor {
            phi: DMatrix::from_fn(3, 2, |r, c| if r == c { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }),
            lambda: DVector::from_vec(vec![C64::new(0.5, 0.0), C64::new(0.2, 0.0)]),
        };
        let s = LatentState(DVector::from_vec(vec![C64::new(2.5, 0.0), C64::new(-1.0, 0.0)]));
        assert_eq!(reconstruct(&s, &f).unwrap(), 2.5);
        assert_eq!(reconstruct(&LatentState::zeros(2), &f).unwrap(), 0.0);
    }

    #[test]
    fn conjugate_factor_reconstructs_real_values() {
        let sig: Vec<f64> = (1..=120).map(|t| 0.97f64.powi(t) * (0.5 * t as f64).sin() + 0.8f64.powi(t)).collect();
        let (f, _) = estimate_factor(&sig, 6, 1.0).unwrap();
        let g = crate::embedding::embed(&sig, 6, 50).unwrap();
        let gc = g.0.map(|x| C64::new(x, 0.0));
        let s0 = crate::linalg::complex_pinv(&f.phi) * gc;
        for step in 0..20 {
            let s = evolve(&LatentState(s0.clone()), &f, step);
            let v = &f.phi * &s.0;
            let re = v.iter().map(|z| z.re.abs()).fold(0.0, f64::max).max(1e-300);
            let im = v.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
            assert!(im <= 1e-8 * re, "imaginary residue {im} vs {re}");
            let predicted = reconstruct(&s, &f).unwrap();
            assert!((predicted - sig[50 + step as usize]).abs() < 1e-6);
        }
    }

    #[test]
    fn interpretation_examples() {
        let m = interpret_eigenvalue(C64::new(0.5, 0.0), 1.0).unwrap();
        assert!((m.decay_rate - 0.5f64.ln()).abs() < 1e-15 && m.frequency == 0.0);
        let m = interpret_eigenvalue(C64::new(1.0, 0.0), 1.0).unwrap();
        assert_eq!((m.decay_rate, m.frequency), (0.0, 0.0));
        let m = interpret_eigenvalue(C64::new(0.0, 1.0), 1.0).unwrap();
        assert!(m.decay_rate.abs() < 1e-15 && (m.frequency - PI / 2.0).abs() < 1e-15);
        assert!(interpret_eigenvalue(C64::new(0.0, 0.0), 1.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn growth_iff_outside_unit_circle(re in -3.0f64..3.0, im in -3.0f64..3.0, dt in 0.01f64..5.0) {
            let l = C64::new(re, im);
            proptest::prop_assume!(l.norm() > 1e-6 && (l.norm() - 1.0).abs() > 1e-9);
            let m = interpret_eigenvalue(l, dt).unwrap();
            proptest::prop_assert_eq!(l.norm() > 1.0, m.decay_rate > 0.0);
        }
    }
}
