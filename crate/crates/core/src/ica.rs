//! Symmetric fixed-point ICA.
//!
//! Splits a `d x n` window into a demixing matrix `W` (mapping raw,
//! centred observations to signals) and `d` mutually independent
//! non-Gaussian signals.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::sym_power;

/// Demixing matrix; row `i` maps observations onto signal `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DemixingMatrix(pub DMatrix<f64>);

impl DemixingMatrix {
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// `d x n` matrix of extracted signals, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct InherentSignals(pub DMatrix<f64>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Contrast {
    LogCosh,
    Cubic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcaConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub contrast: Contrast,
}

impl Default for IcaConfig {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-4, seed: 0, contrast: Contrast::LogCosh }
    }
}

impl IcaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || !(self.tol > 0.0) {
            return Err(Error::Config("ICA needs max_iter >= 1 and tol > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Whitening {
    pub z: DMatrix<f64>,
    pub k_whiten: DMatrix<f64>,
    pub mean: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct IcaResult {
    pub w: DemixingMatrix,
    /// Zero-mean signals `W (x - mean)`.
    pub signals: InherentSignals,
    pub mean: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Maximum condition number accepted for the (ridged) sample covariance.
const MAX_CONDITION: f64 = 1e8;

/// Centre the rows of `x` and apply symmetric (ZCA) whitening.
///
/// A ridge of `1e-10 * trace / d` is added to the covariance before
/// inverting; the input is rejected if it stays ill-conditioned.
pub fn center_whiten(x: &DMatrix<f64>) -> Result<Whitening> {
    let (d, n) = x.shape();
    if d == 0 || n < 2 {
        return Err(Error::InvalidInput(format!("cannot whiten a {d}x{n} matrix")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ICA input".into()));
    }
    let mean = x.column_mean();
    let mut xc = x.clone();
    for mut col in xc.column_iter_mut() {
        col -= &mean;
    }
    let mut cov = &xc * xc.transpose() / n as f64;
    let trace = cov.trace();
    if !(trace > 0.0) {
        return Err(Error::Degenerate("all rows are constant".into()));
    }
    let ridge = 1e-10 * trace / d as f64;
    for i in 0..d {
        cov[(i, i)] += ridge;
    }
    let eig = cov.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    if lmin <= 0.0 || lmax / lmin > MAX_CONDITION {
        return Err(Error::Degenerate(format!(
            "sample covariance is singular (condition {:.3e})",
            lmax / lmin
        )));
    }
    let k_whiten = sym_power(&cov, -0.5)?;
    let z = &k_whiten * &xc;
    Ok(Whitening { z, k_whiten, mean })
}

/// Symmetric fixed-point ICA on the rows of `x`.
///
/// The returned `W` already includes the whitening transform, so
/// `signals = W (x - mean)`. Each row is sign-flipped to make its
/// signal's skewness non-negative. Non-convergence is reported through
/// `converged`, with the last iterate returned.
pub fn fixed_point_ica(x: &DMatrix<f64>, cfg: &IcaConfig) -> Result<IcaResult> {
    cfg.validate()?;
    let (d, n) = x.shape();
    if n < 10 * d {
        log::warn!("ICA on {n} samples for {d} components; estimates may be unreliable");
    }
    let white = center_whiten(x)?;

    if d == 1 {
        let w = white.k_whiten.clone();
        let signals = &w * centred(x, &white.mean);
        return Ok(IcaResult {
            w: DemixingMatrix(w),
            signals: InherentSignals(signals),
            mean: white.mean,
            converged: true,
            iterations: 0,
        });
    }

    let z = &white.z;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let mut w = sym_decorrelate(&init)?;

    let mut converged = false;
    let mut iterations = 0;
    let inv_n = 1.0 / n as f64;
    while iterations < cfg.max_iter {
        iterations += 1;
        let y = &w * z;
        let mut gy = y.clone();
        let mut mean_dg = DVector::zeros(d);
        for i in 0..d {
            let mut acc = 0.0;
            for t in 0..n {
                let (g, dg) = contrast(cfg.contrast, y[(i, t)]);
                gy[(i, t)] = g;
                acc += dg;
            }
            mean_dg[i] = acc * inv_n;
        }
        let mut w_new = &gy * z.transpose() * inv_n;
        for i in 0..d {
            for j in 0..d {
                w_new[(i, j)] -= mean_dg[i] * w[(i, j)];
            }
        }
        let w_new = sym_decorrelate(&w_new)?;
        let overlap = &w_new * w.transpose();
        let lim = (0..d)
            .map(|i| (overlap[(i, i)].abs() - 1.0).abs())
            .fold(0.0, f64::max);
        w = w_new;
        if lim < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("fixed-point ICA did not converge in {} iterations", cfg.max_iter);
    }

    let mut w_total = &w * &white.k_whiten;
    let mut signals = &w_total * centred(x, &white.mean);
    for i in 0..d {
        if skewness(signals.row(i).iter().copied()) < 0.0 {
            w_total.row_mut(i).neg_mut();
            signals.row_mut(i).neg_mut();
        }
    }
    Ok(IcaResult {
        w: DemixingMatrix(w_total),
        signals: InherentSignals(signals),
        mean: white.mean,
        converged,
        iterations,
    })
}

fn centred(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut xc = x.clone();
    for mut col in xc.column_iter_mut() {
        col -= mean;
    }
    xc
}

/// `(W W^T)^{-1/2} W`
fn sym_decorrelate(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = w * w.transpose();
    Ok(sym_power(&gram, -0.5)? * w)
}

fn contrast(kind: Contrast, u: f64) -> (f64, f64) {
    match kind {
        Contrast::LogCosh => {
            let t = u.tanh();
            (t, 1.0 - t * t)
        }
        Contrast::Cubic => (u * u * u, 3.0 * u * u),
    }
}

pub(crate) fn skewness(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let mean = values.clone().sum::<f64>() / n;
    let (m2, m3) = values.fold((0.0, 0.0), |(a, b), v| {
        let c = v - mean;
        (a + c * c, b + c * c * c)
    });
    let m2 = m2 / n;
    if m2 == 0.0 {
        return 0.0;
    }
    (m3 / n) / m2.powf(1.5)
}
