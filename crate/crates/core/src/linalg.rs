//! Small dense helpers on top of nalgebra: ordered SVD, symmetric powers and a
//! deterministic eigendecomposition of real non-symmetric matrices.

use std::cmp::Ordering;

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Thin SVD with singular values sorted in descending order.
pub struct OrderedSvd {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    /// Right singular vectors as columns.
    pub v: DMatrix<f64>,
}

pub fn ordered_svd(a: &DMatrix<f64>) -> OrderedSvd {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap_or(Ordering::Equal)
            .then(i.cmp(&j))
    });
    let sigma = idx.iter().map(|&i| svd.singular_values[i]).collect();
    let u = DMatrix::from_fn(u.nrows(), idx.len(), |r, c| u[(r, idx[c])]);
    let v = DMatrix::from_fn(v_t.ncols(), idx.len(), |r, c| v_t[(idx[c], r)]);
    OrderedSvd { u, sigma, v }
}

/// `S^p` for a symmetric positive-definite `S`.
pub fn sym_power(s: &DMatrix<f64>, p: f64) -> Result<DMatrix<f64>> {
    let eig = s.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= 0.0 || !l.is_finite()) {
        return Err(Error::Degenerate("matrix is not positive-definite".into()));
    }
    let d = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|l| l.powf(p)));
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&d) * q.transpose())
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}

/// Ordering used for spectra: magnitude descending, then argument ascending.
pub fn spectral_order(a: &C64, b: &C64) -> Ordering {
    b.norm()
        .partial_cmp(&a.norm())
        .unwrap_or(Ordering::Equal)
        .then(a.arg().partial_cmp(&b.arg()).unwrap_or(Ordering::Equal))
}

/// Eigenpairs of a real square matrix.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<C64>,
    /// Unit-norm eigenvectors as columns, in the same order as `values`.
    pub vectors: DMatrix<C64>,
    /// Some eigenvalue has geometric multiplicity below its algebraic one;
    /// the affected columns span the invariant subspace rather than being
    /// exact eigenvectors.
    pub defective: bool,
}

/// Eigendecomposition of a real matrix with deterministic ordering and phase.
///
/// Eigenvalues with `|Im| <= 1e-10 * max(1, |λ|)` are snapped to the real axis
/// and get real eigenvectors. Complex eigenvalues appear in exact conjugate
/// pairs with conjugate eigenvectors.
pub fn real_eigen(a: &DMatrix<f64>) -> Result<EigenPairs> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch("eigendecomposition needs a square matrix".into()));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix has non-finite entries".into()));
    }
    let raw = a.complex_eigenvalues();
    let scale = a.norm().max(f64::MIN_POSITIVE);

    // Snap near-real values and enforce conjugate symmetry by keeping only the
    // upper-half-plane member of each pair.
    let mut reals = Vec::new();
    let mut uppers = Vec::new();
    for l in raw.iter() {
        if l.im.abs() <= 1e-10 * l.norm().max(1.0) {
            reals.push(l.re);
        } else if l.im > 0.0 {
            uppers.push(*l);
        }
    }
    let mut values: Vec<C64> = reals.iter().map(|&r| C64::new(r, 0.0)).collect();
    for u in &uppers {
        values.push(*u);
        values.push(u.conj());
    }
    // The pair filter can lose a member when Schur returns an unbalanced pair;
    // fall back to the raw list in that case.
    if values.len() != n {
        values = raw.iter().copied().collect();
    }
    values.sort_by(spectral_order);

    let cluster_tol = 1e-6 * scale.max(1.0);
    let mut vectors = DMatrix::<C64>::zeros(n, n);
    let mut defective = false;
    let mut i = 0;
    while i < n {
        let lam = values[i];
        let mut j = i + 1;
        while j < n && (values[j] - lam).norm() <= cluster_tol {
            j += 1;
        }
        let mult = j - i;
        if lam.im != 0.0 {
            // Conjugate partner of a block already handled: mirror it.
            if let Some(src) = (0..i).find(|&c| (values[c] - lam.conj()).norm() <= cluster_tol) {
                for c in 0..mult {
                    let col = vectors.column(src + c).map(|z| z.conj());
                    vectors.set_column(i + c, &col);
                }
                i = j;
                continue;
            }
        }
        let (null, worst) = if lam.im == 0.0 {
            let shifted = a - DMatrix::identity(n, n) * lam.re;
            let svd = ordered_svd(&shifted);
            let cols = DMatrix::from_fn(n, mult, |r, c| C64::new(svd.v[(r, n - mult + c)], 0.0));
            (cols, svd.sigma[n - mult])
        } else {
            let shifted = to_complex(a) - DMatrix::identity(n, n) * lam;
            complex_null_space(&shifted, mult)
        };
        if worst > 1e-7 * scale {
            defective = true;
        }
        for c in 0..mult {
            let mut col = null.column(c).into_owned();
            fix_phase(&mut col);
            vectors.set_column(i + c, &col);
        }
        i = j;
    }
    Ok(EigenPairs { values, vectors, defective })
}

/// The `mult` right singular vectors with the smallest singular values and
/// the largest of those singular values.
fn complex_null_space(m: &DMatrix<C64>, mult: usize) -> (DMatrix<C64>, f64) {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| {
        svd.singular_values[i]
            .partial_cmp(&svd.singular_values[j])
            .unwrap_or(Ordering::Equal)
            .then(i.cmp(&j))
    });
    let chosen: Vec<usize> = idx.into_iter().take(mult).collect();
    let worst = chosen
        .iter()
        .map(|&k| svd.singular_values[k])
        .fold(0.0, f64::max);
    let cols = DMatrix::from_fn(n, mult, |r, c| v_t[(chosen[c], r)].conj());
    (cols, worst)
}

/// Unit norm, largest-magnitude component real and positive.
fn fix_phase(v: &mut DVector<C64>) {
    let norm = v.norm();
    if norm == 0.0 {
        return;
    }
    let mut best = 0;
    for k in 1..v.len() {
        if v[k].norm() > v[best].norm() * (1.0 + 1e-12) {
            best = k;
        }
    }
    let phase = v[best] / v[best].norm();
    let rot = phase.conj() / norm;
    for z in v.iter_mut() {
        *z *= rot;
    }
}

/// Moore-Penrose pseudoinverse of a complex matrix.
pub fn complex_pinv(m: &DMatrix<C64>) -> DMatrix<C64> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = smax * (m.nrows().max(m.ncols()) as f64) * f64::EPSILON;
    svd.pseudo_inverse(eps).unwrap_or_else(|_| DMatrix::zeros(m.ncols(), m.nrows()))
}

/// Real inverse, rejecting numerically singular matrices.
pub fn checked_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = ordered_svd(m);
    let smax = svd.sigma.first().copied().unwrap_or(0.0);
    let smin = svd.sigma.last().copied().unwrap_or(0.0);
    if smax == 0.0 || !smax.is_finite() || smin <= smax * 1e-13 {
        return Err(Error::Degenerate("matrix is numerically singular".into()));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("matrix is numerically singular".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_pairs(a: &DMatrix<f64>, e: &EigenPairs, tol: f64) {
        let ac = to_complex(a);
        for (k, lam) in e.values.iter().enumerate() {
            let v = e.vectors.column(k);
            let resid = (&ac * v - v * *lam).norm();
            assert!(resid < tol, "residual {resid} for {lam}");
        }
    }

    #[test]
    fn rotation_spectrum() {
        let th: f64 = 0.3;
        let a = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let e = real_eigen(&a).unwrap();
        assert!((e.values[0] - C64::from_polar(1.0, -th)).norm() < 1e-12);
        assert!((e.values[1] - C64::from_polar(1.0, th)).norm() < 1e-12);
        assert_eq!(e.values[0], e.values[1].conj());
        check_pairs(&a, &e, 1e-10);
        assert!(!e.defective);
    }

    #[test]
    fn repeated_and_defective() {
        let id = DMatrix::<f64>::identity(3, 3) * 0.5;
        let e = real_eigen(&id).unwrap();
        assert!(!e.defective);
        check_pairs(&id, &e, 1e-12);

        let jordan = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 0.5]);
        let e = real_eigen(&jordan).unwrap();
        assert!(e.defective);
    }

    #[test]
    fn random_matrix_pairs() {
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[0.2, -0.7, 0.1, 0.4, 0.9, 0.3, -0.2, 0.0, 0.05, 0.6, -0.4, 0.3, -0.3, 0.1, 0.8, 0.1],
        );
        let e = real_eigen(&a).unwrap();
        check_pairs(&a, &e, 1e-9);
        for w in e.values.windows(2) {
            assert_ne!(spectral_order(&w[0], &w[1]), Ordering::Greater);
        }
    }
}
