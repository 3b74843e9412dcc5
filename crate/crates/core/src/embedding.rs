//! Time-delay embedding of scalar signals.
//!
//! Delay vectors are ordered newest-first: slot 0 holds the current sample,
//! slot `h - 1` the oldest. All time indices are 0-based.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Number of lags used to augment a scalar sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingConfig {
    pub h: usize,
}

impl EmbeddingConfig {
    pub fn new(h: usize) -> Result<Self> {
        if h == 0 {
            return Err(Error::InvalidInput("embedding dimension must be >= 1".into()));
        }
        Ok(Self { h })
    }
}

/// A length-`h` delay vector `(e(t), e(t-1), ..., e(t-h+1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayVector(pub DVector<f64>);

impl DelayVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

/// `h x (n - h + 1)` matrix whose column `j` is the delay vector at time `j + h - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelMatrix(pub DMatrix<f64>);

impl HankelMatrix {
    pub fn h(&self) -> usize {
        self.0.nrows()
    }

    pub fn columns(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Delay vector ending at sample `t`.
pub fn embed(series: &[f64], h: usize, t: usize) -> Result<DelayVector> {
    if h == 0 {
        return Err(Error::InvalidInput("embedding dimension must be >= 1".into()));
    }
    if t >= series.len() || t + 1 < h {
        return Err(Error::IndexOutOfRange(format!(
            "t={t} needs h-1 <= t < len (h={h}, len={})",
            series.len()
        )));
    }
    Ok(DelayVector(DVector::from_fn(h, |r, _| series[t - r])))
}

pub fn build_hankel(series: &[f64], h: usize) -> Result<HankelMatrix> {
    if h == 0 {
        return Err(Error::InvalidInput("embedding dimension must be >= 1".into()));
    }
    if series.len() < h {
        return Err(Error::InvalidInput(format!(
            "series of length {} is shorter than h={h}",
            series.len()
        )));
    }
    let m = series.len() - h + 1;
    Ok(HankelMatrix(DMatrix::from_fn(h, m, |r, c| {
        series[c + h - 1 - r]
    })))
}

/// Split a Hankel matrix into the one-step pair `(L, R)`.
///
/// `R` holds columns `0..m-1` and `L` columns `1..m`, so `L[:, j]` is one
/// step ahead of `R[:, j]`.
pub fn build_shift_pairs(hankel: &HankelMatrix) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let m = hankel.columns();
    if m < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 Hankel columns, got {m}"
        )));
    }
    let l = hankel.0.columns(1, m - 1).into_owned();
    let r = hankel.0.columns(0, m - 1).into_owned();
    Ok((l, r))
}

/// Left inverse of the observable: the current-sample slot.
pub fn invert_embed(v: &[f64]) -> Result<f64> {
    v.first()
        .copied()
        .ok_or_else(|| Error::InvalidInput("empty delay vector".into()))
}

/// Left inverse of the observable for complex vectors: real part of slot 0.
pub fn invert_embed_complex(v: &[Complex<f64>]) -> Result<f64> {
    v.first()
        .map(|c| c.re)
        .ok_or_else(|| Error::InvalidInput("empty delay vector".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn embed_examples() {
        assert_eq!(embed(&[5.0, 6.0, 7.0], 3, 2).unwrap().as_slice(), &[7.0, 6.0, 5.0]);
        assert_eq!(embed(&[1.0, 2.0, 3.0, 4.0], 1, 1).unwrap().as_slice(), &[2.0]);
        assert_eq!(embed(&[0.0; 4], 2, 3).unwrap().as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn embed_out_of_range() {
        assert!(matches!(embed(&[1.0, 2.0], 3, 1), Err(Error::IndexOutOfRange(_))));
        assert!(matches!(embed(&[1.0, 2.0], 1, 2), Err(Error::IndexOutOfRange(_))));
    }

    #[test]
    fn hankel_examples() {
        let h = build_hankel(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(h.0, DMatrix::from_column_slice(2, 3, &[2.0, 1.0, 3.0, 2.0, 4.0, 3.0]));
        let h = build_hankel(&[1.0, 2.0, 3.0], 3).unwrap();
        assert_eq!(h.0, DMatrix::from_column_slice(3, 1, &[3.0, 2.0, 1.0]));
        let h = build_hankel(&[7.0], 1).unwrap();
        assert_eq!(h.0, DMatrix::from_element(1, 1, 7.0));
        assert!(build_hankel(&[1.0], 2).is_err());
    }

    #[test]
    fn shift_pairs() {
        let h = build_hankel(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        let (l, r) = build_shift_pairs(&h).unwrap();
        assert_eq!(r, DMatrix::from_column_slice(2, 2, &[2.0, 1.0, 3.0, 2.0]));
        assert_eq!(l, DMatrix::from_column_slice(2, 2, &[3.0, 2.0, 4.0, 3.0]));

        let single = build_hankel(&[1.0, 2.0, 3.0], 3).unwrap();
        assert!(build_shift_pairs(&single).is_err());

        let constant = build_hankel(&[2.5; 6], 3).unwrap();
        let (l, r) = build_shift_pairs(&constant).unwrap();
        assert_eq!(l, r);
    }

    #[test]
    fn invert_examples() {
        assert_eq!(invert_embed(&[7.0, 6.0, 5.0]).unwrap(), 7.0);
        let v = [Complex::new(3.0, 0.0), Complex::new(1.0, 2.0)];
        assert_eq!(invert_embed_complex(&v).unwrap(), 3.0);
        assert_eq!(invert_embed(&[0.0]).unwrap(), 0.0);
        assert!(invert_embed(&[]).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_and_antidiagonals(series in prop::collection::vec(-1e3f64..1e3, 1..40), h in 1usize..8) {
            prop_assume!(h <= series.len());
            for t in (h - 1)..series.len() {
                let v = embed(&series, h, t).unwrap();
                prop_assert_eq!(invert_embed(v.as_slice()).unwrap(), series[t]);
            }
            let hk = build_hankel(&series, h).unwrap();
            for r in 0..hk.h().saturating_sub(1) {
                for c in 0..hk.columns().saturating_sub(1) {
                    prop_assert_eq!(hk.0[(r, c)], hk.0[(r + 1, c + 1)]);
                }
            }
            if hk.columns() >= 2 {
                let (l, r) = build_shift_pairs(&hk).unwrap();
                for j in 0..l.ncols() {
                    prop_assert_eq!(l.column(j), hk.0.column(j + 1));
                    prop_assert_eq!(r.column(j), hk.0.column(j));
                }
            }
        }
    }
}
