//! Dense complex matrix helpers and the non-Hermitian eigensolver wrapper.

use faer::diag::Diag;
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self, ComputeEigenvectors};
use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, Par};

pub use faer::c64;

/// Dense complex matrix used for every operator block.
pub type CMat = Mat<c64>;

#[inline]
pub fn cr(re: f64) -> c64 {
    c64::new(re, 0.0)
}

pub fn zeros(rows: usize, cols: usize) -> CMat {
    CMat::zeros(rows, cols)
}

pub fn identity(n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| if i == j { cr(1.0) } else { cr(0.0) })
}

pub fn diagonal(entries: &[c64]) -> CMat {
    let n = entries.len();
    CMat::from_fn(n, n, |i, j| if i == j { entries[i] } else { cr(0.0) })
}

pub fn real_diagonal(entries: &[f64]) -> CMat {
    let n = entries.len();
    CMat::from_fn(n, n, |i, j| if i == j { cr(entries[i]) } else { cr(0.0) })
}

/// `diag(left) * m * diag(right)`.
pub fn scale(left: &[f64], m: &CMat, right: &[f64]) -> CMat {
    assert_eq!(left.len(), m.nrows());
    assert_eq!(right.len(), m.ncols());
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| {
        m[(i, j)] * (left[i] * right[j])
    })
}

/// Conjugate transpose as an owned matrix.
pub fn adjoint(m: &CMat) -> CMat {
    CMat::from_fn(m.ncols(), m.nrows(), |i, j| m[(j, i)].conj())
}

pub fn transpose(m: &CMat) -> CMat {
    CMat::from_fn(m.ncols(), m.nrows(), |i, j| m[(j, i)])
}

pub fn frobenius(m: &CMat) -> f64 {
    let mut acc = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            acc += m[(i, j)].norm_sqr();
        }
    }
    acc.sqrt()
}

pub fn max_abs(m: &CMat) -> f64 {
    let mut acc: f64 = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            acc = acc.max(m[(i, j)].norm());
        }
    }
    acc
}

pub fn is_real(m: &CMat) -> bool {
    (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].im == 0.0))
}

pub fn matvec(m: &CMat, x: &[c64]) -> Vec<c64> {
    assert_eq!(m.ncols(), x.len());
    let mut out = vec![cr(0.0); m.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj == cr(0.0) {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += m[(i, j)] * xj;
        }
    }
    out
}

/// `x^H y`.
pub fn dot(x: &[c64], y: &[c64]) -> c64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm(x: &[c64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn column(m: &CMat, j: usize) -> Vec<c64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

pub fn inverse(m: &CMat) -> CMat {
    m.partial_piv_lu().inverse()
}

/// Singular value decomposition `m = U diag(s) V^H`.
pub fn svd(m: &CMat) -> std::result::Result<(CMat, Vec<f64>, CMat), String> {
    let d = m.svd().map_err(|e| format!("{e:?}"))?;
    let s = (0..m.nrows().min(m.ncols())).map(|i| d.S()[i].re).collect();
    Ok((d.U().to_owned(), s, d.V().to_owned()))
}

/// Eigenvalues with right and left eigenvectors of a square matrix.
///
/// Columns of `right` satisfy `A r = λ r`; columns of `left` satisfy `l^H A = λ l^H`.
/// No normalization is applied.
pub struct EigenParts {
    pub values: Vec<c64>,
    pub right: CMat,
    pub left: CMat,
}

pub fn eigendecompose(a: &CMat) -> std::result::Result<EigenParts, String> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(format!(
            "matrix is not square ({}x{})",
            a.nrows(),
            a.ncols()
        ));
    }
    if n == 0 {
        return Ok(EigenParts {
            values: Vec::new(),
            right: zeros(0, 0),
            left: zeros(0, 0),
        });
    }
    if (0..n).any(|j| (0..n).any(|i| !a[(i, j)].re.is_finite() || !a[(i, j)].im.is_finite())) {
        return Err("matrix has non-finite entries".into());
    }
    let par = Par::Seq;
    if is_real(a) {
        let re = Mat::<f64>::from_fn(n, n, |i, j| a[(i, j)].re);
        let mut ul = Mat::<f64>::zeros(n, n);
        let mut ur = Mat::<f64>::zeros(n, n);
        let mut s_re = Diag::<f64>::zeros(n);
        let mut s_im = Diag::<f64>::zeros(n);
        let mut buf = MemBuffer::new(evd::evd_scratch::<f64>(
            n,
            ComputeEigenvectors::Yes,
            ComputeEigenvectors::Yes,
            par,
            Default::default(),
        ));
        evd::evd_real(
            re.as_ref(),
            s_re.as_mut(),
            s_im.as_mut(),
            Some(ul.as_mut()),
            Some(ur.as_mut()),
            par,
            MemStack::new(&mut buf),
            Default::default(),
        )
        .map_err(|e| format!("{e:?}"))?;
        let mut values = vec![cr(0.0); n];
        let mut right = zeros(n, n);
        let mut left = zeros(n, n);
        let mut j = 0;
        while j < n {
            if s_im[j] == 0.0 || j + 1 == n {
                values[j] = cr(s_re[j]);
                for i in 0..n {
                    right[(i, j)] = cr(ur[(i, j)]);
                    left[(i, j)] = cr(ul[(i, j)]);
                }
                j += 1;
            } else {
                values[j] = c64::new(s_re[j], s_im[j]);
                values[j + 1] = c64::new(s_re[j], -s_im[j]);
                for i in 0..n {
                    right[(i, j)] = c64::new(ur[(i, j)], ur[(i, j + 1)]);
                    right[(i, j + 1)] = c64::new(ur[(i, j)], -ur[(i, j + 1)]);
                    left[(i, j)] = c64::new(ul[(i, j)], ul[(i, j + 1)]);
                    left[(i, j + 1)] = c64::new(ul[(i, j)], -ul[(i, j + 1)]);
                }
                j += 2;
            }
        }
        Ok(EigenParts {
            values,
            right,
            left,
        })
    } else {
        let mut ul = zeros(n, n);
        let mut ur = zeros(n, n);
        let mut s = Diag::<c64>::zeros(n);
        let mut buf = MemBuffer::new(evd::evd_scratch::<c64>(
            n,
            ComputeEigenvectors::Yes,
            ComputeEigenvectors::Yes,
            par,
            Default::default(),
        ));
        evd::evd_cplx(
            a.as_ref(),
            s.as_mut(),
            Some(ul.as_mut()),
            Some(ur.as_mut()),
            par,
            MemStack::new(&mut buf),
            Default::default(),
        )
        .map_err(|e| format!("{e:?}"))?;
        let values = (0..n).map(|j| s[j]).collect();
        Ok(EigenParts {
            values,
            right: ur,
            left: ul,
        })
    }
}
