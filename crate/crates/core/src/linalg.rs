//! Dense complex linear algebra helpers shared by the whole crate.
//!
//! Everything is desk-scale (total dimensions well under ~256), so dense
//! `nalgebra` matrices are used throughout and no sparse path exists.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Eigenvalues below this magnitude are treated as exact zeros before
/// logarithms and square roots.
pub const EIG_CLAMP: f64 = 1e-12;
/// Negative eigenvalues down to this value are attributed to PSD drift
/// and clamped to zero; anything lower is surfaced as corruption.
pub const PSD_TOL: f64 = 1e-10;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn czero() -> C64 {
    C64::new(0.0, 0.0)
}

pub fn cone() -> C64 {
    C64::new(1.0, 0.0)
}

/// Conjugate transpose.
pub fn dagger(m: &CMat) -> CMat {
    m.adjoint()
}

/// Kronecker product in row-major register order (left factor varies slowest).
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn kron_vec(a: &CVec, b: &CVec) -> CVec {
    let mut out = CVec::zeros(a.len() * b.len());
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            out[i * b.len() + j] = ai * bj;
        }
    }
    out
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Basis column vector |k> of dimension n.
pub fn basis_vec(n: usize, k: usize) -> CVec {
    let mut v = CVec::zeros(n);
    v[k] = cone();
    v
}

pub fn trace(m: &CMat) -> C64 {
    m.diagonal().sum()
}

pub fn frobenius_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs_entry(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Hermiticity defect `max_ij |m - m†|`.
pub fn hermiticity_defect(m: &CMat) -> f64 {
    max_abs_entry(&(m - m.adjoint()))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn eigh_values(m: &CMat) -> Vec<f64> {
    let mut vals: Vec<f64> = m
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals
}

/// Full Hermitian eigendecomposition: (eigenvalues, eigenvectors as columns),
/// sorted by descending eigenvalue.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let mut vals = Vec::with_capacity(n);
    let mut vecs = CMat::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vals.push(eig.eigenvalues[k]);
        vecs.set_column(col, &eig.eigenvectors.column(k));
    }
    (vals, vecs)
}

/// Clamp the spectrum of a PSD-up-to-drift matrix: values in [-PSD_TOL, 0)
/// become 0, values below -tol are an error.
pub fn clamp_psd_spectrum(vals: &[f64], tol: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(vals.len());
    for &v in vals {
        if v < -tol {
            return Err(Error::Numerical(format!(
                "eigenvalue {v:.3e} below PSD tolerance -{tol:.1e}"
            )));
        }
        out.push(v.max(0.0));
    }
    Ok(out)
}

/// Hermitian square root of a PSD matrix.
pub fn sqrtm_psd(m: &CMat) -> Result<CMat> {
    let (vals, vecs) = eigh(m);
    let vals = clamp_psd_spectrum(&vals, PSD_TOL)?;
    let n = m.nrows();
    let mut d = CMat::zeros(n, n);
    for (i, v) in vals.iter().enumerate() {
        d[(i, i)] = c(v.sqrt(), 0.0);
    }
    Ok(&vecs * d * vecs.adjoint())
}

/// Trace norm ||X||_1 = sum of singular values; for Hermitian input this is
/// the sum of absolute eigenvalues, which is how it is computed here.
pub fn trace_norm_hermitian(m: &CMat) -> f64 {
    let h = (m + m.adjoint()).scale(0.5);
    eigh_values(&h).iter().map(|v| v.abs()).sum()
}

/// Operator norm (largest singular value).
pub fn operator_norm(m: &CMat) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

/// Matrix exponential (scaling-and-squaring Padé).
pub fn expm(m: &CMat) -> CMat {
    m.exp()
}

/// Eigendecomposition of a unitary matrix via the commuting Hermitian pair
/// H = (U+U†)/2, K = (U-U†)/(2i): eigenspaces of H are U-invariant, and K
/// restricted to each resolves the remaining degeneracy. Returns the phases
/// θ_j ∈ (-π, π] and the joint eigenbasis, with U = V diag(e^{iθ}) V†.
pub fn unitary_eig(u: &CMat) -> Result<(Vec<f64>, CMat)> {
    let n = u.nrows();
    if u.ncols() != n {
        return Err(Error::Dimension("unitary_eig expects a square matrix".into()));
    }
    let defect = max_abs_entry(&(u * u.adjoint() - identity(n)));
    if defect > 1e-8 {
        return Err(Error::InvalidIsometry(format!(
            "matrix is not unitary (defect {defect:.3e})"
        )));
    }
    let h = (u + u.adjoint()).scale(0.5);
    let k = (u - u.adjoint()) * c(0.0, -0.5);
    let (hvals, hvecs) = eigh(&h);

    // Group near-degenerate H eigenvalues and diagonalize K inside each block.
    let mut basis = CMat::zeros(n, n);
    let mut col = 0usize;
    let mut start = 0usize;
    while start < n {
        let mut end = start + 1;
        while end < n && (hvals[end] - hvals[start]).abs() < 1e-7 {
            end += 1;
        }
        let block = hvecs.columns(start, end - start).into_owned();
        let k_block = block.adjoint() * &k * &block;
        let (_, kvecs) = eigh(&k_block);
        let joint = block * kvecs;
        for j in 0..joint.ncols() {
            basis.set_column(col, &joint.column(j));
            col += 1;
        }
        start = end;
    }

    let mut phases = Vec::with_capacity(n);
    for j in 0..n {
        let v = basis.column(j).into_owned();
        let uv = u * &v;
        let lambda: C64 = v.dotc(&uv);
        phases.push(lambda.im.atan2(lambda.re));
        // Guard: v must actually be an eigenvector of U.
        let resid = (&uv - &v * lambda).norm();
        if resid > 1e-7 {
            return Err(Error::Numerical(format!(
                "unitary_eig residual {resid:.3e} (degenerate clustering failed)"
            )));
        }
    }
    Ok((phases, basis))
}

/// Principal logarithm of a unitary: anti-Hermitian G with exp(G) = U.
pub fn unitary_log(u: &CMat) -> Result<CMat> {
    let (phases, basis) = unitary_eig(u)?;
    let n = u.nrows();
    let mut d = CMat::zeros(n, n);
    for (j, th) in phases.iter().enumerate() {
        d[(j, j)] = c(0.0, *th);
    }
    Ok(&basis * d * basis.adjoint())
}

/// Overlap magnitude |<a|b>| (global-phase-invariant pure-state comparison).
pub fn overlap_abs(a: &CVec, b: &CVec) -> f64 {
    a.dotc(b).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn kron_index_formula() {
        // random 2x2 (x) random 3x3 spot-checked against the four-index rule
        // entry[(i*3+k),(j*3+l)] = a[i,j]*b[k,l].
        let a = CMat::from_fn(2, 2, |i, j| c(0.3 + i as f64, j as f64 - 0.7));
        let b = CMat::from_fn(3, 3, |i, j| c(i as f64 * 0.2 - 1.0, 0.5 + j as f64));
        let k = kron(&a, &b);
        for i in 0..2 {
            for j in 0..2 {
                for p in 0..3 {
                    for q in 0..3 {
                        let want = a[(i, j)] * b[(p, q)];
                        let got = k[(i * 3 + p, j * 3 + q)];
                        assert_abs_diff_eq!(got.re, want.re, epsilon = 1e-14);
                        assert_abs_diff_eq!(got.im, want.im, epsilon = 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn expm_matches_series_small() {
        let g = CMat::from_row_slice(
            2,
            2,
            &[c(0.0, 0.3), c(0.2, -0.1), c(-0.2, -0.1), c(0.0, -0.5)],
        );
        // Taylor series oracle.
        let mut term = identity(2);
        let mut sum = identity(2);
        for k in 1..30 {
            term = &term * &g / c(k as f64, 0.0);
            sum += &term;
        }
        let e = expm(&g);
        assert!(max_abs_entry(&(e - sum)) < 1e-12);
    }

    #[test]
    fn expm_antihermitian_is_unitary() {
        let a = CMat::from_fn(4, 4, |i, j| c((i * 7 + j) as f64 * 0.13 - 1.1, (i + 3 * j) as f64 * 0.07 - 0.4));
        let g = (&a - a.adjoint()).scale(0.5);
        let u = expm(&g);
        assert!(max_abs_entry(&(&u * u.adjoint() - identity(4))) < 1e-12);
    }

    #[test]
    fn unitary_log_round_trip() {
        let a = CMat::from_fn(4, 4, |i, j| {
            c((i as f64 - 1.3) * 0.21 + j as f64 * 0.11, (j as f64 + 0.7) * 0.17 - i as f64 * 0.05)
        });
        let g = (&a - a.adjoint()).scale(0.9);
        let u = expm(&g);
        let log = unitary_log(&u).unwrap();
        let back = expm(&log);
        assert!(max_abs_entry(&(back - u)) < 1e-9);
    }

    #[test]
    fn trace_norm_diagonal() {
        let m = CMat::from_diagonal(&CVec::from_vec(vec![c(0.25, 0.0), c(-0.25, 0.0)]));
        assert_abs_diff_eq!(trace_norm_hermitian(&m), 0.5, epsilon = 1e-12);
    }
}
