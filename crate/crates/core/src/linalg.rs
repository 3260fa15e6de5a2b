//! Small complex linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::complex_normal;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn fro2(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Matrix with i.i.d. CN(0, `variance`) entries.
pub fn random_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, variance: f64, rng: &mut R) -> CMat {
    // Column-major fill order, fixed so seeded draws are reproducible.
    let data: Vec<Complex64> = (0..rows * cols).map(|_| complex_normal(rng, variance)).collect();
    CMat::from_vec(rows, cols, data)
}

pub fn random_vector<R: Rng + ?Sized>(len: usize, variance: f64, rng: &mut R) -> CVec {
    CVec::from_iterator(len, (0..len).map(|_| complex_normal(rng, variance)))
}

/// Keeps only the diagonal of a square matrix.
pub fn diag_part(m: &CMat) -> CMat {
    let n = m.nrows();
    CMat::from_fn(n, n, |i, j| if i == j { m[(i, i)] } else { ZERO })
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// Eigen-decomposition of a Hermitian matrix, eigenpairs sorted by
/// descending eigenvalue (ties keep the solver's column order).
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(m.nrows(), order.len(), |r, k| eig.eigenvectors[(r, order[k])]);
    (values, vectors)
}

/// Rotates a vector so that its first entry with non-negligible magnitude
/// is real and positive.
pub fn fix_phase(v: &mut CVec) {
    let scale = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return;
    }
    if let Some(first) = v.iter().find(|z| z.norm() > 1e-12 * scale) {
        let rot = first.conj() / first.norm();
        for z in v.iter_mut() {
            *z *= rot;
        }
    }
}

/// Cholesky factor of a Hermitian positive-definite matrix.
pub fn cholesky(m: &CMat, what: &str) -> Result<Cholesky<Complex64, nalgebra::Dyn>> {
    if !m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::NotPositiveDefinite(format!("{what}: non-finite entries")));
    }
    let ch = Cholesky::new(hermitian_part(m)).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))?;
    // Complex square roots never fail, so a negative pivot shows up as an
    // imaginary diagonal entry instead of a factorization error.
    let l = ch.l_dirty();
    for i in 0..l.nrows() {
        let d = l[(i, i)];
        if !(d.re > 0.0) || d.im.abs() > 1e-9 * d.re {
            return Err(Error::NotPositiveDefinite(what.to_string()));
        }
    }
    Ok(ch)
}

/// Solves `a x = b` for Hermitian positive-definite `a`.
pub fn solve_hpd(a: &CMat, b: &CMat, what: &str) -> Result<CMat> {
    Ok(cholesky(a, what)?.solve(b))
}

/// `log2 det(a)` for Hermitian positive-definite `a`.
pub fn log2_det_hpd(a: &CMat, what: &str) -> Result<f64> {
    let ch = cholesky(a, what)?;
    let l = ch.l_dirty();
    Ok((0..a.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum::<f64>() / std::f64::consts::LN_2)
}

/// Unit-modulus matrix with the phases of `m`; zero entries map to 1.
pub fn phase_of(m: &CMat) -> CMat {
    m.map(|z| Complex64::from_polar(1.0, z.arg()))
}
