//! Dense complex linear algebra helpers.
//!
//! nalgebra routes real `f32`/`f64` products through an optimized GEMM kernel
//! but multiplies complex matrices with a generic loop. The helpers below
//! split complex operands into real and imaginary planes so that the large
//! M×M products stay on the fast path.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::real::{from_usize, lit, Real};

pub type CMatrix<T> = DMatrix<Complex<T>>;
pub type CVector<T> = DVector<Complex<T>>;

/// Below this many multiply-adds the plain complex product is faster than
/// splitting into planes.
const SPLIT_THRESHOLD: usize = 1 << 15;

/// Block size at which [`hpd_inverse`] switches to a direct Cholesky inverse.
const INVERSE_LEAF: usize = 96;

pub fn split<T: Real>(a: &CMatrix<T>) -> (DMatrix<T>, DMatrix<T>) {
    (a.map(|z| z.re), a.map(|z| z.im))
}

pub fn join<T: Real>(re: &DMatrix<T>, im: &DMatrix<T>) -> CMatrix<T> {
    re.zip_map(im, |r, i| Complex::new(r, i))
}

/// `a · b` for complex matrices.
pub fn cmatmul<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    assert_eq!(a.ncols(), b.nrows(), "cmatmul: inner dimensions differ");
    if a.nrows() * a.ncols() * b.ncols() < SPLIT_THRESHOLD {
        return a * b;
    }
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    join(&re, &im)
}

/// `aᴴ · b` for complex matrices.
pub fn cmatmul_adj<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    assert_eq!(a.nrows(), b.nrows(), "cmatmul_adj: row counts differ");
    if a.nrows() * a.ncols() * b.ncols() < SPLIT_THRESHOLD {
        return a.ad_mul(b);
    }
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let (art, ait) = (ar.transpose(), ai.transpose());
    let re = &art * &br + &ait * &bi;
    let im = &art * &bi - &ait * &br;
    join(&re, &im)
}

/// `a · bᴴ` for complex matrices.
pub fn cmatmul_by_adj<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    cmatmul(a, &b.adjoint())
}

/// `tr(a · b)` in O(n²) without forming the product.
pub fn trace_of_product<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> Complex<T> {
    assert_eq!(a.ncols(), b.nrows());
    assert_eq!(a.nrows(), b.ncols());
    let bt = b.transpose();
    trace_of_product_transposed(a, &bt)
}

/// `tr(a · b)` given `bᵀ` (element-wise dot product of `a` and `bᵀ`).
pub fn trace_of_product_transposed<T: Real>(a: &CMatrix<T>, bt: &CMatrix<T>) -> Complex<T> {
    assert_eq!(a.shape(), bt.shape());
    let mut acc = Complex::new(T::zero(), T::zero());
    for (x, y) in a.as_slice().iter().zip(bt.as_slice()) {
        acc += *x * *y;
    }
    acc
}

/// Replaces `a` by `(a + aᴴ)/2`.
pub fn hermitize<T: Real>(a: &mut CMatrix<T>) {
    let n = a.nrows();
    let half = lit::<T>(0.5);
    for j in 0..n {
        a[(j, j)] = Complex::new(a[(j, j)].re, T::zero());
        for i in (j + 1)..n {
            let avg = (a[(i, j)] + a[(j, i)].conj()) * half;
            a[(i, j)] = avg;
            a[(j, i)] = avg.conj();
        }
    }
}

/// Relative Hermitian defect `‖a − aᴴ‖_F / ‖a‖_F`.
pub fn hermitian_defect<T: Real>(a: &CMatrix<T>) -> T {
    let scale = a.norm();
    if scale == T::zero() {
        return T::zero();
    }
    (a - a.adjoint()).norm() / scale
}

/// Inverse of a Hermitian positive-definite matrix.
///
/// Recursive 2×2 block elimination: the leading block is inverted, its Schur
/// complement is inverted, and the blocks are reassembled. The work is
/// dominated by four half-size products per level, all of which go through
/// [`cmatmul`].
pub fn hpd_inverse<T: Real>(a: &CMatrix<T>) -> Result<CMatrix<T>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "hpd_inverse of a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Factorization("non-finite matrix entry".into()));
    }
    let mut inv = hpd_inverse_rec(a)?;
    hermitize(&mut inv);
    Ok(inv)
}

fn hpd_inverse_rec<T: Real>(a: &CMatrix<T>) -> Result<CMatrix<T>> {
    let n = a.nrows();
    if n <= INVERSE_LEAF {
        let fail = || Error::Factorization(format!("Cholesky failed on {n}x{n} block"));
        let chol = a.clone().cholesky().ok_or_else(fail)?;
        // Complex square roots never fail, so a negative pivot shows up
        // as a non-real diagonal entry of the factor.
        let l = chol.l_dirty();
        let tol = lit::<T>(1e-8);
        if (0..n).any(|i| !(l[(i, i)].re > T::zero()) || l[(i, i)].im.abs() > tol * l[(i, i)].re) {
            return Err(fail());
        }
        return Ok(chol.inverse());
    }
    let h = n / 2;
    let r = n - h;
    let a11 = a.view((0, 0), (h, h)).into_owned();
    let a12 = a.view((0, h), (h, r)).into_owned();
    let a22 = a.view((h, h), (r, r)).into_owned();

    let a11_inv = hpd_inverse_rec(&a11)?;
    let x = cmatmul(&a11_inv, &a12);
    let mut schur = a22 - cmatmul_adj(&a12, &x);
    hermitize(&mut schur);
    let schur_inv = hpd_inverse_rec(&schur)?;
    let b12 = -cmatmul(&x, &schur_inv);
    let b11 = a11_inv - cmatmul_by_adj(&b12, &x);

    let mut out = CMatrix::zeros(n, n);
    out.view_mut((0, 0), (h, h)).copy_from(&b11);
    out.view_mut((0, h), (h, r)).copy_from(&b12);
    out.view_mut((h, 0), (r, h)).copy_from(&b12.adjoint());
    out.view_mut((h, h), (r, r)).copy_from(&schur_inv);
    Ok(out)
}

/// Eigen-decomposition of a Hermitian matrix: ascending-unordered real
/// eigenvalues and unitary eigenvectors (columns).
pub fn hermitian_eigen<T: Real>(a: &CMatrix<T>) -> (DVector<T>, CMatrix<T>) {
    let eig = a.clone().symmetric_eigen();
    (eig.eigenvalues, eig.eigenvectors)
}

/// `v ↦ √(Σ|vᵢ|²)` for a complex column or row.
pub fn norm_sq<T: Real>(v: impl IntoIterator<Item = Complex<T>>) -> T {
    v.into_iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
}

pub fn identity<T: Real>(n: usize) -> CMatrix<T> {
    CMatrix::identity(n, n)
}

/// Frobenius-norm relative difference `‖a − b‖_F / max(‖b‖_F, tiny)`.
pub fn relative_frobenius<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> T {
    let scale = b.norm().max(T::min_value().unwrap_or(T::zero()));
    (a - b).norm() / scale
}

/// Mean of the diagonal, `tr(a)/n`.
pub fn normalized_trace<T: Real>(a: &CMatrix<T>) -> Complex<T> {
    a.trace() / Complex::new(from_usize::<T>(a.nrows()), T::zero())
}
