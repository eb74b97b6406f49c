//! Dense complex linear algebra shared by every other module.
//!
//! All routines are generic over the real scalar type `T` (see [`Real`]); the
//! complex element type is `num_complex::Complex<T>`. Decompositions are
//! delegated to `nalgebra`; this module pins the conventions the rest of the
//! crate relies on: descending eigenvalue order, PSD clamping, relative rank
//! thresholds and pseudo-inverse semantics for singular Gram matrices.

use nalgebra::{DMatrix, DVector, RealField};
use num_complex::Complex;
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

use crate::error::{mismatch, Error, Result};

/// Real scalar the numerical core is generic over.
pub trait Real: RealField + Copy + FloatConst + FromPrimitive + ToPrimitive + Default + Send + Sync {
    /// Slack used for Hermitian symmetry and PSD clamping, relative to the
    /// matrix scale.
    const PSD_TOL: f64;

    /// Converts an `f64` literal into `Self`.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("real scalar convertible to f64")
    }
}

impl Real for f64 {
    const PSD_TOL: f64 = 1e-10;
}

impl Real for f32 {
    const PSD_TOL: f64 = 1e-4;
}

pub type CMatrix<T> = DMatrix<Complex<T>>;
pub type CVector<T> = DVector<Complex<T>>;

/// Default relative threshold for [`numerical_rank`].
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[inline]
pub fn cplx<T: Real>(re: f64, im: f64) -> Complex<T> {
    Complex::new(T::lit(re), T::lit(im))
}

/// Unit-modulus complex number `exp(j·theta)`.
#[inline]
pub fn expj<T: Real>(theta: T) -> Complex<T> {
    Complex::new(theta.cos(), theta.sin())
}

#[inline]
pub fn modulus<T: Real>(z: &Complex<T>) -> T {
    z.re.hypot(z.im)
}

#[inline]
pub fn arg<T: Real>(z: &Complex<T>) -> T {
    z.im.atan2(z.re)
}

/// Squared Frobenius norm.
pub fn frobenius_sq<T: Real>(a: &CMatrix<T>) -> T {
    a.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
}

/// Frobenius inner product `tr(A^H B)`.
pub fn inner<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> Complex<T> {
    a.iter()
        .zip(b.iter())
        .fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * y)
}

pub fn trace<T: Real>(a: &CMatrix<T>) -> Complex<T> {
    a.diagonal()
        .iter()
        .fold(Complex::new(T::zero(), T::zero()), |acc, z| acc + z)
}

pub fn hadamard<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> Result<CMatrix<T>> {
    if a.shape() != b.shape() {
        return Err(mismatch(format!("hadamard of {:?} and {:?}", a.shape(), b.shape())));
    }
    Ok(a.component_mul(b))
}

pub fn all_finite<T: Real>(a: &CMatrix<T>) -> bool {
    a.iter().all(|z| z.re.as_f64().is_finite() && z.im.as_f64().is_finite())
}

pub fn ensure_finite<T: Real>(a: &CMatrix<T>, what: &str) -> Result<()> {
    if all_finite(a) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// `diag(v)` as a dense matrix.
pub fn diag<T: Real>(v: &CVector<T>) -> CMatrix<T> {
    CMatrix::from_diagonal(v)
}

/// Eigendecomposition `A = U·diag(values)·U^H` of a Hermitian PSD matrix.
#[derive(Debug, Clone)]
pub struct HermitianEig<T: Real> {
    /// Unitary matrix whose columns are eigenvectors.
    pub vectors: CMatrix<T>,
    /// Non-negative eigenvalues, descending.
    pub values: DVector<T>,
}

impl<T: Real> HermitianEig<T> {
    pub fn max_eigenvalue(&self) -> T {
        if self.values.is_empty() {
            T::zero()
        } else {
            self.values[0]
        }
    }

    pub fn reconstruct(&self) -> CMatrix<T> {
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= Complex::new(self.values[j], T::zero());
        }
        scaled * self.vectors.adjoint()
    }

    /// Applies the (pseudo-)inverse of `A + shift·I` to `rhs`, dropping modes
    /// whose shifted eigenvalue is below `rel_tol · max(|shifted|)`.
    pub fn solve_shifted(&self, shift: T, rhs: &CMatrix<T>, rel_tol: T) -> CMatrix<T> {
        let shifted: Vec<T> = self.values.iter().map(|&s| s + shift).collect();
        let top = shifted.iter().fold(T::zero(), |m, &s| m.max(s.abs()));
        let cutoff = rel_tol * top;
        let mut projected = self.vectors.adjoint() * rhs;
        for (i, mut row) in projected.row_iter_mut().enumerate() {
            let s = shifted[i];
            let scale = if s.abs() > cutoff && s != T::zero() {
                T::one() / s
            } else {
                T::zero()
            };
            row *= Complex::new(scale, T::zero());
        }
        &self.vectors * projected
    }
}

/// Hermitian eigendecomposition with PSD clamping.
///
/// The input is symmetrized as `(A + A^H)/2` after checking its asymmetry is
/// within `T::PSD_TOL` relative to `max(1, ‖A‖_F)`. Eigenvalues in
/// `[-tol, 0)` are clamped to zero; anything below raises `IndefiniteInput`.
pub fn hermitian_eig<T: Real>(a: &CMatrix<T>) -> Result<HermitianEig<T>> {
    let (rows, cols) = a.shape();
    if rows != cols {
        return Err(mismatch(format!("eigendecomposition of {rows}x{cols}")));
    }
    ensure_finite(a, "eigendecomposition input")?;
    if rows == 0 {
        return Ok(HermitianEig {
            vectors: CMatrix::zeros(0, 0),
            values: DVector::zeros(0),
        });
    }
    let tol = T::lit(T::PSD_TOL);
    let scale = frobenius_sq(a).sqrt().max(T::one());
    let adj = a.adjoint();
    let asym = frobenius_sq(&(a - &adj)).sqrt();
    if asym > tol * scale {
        return Err(Error::NotHermitian(asym.as_f64()));
    }
    let sym = (a + adj) * Complex::new(T::lit(0.5), T::zero());
    let eig = nalgebra::SymmetricEigen::new(sym);

    let mut order: Vec<usize> = (0..rows).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let top = eig.eigenvalues[order[0]].abs().max(T::one());
    let floor = -(tol * top);
    let mut values = DVector::zeros(rows);
    let mut vectors = CMatrix::zeros(rows, rows);
    for (dst, &src) in order.iter().enumerate() {
        let mut lam = eig.eigenvalues[src];
        if lam < floor {
            return Err(Error::IndefiniteInput(lam.as_f64()));
        }
        if lam < T::zero() {
            lam = T::zero();
        }
        values[dst] = lam;
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(HermitianEig { vectors, values })
}

/// Largest eigenvalue of a Hermitian PSD matrix.
pub fn max_eigenvalue<T: Real>(a: &CMatrix<T>) -> Result<T> {
    Ok(hermitian_eig(a)?.max_eigenvalue())
}

/// Singular values, descending.
pub fn singular_values<T: Real>(a: &CMatrix<T>) -> Vec<T> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<T> = a.clone().singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

/// Number of singular values above `rel_tol · σ_max`; zero for the zero
/// matrix.
pub fn numerical_rank<T: Real>(a: &CMatrix<T>, rel_tol: f64) -> usize {
    let sv = singular_values(a);
    let Some(&top) = sv.first() else { return 0 };
    if top == T::zero() {
        return 0;
    }
    let cutoff = T::lit(rel_tol) * top;
    sv.iter().filter(|&&s| s > cutoff).count()
}

/// Solves `X·G = B` for Hermitian PSD `G`, i.e. returns `B·G^{-1}`.
///
/// Uses a Cholesky factorization when `G` is numerically positive definite,
/// otherwise falls back to the eigendecomposition pseudo-inverse.
pub fn right_solve_hermitian<T: Real>(b: &CMatrix<T>, g: &CMatrix<T>) -> Result<CMatrix<T>> {
    if g.nrows() != g.ncols() || b.ncols() != g.nrows() {
        return Err(mismatch(format!(
            "right solve of {:?} against {:?}",
            b.shape(),
            g.shape()
        )));
    }
    // X G = B  <=>  G X^H = B^H  (G Hermitian)
    if let Some(chol) = g.clone().cholesky() {
        let xh = chol.solve(&b.adjoint());
        if all_finite(&xh) {
            return Ok(xh.adjoint());
        }
    }
    let eig = hermitian_eig(g)?;
    let xh = eig.solve_shifted(T::zero(), &b.adjoint(), T::lit(T::PSD_TOL));
    Ok(xh.adjoint())
}
