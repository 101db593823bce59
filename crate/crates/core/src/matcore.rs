//! Dense complex linear algebra: Schatten norms, the vec identification,
//! Kronecker products, spectra ordered by modulus, and quantum states.
//!
//! Matrices are plain `nalgebra` dense matrices over `Complex<T>`. The vec
//! identification follows `|x><y| -> |x> ⊗ |conj y>`, which for a matrix
//! `X = Σ X_xy |x><y|` is the row-major flattening of its entries (basis labels
//! are conjugated, coefficients are not).

use nalgebra::{ComplexField, DMatrix, DVector, Schur, SymmetricEigen, SVD};
use num_complex::Complex;

use crate::error::{invalid, shape, KblError, Result};
use crate::scalar::{lit, Real};

pub type CMatrix<T> = DMatrix<Complex<T>>;
pub type CVector<T> = DVector<Complex<T>>;

/// Hermiticity and trace tolerance for quantum states.
pub const STATE_TOL: f64 = 1e-10;
/// Tolerance for comparing eigenvalues (tie detection, spectral checks).
pub const SPECTRAL_TOL: f64 = 1e-8;

const MAX_SWEEPS: usize = 10_000;

#[inline]
pub fn c<T: Real>(re: f64, im: f64) -> Complex<T> {
    Complex::new(lit(re), lit(im))
}

pub fn identity<T: Real>(d: usize) -> CMatrix<T> {
    CMatrix::identity(d, d)
}

/// Square matrix with the given (complex) diagonal.
pub fn diag<T: Real>(entries: &[Complex<T>]) -> CMatrix<T> {
    CMatrix::from_diagonal(&CVector::from_row_slice(entries))
}

/// Largest absolute entry; zero for an empty matrix.
pub fn max_abs_entry<T: Real>(x: &CMatrix<T>) -> T {
    x.iter().fold(T::zero(), |acc, z| acc.max(z.modulus()))
}

pub fn is_finite<T: Real>(x: &CMatrix<T>) -> bool {
    x.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn ensure_finite<T: Real>(x: &CMatrix<T>) -> Result<()> {
    if x.is_empty() {
        return Err(invalid("empty matrix"));
    }
    if !is_finite(x) {
        return Err(invalid("matrix has non-finite entries"));
    }
    Ok(())
}

/// Singular values in non-increasing order.
pub fn singular_values<T: Real>(x: &CMatrix<T>) -> Result<Vec<T>> {
    ensure_finite(x)?;
    let svd = SVD::try_new(x.clone(), false, false, T::default_epsilon(), MAX_SWEEPS)
        .ok_or_else(|| KblError::NumericalFailure("SVD did not converge".into()))?;
    let mut s: Vec<T> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    Ok(s)
}

/// Schatten p-norm; pass `f64::INFINITY` for the operator norm.
pub fn schatten_norm<T: Real>(x: &CMatrix<T>, p: f64) -> Result<T> {
    if p.is_nan() || p < 1.0 {
        return Err(invalid(format!("Schatten exponent must be >= 1, got {p}")));
    }
    let s = singular_values(x)?;
    if p.is_infinite() {
        return Ok(s[0]);
    }
    if p == 2.0 {
        // Frobenius norm; avoids the pow round trip
        return Ok(x.norm());
    }
    let pt: T = lit(p);
    let sum = s.iter().fold(T::zero(), |acc, &v| acc + v.powf(pt));
    Ok(sum.powf(T::one() / pt))
}

/// Operator (Schatten-∞) norm.
pub fn op_norm<T: Real>(x: &CMatrix<T>) -> Result<T> {
    schatten_norm(x, f64::INFINITY)
}

/// `|x><y| -> |x> ⊗ |conj y>`, extended linearly.
pub fn vec<T: Real>(x: &CMatrix<T>) -> CVector<T> {
    let (r, c) = x.shape();
    CVector::from_iterator(r * c, (0..r).flat_map(|i| (0..c).map(move |j| x[(i, j)])))
}

/// Inverse of [`vec`].
pub fn unvec<T: Real>(v: &CVector<T>, rows: usize, cols: usize) -> Result<CMatrix<T>> {
    if v.len() != rows * cols {
        return Err(shape(format!("length {}", rows * cols), format!("length {}", v.len())));
    }
    Ok(CMatrix::from_row_slice(rows, cols, v.as_slice()))
}

pub fn kron<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    a.kronecker(b)
}

/// Eigenvalues ordered by descending modulus, ties (moduli within
/// [`SPECTRAL_TOL`]) broken by descending real part, then descending imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T: Real> {
    values: Vec<Complex<T>>,
}

impl<T: Real> Spectrum<T> {
    /// Put an arbitrary multiset of eigenvalues into canonical order.
    pub fn from_unordered(mut values: Vec<Complex<T>>) -> Self {
        values.sort_by(|a, b| {
            b.modulus()
                .partial_cmp(&a.modulus())
                .expect("finite eigenvalues")
                .then(b.re.partial_cmp(&a.re).expect("finite"))
                .then(b.im.partial_cmp(&a.im).expect("finite"))
        });
        // Resolve near-ties group by group; the group leader fixes the window so
        // the result does not depend on the input order.
        let tol: T = lit(SPECTRAL_TOL);
        let mut start = 0;
        while start < values.len() {
            let lead = values[start].modulus();
            let mut end = start + 1;
            while end < values.len() && lead - values[end].modulus() <= tol {
                end += 1;
            }
            values[start..end].sort_by(|a, b| {
                b.re.partial_cmp(&a.re)
                    .expect("finite")
                    .then(b.im.partial_cmp(&a.im).expect("finite"))
            });
            start = end;
        }
        Spectrum { values }
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    pub fn moduli(&self) -> Vec<T> {
        self.values.iter().map(|z| z.modulus()).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Modulus of the `i`-th eigenvalue (1-based, as in `λ_i`); zero past the end.
    pub fn modulus(&self, i: usize) -> T {
        assert!(i >= 1, "eigenvalue index is 1-based");
        self.values.get(i - 1).map_or(T::zero(), |z| z.modulus())
    }
}

pub fn spectrum_by_modulus<T: Real>(x: &CMatrix<T>) -> Result<Spectrum<T>> {
    if !x.is_square() {
        return Err(shape("square matrix", format!("{}x{}", x.nrows(), x.ncols())));
    }
    ensure_finite(x)?;
    // QR sweeps can stall at machine epsilon on exactly degenerate spectra;
    // relax deflation before giving up
    let schur = [1.0, 1e2, 1e4]
        .iter()
        .find_map(|&f| Schur::try_new(x.clone(), T::default_epsilon() * lit(f), MAX_SWEEPS))
        .ok_or_else(|| KblError::NumericalFailure("Schur decomposition did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok(Spectrum::from_unordered(t.diagonal().iter().copied().collect()))
}

/// Eigen-decomposition of a Hermitian matrix: ascending real eigenvalues and
/// the matching orthonormal eigenvectors (as columns).
pub fn hermitian_eigen<T: Real>(x: &CMatrix<T>) -> Result<(Vec<T>, CMatrix<T>)> {
    if !x.is_square() {
        return Err(shape("square matrix", format!("{}x{}", x.nrows(), x.ncols())));
    }
    ensure_finite(x)?;
    let h = hermitian_part(x);
    let eig = SymmetricEigen::try_new(h, T::default_epsilon(), MAX_SWEEPS)
        .ok_or_else(|| KblError::NumericalFailure("Hermitian eigensolver did not converge".into()))?;
    let n = x.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).expect("finite"));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, col| eig.eigenvectors[(r, order[col])]);
    Ok((values, vectors))
}

/// Apply a real function to the spectrum of a Hermitian matrix.
pub fn hermitian_function<T: Real>(x: &CMatrix<T>, f: impl Fn(T) -> T) -> Result<CMatrix<T>> {
    let (values, vectors) = hermitian_eigen(x)?;
    let scaled = CMatrix::from_fn(vectors.nrows(), vectors.ncols(), |r, col| {
        vectors[(r, col)] * Complex::from(f(values[col]))
    });
    Ok(&scaled * vectors.adjoint())
}

/// `(X + X*) / 2`
pub fn hermitian_part<T: Real>(x: &CMatrix<T>) -> CMatrix<T> {
    (x + x.adjoint()).scale(lit(0.5))
}

/// Density matrix: Hermitian, unit trace, positive semidefinite (within tolerance).
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState<T: Real> {
    matrix: CMatrix<T>,
}

impl<T: Real> QuantumState<T> {
    /// Validate at the default [`STATE_TOL`].
    pub fn new(matrix: CMatrix<T>) -> Result<Self> {
        Self::with_tolerance(matrix, STATE_TOL)
    }

    pub fn with_tolerance(matrix: CMatrix<T>, tol: f64) -> Result<Self> {
        if !matrix.is_square() {
            return Err(shape("square matrix", format!("{}x{}", matrix.nrows(), matrix.ncols())));
        }
        let tol_t: T = lit(tol);
        let herm_err = max_abs_entry(&(&matrix - matrix.adjoint()));
        if herm_err > tol_t {
            return Err(invalid(format!("state is not Hermitian (residual {herm_err:?})")));
        }
        let tr = matrix.trace();
        if (tr - Complex::from(T::one())).modulus() > tol_t {
            return Err(invalid(format!("state trace {tr:?} differs from 1")));
        }
        let (values, _) = hermitian_eigen(&matrix)?;
        if values[0] < -tol_t {
            return Err(invalid(format!("state has negative eigenvalue {:?}", values[0])));
        }
        Ok(QuantumState { matrix })
    }

    pub fn maximally_mixed(d: usize) -> Self {
        QuantumState {
            matrix: identity::<T>(d).scale(T::one() / lit(d as f64)),
        }
    }

    /// `|ψ><ψ| / <ψ|ψ>`
    pub fn pure(psi: &CVector<T>) -> Result<Self> {
        let n = psi.norm();
        if n <= T::zero() || !n.is_finite() {
            return Err(invalid("pure state vector must be nonzero and finite"));
        }
        let u = psi.unscale(n);
        Ok(QuantumState {
            matrix: &u * u.adjoint(),
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.matrix
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Result<Vec<T>> {
        Ok(hermitian_eigen(&self.matrix)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    type C = Complex<f64>;

    fn real_diag(v: &[f64]) -> CMatrix<f64> {
        diag(&v.iter().map(|&x| C::new(x, 0.0)).collect::<Vec<_>>())
    }

    #[test]
    fn schatten_of_diagonal() {
        let x = real_diag(&[3.0, 4.0]);
        assert_abs_diff_eq!(schatten_norm(&x, 1.0).unwrap(), 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(schatten_norm(&x, 2.0).unwrap(), 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(schatten_norm(&x, 3.0).unwrap(), 91f64.powf(1.0 / 3.0), epsilon = 1e-12);
        assert_abs_diff_eq!(op_norm(&x).unwrap(), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn schatten_of_rank_one_projection() {
        let v = CVector::from_vec(vec![C::new(0.6, 0.0), C::new(0.0, 0.8)]);
        let p = &v * v.adjoint();
        for q in [1.0, 1.5, 2.0, 7.0, f64::INFINITY] {
            assert_abs_diff_eq!(schatten_norm(&p, q).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn schatten_rejects_bad_input() {
        let x = real_diag(&[1.0]);
        assert!(matches!(schatten_norm(&x, 0.5), Err(KblError::InvalidArgument(_))));
        assert!(matches!(schatten_norm(&x, f64::NAN), Err(KblError::InvalidArgument(_))));
        let empty = CMatrix::<f64>::zeros(0, 0);
        assert!(schatten_norm(&empty, 1.0).is_err());
        let mut bad = real_diag(&[1.0, 2.0]);
        bad[(0, 1)] = C::new(f64::NAN, 0.0);
        assert!(singular_values(&bad).is_err());
    }

    #[test]
    fn vec_basis_conventions() {
        let mut e01 = CMatrix::<f64>::zeros(2, 2);
        e01[(0, 1)] = C::new(1.0, 0.0);
        let v = vec(&e01);
        assert_eq!(v.len(), 4);
        assert_eq!(v[1], C::new(1.0, 0.0));
        assert_eq!(v.iter().filter(|z| z.norm() > 0.0).count(), 1);

        let id = vec(&identity::<f64>(2));
        assert_eq!(id.as_slice(), &[C::new(1.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(1.0, 0.0)]);

        // coefficient i on |0><1| stays i (only the basis label is conjugated)
        let mut xi = CMatrix::<f64>::zeros(2, 2);
        xi[(0, 1)] = C::new(0.0, 1.0);
        assert_eq!(vec(&xi)[1], C::new(0.0, 1.0));
    }

    #[test]
    fn unvec_inverts_vec() {
        let v = CVector::from_vec(vec![C::new(1.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(1.0, 0.0)]);
        assert_eq!(unvec(&v, 2, 2).unwrap(), identity::<f64>(2));

        let mut e1 = CVector::<f64>::zeros(4);
        e1[1] = C::new(1.0, 0.0);
        let m = unvec(&e1, 2, 2).unwrap();
        assert_eq!(m[(0, 1)], C::new(1.0, 0.0));
        assert_eq!(m.iter().filter(|z| z.norm() > 0.0).count(), 1);

        let x = CMatrix::<f64>::from_fn(3, 2, |i, j| C::new(i as f64 - 0.5, j as f64 * 1.25 + 0.1));
        assert_eq!(unvec(&vec(&x), 3, 2).unwrap(), x);
        assert!(matches!(unvec(&vec(&x), 2, 2), Err(KblError::ShapeMismatch { .. })));
    }

    #[test]
    fn kron_small_cases() {
        assert_eq!(kron(&identity::<f64>(2), &identity::<f64>(2)), identity::<f64>(4));
        assert_eq!(kron(&real_diag(&[1.0, 2.0]), &real_diag(&[3.0, 4.0])), real_diag(&[3.0, 4.0, 6.0, 8.0]));
        let a = CMatrix::<f64>::from_fn(2, 3, |i, j| C::new(i as f64, j as f64));
        let b = CMatrix::<f64>::from_fn(3, 1, |i, _| C::new(1.0, i as f64));
        assert_eq!(kron(&a, &b).shape(), (6, 3));
    }

    #[test]
    fn spectrum_orders_by_modulus() {
        let x = diag(&[C::new(1.0, 0.0), C::new(-2.0, 0.0), C::new(0.0, 0.5)]);
        let s = spectrum_by_modulus(&x).unwrap();
        let want = [C::new(-2.0, 0.0), C::new(1.0, 0.0), C::new(0.0, 0.5)];
        for (got, w) in s.values().iter().zip(want) {
            assert_abs_diff_eq!((got - w).norm(), 0.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(s.modulus(1), 2.0, epsilon = 1e-12);
        assert_eq!(s.modulus(4), 0.0);
    }

    #[test]
    fn spectrum_of_projection_and_companion() {
        let v = CVector::from_vec(vec![C::new(1.0, 0.0), C::new(1.0, 0.0), C::new(1.0, 0.0)]).unscale(3f64.sqrt());
        let s = spectrum_by_modulus(&(&v * v.adjoint())).unwrap();
        assert_abs_diff_eq!(s.values()[0].re, 1.0, epsilon = 1e-12);
        assert!(s.values()[1].norm() < 1e-12 && s.values()[2].norm() < 1e-12);

        // companion matrix of z^2 - 1
        let comp = CMatrix::from_row_slice(2, 2, &[C::new(0.0, 0.0), C::new(1.0, 0.0), C::new(1.0, 0.0), C::new(0.0, 0.0)]);
        let s = spectrum_by_modulus(&comp).unwrap();
        assert_abs_diff_eq!(s.values()[0].re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.values()[1].re, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn tie_break_is_input_order_independent() {
        let a = vec![C::new(0.0, 1.0), C::new(-1.0, 0.0), C::new(1.0, 0.0), C::new(0.0, -1.0), C::new(0.5, 0.0)];
        let mut b = a.clone();
        b.reverse();
        let sa = Spectrum::from_unordered(a);
        let sb = Spectrum::from_unordered(b);
        assert_eq!(sa, sb);
        assert_eq!(sa.values()[0], C::new(1.0, 0.0));
        assert_eq!(sa.values()[1], C::new(0.0, 1.0));
        assert_eq!(sa.values()[2], C::new(0.0, -1.0));
        assert_eq!(sa.values()[3], C::new(-1.0, 0.0));
    }

    #[test]
    fn singular_values_descending() {
        let s = singular_values(&real_diag(&[3.0, -4.0])).unwrap();
        assert_abs_diff_eq!(s[0], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn quantum_state_validation() {
        let rho = QuantumState::<f64>::maximally_mixed(3);
        assert_abs_diff_eq!(rho.matrix().trace().re, 1.0, epsilon = 1e-15);
        assert!(QuantumState::new(real_diag(&[0.5, 0.6])).is_err());
        assert!(QuantumState::new(real_diag(&[1.5, -0.5])).is_err());
        let mut nh = real_diag(&[0.5, 0.5]);
        nh[(0, 1)] = C::new(0.1, 0.0);
        assert!(QuantumState::new(nh).is_err());
        assert!(QuantumState::new(real_diag(&[0.25, 0.75])).is_ok());
    }

    #[test]
    fn hermitian_function_square_root() {
        let a = CMatrix::from_row_slice(2, 2, &[C::new(2.0, 0.0), C::new(0.0, 1.0), C::new(0.0, -1.0), C::new(2.0, 0.0)]);
        let r = hermitian_function(&a, |x| x.sqrt()).unwrap();
        assert!(max_abs_entry(&(&r * &r - &a)) < 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let x: CMatrix<f32> = diag(&[Complex::new(3.0f32, 0.0), Complex::new(4.0, 0.0)]);
        assert!((schatten_norm(&x, 1.0).unwrap() - 7.0).abs() < 1e-5);
        let s = spectrum_by_modulus(&x).unwrap();
        assert!((s.modulus(1) - 4.0).abs() < 1e-5);
    }
}
