//! Weighted Kraus-form super-operators `X -> Σ w_i A_i X A_i*`, their natural
//! representation `Σ w_i A_i ⊗ conj(A_i)`, channel predicates and the
//! rectification `B_i = A_i A^{-1/2}` with `A = (1/k) Σ A_i* A_i`.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, KblError, Result};
use crate::matcore::{self, CMatrix, CVector};
use crate::scalar::{lit, to_f64, Real};

/// Eigenvalue floor below which the averaged Gram operator counts as singular.
pub const DEFAULT_INVERT_TOL: f64 = 1e-8;

/// Completely positive map in weighted Kraus form. Weights are nonnegative but
/// need not sum to one, so non-trace-preserving super-operators share the type.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel<T: Real> {
    ops: Vec<CMatrix<T>>,
    weights: Vec<T>,
}

impl<T: Real> KrausChannel<T> {
    pub fn new(ops: Vec<CMatrix<T>>, weights: Vec<T>) -> Result<Self> {
        let first = ops.first().ok_or_else(|| invalid("Kraus channel needs at least one operator"))?;
        let dims = first.shape();
        if dims.0 == 0 || dims.1 == 0 {
            return Err(invalid("Kraus operators must be nonempty"));
        }
        if let Some(bad) = ops.iter().find(|a| a.shape() != dims) {
            return Err(shape(
                format!("{}x{}", dims.0, dims.1),
                format!("{}x{}", bad.nrows(), bad.ncols()),
            ));
        }
        if weights.len() != ops.len() {
            return Err(shape(format!("{} weights", ops.len()), format!("{} weights", weights.len())));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(invalid("weights must be finite and nonnegative"));
        }
        if ops.iter().any(|a| !matcore::is_finite(a)) {
            return Err(invalid("Kraus operators must be finite"));
        }
        Ok(KrausChannel { ops, weights })
    }

    /// Equal weights `1/k`.
    pub fn uniform(ops: Vec<CMatrix<T>>) -> Result<Self> {
        let w = T::one() / lit(ops.len().max(1) as f64);
        let weights = vec![w; ops.len()];
        Self::new(ops, weights)
    }

    pub fn identity(d: usize) -> Self {
        KrausChannel {
            ops: vec![matcore::identity(d)],
            weights: vec![T::one()],
        }
    }

    pub fn ops(&self) -> &[CMatrix<T>] {
        &self.ops
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weight_sum(&self) -> T {
        self.weights.iter().fold(T::zero(), |a, &w| a + w)
    }

    /// Number of Kraus operators.
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Output dimension `m` (operators are `m x n`).
    pub fn output_dim(&self) -> usize {
        self.ops[0].nrows()
    }

    /// Input dimension `n`.
    pub fn input_dim(&self) -> usize {
        self.ops[0].ncols()
    }

    pub fn apply(&self, x: &CMatrix<T>) -> Result<CMatrix<T>> {
        let n = self.input_dim();
        if x.shape() != (n, n) {
            return Err(shape(format!("{n}x{n}"), format!("{}x{}", x.nrows(), x.ncols())));
        }
        let m = self.output_dim();
        let mut out = CMatrix::zeros(m, m);
        for (a, &w) in self.ops.iter().zip(&self.weights) {
            out += (a * x * a.adjoint()).scale(w);
        }
        Ok(out)
    }

    /// Hilbert–Schmidt adjoint `Y -> Σ w_i A_i* Y A_i`.
    pub fn apply_adjoint(&self, y: &CMatrix<T>) -> Result<CMatrix<T>> {
        let m = self.output_dim();
        if y.shape() != (m, m) {
            return Err(shape(format!("{m}x{m}"), format!("{}x{}", y.nrows(), y.ncols())));
        }
        let n = self.input_dim();
        let mut out = CMatrix::zeros(n, n);
        for (a, &w) in self.ops.iter().zip(&self.weights) {
            out += (a.adjoint() * y * a).scale(w);
        }
        Ok(out)
    }

    pub fn natural_rep(&self) -> SuperOpMatrix<T> {
        let (m, n) = (self.output_dim(), self.input_dim());
        let mut hat = CMatrix::zeros(m * m, n * n);
        for (a, &w) in self.ops.iter().zip(&self.weights) {
            let abar = a.map(|z| z.conj());
            hat += matcore::kron(a, &abar).scale(w);
        }
        SuperOpMatrix { matrix: hat, out_dim: m, in_dim: n }
    }

    /// `‖Σ w_i A_i* A_i − I_n‖_∞`
    pub fn is_trace_preserving(&self, tol: f64) -> Result<Predicate> {
        let n = self.input_dim();
        let mut sum = CMatrix::zeros(n, n);
        for (a, &w) in self.ops.iter().zip(&self.weights) {
            sum += (a.adjoint() * a).scale(w);
        }
        Predicate::from_residual(&(sum - matcore::identity::<T>(n)), tol)
    }

    /// `‖Σ w_i A_i A_i* − I_m‖_∞`
    pub fn is_unital(&self, tol: f64) -> Result<Predicate> {
        let m = self.output_dim();
        let mut sum = CMatrix::zeros(m, m);
        for (a, &w) in self.ops.iter().zip(&self.weights) {
            sum += (a * a.adjoint()).scale(w);
        }
        Predicate::from_residual(&(sum - matcore::identity::<T>(m)), tol)
    }
}

/// Outcome of a channel predicate with its operator-norm residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Predicate {
    pub holds: bool,
    pub residual: f64,
}

impl Predicate {
    fn from_residual<T: Real>(diff: &CMatrix<T>, tol: f64) -> Result<Self> {
        let residual = to_f64(matcore::op_norm(diff)?);
        Ok(Predicate {
            holds: residual <= tol,
            residual,
        })
    }
}

/// Natural representation `Φ̂` of a super-operator `M(n) -> M(m)`: an
/// `m² x n²` matrix with `vec(Φ(X)) = Φ̂ vec(X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperOpMatrix<T: Real> {
    matrix: CMatrix<T>,
    out_dim: usize,
    in_dim: usize,
}

impl<T: Real> SuperOpMatrix<T> {
    pub fn new(matrix: CMatrix<T>, out_dim: usize, in_dim: usize) -> Result<Self> {
        if matrix.shape() != (out_dim * out_dim, in_dim * in_dim) {
            return Err(shape(
                format!("{}x{}", out_dim * out_dim, in_dim * in_dim),
                format!("{}x{}", matrix.nrows(), matrix.ncols()),
            ));
        }
        Ok(SuperOpMatrix { matrix, out_dim, in_dim })
    }

    pub fn identity(d: usize) -> Self {
        SuperOpMatrix {
            matrix: matcore::identity(d * d),
            out_dim: d,
            in_dim: d,
        }
    }

    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        SuperOpMatrix {
            matrix: CMatrix::zeros(out_dim * out_dim, in_dim * in_dim),
            out_dim,
            in_dim,
        }
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.matrix
    }

    /// `(m, n)` for a map `M(n) -> M(m)`.
    pub fn source_dims(&self) -> (usize, usize) {
        (self.out_dim, self.in_dim)
    }

    pub fn apply(&self, x: &CMatrix<T>) -> Result<CMatrix<T>> {
        let n = self.in_dim;
        if x.shape() != (n, n) {
            return Err(shape(format!("{n}x{n}"), format!("{}x{}", x.nrows(), x.ncols())));
        }
        let v: CVector<T> = &self.matrix * matcore::vec(x);
        matcore::unvec(&v, self.out_dim, self.out_dim)
    }

    pub fn sub(&self, other: &SuperOpMatrix<T>) -> Result<SuperOpMatrix<T>> {
        if self.source_dims() != other.source_dims() {
            return Err(shape(
                format!("{:?}", self.source_dims()),
                format!("{:?}", other.source_dims()),
            ));
        }
        Ok(SuperOpMatrix {
            matrix: &self.matrix - &other.matrix,
            out_dim: self.out_dim,
            in_dim: self.in_dim,
        })
    }
}

/// `‖Θ‖_{2→2}`, computed as the largest singular value of `Θ̂`.
pub fn two_two_norm<T: Real>(theta: &SuperOpMatrix<T>) -> Result<T> {
    matcore::op_norm(theta.matrix())
}

/// Turn `{A_i}` into the trace-preserving channel with Kraus operators
/// `B_i = A_i A^{-1/2}` (weights `1/k`), where `A = (1/k) Σ A_i* A_i`.
///
/// Fails with [`KblError::NotRectifiable`] when the smallest eigenvalue of `A`
/// is at or below `tol_invert`.
pub fn rectify<T: Real>(ops: &[CMatrix<T>], tol_invert: f64) -> Result<KrausChannel<T>> {
    let first = ops.first().ok_or_else(|| invalid("rectify needs at least one operator"))?;
    let d = first.nrows();
    if !first.is_square() {
        return Err(shape("square operators", format!("{}x{}", d, first.ncols())));
    }
    if let Some(bad) = ops.iter().find(|a| a.shape() != (d, d)) {
        return Err(shape(format!("{d}x{d}"), format!("{}x{}", bad.nrows(), bad.ncols())));
    }
    let inv_k = T::one() / lit(ops.len() as f64);
    let mut avg = CMatrix::zeros(d, d);
    for a in ops {
        avg += a.adjoint() * a;
    }
    avg = avg.scale(inv_k);

    let (values, vectors) = matcore::hermitian_eigen(&avg)?;
    let min_eig = values[0];
    if min_eig <= lit(tol_invert) {
        return Err(KblError::NotRectifiable {
            min_eigenvalue: to_f64(min_eig),
        });
    }
    let scaled = CMatrix::from_fn(d, d, |r, col| {
        vectors[(r, col)] * Complex::from(T::one() / values[col].sqrt())
    });
    let inv_sqrt = &scaled * vectors.adjoint();
    let rectified = ops.iter().map(|a| a * &inv_sqrt).collect();
    KrausChannel::uniform(rectified)
}

/// Flat row-major `[re, im]` payload shared by the JSON formats.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl MatrixJson {
    pub fn from_matrix(m: &CMatrix<f64>) -> Self {
        MatrixJson {
            rows: m.nrows(),
            cols: m.ncols(),
            data: entries_row_major(m),
        }
    }

    pub fn to_matrix(&self) -> Result<CMatrix<f64>> {
        matrix_from_entries(&self.data, self.rows, self.cols)
    }
}

fn entries_row_major(m: &CMatrix<f64>) -> Vec<[f64; 2]> {
    matcore::vec(m).iter().map(|z| [z.re, z.im]).collect()
}

fn matrix_from_entries(data: &[[f64; 2]], rows: usize, cols: usize) -> Result<CMatrix<f64>> {
    if data.len() != rows * cols {
        return Err(shape(format!("{} entries", rows * cols), format!("{} entries", data.len())));
    }
    let v = CVector::from_iterator(data.len(), data.iter().map(|&[re, im]| Complex::new(re, im)));
    matcore::unvec(&v, rows, cols)
}

/// `{"m":…, "n":…, "weights":[…], "ops":[[[re,im], …], …]}`, ops row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrausChannelJson {
    pub m: usize,
    pub n: usize,
    pub weights: Vec<f64>,
    pub ops: Vec<Vec<[f64; 2]>>,
}

impl From<&KrausChannel<f64>> for KrausChannelJson {
    fn from(ch: &KrausChannel<f64>) -> Self {
        KrausChannelJson {
            m: ch.output_dim(),
            n: ch.input_dim(),
            weights: ch.weights().to_vec(),
            ops: ch.ops().iter().map(entries_row_major).collect(),
        }
    }
}

impl TryFrom<KrausChannelJson> for KrausChannel<f64> {
    type Error = KblError;

    fn try_from(doc: KrausChannelJson) -> Result<Self> {
        let ops = doc
            .ops
            .iter()
            .map(|op| matrix_from_entries(op, doc.m, doc.n))
            .collect::<Result<Vec<_>>>()?;
        KrausChannel::new(ops, doc.weights)
    }
}

impl KrausChannel<f64> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&KrausChannelJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: KrausChannelJson = serde_json::from_str(text)?;
        doc.try_into()
    }
}
