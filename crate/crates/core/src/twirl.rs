//! Twirling channels `Ω(X) = E_U[U^{⊗γ} X (U^{⊗γ})*]`.
//!
//! For `γ = (1,…,1)` the natural representation is the orthogonal projection
//! onto `span{vec(P_τ) : τ ∈ S_t}` and is assembled exactly from the
//! Weingarten matrix (Moore–Penrose inverse of the permutation Gram matrix).
//! Other signatures are estimated by Monte Carlo over Haar unitaries.

use itertools::Itertools;
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{MatrixJson, SuperOpMatrix};
use crate::ensembles::{haar_from_rng, GammaSignature, SeededDraw, Stream};
use crate::error::{invalid, KblError, Result};
use crate::matcore::{self, CMatrix, CVector};
use crate::scalar::{lit, to_f64, Real};

/// Largest `t` for which `S_t` is enumerated.
pub const MAX_ENUM_T: usize = 6;
/// Largest natural-representation side `d^{2t}` assembled densely.
pub const MAX_SUPEROP_DIM: usize = 4096;
/// Relative eigenvalue cutoff for Gram-matrix rank and pseudo-inverse.
pub const RANK_TOL: f64 = 1e-8;
/// Number of sample blocks in [`mc_twirl`]; fixed so results are reproducible.
pub const MC_BLOCKS: usize = 32;

/// Bijection on `{0, …, t-1}` in one-line notation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; images.len()];
        for &i in &images {
            if i >= images.len() || std::mem::replace(&mut seen[i], true) {
                return Err(invalid(format!("{images:?} is not a permutation")));
            }
        }
        Ok(Permutation { images })
    }

    pub fn identity(t: usize) -> Self {
        Permutation {
            images: (0..t).collect(),
        }
    }

    /// All of `S_t` in lexicographic one-line order.
    pub fn all(t: usize) -> Vec<Permutation> {
        (0..t)
            .permutations(t)
            .map(|images| Permutation { images })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.images.len()];
        for (i, &j) in self.images.iter().enumerate() {
            inv[j] = i;
        }
        Permutation { images: inv }
    }

    /// `(self ∘ other)(i) = self(other(i))`
    pub fn compose(&self, other: &Permutation) -> Permutation {
        assert_eq!(self.len(), other.len(), "permutations of different degree");
        Permutation {
            images: other.images.iter().map(|&i| self.images[i]).collect(),
        }
    }

    pub fn cycle_count(&self) -> usize {
        let mut seen = vec![false; self.images.len()];
        let mut cycles = 0;
        for start in 0..self.images.len() {
            if seen[start] {
                continue;
            }
            cycles += 1;
            let mut i = start;
            while !seen[i] {
                seen[i] = true;
                i = self.images[i];
            }
        }
        cycles
    }

    /// Cycle lengths, sorted descending.
    pub fn cycle_type(&self) -> Vec<usize> {
        let mut seen = vec![false; self.images.len()];
        let mut lens = Vec::new();
        for start in 0..self.images.len() {
            let mut len = 0;
            let mut i = start;
            while !seen[i] {
                seen[i] = true;
                i = self.images[i];
                len += 1;
            }
            if len > 0 {
                lens.push(len);
            }
        }
        lens.sort_unstable_by(|a, b| b.cmp(a));
        lens
    }
}

fn tuple_digits(mut index: usize, d: usize, t: usize) -> Vec<usize> {
    let mut digits = vec![0; t];
    for slot in digits.iter_mut().rev() {
        *slot = index % d;
        index /= d;
    }
    digits
}

fn tuple_index(digits: impl Iterator<Item = usize>, d: usize) -> usize {
    digits.fold(0, |acc, x| acc * d + x)
}

/// For each input basis index, the output index of `P_α`:
/// `|v_1 … v_t> -> |v_{α(1)} … v_{α(t)}>`.
fn permutation_targets(perm: &Permutation, d: usize) -> Vec<usize> {
    let t = perm.len();
    (0..d.pow(t as u32))
        .map(|input| {
            let digits = tuple_digits(input, d, t);
            tuple_index(perm.images.iter().map(|&a| digits[a]), d)
        })
        .collect()
}

/// The `d^t x d^t` permutation matrix `P_α` acting on tensor factors.
pub fn permutation_operator<T: Real>(perm: &Permutation, d: usize) -> CMatrix<T> {
    let n = d.pow(perm.len() as u32);
    let mut p = CMatrix::zeros(n, n);
    for (input, out) in permutation_targets(perm, d).into_iter().enumerate() {
        p[(out, input)] = Complex::from(T::one());
    }
    p
}

fn check_enum(t: usize, d: usize) -> Result<()> {
    if t == 0 {
        return Err(invalid("t must be >= 1"));
    }
    if t > MAX_ENUM_T {
        return Err(invalid(format!("t = {t} exceeds the enumeration bound {MAX_ENUM_T}")));
    }
    if d < 2 {
        return Err(invalid(format!("d must be >= 2, got {d}")));
    }
    Ok(())
}

/// `G[α][β] = d^{c(α⁻¹β)}` over `S_t` in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub t: usize,
    pub d: usize,
    pub perms: Vec<Permutation>,
    pub entries: DMatrix<f64>,
}

pub fn gram_matrix(t: usize, d: usize) -> Result<GramMatrix> {
    check_enum(t, d)?;
    let perms = Permutation::all(t);
    let n = perms.len();
    let inverses: Vec<_> = perms.iter().map(Permutation::inverse).collect();
    let entries = DMatrix::from_fn(n, n, |a, b| {
        (d as f64).powi(inverses[a].compose(&perms[b]).cycle_count() as i32)
    });
    Ok(GramMatrix { t, d, perms, entries })
}

impl GramMatrix {
    fn eigen(&self) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
        SymmetricEigen::try_new(self.entries.clone(), f64::EPSILON, 10_000)
            .ok_or_else(|| KblError::NumericalFailure("Gram eigensolver did not converge".into()))
    }

    /// Numerical rank at relative tolerance [`RANK_TOL`].
    pub fn rank(&self) -> Result<usize> {
        let eig = self.eigen()?;
        let cutoff = RANK_TOL * eig.eigenvalues.amax();
        Ok(eig.eigenvalues.iter().filter(|&&v| v > cutoff).count())
    }

    /// Moore–Penrose pseudo-inverse.
    pub fn pseudo_inverse(&self) -> Result<DMatrix<f64>> {
        let eig = self.eigen()?;
        let cutoff = RANK_TOL * eig.eigenvalues.amax();
        let inv = eig.eigenvalues.map(|v| if v > cutoff { 1.0 / v } else { 0.0 });
        let v = &eig.eigenvectors;
        Ok(v * DMatrix::from_diagonal(&inv) * v.transpose())
    }
}

/// Weingarten matrix `Wg[α][β]`: the pseudo-inverse of the Gram matrix.
/// For `d >= t` this is the inverse and `Wg[e][σ] = Wg(σ, d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeingartenMatrix {
    pub perms: Vec<Permutation>,
    pub entries: DMatrix<f64>,
}

impl WeingartenMatrix {
    /// `Wg(σ, d)` read off the row of the identity permutation.
    pub fn function(&self, sigma: &Permutation) -> f64 {
        let col = self.perms.iter().position(|p| p == sigma).expect("permutation of matching degree");
        self.entries[(0, col)]
    }
}

pub fn weingarten(t: usize, d: usize) -> Result<WeingartenMatrix> {
    let gram = gram_matrix(t, d)?;
    Ok(WeingartenMatrix {
        entries: gram.pseudo_inverse()?,
        perms: gram.perms,
    })
}

/// `rank(Ω̂^{(d,(1×t))})`, via the Gram matrix.
pub fn twirl_rank(d: usize, t: usize) -> Result<usize> {
    gram_matrix(t, d)?.rank()
}

/// Twirling channel in natural representation, with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct TwirlChannel<T: Real> {
    pub superop: SuperOpMatrix<T>,
    pub d: usize,
    pub t: usize,
    pub gamma: GammaSignature,
    /// Weingarten-exact (true) or a Monte Carlo estimate.
    pub exact: bool,
    pub rank: usize,
    /// Jackknife standard error of the operator-norm error (estimates only).
    pub standard_error: Option<f64>,
}

impl<T: Real> TwirlChannel<T> {
    pub fn matrix(&self) -> &CMatrix<T> {
        self.superop.matrix()
    }

    pub fn apply(&self, x: &CMatrix<T>) -> Result<CMatrix<T>> {
        self.superop.apply(x)
    }
}

fn check_budget(d: usize, t: usize) -> Result<usize> {
    let side = (d as u128).pow(t as u32);
    if side * side > MAX_SUPEROP_DIM as u128 {
        return Err(KblError::DimensionBudget(format!(
            "d^(2t) = {} exceeds {MAX_SUPEROP_DIM}",
            side * side
        )));
    }
    Ok(side as usize)
}

/// `Ω̂ = Σ_{α,β} Wg[β][α] vec(P_β) vec(P_α)*` for `γ = (1×t)`.
pub fn exact_twirl<T: Real>(d: usize, t: usize) -> Result<TwirlChannel<T>> {
    check_enum(t, d)?;
    let side = check_budget(d, t)?;
    let gram = gram_matrix(t, d)?;
    let wg = gram.pseudo_inverse()?;
    let rank = gram.rank()?;
    // nonzero positions of vec(P_τ): row-major index out * side + in
    let supports: Vec<Vec<usize>> = gram
        .perms
        .iter()
        .map(|p| {
            permutation_targets(p, d)
                .into_iter()
                .enumerate()
                .map(|(input, out)| out * side + input)
                .collect()
        })
        .collect();

    let n2 = side * side;
    let mut hat = CMatrix::<T>::zeros(n2, n2);
    for (b, rows) in supports.iter().enumerate() {
        for (a, cols) in supports.iter().enumerate() {
            let w = Complex::from(lit::<T>(wg[(b, a)]));
            if wg[(b, a)] == 0.0 {
                continue;
            }
            for &r in rows {
                for &col in cols {
                    hat[(r, col)] += w;
                }
            }
        }
    }
    Ok(TwirlChannel {
        superop: SuperOpMatrix::new(hat, side, side)?,
        d,
        t,
        gamma: GammaSignature::plain(t)?,
        exact: true,
        rank,
        standard_error: None,
    })
}

/// Orthogonal projection onto `span{vec(P_τ)}` built by modified
/// Gram–Schmidt, independent of the Weingarten route.
pub fn permutation_span_projector<T: Real>(d: usize, t: usize) -> Result<CMatrix<T>> {
    check_enum(t, d)?;
    let side = check_budget(d, t)?;
    let tol: T = lit(RANK_TOL);
    let mut basis: Vec<CVector<T>> = Vec::new();
    for perm in Permutation::all(t) {
        let mut v = matcore::vec(&permutation_operator::<T>(&perm, d));
        let orig = v.norm();
        for _ in 0..2 {
            for q in &basis {
                let coeff = q.dotc(&v);
                v -= q * coeff;
            }
        }
        let n = v.norm();
        if n > tol * orig {
            basis.push(v.unscale(n));
        }
    }
    let n2 = side * side;
    let mut proj = CMatrix::zeros(n2, n2);
    for q in &basis {
        proj += q * q.adjoint();
    }
    Ok(proj)
}

/// Monte Carlo estimate of `Ω̂^{(d,γ)} = E[V ⊗ conj(V)]`, `V = U^{⊗γ}`.
///
/// Samples are split into [`MC_BLOCKS`] blocks with per-block seeds and
/// summed in block order, so the estimate is identical for any thread count.
pub fn mc_twirl<T: Real>(d: usize, gamma: &GammaSignature, n_samples: usize, master_seed: u64) -> Result<TwirlChannel<T>> {
    if n_samples == 0 {
        return Err(invalid("mc_twirl needs at least one sample"));
    }
    if d < 1 {
        return Err(invalid("d must be >= 1"));
    }
    let t = gamma.t();
    let side = check_budget(d, t)?;
    let blocks = MC_BLOCKS.min(n_samples);
    let bounds: Vec<(usize, usize)> = (0..blocks)
        .map(|b| (b * n_samples / blocks, (b + 1) * n_samples / blocks))
        .collect();

    let block_sums: Vec<CMatrix<T>> = bounds
        .par_iter()
        .enumerate()
        .map(|(b, &(lo, hi))| {
            let mut acc = CMatrix::<T>::zeros(side * side, side * side);
            for s in lo..hi {
                let draw = SeededDraw::new(master_seed, b as u64, s as u64);
                let u = haar_from_rng::<T, _>(d, &mut draw.rng(Stream::Twirl));
                let v = gamma.tensor_power(&u);
                acc += matcore::kron(&v, &v.map(|z| z.conj()));
            }
            acc
        })
        .collect();

    let mut total = CMatrix::<T>::zeros(side * side, side * side);
    for s in &block_sums {
        total += s;
    }
    let n: T = lit(n_samples as f64);
    let estimate = total.unscale(n);

    let standard_error = if blocks >= 2 {
        let loo: Vec<CMatrix<T>> = block_sums
            .iter()
            .zip(&bounds)
            .map(|(s, &(lo, hi))| (&total - s).unscale(lit((n_samples - (hi - lo)) as f64)))
            .collect();
        let mut mean = CMatrix::<T>::zeros(side * side, side * side);
        for m in &loo {
            mean += m;
        }
        mean = mean.unscale(lit(blocks as f64));
        let mut ss = 0.0f64;
        for m in &loo {
            ss += to_f64(matcore::op_norm(&(m - &mean))?).powi(2);
        }
        Some(((blocks as f64 - 1.0) / blocks as f64 * ss).sqrt())
    } else {
        None
    };

    let rank = if gamma.is_plain() && t <= MAX_ENUM_T && d >= 2 {
        twirl_rank(d, t)?
    } else {
        // the limit is a projection; count singular values nearer 1 than 0
        matcore::singular_values(&estimate)?
            .iter()
            .filter(|&&s| s > lit(0.5))
            .count()
    };

    Ok(TwirlChannel {
        superop: SuperOpMatrix::new(estimate, side, side)?,
        d,
        t,
        gamma: gamma.clone(),
        exact: false,
        rank,
        standard_error,
    })
}

/// `{d, t, gamma, exact, rank, tolerance, standard_error, superop}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwirlChannelJson {
    pub d: usize,
    pub t: usize,
    pub gamma: GammaSignature,
    pub exact: bool,
    pub rank: usize,
    pub tolerance: f64,
    #[serde(default)]
    pub standard_error: Option<f64>,
    pub superop: MatrixJson,
}

impl TwirlChannel<f64> {
    pub fn to_json_doc(&self) -> TwirlChannelJson {
        TwirlChannelJson {
            d: self.d,
            t: self.t,
            gamma: self.gamma.clone(),
            exact: self.exact,
            rank: self.rank,
            tolerance: RANK_TOL,
            standard_error: self.standard_error,
            superop: MatrixJson::from_matrix(self.matrix()),
        }
    }

    pub fn from_json_doc(doc: TwirlChannelJson) -> Result<Self> {
        let side = doc.d.pow(doc.t as u32);
        Ok(TwirlChannel {
            superop: SuperOpMatrix::new(doc.superop.to_matrix()?, side, side)?,
            d: doc.d,
            t: doc.t,
            gamma: doc.gamma,
            exact: doc.exact,
            rank: doc.rank,
            standard_error: doc.standard_error,
        })
    }
}
