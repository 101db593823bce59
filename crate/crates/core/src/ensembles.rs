//! Random Kraus operator sources.
//!
//! Every operator is a pure function of `(master_seed, trial_index, op_index)`:
//! the triple (plus a stream tag) is packed into a ChaCha8 key, so trials can
//! be evaluated in any order on any number of threads.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::ComplexField;
use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, KblError, Result};
use crate::matcore::{self, CMatrix, CVector};
use crate::scalar::{lit, to_f64, Real};

/// Per-factor decoration of `U^{⊗γ}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decoration {
    /// `U`
    Plain,
    /// `U*`
    Adjoint,
    /// `conj(U)`
    Conjugate,
    /// `U^T`
    Transpose,
}

impl Decoration {
    pub fn symbol(self) -> &'static str {
        match self {
            Decoration::Plain => "1",
            Decoration::Adjoint => "*",
            Decoration::Conjugate => "-",
            Decoration::Transpose => "T",
        }
    }

    pub fn apply<T: Real>(self, u: &CMatrix<T>) -> CMatrix<T> {
        match self {
            Decoration::Plain => u.clone(),
            Decoration::Adjoint => u.adjoint(),
            Decoration::Conjugate => u.map(|z| z.conj()),
            Decoration::Transpose => u.transpose(),
        }
    }
}

impl FromStr for Decoration {
    type Err = KblError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(Decoration::Plain),
            "*" => Ok(Decoration::Adjoint),
            "-" => Ok(Decoration::Conjugate),
            "T" => Ok(Decoration::Transpose),
            other => Err(invalid(format!("unknown decoration `{other}` (expected 1, *, - or T)"))),
        }
    }
}

/// A length-`t` tuple of decorations, serialized as e.g. `["1","-"]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct GammaSignature(Vec<Decoration>);

impl GammaSignature {
    pub fn new(decorations: Vec<Decoration>) -> Result<Self> {
        if decorations.is_empty() {
            return Err(invalid("gamma signature needs t >= 1"));
        }
        Ok(GammaSignature(decorations))
    }

    /// `(1, …, 1)` of length `t`.
    pub fn plain(t: usize) -> Result<Self> {
        Self::new(vec![Decoration::Plain; t])
    }

    pub fn t(&self) -> usize {
        self.0.len()
    }

    pub fn decorations(&self) -> &[Decoration] {
        &self.0
    }

    pub fn is_plain(&self) -> bool {
        self.0.iter().all(|&g| g == Decoration::Plain)
    }

    /// `U^{⊗γ}`: decorate each factor, then take the Kronecker product.
    pub fn tensor_power<T: Real>(&self, u: &CMatrix<T>) -> CMatrix<T> {
        let mut iter = self.0.iter();
        let first = iter.next().expect("nonempty signature").apply(u);
        iter.fold(first, |acc, g| matcore::kron(&acc, &g.apply(u)))
    }
}

impl fmt::Display for GammaSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<_> = self.0.iter().map(|g| g.symbol()).collect();
        write!(f, "({})", parts.join(","))
    }
}

impl TryFrom<Vec<String>> for GammaSignature {
    type Error = KblError;

    fn try_from(v: Vec<String>) -> Result<Self> {
        let decorations = v.iter().map(|s| s.parse()).collect::<Result<Vec<_>>>()?;
        GammaSignature::new(decorations)
    }
}

impl From<GammaSignature> for Vec<String> {
    fn from(g: GammaSignature) -> Self {
        g.0.iter().map(|d| d.symbol().to_string()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnsembleKind {
    HaarUnitary,
    TensorPowerUnitary(GammaSignature),
    /// `(U + U*) / √2` with Haar `U`.
    HermitizedUnitary,
    /// Looked up by tag in a [`SamplerRegistry`].
    Custom(String),
}

/// Declarative description of a random Kraus family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnsembleSpecJson", into = "EnsembleSpecJson")]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    /// Local dimension.
    pub d: usize,
    /// Number of Kraus operators.
    pub k: usize,
    /// Operator-norm certificate; fixed for the built-in kinds.
    pub l_bound: Option<f64>,
}

impl EnsembleSpec {
    pub fn new(kind: EnsembleKind, d: usize, k: usize) -> Result<Self> {
        let l_bound = match kind {
            EnsembleKind::HaarUnitary | EnsembleKind::TensorPowerUnitary(_) => Some(1.0),
            EnsembleKind::HermitizedUnitary => Some(std::f64::consts::SQRT_2),
            EnsembleKind::Custom(_) => None,
        };
        let spec = EnsembleSpec { kind, d, k, l_bound };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_l_bound(mut self, l: f64) -> Result<Self> {
        self.l_bound = Some(l);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(invalid(format!("ensemble dimension d must be >= 2, got {}", self.d)));
        }
        if self.k < 1 {
            return Err(invalid("ensemble needs k >= 1"));
        }
        if let Some(l) = self.l_bound {
            if !(l.is_finite() && l > 0.0) {
                return Err(invalid(format!("L must be positive, got {l}")));
            }
        }
        let expect = match self.kind {
            EnsembleKind::HaarUnitary | EnsembleKind::TensorPowerUnitary(_) => Some(1.0),
            EnsembleKind::HermitizedUnitary => Some(std::f64::consts::SQRT_2),
            EnsembleKind::Custom(_) => None,
        };
        if let (Some(want), Some(l)) = (expect, self.l_bound) {
            if (want - l).abs() > 1e-12 {
                return Err(invalid(format!("L for this ensemble kind must be {want}, got {l}")));
            }
        }
        Ok(())
    }

    /// Tensor power `t` (1 unless the kind is a tensor power).
    pub fn t(&self) -> usize {
        match &self.kind {
            EnsembleKind::TensorPowerUnitary(g) => g.t(),
            _ => 1,
        }
    }

    /// Side length of each sampled operator.
    pub fn op_dim(&self) -> usize {
        self.d.pow(self.t() as u32)
    }

    pub fn gamma(&self) -> Option<&GammaSignature> {
        match &self.kind {
            EnsembleKind::TensorPowerUnitary(g) => Some(g),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleSpecJson {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<GammaSignature>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tag: Option<String>,
    d: usize,
    k: usize,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    l: Option<f64>,
}

impl TryFrom<EnsembleSpecJson> for EnsembleSpec {
    type Error = KblError;

    fn try_from(j: EnsembleSpecJson) -> Result<Self> {
        let kind = match j.kind.as_str() {
            "haar_unitary" => EnsembleKind::HaarUnitary,
            "tensor_power_unitary" => EnsembleKind::TensorPowerUnitary(
                j.gamma.clone().ok_or_else(|| invalid("tensor_power_unitary requires `gamma`"))?,
            ),
            "hermitized_unitary" => EnsembleKind::HermitizedUnitary,
            "custom" => EnsembleKind::Custom(j.tag.clone().ok_or_else(|| invalid("custom ensemble requires `tag`"))?),
            other => return Err(invalid(format!("unknown ensemble kind `{other}`"))),
        };
        if j.gamma.is_some() && !matches!(kind, EnsembleKind::TensorPowerUnitary(_)) {
            return Err(invalid("`gamma` only applies to tensor_power_unitary"));
        }
        let mut spec = EnsembleSpec::new(kind, j.d, j.k)?;
        if let Some(l) = j.l {
            spec = spec.with_l_bound(l)?;
        }
        Ok(spec)
    }
}

impl From<EnsembleSpec> for EnsembleSpecJson {
    fn from(s: EnsembleSpec) -> Self {
        let (kind, gamma, tag) = match s.kind {
            EnsembleKind::HaarUnitary => ("haar_unitary", None, None),
            EnsembleKind::TensorPowerUnitary(g) => ("tensor_power_unitary", Some(g), None),
            EnsembleKind::HermitizedUnitary => ("hermitized_unitary", None, None),
            EnsembleKind::Custom(tag) => ("custom", None, Some(tag)),
        };
        EnsembleSpecJson {
            kind: kind.to_string(),
            gamma,
            tag,
            d: s.d,
            k: s.k,
            l: s.l_bound,
        }
    }
}

/// Independent random streams drawn from one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    KrausOp = 0,
    Weight = 1,
    TestState = 2,
    Twirl = 3,
}

/// Coordinates of one random draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeededDraw {
    pub master_seed: u64,
    pub trial_index: u64,
    pub op_index: u64,
}

impl SeededDraw {
    pub fn new(master_seed: u64, trial_index: u64, op_index: u64) -> Self {
        SeededDraw {
            master_seed,
            trial_index,
            op_index,
        }
    }

    pub fn rng(&self, stream: Stream) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.trial_index.to_le_bytes());
        key[16..24].copy_from_slice(&self.op_index.to_le_bytes());
        key[24..].copy_from_slice(&(stream as u64).to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }
}

/// `d x d` matrix of i.i.d. standard complex Gaussians (`E|z|² = 1`).
pub fn sample_ginibre<T: Real, R: rand::Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix<T> {
    let half: T = lit(std::f64::consts::FRAC_1_SQRT_2);
    // row-major fill so the stream layout does not depend on storage order
    let entries: Vec<Complex<T>> = (0..d * d)
        .map(|_| Complex::new(T::standard_normal(rng) * half, T::standard_normal(rng) * half))
        .collect();
    CMatrix::from_row_slice(d, d, &entries)
}

/// Haar-distributed unitary: QR of a Ginibre matrix, with the phases of
/// `diag(R)` moved into `Q` so the result is exactly invariant.
pub fn sample_haar_unitary<T: Real>(d: usize, draw: &SeededDraw) -> CMatrix<T> {
    let mut rng = draw.rng(Stream::KrausOp);
    haar_from_rng(d, &mut rng)
}

pub(crate) fn haar_from_rng<T: Real, R: rand::Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix<T> {
    let g = sample_ginibre::<T, _>(d, rng);
    let (q, r) = g.qr().unpack();
    let mut u = q;
    for j in 0..d {
        let rjj = r[(j, j)];
        let n = rjj.modulus();
        let phase = if n > T::zero() { rjj / Complex::from(n) } else { Complex::from(T::one()) };
        for e in u.column_mut(j).iter_mut() {
            *e *= phase;
        }
    }
    u
}

/// Haar-random unit vector in `C^d`.
pub fn sample_pure_state<T: Real>(d: usize, draw: &SeededDraw) -> CVector<T> {
    let mut rng = draw.rng(Stream::TestState);
    let v = CVector::from_iterator(d, (0..d).map(|_| Complex::new(T::standard_normal(&mut rng), T::standard_normal(&mut rng))));
    let n = v.norm();
    v.unscale(n)
}

/// User-supplied Kraus operator distribution.
pub trait KrausSampler<T: Real>: Send + Sync {
    /// One operator on `C^d` for the given draw coordinates.
    fn sample(&self, d: usize, draw: &SeededDraw) -> CMatrix<T>;

    /// Operator-norm bound `L`, if known.
    fn norm_bound(&self) -> Option<f64> {
        None
    }
}

struct ConstantIdentity;

impl<T: Real> KrausSampler<T> for ConstantIdentity {
    fn sample(&self, d: usize, _draw: &SeededDraw) -> CMatrix<T> {
        matcore::identity(d)
    }

    fn norm_bound(&self) -> Option<f64> {
        Some(1.0)
    }
}

struct HaarPlugin;

impl<T: Real> KrausSampler<T> for HaarPlugin {
    fn sample(&self, d: usize, draw: &SeededDraw) -> CMatrix<T> {
        sample_haar_unitary(d, draw)
    }

    fn norm_bound(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// Tag -> sampler lookup for [`EnsembleKind::Custom`]. The default registry
/// knows `"identity"` (constant `I`) and `"haar_unitary"`.
pub struct SamplerRegistry<T: Real> {
    samplers: BTreeMap<String, Box<dyn KrausSampler<T>>>,
}

impl<T: Real> Default for SamplerRegistry<T> {
    fn default() -> Self {
        let mut r = SamplerRegistry::empty();
        r.register("identity", Box::new(ConstantIdentity));
        r.register("haar_unitary", Box::new(HaarPlugin));
        r
    }
}

impl<T: Real> SamplerRegistry<T> {
    pub fn empty() -> Self {
        SamplerRegistry {
            samplers: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, tag: impl Into<String>, sampler: Box<dyn KrausSampler<T>>) {
        self.samplers.insert(tag.into(), sampler);
    }

    pub fn get(&self, tag: &str) -> Result<&dyn KrausSampler<T>> {
        self.samplers
            .get(tag)
            .map(|b| b.as_ref())
            .ok_or_else(|| KblError::UnknownSampler(tag.to_string()))
    }
}

fn sample_one<T: Real>(spec: &EnsembleSpec, registry: &SamplerRegistry<T>, draw: &SeededDraw) -> Result<CMatrix<T>> {
    Ok(match &spec.kind {
        EnsembleKind::HaarUnitary => sample_haar_unitary(spec.d, draw),
        EnsembleKind::TensorPowerUnitary(gamma) => gamma.tensor_power(&sample_haar_unitary::<T>(spec.d, draw)),
        EnsembleKind::HermitizedUnitary => {
            let u = sample_haar_unitary::<T>(spec.d, draw);
            (&u + u.adjoint()).scale(lit(std::f64::consts::FRAC_1_SQRT_2))
        }
        EnsembleKind::Custom(tag) => registry.get(tag)?.sample(spec.d, draw),
    })
}

/// The `k` operators of trial `trial_index`, using the default registry.
pub fn sample_kraus_set<T: Real>(spec: &EnsembleSpec, master_seed: u64, trial_index: u64) -> Result<Vec<CMatrix<T>>> {
    sample_kraus_set_with(&SamplerRegistry::default(), spec, master_seed, trial_index)
}

pub fn sample_kraus_set_with<T: Real>(
    registry: &SamplerRegistry<T>,
    spec: &EnsembleSpec,
    master_seed: u64,
    trial_index: u64,
) -> Result<Vec<CMatrix<T>>> {
    spec.validate()?;
    (0..spec.k as u64)
        .map(|i| sample_one(spec, registry, &SeededDraw::new(master_seed, trial_index, i)))
        .collect()
}

/// Empirical check of `E[A_xy conj(A_zw)] = δ_xz δ_yw / D` and of the norm bound.
#[derive(Debug, Clone, Serialize)]
pub struct IsotropyReport {
    pub n_samples: usize,
    pub dim: usize,
    /// Largest `|empirical − target|` over all `(x, y, z, w)`.
    pub max_deviation: f64,
    /// Largest deviation in units of its standard error.
    pub max_sigma_multiple: f64,
    pub worst_index: [usize; 4],
    pub confidence_sigmas: f64,
    pub moments_pass: bool,
    pub max_operator_norm: f64,
    pub norm_bound: Option<f64>,
    pub norm_certified: bool,
    pub passed: bool,
}

pub fn validate_isotropy(spec: &EnsembleSpec, n_samples: usize, confidence_sigmas: f64, master_seed: u64) -> Result<IsotropyReport> {
    validate_isotropy_with(&SamplerRegistry::<f64>::default(), spec, n_samples, confidence_sigmas, master_seed)
}

pub fn validate_isotropy_with(
    registry: &SamplerRegistry<f64>,
    spec: &EnsembleSpec,
    n_samples: usize,
    confidence_sigmas: f64,
    master_seed: u64,
) -> Result<IsotropyReport> {
    if n_samples < 1000 {
        return Err(invalid(format!("isotropy audit needs at least 1000 samples, got {n_samples}")));
    }
    spec.validate()?;
    let dim = spec.op_dim();
    let n4 = dim.pow(4);
    let mut sum = vec![Complex::new(0.0f64, 0.0); n4];
    let mut sum_sq = vec![0.0f64; n4];
    let mut max_norm = 0.0f64;

    for s in 0..n_samples as u64 {
        let a = sample_one(spec, registry, &SeededDraw::new(master_seed, s, 0))?;
        max_norm = max_norm.max(matcore::op_norm(&a)?);
        let flat: Vec<Complex<f64>> = matcore::vec(&a).iter().copied().collect();
        for (p, &ap) in flat.iter().enumerate() {
            for (q, &aq) in flat.iter().enumerate() {
                let prod = ap * aq.conj();
                let idx = p * dim * dim + q;
                sum[idx] += prod;
                sum_sq[idx] += prod.norm_sqr();
            }
        }
    }

    let n = n_samples as f64;
    let mut max_dev = 0.0f64;
    let mut max_z = 0.0f64;
    let mut worst = [0usize; 4];
    for p in 0..dim * dim {
        for q in 0..dim * dim {
            let idx = p * dim * dim + q;
            let (x, y, z, w) = (p / dim, p % dim, q / dim, q % dim);
            let target = if x == z && y == w { 1.0 / dim as f64 } else { 0.0 };
            let mean = sum[idx] / n;
            let var = (sum_sq[idx] / n - mean.norm_sqr()).max(0.0) * n / (n - 1.0);
            let se = (var / n).sqrt();
            let dev = (mean - Complex::new(target, 0.0)).norm();
            let zscore = if se > 1e-15 {
                dev / se
            } else if dev > 1e-12 {
                f64::INFINITY
            } else {
                0.0
            };
            if zscore > max_z || (max_z == 0.0 && dev > max_dev) {
                worst = [x, y, z, w];
            }
            max_z = max_z.max(zscore);
            max_dev = max_dev.max(dev);
        }
    }

    let norm_bound = spec.l_bound.or_else(|| match &spec.kind {
        EnsembleKind::Custom(tag) => registry.get(tag).ok().and_then(|s| s.norm_bound()),
        _ => None,
    });
    let norm_certified = norm_bound.is_none_or(|l| max_norm <= l + 1e-10);
    let moments_pass = max_z <= confidence_sigmas;
    Ok(IsotropyReport {
        n_samples,
        dim,
        max_deviation: max_dev,
        max_sigma_multiple: max_z,
        worst_index: worst,
        confidence_sigmas,
        moments_pass,
        max_operator_norm: max_norm,
        norm_bound,
        norm_certified,
        passed: moments_pass && norm_certified,
    })
}

/// Analytic Bernstein constants for the Kraus sum of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MvConstants {
    pub m_bound: f64,
    pub v_bound: f64,
    /// `D = m² + n²` for super-operators on `M(d^t)`.
    pub dim_sum: u64,
}

pub fn ensemble_mv_constants(spec: &EnsembleSpec) -> Result<MvConstants> {
    spec.validate()?;
    let k = spec.k as f64;
    let side = (spec.op_dim() as u64).pow(2);
    let dim_sum = 2 * side;
    let (m_bound, v_bound) = match &spec.kind {
        EnsembleKind::HaarUnitary | EnsembleKind::TensorPowerUnitary(_) => (2.0 / k, 2.0 / k),
        EnsembleKind::HermitizedUnitary | EnsembleKind::Custom(_) => {
            let l = spec
                .l_bound
                .ok_or_else(|| invalid("custom ensemble needs an operator-norm bound L for M/V constants"))?;
            ((l * l + 1.0) / k, (l.powi(4) + 1.0) / k)
        }
    };
    Ok(MvConstants {
        m_bound,
        v_bound,
        dim_sum,
    })
}

/// Largest operator norm over a sampled set (for norm-certificate checks).
pub fn max_operator_norm<T: Real>(ops: &[CMatrix<T>]) -> Result<f64> {
    ops.iter().try_fold(0.0f64, |acc, a| Ok(acc.max(to_f64(matcore::op_norm(a)?))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::max_abs_entry;
    use approx::assert_abs_diff_eq;

    fn unitarity_residual(u: &CMatrix<f64>) -> f64 {
        max_abs_entry(&(u.adjoint() * u - matcore::identity::<f64>(u.nrows())))
    }

    #[test]
    fn haar_in_dimension_one_is_a_phase() {
        let u = sample_haar_unitary::<f64>(1, &SeededDraw::new(1, 2, 3));
        assert_abs_diff_eq!(u[(0, 0)].norm(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn haar_samples_are_unitary_and_deterministic() {
        for d in [2, 3, 5, 8] {
            let draw = SeededDraw::new(42, d as u64, 7);
            let u = sample_haar_unitary::<f64>(d, &draw);
            assert!(unitarity_residual(&u) <= 1e-12);
            assert_eq!(u, sample_haar_unitary::<f64>(d, &draw));
        }
        let a = sample_haar_unitary::<f64>(3, &SeededDraw::new(1, 0, 0));
        let b = sample_haar_unitary::<f64>(3, &SeededDraw::new(1, 0, 1));
        assert_ne!(a, b);
    }

    #[test]
    fn gamma_parsing_and_display() {
        let g: GammaSignature = serde_json::from_str(r#"["1","-","*","T"]"#).unwrap();
        assert_eq!(g.t(), 4);
        assert_eq!(g.to_string(), "(1,-,*,T)");
        assert_eq!(serde_json::to_string(&g).unwrap(), r#"["1","-","*","T"]"#);
        assert!(serde_json::from_str::<GammaSignature>(r#"[]"#).is_err());
        assert!(serde_json::from_str::<GammaSignature>(r#"["x"]"#).is_err());
    }

    #[test]
    fn kraus_set_shapes() {
        let spec = EnsembleSpec::new(EnsembleKind::HaarUnitary, 2, 3).unwrap();
        let ops = sample_kraus_set::<f64>(&spec, 9, 0).unwrap();
        assert_eq!(ops.len(), 3);
        assert!(ops.iter().all(|u| u.shape() == (2, 2) && unitarity_residual(u) < 1e-12));
    }

    #[test]
    fn tensor_power_with_conjugate() {
        let gamma = GammaSignature::new(vec![Decoration::Plain, Decoration::Conjugate]).unwrap();
        let spec = EnsembleSpec::new(EnsembleKind::TensorPowerUnitary(gamma), 2, 4).unwrap();
        let ops = sample_kraus_set::<f64>(&spec, 5, 1).unwrap();
        let u = sample_haar_unitary::<f64>(2, &SeededDraw::new(5, 1, 0));
        let want = matcore::kron(&u, &u.map(|z| z.conj()));
        assert_eq!(ops[0], want);
        assert!(ops.iter().all(|a| a.shape() == (4, 4) && unitarity_residual(a) < 1e-10));
    }

    #[test]
    fn hermitized_operators() {
        let spec = EnsembleSpec::new(EnsembleKind::HermitizedUnitary, 4, 20).unwrap();
        for a in sample_kraus_set::<f64>(&spec, 3, 0).unwrap() {
            assert!(max_abs_entry(&(&a - a.adjoint())) < 1e-14);
            assert!(matcore::op_norm(&a).unwrap() <= std::f64::consts::SQRT_2 + 1e-12);
        }
    }

    #[test]
    fn unknown_custom_tag_is_rejected() {
        let spec = EnsembleSpec::new(EnsembleKind::Custom("nope".into()), 2, 1).unwrap();
        assert!(matches!(sample_kraus_set::<f64>(&spec, 0, 0), Err(KblError::UnknownSampler(_))));
    }

    #[test]
    fn spec_json_format() {
        let text = r#"{"kind":"tensor_power_unitary","gamma":["1","-"],"d":2,"k":10,"L":1.0}"#;
        let spec: EnsembleSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.t(), 2);
        assert_eq!(spec.op_dim(), 4);
        assert_eq!(serde_json::to_string(&spec).unwrap(), text);
        assert!(serde_json::from_str::<EnsembleSpec>(r#"{"kind":"haar_unitary","d":2,"k":1,"L":2.0}"#).is_err());
        assert!(serde_json::from_str::<EnsembleSpec>(r#"{"kind":"haar_unitary","d":1,"k":1}"#).is_err());
        assert!(serde_json::from_str::<EnsembleSpec>(r#"{"kind":"haar_unitary","d":2,"k":1,"bogus":0}"#).is_err());
        let custom: EnsembleSpec = serde_json::from_str(r#"{"kind":"custom","tag":"identity","d":3,"k":2}"#).unwrap();
        assert_eq!(custom.kind, EnsembleKind::Custom("identity".into()));
        assert_eq!(custom.l_bound, None);
    }

    #[test]
    fn mv_constants() {
        let gamma = GammaSignature::plain(2).unwrap();
        let spec = EnsembleSpec::new(EnsembleKind::TensorPowerUnitary(gamma), 2, 10).unwrap();
        let c = ensemble_mv_constants(&spec).unwrap();
        assert_abs_diff_eq!(c.m_bound, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(c.v_bound, 0.2, epsilon = 1e-15);
        assert_eq!(c.dim_sum, 32);

        let spec = EnsembleSpec::new(EnsembleKind::HermitizedUnitary, 4, 100).unwrap();
        let c = ensemble_mv_constants(&spec).unwrap();
        assert_abs_diff_eq!(c.m_bound, 0.03, epsilon = 1e-12);
        assert_abs_diff_eq!(c.v_bound, 0.05, epsilon = 1e-12);

        let spec = EnsembleSpec::new(EnsembleKind::HaarUnitary, 3, 1).unwrap();
        assert_eq!(ensemble_mv_constants(&spec).unwrap().dim_sum, 18);

        let custom = EnsembleSpec::new(EnsembleKind::Custom("identity".into()), 3, 5).unwrap();
        assert!(ensemble_mv_constants(&custom).is_err());
        let custom = custom.with_l_bound(1.0).unwrap();
        assert_abs_diff_eq!(ensemble_mv_constants(&custom).unwrap().m_bound, 0.4, epsilon = 1e-15);
    }

    #[test]
    fn constant_identity_ensemble_is_not_isotropic() {
        let spec = EnsembleSpec::new(EnsembleKind::Custom("identity".into()), 2, 1).unwrap();
        let report = validate_isotropy(&spec, 2000, 5.0, 1).unwrap();
        assert!(!report.passed);
        assert!(report.max_sigma_multiple.is_infinite());
        assert!(report.norm_certified);
    }

    #[test]
    fn small_haar_audit_passes() {
        let spec = EnsembleSpec::new(EnsembleKind::HaarUnitary, 2, 1).unwrap();
        let report = validate_isotropy(&spec, 5000, 5.0, 11).unwrap();
        assert!(report.passed, "{report:?}");
        assert!(validate_isotropy(&spec, 10, 5.0, 11).is_err());
    }
}
