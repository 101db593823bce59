//! Spectral diagnostics of channel natural representations: deviation from the
//! twirl, eigenvalue gaps, expander certificates, fixed states and entropy.

use nalgebra::{ComplexField, SVD};
use num_complex::Complex;
use serde::Serialize;

use crate::channels::{KrausChannel, SuperOpMatrix};
use crate::ensembles::{sample_pure_state, SeededDraw};
use crate::error::{invalid, KblError, Result};
use crate::matcore::{self, CMatrix, CVector, QuantumState, SPECTRAL_TOL};
use crate::scalar::{lit, to_f64, Real};
use crate::twirl::{exact_twirl, TwirlChannel};

/// Residual accepted for a fixed state.
pub const FIXED_POINT_TOL: f64 = 1e-8;
/// Default `Δ` in the finite-d entropy surrogate `H(ρ*) >= Δ ln d`.
pub const DEFAULT_ENTROPY_FRACTION: f64 = 0.5;

/// `‖Φ̂ − Ω̂‖_∞`
pub fn deviation_norm<T: Real>(phi_hat: &SuperOpMatrix<T>, omega_hat: &SuperOpMatrix<T>) -> Result<T> {
    matcore::op_norm(phi_hat.sub(omega_hat)?.matrix())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub deviation: f64,
    pub r: usize,
    pub lambda_r_modulus: f64,
    pub lambda_r_plus_1_modulus: f64,
    /// Leading `min(2r + 2, dim)` eigenvalue moduli, non-increasing.
    pub top_moduli: Vec<f64>,
}

pub fn gap_report<T: Real>(phi_hat: &SuperOpMatrix<T>, d: usize, t: usize) -> Result<GapReport> {
    let omega = exact_twirl::<T>(d, t)?;
    gap_report_against(phi_hat, &omega)
}

/// Same as [`gap_report`] with a precomputed twirl.
pub fn gap_report_against<T: Real>(phi_hat: &SuperOpMatrix<T>, omega: &TwirlChannel<T>) -> Result<GapReport> {
    let side = omega.d.pow(omega.t as u32);
    if phi_hat.source_dims() != (side, side) {
        return Err(invalid(format!(
            "channel acts on {:?}, twirl on ({side}, {side})",
            phi_hat.source_dims()
        )));
    }
    let deviation = to_f64(deviation_norm(phi_hat, &omega.superop)?);
    let spectrum = matcore::spectrum_by_modulus(phi_hat.matrix())?;
    let r = omega.rank;
    let take = (2 * r + 2).min(spectrum.len());
    Ok(GapReport {
        deviation,
        r,
        lambda_r_modulus: to_f64(spectrum.modulus(r)),
        lambda_r_plus_1_modulus: to_f64(spectrum.modulus(r + 1)),
        top_moduli: spectrum.moduli()[..take].iter().map(|&m| to_f64(m)).collect(),
    })
}

/// Which clause of the expander definition to certify.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExpanderBranch {
    /// Kraus channel on `M(d)`: gap of `λ₂` plus unitality or a noisy fixed state.
    GeneralKraus,
    /// Mixed tensor-power unitary channel on `M(d^t)`: gap of `λ_{r+1}`.
    TensorUnitary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExpanderCondition {
    /// `k < d^{2t}`, the finite-d stand-in for `k(d)/d^{2t} -> 0`.
    FewKrausOperators,
    SpectralGap,
    /// Unital, or unique fixed state with entropy `>= Δ ln d`.
    NoisyFixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpanderCriteria {
    pub epsilon: f64,
    /// `Δ` in the entropy surrogate.
    pub entropy_fraction: f64,
}

impl ExpanderCriteria {
    pub fn new(epsilon: f64) -> Self {
        ExpanderCriteria {
            epsilon,
            entropy_fraction: DEFAULT_ENTROPY_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpanderCertificate {
    pub branch: ExpanderBranch,
    pub epsilon: f64,
    /// The gap statistic: `|λ₂|` or `|λ_{r+1}|`.
    pub epsilon_achieved: f64,
    pub k_over_dim_sq: f64,
    pub entropy_of_fixed_point: Option<f64>,
    /// Threshold `Δ` used by the entropy surrogate (general branch only).
    pub entropy_fraction: Option<f64>,
    pub unital: bool,
    pub passed: bool,
    pub violated_conditions: Vec<ExpanderCondition>,
}

pub fn certify_expander<T: Real>(
    ch: &KrausChannel<T>,
    branch: ExpanderBranch,
    criteria: ExpanderCriteria,
    d: usize,
    t: usize,
) -> Result<ExpanderCertificate> {
    let t = match branch {
        ExpanderBranch::GeneralKraus => 1,
        ExpanderBranch::TensorUnitary => t,
    };
    let side = d.pow(t as u32);
    if ch.input_dim() != side || ch.output_dim() != side {
        return Err(invalid(format!(
            "channel is {}x{}, expected operators on C^{side}",
            ch.output_dim(),
            ch.input_dim()
        )));
    }
    let hat = ch.natural_rep();
    let spectrum = matcore::spectrum_by_modulus(hat.matrix())?;
    let unital = ch.is_unital(SPECTRAL_TOL)?.holds;
    let dim_sq = (side * side) as f64;
    let mut violated = Vec::new();
    if ch.len() as f64 >= dim_sq {
        violated.push(ExpanderCondition::FewKrausOperators);
    }

    let (gap_index, entropy, fraction) = match branch {
        ExpanderBranch::TensorUnitary => (crate::twirl::twirl_rank(d, t)? + 1, None, None),
        ExpanderBranch::GeneralKraus => {
            let entropy = if unital {
                None
            } else {
                match fixed_point(ch) {
                    Ok(fp) if fp.unique_certified => Some(to_f64(von_neumann_entropy(&fp.state)?)),
                    Ok(_) | Err(KblError::NumericalFailure(_)) => None,
                    Err(e) => return Err(e),
                }
            };
            let noisy = unital || entropy.is_some_and(|h| h >= criteria.entropy_fraction * (d as f64).ln());
            if !noisy {
                violated.push(ExpanderCondition::NoisyFixedPoint);
            }
            (2, entropy, Some(criteria.entropy_fraction))
        }
    };
    let achieved = to_f64(spectrum.modulus(gap_index));
    if !(achieved < criteria.epsilon) {
        violated.push(ExpanderCondition::SpectralGap);
    }
    violated.sort_by_key(|c| *c as u8);

    Ok(ExpanderCertificate {
        branch,
        epsilon: criteria.epsilon,
        epsilon_achieved: achieved,
        k_over_dim_sq: ch.len() as f64 / dim_sq,
        entropy_of_fixed_point: entropy,
        entropy_fraction: fraction,
        unital,
        passed: violated.is_empty(),
        violated_conditions: violated,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult<T: Real> {
    pub state: QuantumState<T>,
    /// `‖Φ(ρ) − ρ‖₂`
    pub residual: f64,
    /// Set when `‖Φ̂ − Ω̂^{(d,(1))}‖_∞ < 1`, which forces uniqueness.
    pub unique_certified: bool,
}

fn null_vector<T: Real>(m: &CMatrix<T>) -> Result<CVector<T>> {
    let svd = SVD::try_new(m.clone(), false, true, T::default_epsilon(), 10_000)
        .ok_or_else(|| KblError::NumericalFailure("SVD did not converge".into()))?;
    let v_t = svd.v_t.expect("requested V");
    let (j, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, T::max_value().expect("bounded")), |(bj, bs), (j, &s)| if s < bs { (j, s) } else { (bj, bs) });
    Ok(v_t.row(j).adjoint().into_owned())
}

fn state_from_vector<T: Real>(v: &CVector<T>, d: usize) -> Result<Option<CMatrix<T>>> {
    let x = matcore::unvec(v, d, d)?;
    let tr = x.trace();
    if tr.modulus() < lit(1e-12) {
        return Ok(None);
    }
    let rho = matcore::hermitian_part(&x.map(|z| z / tr));
    let (values, vectors) = matcore::hermitian_eigen(&rho)?;
    if values[0] < lit(-FIXED_POINT_TOL) {
        return Err(KblError::NumericalFailure(format!(
            "fixed point has negative eigenvalue {:?}",
            values[0]
        )));
    }
    let clipped: Vec<T> = values.iter().map(|&v| v.max(T::zero())).collect();
    let total = clipped.iter().fold(T::zero(), |a, &b| a + b);
    let scaled = CMatrix::from_fn(d, d, |r, col| vectors[(r, col)] * Complex::from(clipped[col] / total));
    Ok(Some(matcore::hermitian_part(&(&scaled * vectors.adjoint()))))
}

/// Fixed state of a trace-preserving channel on `M(d)`.
pub fn fixed_point<T: Real>(ch: &KrausChannel<T>) -> Result<FixedPointResult<T>> {
    let d = ch.input_dim();
    if ch.output_dim() != d {
        return Err(invalid("fixed point needs a channel M(d) -> M(d)"));
    }
    let tp = ch.is_trace_preserving(FIXED_POINT_TOL)?;
    if !tp.holds {
        return Err(invalid(format!("channel is not trace preserving (residual {:e})", tp.residual)));
    }
    let hat = ch.natural_rep();
    let spectrum = matcore::spectrum_by_modulus(hat.matrix())?;
    let one = Complex::from(T::one());
    let nearest = spectrum
        .values()
        .iter()
        .copied()
        .fold(None::<Complex<T>>, |best, z| match best {
            Some(b) if (b - one).modulus() <= (z - one).modulus() => Some(b),
            _ => Some(z),
        })
        .expect("nonempty spectrum");

    let n2 = d * d;
    let shifted = hat.matrix() - matcore::identity::<T>(n2) * nearest;
    let mut v = null_vector(&shifted)?;
    let mut rho = state_from_vector(&v, d)?;
    let residual_of = |rho: &CMatrix<T>| -> Result<f64> { Ok(to_f64((ch.apply(rho)? - rho).norm())) };

    let mut residual = match &rho {
        Some(r) => residual_of(r)?,
        None => f64::INFINITY,
    };
    if residual > FIXED_POINT_TOL {
        // inverse iteration around λ = 1
        let mu = one + Complex::from(lit::<T>(1e-10));
        let lu = (hat.matrix() - matcore::identity::<T>(n2) * mu).lu();
        for _ in 0..5 {
            let Some(next) = lu.solve(&v) else { break };
            let n = next.norm();
            if !(n > T::zero()) {
                break;
            }
            v = next.unscale(n);
            rho = state_from_vector(&v, d)?;
            if let Some(r) = &rho {
                residual = residual_of(r)?;
                if residual <= FIXED_POINT_TOL {
                    break;
                }
            }
        }
    }
    let rho = match rho {
        Some(r) if residual <= FIXED_POINT_TOL => r,
        _ => {
            return Err(KblError::NumericalFailure(format!(
                "fixed-point residual {residual:e} above {FIXED_POINT_TOL:e}"
            )))
        }
    };

    let depolarizing = exact_twirl::<T>(d, 1)?;
    let dev = to_f64(deviation_norm(&hat, &depolarizing.superop)?);
    Ok(FixedPointResult {
        state: QuantumState::with_tolerance(rho, FIXED_POINT_TOL)?,
        residual,
        unique_certified: dev < 1.0 - SPECTRAL_TOL,
    })
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub fn entropy_of_probabilities(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// `−Σ λ ln λ` over the state's eigenvalues (nats).
pub fn von_neumann_entropy<T: Real>(rho: &QuantumState<T>) -> Result<T> {
    let values = rho.eigenvalues()?;
    Ok(values
        .iter()
        .filter(|&&x| x > T::zero())
        .fold(T::zero(), |acc, &x| acc - x * x.ln()))
}

/// `d Σ(λ_i − 1/d)² − (ln d + Σ λ_i ln λ_i)`; nonnegative for every
/// probability vector.
pub fn entropy_inequality_slack(p: &[f64]) -> f64 {
    let d = p.len() as f64;
    let rhs = d * p.iter().map(|&x| (x - 1.0 / d).powi(2)).sum::<f64>();
    let lhs = d.ln() - entropy_of_probabilities(p);
    rhs - lhs
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyBoundReport {
    pub n_states: usize,
    /// `min_ρ [H(Φ(ρ)) − (ln d − d ‖Φ(ρ) − I/d‖₂²)]`
    pub min_slack: f64,
    pub min_entropy: f64,
    pub max_bound: f64,
}

/// Evaluate `H(Φ(ρ)) >= ln d − d ‖Φ(ρ) − I/d‖₂²` on random pure inputs.
pub fn entropy_lower_bound_check<T: Real>(ch: &KrausChannel<T>, n_states: usize, master_seed: u64) -> Result<EntropyBoundReport> {
    let d = ch.input_dim();
    if ch.output_dim() != d {
        return Err(invalid("entropy check needs a channel M(d) -> M(d)"));
    }
    if n_states == 0 {
        return Err(invalid("entropy check needs at least one state"));
    }
    let ln_d = (d as f64).ln();
    let mixed = matcore::identity::<T>(d).unscale(lit(d as f64));
    let mut report = EntropyBoundReport {
        n_states,
        min_slack: f64::INFINITY,
        min_entropy: f64::INFINITY,
        max_bound: f64::NEG_INFINITY,
    };
    for s in 0..n_states as u64 {
        let psi = sample_pure_state::<T>(d, &SeededDraw::new(master_seed, s, 0));
        let rho = QuantumState::pure(&psi)?;
        let out = ch.apply(rho.matrix())?;
        let (values, _) = matcore::hermitian_eigen(&out)?;
        let probs: Vec<f64> = values.iter().map(|&x| to_f64(x).max(0.0)).collect();
        let h = entropy_of_probabilities(&probs);
        let dist = to_f64((&out - &mixed).norm());
        let bound = ln_d - d as f64 * dist * dist;
        report.min_slack = report.min_slack.min(h - bound);
        report.min_entropy = report.min_entropy.min(h);
        report.max_bound = report.max_bound.max(bound);
    }
    Ok(report)
}
