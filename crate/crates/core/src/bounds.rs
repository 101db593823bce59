//! Matrix Bernstein tail bounds and the sample budgets `k` derived from them.
//!
//! `log d` is the natural logarithm throughout; a different base only rescales
//! the free constant `C`. Budgets are the ceiling of the real-valued formula and
//! report the tail even when it is `>= 1` (flagged `vacuous`).

use serde::Serialize;

use crate::error::{invalid, Result};

/// Inputs of `D exp(−α² / (2(V + Mα/3)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BernsteinParams {
    /// Dimension sum `m + n` of the summands.
    pub dim_sum: f64,
    /// Almost-sure bound on the summand operator norm.
    pub m: f64,
    /// Variance proxy.
    pub v: f64,
    /// Deviation threshold.
    pub alpha: f64,
}

impl BernsteinParams {
    pub fn new(dim_sum: f64, m: f64, v: f64, alpha: f64) -> Result<Self> {
        for (name, x) in [("D", dim_sum), ("M", m), ("V", v), ("alpha", alpha)] {
            if !(x.is_finite() && x > 0.0) {
                return Err(invalid(format!("Bernstein parameter {name} must be positive, got {x}")));
            }
        }
        Ok(BernsteinParams { dim_sum, m, v, alpha })
    }
}

pub fn bernstein_tail(p: &BernsteinParams) -> f64 {
    p.dim_sum * (-(p.alpha * p.alpha) / (2.0 * (p.v + p.m * p.alpha / 3.0))).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum RegimeTag {
    TDesign,
    Twirling,
    GeneralizedCP,
    AlmostInvertible,
    NewModel,
    ThreeRegimes1,
    ThreeRegimes2,
    ThreeRegimes3,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetResult {
    /// Number of Kraus operators (ceiling of `k_real`).
    pub k: u64,
    pub k_real: f64,
    pub tail_bound: f64,
    pub vacuous: bool,
    pub regime_tag: RegimeTag,
    /// Operator-norm deviation threshold the budget controls.
    pub alpha: f64,
    /// Threshold constant `C̃` where the regime has one.
    pub c_tilde: Option<f64>,
    /// Predicted bound on the relevant subleading eigenvalue modulus.
    pub lambda_bound: Option<f64>,
    /// Predicted lower bound on output entropy (nats), regime 2 only.
    pub entropy_bound: Option<f64>,
}

impl BudgetResult {
    fn new(k_real: f64, tail_bound: f64, regime_tag: RegimeTag, alpha: f64) -> Self {
        BudgetResult {
            k: k_real.ceil() as u64,
            k_real,
            tail_bound,
            vacuous: tail_bound >= 1.0,
            regime_tag,
            alpha,
            c_tilde: None,
            lambda_bound: None,
            entropy_bound: None,
        }
    }
}

fn check_dim(d: u64) -> Result<f64> {
    if d < 2 {
        return Err(invalid(format!("d must be >= 2, got {d}")));
    }
    Ok(d as f64)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    Ok(())
}

fn check_l(l: f64) -> Result<()> {
    if !(l.is_finite() && l >= 1.0) {
        return Err(invalid(format!("L must be >= 1, got {l}")));
    }
    Ok(())
}

fn check_c_above(c: f64, threshold: f64) -> Result<()> {
    if !(c > threshold) {
        return Err(invalid(format!("C = {c} must exceed {threshold} for the bound to decay")));
    }
    Ok(())
}

/// `2 d^{t(2 − C/6)}`
pub fn tdesign_tail(d: f64, t: u32, c: f64) -> f64 {
    2.0 * d.powf(t as f64 * (2.0 - c / 6.0))
}

/// `C̃ = 4L⁴ + (4/3)L² + 16/3`
pub fn c_tilde_generalized(l: f64) -> f64 {
    4.0 * l.powi(4) + 4.0 / 3.0 * l * l + 16.0 / 3.0
}

/// `C̃ = 2L⁴ + (2/3)L² + 8/3`
pub fn c_tilde_almost_invertible(l: f64) -> f64 {
    2.0 * l.powi(4) + 2.0 / 3.0 * l * l + 8.0 / 3.0
}

/// `2 d^{2(1 − C/C̃)}`
pub fn generalized_cp_tail(d: f64, c: f64, c_tilde: f64) -> f64 {
    2.0 * d.powf(2.0 * (1.0 - c / c_tilde))
}

/// `2(1 + 1/d) d^{2(1 − C/C̃)}`
pub fn new_model_tail(d: f64, c: f64, c_tilde: f64) -> f64 {
    2.0 * (1.0 + 1.0 / d) * d.powf(2.0 * (1.0 - c / c_tilde))
}

/// Unitary t-designs: `k = C t ln d / α²`, `C > 12`.
pub fn tdesign_budget(d: u64, t: u32, alpha: f64, c: f64) -> Result<BudgetResult> {
    let df = check_dim(d)?;
    check_alpha(alpha)?;
    if t < 1 {
        return Err(invalid("t must be >= 1"));
    }
    check_c_above(c, 12.0)?;
    let k = c * t as f64 * df.ln() / (alpha * alpha);
    Ok(BudgetResult::new(k, tdesign_tail(df, t, c), RegimeTag::TDesign, alpha))
}

/// ε-twirling: `k = C t d^t ln d / ε²` with `0 < ε <= d^{t/2}`; reduces to
/// [`tdesign_budget`] at `α = ε d^{−t/2}`.
pub fn twirling_budget(d: u64, t: u32, eps: f64, c: f64) -> Result<BudgetResult> {
    let df = check_dim(d)?;
    if t < 1 {
        return Err(invalid("t must be >= 1"));
    }
    let cap = df.powf(t as f64 / 2.0);
    if !(eps > 0.0 && eps <= cap) {
        return Err(invalid(format!("eps must lie in (0, d^(t/2)] = (0, {cap}], got {eps}")));
    }
    check_c_above(c, 12.0)?;
    let k = c * t as f64 * df.powi(t as i32) * df.ln() / (eps * eps);
    let alpha = (eps / cap).min(1.0);
    Ok(BudgetResult::new(k, tdesign_tail(df, t, c), RegimeTag::Twirling, alpha))
}

/// Bounded isotropic Kraus operators: `k = C ln d / α²`, `C > C̃(L)`.
pub fn generalized_cp_budget(d: u64, l: f64, alpha: f64, c: f64) -> Result<BudgetResult> {
    let df = check_dim(d)?;
    check_alpha(alpha)?;
    check_l(l)?;
    let ct = c_tilde_generalized(l);
    check_c_above(c, ct)?;
    let k = c * df.ln() / (alpha * alpha);
    let mut r = BudgetResult::new(k, generalized_cp_tail(df, c, ct), RegimeTag::GeneralizedCP, alpha);
    r.c_tilde = Some(ct);
    Ok(r)
}

/// `‖(1/k)Σ A_i*A_i − I‖_∞ < α`: `k = C ln d / α²`, tail `2 d^{1 − C/C̃}`.
pub fn almost_invertible_budget(d: u64, l: f64, alpha: f64, c: f64) -> Result<BudgetResult> {
    let df = check_dim(d)?;
    check_alpha(alpha)?;
    check_l(l)?;
    let ct = c_tilde_almost_invertible(l);
    check_c_above(c, ct)?;
    let k = c * df.ln() / (alpha * alpha);
    let tail = 2.0 * df.powf(1.0 - c / ct);
    let mut r = BudgetResult::new(k, tail, RegimeTag::AlmostInvertible, alpha);
    r.c_tilde = Some(ct);
    Ok(r)
}

/// Rectified channel: `k = 16 C ln d / α²`, tail `2(1 + 1/d) d^{2(1 − C/C̃)}`.
pub fn new_model_budget(d: u64, l: f64, alpha: f64, c: f64) -> Result<BudgetResult> {
    let df = check_dim(d)?;
    check_alpha(alpha)?;
    check_l(l)?;
    let ct = c_tilde_generalized(l);
    check_c_above(c, ct)?;
    let k = 16.0 * c * df.ln() / (alpha * alpha);
    let mut r = BudgetResult::new(k, new_model_tail(df, c, ct), RegimeTag::NewModel, alpha);
    r.c_tilde = Some(ct);
    Ok(r)
}

/// The three rectified-channel regimes.
///
/// * 1: `k = 64 C d ln d / ε²`, `0 < ε < 1`; `|λ₂| <= ε/√d`, ε-randomizing.
/// * 2: `k = 16 C d / (1 − Δ)`, `0 < Δ < 1`; `|λ₂| <= 2√((1−Δ) ln d / d)`, output entropy `>= Δ ln d`.
/// * 3: `k = 64 C ln d / ε²`, `0 < ε <= 1`; `|λ₂| <= ε`.
pub fn three_regimes_budget(d: u64, l: f64, eps_or_delta: f64, regime: u8, c: f64) -> Result<BudgetResult> {
    let df = check_dim(d)?;
    check_l(l)?;
    let ct = c_tilde_generalized(l);
    check_c_above(c, ct)?;
    let x = eps_or_delta;
    let tail = new_model_tail(df, c, ct);
    let mut r = match regime {
        1 => {
            if !(x > 0.0 && x < 1.0) {
                return Err(invalid(format!("regime 1 needs 0 < eps < 1, got {x}")));
            }
            let mut r = BudgetResult::new(64.0 * c * df * df.ln() / (x * x), tail, RegimeTag::ThreeRegimes1, x / (2.0 * df.sqrt()));
            r.lambda_bound = Some(x / df.sqrt());
            r
        }
        2 => {
            if !(x > 0.0 && x < 1.0) {
                return Err(invalid(format!("regime 2 needs 0 < delta < 1, got {x}")));
            }
            let alpha = ((1.0 - x) * df.ln() / df).sqrt();
            let mut r = BudgetResult::new(16.0 * c * df / (1.0 - x), tail, RegimeTag::ThreeRegimes2, alpha);
            r.lambda_bound = Some(2.0 * alpha);
            r.entropy_bound = Some(x * df.ln());
            r
        }
        3 => {
            if !(x > 0.0 && x <= 1.0) {
                return Err(invalid(format!("regime 3 needs 0 < eps <= 1, got {x}")));
            }
            let mut r = BudgetResult::new(64.0 * c * df.ln() / (x * x), tail, RegimeTag::ThreeRegimes3, x / 2.0);
            r.lambda_bound = Some(x);
            r
        }
        other => return Err(invalid(format!("regime must be 1, 2 or 3, got {other}"))),
    };
    r.c_tilde = Some(ct);
    Ok(r)
}
