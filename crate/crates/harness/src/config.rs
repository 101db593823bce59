use std::path::Path;

use kbl_core::bounds;
use kbl_core::ensembles::{EnsembleKind, EnsembleSpec, GammaSignature};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    TailProbability,
    TwirlingCheck,
    ExpanderCampaign,
    RectifiedRegimes,
    ScalingSweep,
    IsotropyAudit,
}

/// Inputs forwarded to the budget calculators.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetInputs {
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    /// Rectified-model regime, 1–3.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<u8>,
    /// Replace `ensemble.k` by the budget at the tightest grid point.
    #[serde(default)]
    pub derive_k: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_grid: Option<Vec<usize>>,
    /// Uneven-weight scale: weights uniform on `[0, L_w/k]`.
    #[serde(rename = "L_w", default, skip_serializing_if = "Option::is_none")]
    pub l_w: Option<f64>,
    /// Regime-2 entropy fraction `Δ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Samples for a Monte Carlo reference twirl.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<usize>,
    /// Isotropy audit sample count and sigma threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isotropy_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigmas: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub ensemble: EnsembleSpec,
    /// Reference twirl signature; defaults to the ensemble's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<GammaSignature>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub budget_inputs: BudgetInputs,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Fill `wall_time_ms`; off by default so record streams stay byte-stable.
    #[serde(default)]
    pub record_timing: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Signature of the reference twirl.
    pub fn reference_gamma(&self) -> Result<GammaSignature> {
        let own = self.ensemble.gamma().cloned();
        match (&self.gamma, own) {
            (Some(g), Some(o)) if *g != o => Err(config_err(format!(
                "gamma {g} does not match the ensemble's {o}"
            ))),
            (Some(g), None) if !(g.is_plain() && g.t() == 1) => Err(config_err(format!(
                "gamma {g} needs a tensor_power_unitary ensemble"
            ))),
            (Some(g), _) => Ok(g.clone()),
            (None, Some(o)) => Ok(o),
            (None, None) => Ok(GammaSignature::plain(1)?),
        }
    }

    /// The α or ε grid the kind uses.
    pub fn grid(&self) -> Result<Vec<f64>> {
        let (name, grid) = match self.kind {
            ExperimentKind::TailProbability => ("alpha_grid", self.alpha_grid.as_ref()),
            ExperimentKind::TwirlingCheck | ExperimentKind::ExpanderCampaign => ("eps", self.eps.as_ref()),
            ExperimentKind::RectifiedRegimes => {
                if self.budget_inputs.regime == Some(2) {
                    let delta = self
                        .budget_inputs
                        .delta
                        .ok_or_else(|| config_err("regime 2 needs budget_inputs.delta"))?;
                    return Ok(vec![delta]);
                }
                ("eps", self.eps.as_ref())
            }
            ExperimentKind::ScalingSweep | ExperimentKind::IsotropyAudit => return Ok(Vec::new()),
        };
        let grid = grid.ok_or_else(|| config_err(format!("{:?} needs `{name}`", self.kind)))?;
        if grid.is_empty() {
            return Err(config_err(format!("`{name}` must not be empty")));
        }
        if let Some(bad) = grid.iter().find(|&&a| !(a.is_finite() && a > 0.0)) {
            return Err(config_err(format!("`{name}` entries must be positive, got {bad}")));
        }
        Ok(grid.clone())
    }

    pub fn required_c(&self) -> Result<f64> {
        self.budget_inputs
            .c
            .ok_or_else(|| config_err("budget_inputs.C is required for this experiment"))
    }

    /// Operator-norm bound `L` from the inputs or the ensemble.
    pub fn l_bound(&self) -> Result<f64> {
        self.budget_inputs
            .l
            .or(self.ensemble.l_bound)
            .ok_or_else(|| config_err("an operator-norm bound L is required (budget_inputs.L or ensemble.L)"))
    }

    pub fn regime(&self) -> Result<u8> {
        match self.budget_inputs.regime {
            Some(r @ 1..=3) => Ok(r),
            Some(r) => Err(config_err(format!("regime must be 1, 2 or 3, got {r}"))),
            None => Err(config_err("rectified_regimes needs budget_inputs.regime")),
        }
    }

    /// Checks everything that does not need sampling; resolves a derived `k`.
    pub fn validate(&mut self) -> Result<()> {
        if self.trials < 1 {
            return Err(config_err("trials must be >= 1"));
        }
        if self.workers == Some(0) {
            return Err(config_err("workers must be >= 1"));
        }
        self.ensemble.validate()?;
        let gamma = self.reference_gamma()?;
        let grid = self.grid()?;
        let d = self.ensemble.d;
        let t = gamma.t();
        let tight = grid.iter().copied().fold(f64::INFINITY, f64::min);

        match self.kind {
            ExperimentKind::TailProbability => {
                if self.budget_inputs.derive_k {
                    let c = self.required_c()?;
                    self.ensemble.k = self.tail_budget(tight.min(1.0), c)?.k as usize;
                }
            }
            ExperimentKind::TwirlingCheck => {
                if !gamma.is_plain() {
                    return Err(config_err("twirling_check needs gamma = (1 x t) for an exact reference"));
                }
                let cap = (d as f64).powf(t as f64 / 2.0);
                if let Some(bad) = grid.iter().find(|&&e| e > cap) {
                    return Err(config_err(format!("eps {bad} exceeds d^(t/2) = {cap}")));
                }
                if self.budget_inputs.derive_k {
                    let c = self.required_c()?;
                    self.ensemble.k = bounds::twirling_budget(d as u64, t as u32, tight, c)?.k as usize;
                }
            }
            ExperimentKind::ExpanderCampaign => {
                if !matches!(self.ensemble.kind, EnsembleKind::TensorPowerUnitary(_)) || !gamma.is_plain() {
                    return Err(config_err("expander_campaign needs a tensor_power_unitary ensemble with gamma = (1 x t)"));
                }
                if self.budget_inputs.derive_k {
                    let c = self.required_c()?;
                    self.ensemble.k = bounds::tdesign_budget(d as u64, t as u32, tight.min(1.0), c)?.k as usize;
                }
            }
            ExperimentKind::RectifiedRegimes => {
                if !matches!(self.ensemble.kind, EnsembleKind::HermitizedUnitary | EnsembleKind::Custom(_)) {
                    return Err(config_err("rectified_regimes needs a hermitized_unitary or custom ensemble"));
                }
                let regime = self.regime()?;
                let l = self.l_bound()?;
                if self.budget_inputs.derive_k {
                    let c = self.required_c()?;
                    self.ensemble.k = bounds::three_regimes_budget(d as u64, l, tight, regime, c)?.k as usize;
                } else {
                    // argument ranges only
                    bounds::three_regimes_budget(d as u64, l, tight, regime, f64::MAX)?;
                }
            }
            ExperimentKind::ScalingSweep => {
                let ks = self
                    .budget_inputs
                    .k_grid
                    .as_ref()
                    .ok_or_else(|| config_err("scaling_sweep needs budget_inputs.k_grid"))?;
                if ks.is_empty() || ks.contains(&0) {
                    return Err(config_err("k_grid entries must be >= 1"));
                }
                if let Some(lw) = self.budget_inputs.l_w {
                    if !(lw.is_finite() && lw > 0.0) {
                        return Err(config_err(format!("L_w must be positive, got {lw}")));
                    }
                }
            }
            ExperimentKind::IsotropyAudit => {
                if let Some(n) = self.budget_inputs.isotropy_samples {
                    if n < 1000 {
                        return Err(config_err("isotropy audit needs >= 1000 samples"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Closed-form budget for the tail-probability theorem matching the ensemble.
    pub fn tail_budget(&self, alpha: f64, c: f64) -> Result<bounds::BudgetResult> {
        let d = self.ensemble.d as u64;
        Ok(match self.ensemble.kind {
            EnsembleKind::HaarUnitary | EnsembleKind::TensorPowerUnitary(_) => {
                bounds::tdesign_budget(d, self.ensemble.t() as u32, alpha, c)?
            }
            EnsembleKind::HermitizedUnitary | EnsembleKind::Custom(_) => {
                bounds::generalized_cp_budget(d, self.l_bound()?, alpha, c)?
            }
        })
    }
}
