use kbl_core::ensembles::IsotropyReport;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NotApplicable {
    NotApplicable,
}

/// A value, or the literal `"NotApplicable"` for fields a kind does not use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Field<T> {
    Value(T),
    Na(NotApplicable),
}

impl<T> Field<T> {
    pub const NA: Field<T> = Field::Na(NotApplicable::NotApplicable);

    pub fn value(&self) -> Option<&T> {
        match self {
            Field::Value(v) => Some(v),
            Field::Na(_) => None,
        }
    }
}

impl<T> From<Option<T>> for Field<T> {
    fn from(o: Option<T>) -> Self {
        o.map_or(Field::NA, Field::Value)
    }
}

/// One line of the JSONL stream. The schema is shared by all kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: u64,
    /// `(master_seed, trial_index)`; per-operator streams derive from it.
    pub seed_tuple: [u64; 2],
    pub k: usize,
    /// `‖Φ̂ − Ω̂‖_∞`
    pub deviation_opnorm: Field<f64>,
    /// Leading eigenvalue moduli of `Φ̂`, at most 8.
    pub lambda_moduli: Vec<f64>,
    /// `|λ₂|` or `|λ_{r+1}|`, whichever the kind certifies.
    pub gap_modulus: Field<f64>,
    pub tp_residual: Field<f64>,
    pub rectifiable: Field<bool>,
    pub entropy_fixed_point: Field<f64>,
    /// Standard error of a Monte Carlo reference twirl.
    pub reference_se: Field<f64>,
    pub failure: Option<String>,
    pub wall_time_ms: Option<f64>,
}

impl TrialRecord {
    pub fn blank(trial_index: u64, master_seed: u64, k: usize) -> Self {
        TrialRecord {
            trial_index,
            seed_tuple: [master_seed, trial_index],
            k,
            deviation_opnorm: Field::NA,
            lambda_moduli: Vec::new(),
            gap_modulus: Field::NA,
            tp_residual: Field::NA,
            rectifiable: Field::NA,
            entropy_fixed_point: Field::NA,
            reference_se: Field::NA,
            failure: None,
            wall_time_ms: None,
        }
    }

    pub fn deviation(&self) -> Option<f64> {
        self.deviation_opnorm.value().copied()
    }

    pub fn gap(&self) -> Option<f64> {
        self.gap_modulus.value().copied()
    }
}

/// One plot-ready row; also the CSV schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    /// α or ε (Δ for rectified regime 2); empty for scaling rows.
    pub alpha: Option<f64>,
    /// Fraction of trials in the failure event.
    pub empirical_tail: Option<f64>,
    pub binomial_se: Option<f64>,
    pub theoretical_tail: Option<f64>,
    pub vacuous: Option<bool>,
    pub pass_fraction: Option<f64>,
    pub median_deviation: Option<f64>,
    pub k: usize,
    pub d: usize,
    pub t: usize,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectifiedSummary {
    pub regime: u8,
    pub rectifiable_fraction: f64,
    /// Guarantee pass fraction among rectifiable trials.
    pub pass_fraction_rectified: f64,
    pub lambda_bound: f64,
    pub entropy_threshold: Option<f64>,
    pub min_entropy_passing: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSummary {
    /// Least-squares slope of ln(median) against ln k.
    pub slope: Field<f64>,
    /// `median(k_i) / median(k_{i+1})`
    pub median_ratios: Vec<f64>,
    pub uneven_weights: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub kind: ExperimentKind,
    pub rows: Vec<SummaryRow>,
    pub failures: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rectified: Option<RectifiedSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub isotropy: Vec<IsotropyReport>,
    /// Kind-specific statistical check (what `--assert` enforces).
    pub check_passed: bool,
    pub check: String,
}

pub fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn not_applicable_serializes_as_string() {
        let r = TrialRecord::blank(3, 9, 5);
        let line = serde_json::to_string(&r).unwrap();
        assert!(line.contains("\"rectifiable\":\"NotApplicable\""));
        assert!(line.contains("\"wall_time_ms\":null"));
        let back: TrialRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn values_serialize_bare() {
        let f: Field<bool> = Field::Value(true);
        assert_eq!(serde_json::to_string(&f).unwrap(), "true");
        let g: Field<f64> = serde_json::from_str("0.25").unwrap();
        assert_eq!(g.value(), Some(&0.25));
    }
}
