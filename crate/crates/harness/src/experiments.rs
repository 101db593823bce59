//! The six experiment kinds. Every trial is a pure function of
//! `(config, trial_index)`, so the worker count never changes a record.

use std::time::Instant;

use kbl_core::bounds;
use kbl_core::channels::{rectify, KrausChannel, DEFAULT_INVERT_TOL};
use kbl_core::ensembles::{
    sample_kraus_set, validate_isotropy, EnsembleKind, EnsembleSpec, GammaSignature, SeededDraw, Stream,
};
use kbl_core::matcore::{self, SPECTRAL_TOL};
use kbl_core::spectral::{deviation_norm, fixed_point, gap_report_against, von_neumann_entropy};
use kbl_core::twirl::{exact_twirl, mc_twirl, TwirlChannel, MC_BLOCKS};
use kbl_core::KblError;
use rand::Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{config_err, Result};
use crate::record::{binomial_se, Field, RectifiedSummary, ScalingSummary, Summary, SummaryRow, TrialRecord};

const LEADING_MODULI: usize = 8;
const DEFAULT_MC_SAMPLES: usize = 1000 * MC_BLOCKS;
const DEFAULT_AUDIT_SAMPLES: usize = 100_000;
const DEFAULT_PRECHECK_SAMPLES: usize = 2000;
const DEFAULT_SIGMAS: f64 = 5.0;
/// Reference twirls use a seed stream disjoint from the trials'.
const REFERENCE_SEED_SALT: u64 = 0x7477_6972_6c00_0000;
/// TP residual accepted for a rectified channel.
pub const TP_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub records: Vec<TrialRecord>,
    pub summary: Summary,
}

/// Validate `cfg`, run it on `workers` threads, and summarize.
pub fn run(cfg: &ExperimentConfig, workers: usize) -> Result<RunOutput> {
    let mut cfg = cfg.clone();
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| config_err(format!("cannot build worker pool: {e}")))?;
    let (records, summary) = pool.install(|| match cfg.kind {
        ExperimentKind::TailProbability => run_tail_probability(&cfg),
        ExperimentKind::TwirlingCheck => run_twirling_check(&cfg),
        ExperimentKind::ExpanderCampaign => run_expander_campaign(&cfg),
        ExperimentKind::RectifiedRegimes => run_rectified_regimes(&cfg),
        ExperimentKind::ScalingSweep => run_scaling_sweep(&cfg),
        ExperimentKind::IsotropyAudit => run_isotropy_audit(&cfg),
    })?;
    Ok(RunOutput {
        config: cfg,
        records,
        summary,
    })
}

/// Map trials in parallel; `collect` keeps trial-index order.
fn par_trials<F>(cfg: &ExperimentConfig, indices: std::ops::Range<u64>, k: usize, f: F) -> Vec<TrialRecord>
where
    F: Fn(&mut TrialRecord) -> kbl_core::Result<()> + Sync,
{
    indices
        .into_par_iter()
        .map(|i| {
            let mut rec = TrialRecord::blank(i, cfg.master_seed, k);
            let start = Instant::now();
            if let Err(e) = f(&mut rec) {
                rec.failure = Some(e.to_string());
            }
            if cfg.record_timing {
                rec.wall_time_ms = Some(start.elapsed().as_secs_f64() * 1e3);
            }
            rec
        })
        .collect()
}

fn leading_moduli(hat: &kbl_core::SuperOpMatrix) -> kbl_core::Result<kbl_core::Spectrum> {
    matcore::spectrum_by_modulus(hat.matrix())
}

fn take_leading(s: &kbl_core::Spectrum) -> Vec<f64> {
    s.moduli().into_iter().take(LEADING_MODULI).collect()
}

fn reference_twirl(cfg: &ExperimentConfig, gamma: &GammaSignature) -> Result<TwirlChannel<f64>> {
    let d = cfg.ensemble.d;
    if gamma.is_plain() {
        Ok(exact_twirl(d, gamma.t())?)
    } else {
        let n = cfg.budget_inputs.mc_samples.unwrap_or(DEFAULT_MC_SAMPLES);
        Ok(mc_twirl(d, gamma, n, cfg.master_seed ^ REFERENCE_SEED_SALT)?)
    }
}

fn median(xs: &mut [f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 { xs[n / 2] } else { 0.5 * (xs[n / 2 - 1] + xs[n / 2]) })
}

fn row(alpha: f64, failures: usize, tail: f64, k: usize, d: usize, t: usize, trials: usize) -> SummaryRow {
    let p = failures as f64 / trials as f64;
    SummaryRow {
        alpha: Some(alpha),
        empirical_tail: Some(p),
        binomial_se: Some(binomial_se(p, trials)),
        theoretical_tail: Some(tail),
        vacuous: Some(tail >= 1.0),
        pass_fraction: Some(1.0 - p),
        median_deviation: None,
        k,
        d,
        t,
        trials,
    }
}

/// `empirical <= theoretical + 3σ` on every informative row.
fn dominance_holds(rows: &[SummaryRow]) -> bool {
    rows.iter().all(|r| {
        r.vacuous == Some(true)
            || r.empirical_tail.unwrap_or(1.0) <= r.theoretical_tail.unwrap_or(0.0) + 3.0 * r.binomial_se.unwrap_or(0.0)
    })
}

/// Theorem tail at the constant `C` that `(k, α)` implies. Equals the budget
/// tail when `k` came from the budget, and stays a valid bound otherwise.
pub fn effective_tail(cfg: &ExperimentConfig, alpha: f64) -> Result<f64> {
    let d = cfg.ensemble.d as f64;
    let k = cfg.ensemble.k as f64;
    let ln_d = d.ln();
    Ok(match cfg.kind {
        ExperimentKind::TailProbability => match cfg.ensemble.kind {
            EnsembleKind::HaarUnitary | EnsembleKind::TensorPowerUnitary(_) => {
                let t = cfg.ensemble.t() as u32;
                bounds::tdesign_tail(d, t, k * alpha * alpha / (t as f64 * ln_d))
            }
            EnsembleKind::HermitizedUnitary | EnsembleKind::Custom(_) => {
                let ct = bounds::c_tilde_generalized(cfg.l_bound()?);
                bounds::generalized_cp_tail(d, k * alpha * alpha / ln_d, ct)
            }
        },
        ExperimentKind::TwirlingCheck => {
            let t = cfg.reference_gamma()?.t() as i32;
            let c = k * alpha * alpha / (t as f64 * d.powi(t) * ln_d);
            bounds::tdesign_tail(d, t as u32, c)
        }
        ExperimentKind::ExpanderCampaign => {
            let t = cfg.reference_gamma()?.t() as u32;
            bounds::tdesign_tail(d, t, k * alpha * alpha / (t as f64 * ln_d))
        }
        ExperimentKind::RectifiedRegimes => {
            let ct = bounds::c_tilde_generalized(cfg.l_bound()?);
            let c = match cfg.regime()? {
                1 => k * alpha * alpha / (64.0 * d * ln_d),
                2 => k * (1.0 - alpha) / (16.0 * d),
                _ => k * alpha * alpha / (64.0 * ln_d),
            };
            bounds::new_model_tail(d, c, ct)
        }
        ExperimentKind::ScalingSweep | ExperimentKind::IsotropyAudit => {
            return Err(config_err("no theoretical tail for this kind"))
        }
    })
}

pub fn run_tail_probability(cfg: &ExperimentConfig) -> Result<(Vec<TrialRecord>, Summary)> {
    let gamma = cfg.reference_gamma()?;
    let reference = reference_twirl(cfg, &gamma)?;
    let spec = &cfg.ensemble;
    let r = reference.rank;
    let records = par_trials(cfg, 0..cfg.trials as u64, spec.k, |rec| {
        rec.reference_se = reference.standard_error.into();
        let ch = KrausChannel::uniform(sample_kraus_set::<f64>(spec, cfg.master_seed, rec.trial_index)?)?;
        let hat = ch.natural_rep();
        rec.deviation_opnorm = Field::Value(deviation_norm(&hat, &reference.superop)?);
        rec.tp_residual = Field::Value(ch.is_trace_preserving(TP_TOL)?.residual);
        let s = leading_moduli(&hat)?;
        rec.gap_modulus = Field::Value(s.modulus(r + 1));
        rec.lambda_moduli = take_leading(&s);
        Ok(())
    });

    let grid = cfg.grid()?;
    let mut rows = Vec::with_capacity(grid.len());
    for &alpha in &grid {
        // failed trials count toward the deviation event
        let hits = records.iter().filter(|r| r.deviation().is_none_or(|d| d >= alpha)).count();
        rows.push(row(alpha, hits, effective_tail(cfg, alpha)?, spec.k, spec.d, gamma.t(), cfg.trials));
    }
    let summary = Summary {
        kind: cfg.kind,
        check_passed: dominance_holds(&rows),
        check: "empirical_tail <= theoretical_tail + 3 binomial_se on non-vacuous rows".into(),
        failures: failure_count(&records),
        rows,
        rectified: None,
        scaling: None,
        isotropy: Vec::new(),
    };
    Ok((records, summary))
}

fn failure_count(records: &[TrialRecord]) -> usize {
    records.iter().filter(|r| r.failure.is_some()).count()
}

/// `δ < ε d^{−t/2}` certifies ε-twirling for p = 1 and p = 2.
pub fn twirling_certified(deviation: f64, eps: f64, d: usize, t: usize) -> bool {
    deviation < eps * (d as f64).powf(-(t as f64) / 2.0)
}

pub fn run_twirling_check(cfg: &ExperimentConfig) -> Result<(Vec<TrialRecord>, Summary)> {
    let gamma = cfg.reference_gamma()?;
    let (d, t) = (cfg.ensemble.d, gamma.t());
    let reference = exact_twirl::<f64>(d, t)?;
    let spec = &cfg.ensemble;
    let records = par_trials(cfg, 0..cfg.trials as u64, spec.k, |rec| {
        let ch = KrausChannel::uniform(sample_kraus_set::<f64>(spec, cfg.master_seed, rec.trial_index)?)?;
        let hat = ch.natural_rep();
        rec.deviation_opnorm = Field::Value(deviation_norm(&hat, &reference.superop)?);
        rec.tp_residual = Field::Value(ch.is_trace_preserving(TP_TOL)?.residual);
        Ok(())
    });
    let grid = cfg.grid()?;
    let mut rows = Vec::new();
    for &eps in &grid {
        let misses = records
            .iter()
            .filter(|r| !r.deviation().is_some_and(|dv| twirling_certified(dv, eps, d, t)))
            .count();
        rows.push(row(eps, misses, effective_tail(cfg, eps)?, spec.k, d, t, cfg.trials));
    }
    let summary = Summary {
        kind: cfg.kind,
        check_passed: dominance_holds(&rows),
        check: "certified fraction >= 1 - theoretical_tail - 3 binomial_se on non-vacuous rows".into(),
        failures: failure_count(&records),
        rows,
        rectified: None,
        scaling: None,
        isotropy: Vec::new(),
    };
    Ok((records, summary))
}

/// Tensor-unitary expander clauses: few operators and `|λ_{r+1}| < ε`.
pub fn expander_passes(gap: f64, eps: f64, k: usize, d: usize, t: usize) -> bool {
    (k as f64) < (d as f64).powi(2 * t as i32) && gap < eps
}

pub fn run_expander_campaign(cfg: &ExperimentConfig) -> Result<(Vec<TrialRecord>, Summary)> {
    let gamma = cfg.reference_gamma()?;
    let (d, t) = (cfg.ensemble.d, gamma.t());
    let omega = exact_twirl::<f64>(d, t)?;
    let spec = &cfg.ensemble;
    let records = par_trials(cfg, 0..cfg.trials as u64, spec.k, |rec| {
        let ch = KrausChannel::uniform(sample_kraus_set::<f64>(spec, cfg.master_seed, rec.trial_index)?)?;
        let hat = ch.natural_rep();
        let g = gap_report_against(&hat, &omega)?;
        rec.deviation_opnorm = Field::Value(g.deviation);
        rec.gap_modulus = Field::Value(g.lambda_r_plus_1_modulus);
        rec.lambda_moduli = g.top_moduli.iter().copied().take(LEADING_MODULI).collect();
        rec.tp_residual = Field::Value(ch.is_trace_preserving(TP_TOL)?.residual);
        Ok(())
    });
    let r = omega.rank;
    let unit_block = records
        .iter()
        .all(|rec| rec.lambda_moduli.get(r - 1).is_some_and(|m| (m - 1.0).abs() <= SPECTRAL_TOL));
    let grid = cfg.grid()?;
    let mut rows = Vec::new();
    for &eps in &grid {
        let misses = records
            .iter()
            .filter(|rec| !rec.gap().is_some_and(|g| expander_passes(g, eps, spec.k, d, t)))
            .count();
        rows.push(row(eps, misses, effective_tail(cfg, eps)?, spec.k, d, t, cfg.trials));
    }
    let summary = Summary {
        kind: cfg.kind,
        check_passed: dominance_holds(&rows) && unit_block,
        check: "pass fraction >= 1 - theoretical_tail - 3 binomial_se; |lambda_r| = 1 in every trial".into(),
        failures: failure_count(&records),
        rows,
        rectified: None,
        scaling: None,
        isotropy: Vec::new(),
    };
    Ok((records, summary))
}

/// `λ` bound (and regime-2 entropy threshold) of a rectified regime; both are
/// independent of `C`.
pub fn regime_targets(cfg: &ExperimentConfig, x: f64) -> Result<(f64, Option<f64>)> {
    let b = bounds::three_regimes_budget(cfg.ensemble.d as u64, cfg.l_bound()?, x, cfg.regime()?, f64::MAX)?;
    Ok((b.lambda_bound.unwrap_or(f64::NAN), b.entropy_bound))
}

pub fn run_rectified_regimes(cfg: &ExperimentConfig) -> Result<(Vec<TrialRecord>, Summary)> {
    let spec = &cfg.ensemble;
    let d = spec.d;
    let regime = cfg.regime()?;
    let x = cfg.grid()?[0];
    let (lambda_bound, entropy_threshold) = regime_targets(cfg, x)?;

    let audit = validate_isotropy(
        &audit_spec(spec, cfg.l_bound()?)?,
        cfg.budget_inputs.isotropy_samples.unwrap_or(DEFAULT_PRECHECK_SAMPLES),
        cfg.budget_inputs.sigmas.unwrap_or(DEFAULT_SIGMAS),
        cfg.master_seed ^ REFERENCE_SEED_SALT,
    )?;
    if !audit.passed {
        return Err(config_err(format!(
            "ensemble failed the isotropy precheck (max {:.2} sigma, norm certified: {})",
            audit.max_sigma_multiple, audit.norm_certified
        )));
    }

    let omega = exact_twirl::<f64>(d, 1)?;
    let records = par_trials(cfg, 0..cfg.trials as u64, spec.k, |rec| {
        let ops = sample_kraus_set::<f64>(spec, cfg.master_seed, rec.trial_index)?;
        let ch = match rectify(&ops, DEFAULT_INVERT_TOL) {
            Ok(ch) => ch,
            Err(KblError::NotRectifiable { .. }) => {
                rec.rectifiable = Field::Value(false);
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        rec.rectifiable = Field::Value(true);
        let hat = ch.natural_rep();
        rec.deviation_opnorm = Field::Value(deviation_norm(&hat, &omega.superop)?);
        rec.tp_residual = Field::Value(ch.is_trace_preserving(TP_TOL)?.residual);
        let s = leading_moduli(&hat)?;
        rec.gap_modulus = Field::Value(s.modulus(2));
        rec.lambda_moduli = take_leading(&s);
        if let Ok(fp) = fixed_point(&ch) {
            rec.entropy_fixed_point = Field::Value(von_neumann_entropy(&fp.state)?);
        }
        Ok(())
    });

    let passes = |rec: &TrialRecord| rec.rectifiable == Field::Value(true) && rec.gap().is_some_and(|g| g <= lambda_bound);
    let n = cfg.trials;
    let rectified: Vec<&TrialRecord> = records.iter().filter(|r| r.rectifiable == Field::Value(true)).collect();
    let passing: Vec<&TrialRecord> = records.iter().filter(|r| passes(r)).collect();
    let misses = n - passing.len();
    let row = row(x, misses, effective_tail(cfg, x)?, spec.k, d, 1, n);

    let tp_ok = rectified
        .iter()
        .all(|r| r.tp_residual.value().is_some_and(|&res| res <= TP_TOL));
    let min_entropy_passing = entropy_threshold.map(|_| {
        passing
            .iter()
            .map(|r| r.entropy_fixed_point.value().copied().unwrap_or(f64::NEG_INFINITY))
            .fold(f64::INFINITY, f64::min)
    });
    let entropy_ok = match (entropy_threshold, min_entropy_passing) {
        (Some(h), Some(m)) => passing.is_empty() || m >= h,
        _ => true,
    };
    let rect = RectifiedSummary {
        regime,
        rectifiable_fraction: rectified.len() as f64 / n as f64,
        pass_fraction_rectified: if rectified.is_empty() {
            0.0
        } else {
            passing.len() as f64 / rectified.len() as f64
        },
        lambda_bound,
        entropy_threshold,
        min_entropy_passing: min_entropy_passing.filter(|m| m.is_finite()),
    };
    let rows = vec![row];
    let summary = Summary {
        kind: cfg.kind,
        check_passed: dominance_holds(&rows) && tp_ok && entropy_ok,
        check: "guarantee pass fraction >= 1 - theoretical_tail - 3 binomial_se; TP residual <= 1e-10 when rectified; \
                regime 2: fixed-point entropy >= delta ln d when passing"
            .into(),
        failures: failure_count(&records),
        rows,
        rectified: Some(rect),
        scaling: None,
        isotropy: vec![audit],
    };
    Ok((records, summary))
}

fn audit_spec(spec: &EnsembleSpec, l: f64) -> Result<EnsembleSpec> {
    let mut s = spec.clone();
    s.k = 1;
    if s.l_bound.is_none() {
        s = s.with_l_bound(l)?;
    }
    Ok(s)
}

pub fn run_scaling_sweep(cfg: &ExperimentConfig) -> Result<(Vec<TrialRecord>, Summary)> {
    let gamma = cfg.reference_gamma()?;
    if !gamma.is_plain() {
        return Err(config_err("scaling_sweep needs gamma = (1 x t)"));
    }
    let (d, t) = (cfg.ensemble.d, gamma.t());
    let omega = exact_twirl::<f64>(d, t)?;
    let ks = cfg.budget_inputs.k_grid.clone().unwrap_or_default();
    let l_w = cfg.budget_inputs.l_w;
    let n = cfg.trials as u64;

    let mut records = Vec::with_capacity(ks.len() * cfg.trials);
    let mut rows = Vec::with_capacity(ks.len());
    for (ki, &k) in ks.iter().enumerate() {
        let mut spec = cfg.ensemble.clone();
        spec.k = k;
        let base = ki as u64 * n;
        let batch = par_trials(cfg, base..base + n, k, |rec| {
            let ops = sample_kraus_set::<f64>(&spec, cfg.master_seed, rec.trial_index)?;
            let ch = match l_w {
                // uneven weights make a super-operator, not a channel
                Some(lw) => {
                    let weights = (0..k as u64)
                        .map(|i| {
                            let mut rng = SeededDraw::new(cfg.master_seed, rec.trial_index, i).rng(Stream::Weight);
                            rng.random::<f64>() * lw / k as f64
                        })
                        .collect();
                    KrausChannel::new(ops, weights)?
                }
                None => KrausChannel::uniform(ops)?,
            };
            let hat = ch.natural_rep();
            rec.deviation_opnorm = Field::Value(deviation_norm(&hat, &omega.superop)?);
            rec.tp_residual = Field::Value(ch.is_trace_preserving(TP_TOL)?.residual);
            Ok(())
        });
        let mut devs: Vec<f64> = batch.iter().filter_map(TrialRecord::deviation).collect();
        rows.push(SummaryRow {
            alpha: None,
            empirical_tail: None,
            binomial_se: None,
            theoretical_tail: None,
            vacuous: None,
            pass_fraction: None,
            median_deviation: median(&mut devs),
            k,
            d,
            t,
            trials: cfg.trials,
        });
        records.extend(batch);
    }

    let medians: Vec<f64> = rows.iter().filter_map(|r| r.median_deviation).collect();
    let ratios: Vec<f64> = medians.windows(2).map(|w| w[0] / w[1]).collect();
    let slope = if medians.len() >= 2 && medians.len() == ks.len() {
        let xs: Vec<f64> = ks.iter().map(|&k| (k as f64).ln()).collect();
        let ys: Vec<f64> = medians.iter().map(|m| m.ln()).collect();
        Field::Value(least_squares_slope(&xs, &ys))
    } else {
        Field::NA
    };
    // 1/√k: each ratio within ±20% of √(k_{i+1}/k_i)
    let scaling_ok = l_w.is_some()
        || ks
            .windows(2)
            .zip(&ratios)
            .all(|(w, &r)| {
                let target = (w[1] as f64 / w[0] as f64).sqrt();
                (0.8 * target..=1.2 * target).contains(&r)
            });
    let summary = Summary {
        kind: cfg.kind,
        check_passed: scaling_ok && ratios.len() + 1 == ks.len(),
        check: "successive median ratios within 20% of sqrt(k ratio) (uniform weights)".into(),
        failures: failure_count(&records),
        rows,
        rectified: None,
        scaling: Some(ScalingSummary {
            slope,
            median_ratios: ratios,
            uneven_weights: l_w.is_some(),
        }),
        isotropy: Vec::new(),
    };
    Ok((records, summary))
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

pub fn run_isotropy_audit(cfg: &ExperimentConfig) -> Result<(Vec<TrialRecord>, Summary)> {
    let l = cfg.l_bound()?;
    let report = validate_isotropy(
        &audit_spec(&cfg.ensemble, l)?,
        cfg.budget_inputs.isotropy_samples.unwrap_or(DEFAULT_AUDIT_SAMPLES),
        cfg.budget_inputs.sigmas.unwrap_or(DEFAULT_SIGMAS),
        cfg.master_seed,
    )?;
    let summary = Summary {
        kind: cfg.kind,
        check_passed: report.passed,
        check: "second moments within the sigma threshold and operator norms <= L".into(),
        failures: 0,
        rows: Vec::new(),
        rectified: None,
        scaling: None,
        isotropy: vec![report],
    };
    Ok((Vec::new(), summary))
}
