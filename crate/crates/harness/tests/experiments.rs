use kbl_harness::output::{read_records, write_csv, write_jsonl};
use kbl_harness::{run, ExperimentConfig, HarnessError};

fn cfg(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(text).unwrap()
}

#[test]
fn records_are_conserved_and_summary_recomputes() {
    let c = cfg(r#"{"kind":"tail_probability","ensemble":{"kind":"haar_unitary","d":3,"k":12},
        "alpha_grid":[0.2,0.4,0.8],"trials":40,"master_seed":3}"#);
    let out = run(&c, 2).unwrap();
    assert_eq!(out.records.len(), 40);
    for (i, r) in out.records.iter().enumerate() {
        assert_eq!(r.trial_index, i as u64);
    }
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &out.records, &out.summary).unwrap();
    let parsed = read_records(std::str::from_utf8(&buf).unwrap()).unwrap();
    assert_eq!(parsed, out.records);
    for row in &out.summary.rows {
        let a = row.alpha.unwrap();
        let hits = parsed.iter().filter(|r| r.deviation().is_none_or(|d| d >= a)).count();
        assert_eq!(row.empirical_tail.unwrap(), hits as f64 / 40.0);
    }
}

#[test]
fn single_operator_deviation_never_exceeds_two() {
    let c = cfg(r#"{"kind":"tail_probability","ensemble":{"kind":"haar_unitary","d":2,"k":1},
        "alpha_grid":[2.5],"trials":30,"master_seed":1}"#);
    let out = run(&c, 1).unwrap();
    assert_eq!(out.summary.rows[0].empirical_tail, Some(0.0));
    assert!(out.records.iter().all(|r| r.deviation().unwrap() <= 2.0 + 1e-12));
}

#[test]
fn generalized_gamma_uses_monte_carlo_reference() {
    let c = cfg(r#"{"kind":"tail_probability",
        "ensemble":{"kind":"tensor_power_unitary","gamma":["1","-"],"d":2,"k":40},
        "alpha_grid":[0.9],"trials":5,"master_seed":2,"budget_inputs":{"mc_samples":3200}}"#);
    let out = run(&c, 1).unwrap();
    assert!(out.records.iter().all(|r| r.reference_se.value().is_some_and(|&s| s > 0.0)));
}

#[test]
fn twirling_check_rejects_eps_above_cap() {
    let c = cfg(r#"{"kind":"twirling_check","ensemble":{"kind":"haar_unitary","d":2,"k":10},
        "eps":[1.5],"trials":5,"master_seed":1}"#);
    assert!(matches!(run(&c, 1), Err(HarnessError::Config(_))));
}

#[test]
fn twirling_check_certifies_most_trials_at_budget() {
    let c = cfg(r#"{"kind":"twirling_check","ensemble":{"kind":"haar_unitary","d":2,"k":1},
        "eps":[0.8],"trials":60,"master_seed":5,"budget_inputs":{"C":30.0,"derive_k":true}}"#);
    let out = run(&c, 2).unwrap();
    let row = &out.summary.rows[0];
    assert!(out.summary.check_passed, "{row:?}");
}

#[test]
fn expander_with_too_many_operators_always_fails() {
    let c = cfg(r#"{"kind":"expander_campaign",
        "ensemble":{"kind":"tensor_power_unitary","gamma":["1"],"d":2,"k":16},
        "eps":[0.99],"trials":10,"master_seed":4}"#);
    let out = run(&c, 1).unwrap();
    assert_eq!(out.summary.rows[0].pass_fraction, Some(0.0));
}

#[test]
fn expander_campaign_keeps_unit_block() {
    let c = cfg(r#"{"kind":"expander_campaign",
        "ensemble":{"kind":"tensor_power_unitary","gamma":["1","1"],"d":4,"k":1},
        "eps":[0.9],"trials":20,"master_seed":6,"budget_inputs":{"C":30.0,"derive_k":true}}"#);
    let out = run(&c, 2).unwrap();
    assert!(out.records[0].k < 256);
    assert!(out.summary.check_passed, "{:?}", out.summary.rows);
}

#[test]
fn all_unitary_custom_ensemble_is_always_rectifiable() {
    let c = cfg(r#"{"kind":"rectified_regimes",
        "ensemble":{"kind":"custom","tag":"haar_unitary","d":4,"k":200,"L":1.0},
        "eps":[0.9],"trials":10,"master_seed":7,"budget_inputs":{"regime":3}}"#);
    let out = run(&c, 2).unwrap();
    assert_eq!(out.summary.rectified.as_ref().unwrap().rectifiable_fraction, 1.0);
}

#[test]
fn degenerate_custom_ensemble_fails_isotropy_precheck() {
    let c = cfg(r#"{"kind":"rectified_regimes",
        "ensemble":{"kind":"custom","tag":"identity","d":2,"k":20,"L":1.0},
        "eps":[0.9],"trials":3,"master_seed":7,"budget_inputs":{"regime":3}}"#);
    assert!(matches!(run(&c, 1), Err(HarnessError::Config(_))));
}

#[test]
fn regime_two_passing_trials_have_high_entropy_fixed_points() {
    let c = cfg(r#"{"kind":"rectified_regimes","ensemble":{"kind":"hermitized_unitary","d":4,"k":400},
        "trials":12,"master_seed":8,"budget_inputs":{"regime":2,"delta":0.5}}"#);
    let out = run(&c, 2).unwrap();
    let rect = out.summary.rectified.as_ref().unwrap();
    let h = rect.entropy_threshold.unwrap();
    assert!((h - 0.5 * 4f64.ln()).abs() < 1e-12);
    if let Some(m) = rect.min_entropy_passing {
        assert!(m >= h);
    }
}

#[test]
fn scaling_with_one_k_has_no_slope() {
    let c = cfg(r#"{"kind":"scaling_sweep","ensemble":{"kind":"haar_unitary","d":2,"k":1},
        "trials":20,"master_seed":9,"budget_inputs":{"k_grid":[16]}}"#);
    let out = run(&c, 1).unwrap();
    let s = out.summary.scaling.unwrap();
    assert_eq!(serde_json::to_string(&s.slope).unwrap(), "\"NotApplicable\"");
}

#[test]
fn uneven_weights_lose_mass() {
    // weights ~ U[0, 1/k] carry about half the mass, so Φ̂ ≈ Ω̂/2
    let c = cfg(r#"{"kind":"scaling_sweep","ensemble":{"kind":"haar_unitary","d":2,"k":1},
        "trials":40,"master_seed":10,"budget_inputs":{"k_grid":[400],"L_w":1.0}}"#);
    let out = run(&c, 2).unwrap();
    let m = out.summary.rows[0].median_deviation.unwrap();
    assert!((m - 0.5).abs() < 0.15, "median deviation {m}");
    assert!(out.records.iter().all(|r| *r.tp_residual.value().unwrap() > 0.1));
}

#[test]
fn csv_has_header_and_one_line_per_row() {
    let c = cfg(r#"{"kind":"tail_probability","ensemble":{"kind":"haar_unitary","d":2,"k":8},
        "alpha_grid":[0.3,0.6],"trials":5,"master_seed":11}"#);
    let out = run(&c, 1).unwrap();
    let mut buf = Vec::new();
    write_csv(&mut buf, &out.summary.rows).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("alpha,empirical_tail,binomial_se,theoretical_tail,vacuous"));
    assert!(!text.contains('\r'));
}

#[test]
fn isotropy_audit_kind_reports() {
    let c = cfg(r#"{"kind":"isotropy_audit","ensemble":{"kind":"haar_unitary","d":2,"k":1},
        "trials":1,"master_seed":12,"budget_inputs":{"isotropy_samples":5000}}"#);
    let out = run(&c, 1).unwrap();
    assert!(out.records.is_empty());
    assert!(out.summary.check_passed);
}

#[test]
fn timing_is_opt_in() {
    let base = r#"{"kind":"tail_probability","ensemble":{"kind":"haar_unitary","d":2,"k":4},
        "alpha_grid":[0.5],"trials":3,"master_seed":13"#;
    let plain = run(&cfg(&format!("{base}}}")), 1).unwrap();
    assert!(plain.records.iter().all(|r| r.wall_time_ms.is_none()));
    let timed = run(&cfg(&format!("{base},\"record_timing\":true}}")), 1).unwrap();
    assert!(timed.records.iter().all(|r| r.wall_time_ms.is_some()));
}
