use kbl_core::bounds::{
    almost_invertible_budget, bernstein_tail, generalized_cp_budget, new_model_budget, tdesign_budget,
    three_regimes_budget, twirling_budget, BernsteinParams,
};
use kbl_core::ensembles::{ensemble_mv_constants, sample_kraus_set, validate_isotropy, EnsembleKind, EnsembleSpec};
use kbl_core::matcore;
use proptest::prelude::*;

proptest! {
    #[test]
    fn bernstein_tail_is_monotone(
        dim in 2.0f64..1e4,
        m in 1e-3f64..2.0,
        v in 1e-3f64..2.0,
        a in 1e-3f64..1.0,
        bump in 1.01f64..3.0,
    ) {
        let base = bernstein_tail(&BernsteinParams::new(dim, m, v, a).unwrap());
        let wider = bernstein_tail(&BernsteinParams::new(dim, m, v, a * bump).unwrap());
        let looser_m = bernstein_tail(&BernsteinParams::new(dim, m * bump, v, a).unwrap());
        let looser_v = bernstein_tail(&BernsteinParams::new(dim, m, v * bump, a).unwrap());
        let bigger = bernstein_tail(&BernsteinParams::new(dim * bump, m, v, a).unwrap());
        prop_assert!(wider <= base);
        prop_assert!(looser_m >= base && looser_v >= base && bigger >= base);
    }

    #[test]
    fn halving_alpha_quadruples_k(d in 2u64..512, t in 1u32..4, a in 0.01f64..1.0, c in 12.5f64..100.0) {
        let full = tdesign_budget(d, t, a, c).unwrap();
        let half = tdesign_budget(d, t, a / 2.0, c).unwrap();
        prop_assert!((half.k_real - 4.0 * full.k_real).abs() <= 1e-9 * half.k_real);
        prop_assert_eq!(half.tail_bound, full.tail_bound);
        prop_assert!(full.k as f64 >= full.k_real && (full.k as f64) < full.k_real + 1.0);
    }

    #[test]
    fn twirling_budget_is_tdesign_at_matching_alpha(d in 2u64..64, t in 1u32..3, frac in 0.01f64..1.0, c in 12.5f64..60.0) {
        let eps = frac * (d as f64).powf(t as f64 / 2.0);
        let tw = twirling_budget(d, t, eps, c).unwrap();
        let td = tdesign_budget(d, t, frac, c).unwrap();
        prop_assert!((tw.k_real - td.k_real).abs() <= 1e-9 * td.k_real);
    }

    #[test]
    fn larger_c_only_tightens_tails(d in 2u64..256, c in 41.0f64..200.0) {
        let l = std::f64::consts::SQRT_2;
        let lo = generalized_cp_budget(d, l, 0.5, c).unwrap();
        let hi = generalized_cp_budget(d, l, 0.5, c + 10.0).unwrap();
        prop_assert!(hi.tail_bound <= lo.tail_bound && hi.k >= lo.k);
    }
}

#[test]
fn regime_budgets_order_as_expected() {
    let l = std::f64::consts::SQRT_2;
    let g = generalized_cp_budget(8, l, 0.5, 48.0).unwrap();
    let nm = new_model_budget(8, l, 0.5, 48.0).unwrap();
    assert!(nm.k > g.k && nm.tail_bound > g.tail_bound);
    let ai = almost_invertible_budget(8, l, 0.5, 48.0).unwrap();
    assert!(ai.tail_bound <= g.tail_bound);
    let r3 = three_regimes_budget(8, l, 0.5, 3, 48.0).unwrap();
    assert_eq!(r3.k, 25553);
    assert_eq!(r3.tail_bound, nm.tail_bound);
    assert!(three_regimes_budget(8, l, 0.5, 4, 48.0).is_err());
}

#[test]
fn vacuous_flag_tracks_tail() {
    let tight = tdesign_budget(4, 1, 0.5, 30.0).unwrap();
    assert!(!tight.vacuous && tight.tail_bound < 1.0);
    let loose = tdesign_budget(2, 2, 1.0, 13.0).unwrap();
    assert!(loose.vacuous && loose.tail_bound >= 1.0);
}

#[test]
fn empirical_second_moments_stay_within_ensemble_bounds() {
    // the averaged Kraus sum of Haar unitaries deviates by O(1/√k); the
    // analytic M/V constants must dominate the observed tail at a loose alpha
    let spec = EnsembleSpec::new(EnsembleKind::HaarUnitary, 3, 200).unwrap();
    let mv = ensemble_mv_constants(&spec).unwrap();
    let tail = bernstein_tail(&BernsteinParams::new(mv.dim_sum as f64, mv.m_bound, mv.v_bound, 0.6).unwrap());
    assert!(tail < 0.5);
    let omega = kbl_core::twirl::exact_twirl::<f64>(3, 1).unwrap();
    let mut hits = 0;
    for trial in 0..20 {
        let ch = kbl_core::channels::KrausChannel::uniform(sample_kraus_set::<f64>(&spec, 8, trial).unwrap()).unwrap();
        let dev = matcore::op_norm(&(ch.natural_rep().matrix() - omega.matrix())).unwrap();
        if dev >= 0.6 {
            hits += 1;
        }
    }
    assert!((hits as f64) / 20.0 <= tail + 0.35);
}

#[test]
fn isotropy_audit_separates_good_and_degenerate_ensembles() {
    let haar = EnsembleSpec::new(EnsembleKind::HaarUnitary, 2, 1).unwrap();
    assert!(validate_isotropy(&haar, 4000, 5.0, 1).unwrap().passed);
    let herm = EnsembleSpec::new(EnsembleKind::HermitizedUnitary, 3, 1).unwrap();
    assert!(validate_isotropy(&herm, 4000, 5.0, 2).unwrap().passed);
    let ident = EnsembleSpec::new(EnsembleKind::Custom("identity".into()), 2, 1)
        .unwrap()
        .with_l_bound(1.0)
        .unwrap();
    assert!(!validate_isotropy(&ident, 4000, 5.0, 3).unwrap().passed);
}

#[test]
fn haar_first_moment_vanishes() {
    // E[U] = 0; the sample mean of n draws shrinks like 1/√n
    let spec = EnsembleSpec::new(EnsembleKind::HaarUnitary, 3, 4000).unwrap();
    let ops = sample_kraus_set::<f64>(&spec, 12, 0).unwrap();
    let mean = ops.iter().fold(matcore::identity::<f64>(3).scale(0.0), |acc, u| acc + u).unscale(4000.0);
    assert!(matcore::max_abs_entry(&mean) < 5.0 / (4000f64).sqrt());
}
