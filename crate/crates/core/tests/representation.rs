use kbl_core::channels::{two_two_norm, KrausChannel, SuperOpMatrix};
use kbl_core::ensembles::sample_ginibre;
use kbl_core::matcore::{self, max_abs_entry, CMatrix};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_channel(d: usize, k: usize, seed: u64) -> (KrausChannel<f64>, CMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ops = (0..k).map(|_| sample_ginibre::<f64, _>(d, &mut rng)).collect();
    let x = sample_ginibre::<f64, _>(d, &mut rng);
    (KrausChannel::uniform(ops).unwrap(), x)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn natural_rep_matches_kraus_action(d in 1usize..=4, k in 1usize..=5, seed in any::<u64>()) {
        let (ch, x) = random_channel(d, k, seed);
        let direct = matcore::vec(&ch.apply(&x).unwrap());
        let via_hat = ch.natural_rep().matrix() * matcore::vec(&x);
        let scale = 1.0 + direct.norm();
        prop_assert!((direct - via_hat).norm() <= 1e-12 * scale);
    }

    #[test]
    fn vec_unvec_round_trip(r in 1usize..=5, c in 1usize..=5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = CMatrix::<f64>::from_fn(r, c, |_, _| {
            let z = sample_ginibre::<f64, _>(1, &mut rng);
            z[(0, 0)]
        });
        let back = matcore::unvec(&matcore::vec(&x), r, c).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn schatten_norms_are_monotone_and_holder(d in 1usize..=6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = sample_ginibre::<f64, _>(d, &mut rng);
        let n1 = matcore::schatten_norm(&x, 1.0).unwrap();
        let n2 = matcore::schatten_norm(&x, 2.0).unwrap();
        let n3 = matcore::schatten_norm(&x, 3.0).unwrap();
        let ninf = matcore::op_norm(&x).unwrap();
        prop_assert!(ninf <= n3 + 1e-12 && n3 <= n2 + 1e-12 && n2 <= n1 + 1e-12);
        prop_assert!(n1 <= n2 * (d as f64).sqrt() + 1e-10);
        // ‖·‖₂ is the Frobenius norm
        prop_assert!((n2 - x.norm()).abs() <= 1e-10 * (1.0 + n2));
    }

    #[test]
    fn kron_is_multiplicative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = sample_ginibre::<f64, _>(2, &mut rng);
        let b = sample_ginibre::<f64, _>(3, &mut rng);
        let c = sample_ginibre::<f64, _>(2, &mut rng);
        let e = sample_ginibre::<f64, _>(3, &mut rng);
        let lhs = matcore::kron(&a, &b) * matcore::kron(&c, &e);
        let rhs = matcore::kron(&(&a * &c), &(&b * &e));
        prop_assert!(max_abs_entry(&(lhs - rhs)) < 1e-10);
    }

    #[test]
    fn two_two_norm_dominates_every_unit_input(d in 1usize..=3, seed in any::<u64>()) {
        let (a, _) = random_channel(d, 3, seed);
        let (b, _) = random_channel(d, 2, seed ^ 0x9e37_79b9);
        let theta = a.natural_rep().sub(&b.natural_rep()).unwrap();
        let bound = two_two_norm(&theta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        for _ in 0..20 {
            let x = sample_ginibre::<f64, _>(d, &mut rng);
            let x = x.unscale(x.norm());
            let y = theta.apply(&x).unwrap();
            prop_assert!(y.norm() <= bound + 1e-10);
        }
    }
}

#[test]
fn haar_unitary_channel_is_unital_and_trace_preserving() {
    use kbl_core::ensembles::{sample_kraus_set, EnsembleKind, EnsembleSpec};
    let spec = EnsembleSpec::new(EnsembleKind::HaarUnitary, 3, 7).unwrap();
    let ch = KrausChannel::uniform(sample_kraus_set::<f64>(&spec, 11, 0).unwrap()).unwrap();
    assert!(ch.is_trace_preserving(1e-12).unwrap().holds);
    assert!(ch.is_unital(1e-12).unwrap().holds);
}

#[test]
fn adjoint_is_dual_under_hilbert_schmidt() {
    let (ch, x) = random_channel(3, 4, 5);
    let (_, y) = random_channel(3, 1, 6);
    let lhs = (y.adjoint() * ch.apply(&x).unwrap()).trace();
    let rhs = (ch.apply_adjoint(&y).unwrap().adjoint() * x).trace();
    assert!((lhs - rhs).norm() < 1e-10);
}

#[test]
fn f32_and_f64_natural_reps_agree() {
    let (ch, _) = random_channel(2, 3, 77);
    let ops32: Vec<_> = ch.ops().iter().map(|a| a.map(|z| num_complex::Complex::new(z.re as f32, z.im as f32))).collect();
    let ch32 = KrausChannel::<f32>::uniform(ops32).unwrap();
    let hat64 = ch.natural_rep();
    let hat32: SuperOpMatrix<f32> = ch32.natural_rep();
    let diff = hat64
        .matrix()
        .iter()
        .zip(hat32.matrix().iter())
        .map(|(a, b)| (a - num_complex::Complex::new(b.re as f64, b.im as f64)).norm())
        .fold(0.0, f64::max);
    assert!(diff < 1e-5, "f32 drift {diff}");
}
