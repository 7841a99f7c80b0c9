mod common;

use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use satqkd::gaussian::{
    apply_loss_noise, condition_on_measurement, symplectic_spectrum, tmsv_cm, CovMatrix,
    MeasurementKind, PHYSICALITY_TOLERANCE,
};
use satqkd::keyrate::{key_rate, BlockSize, FixedChannel, ProtocolParams, Scenario};
use satqkd::pass::{fading_averaged_cm, FadingStats};

fn run(suite: common::SuiteResult) {
    match suite {
        Ok(summary) => println!("{summary}"),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn purifications_are_pure() {
    run(common::purity_suite());
}

#[test]
fn spectra_match_dense_eigensolver() {
    run(common::oracle_suite(500, 2024));
}

#[test]
fn two_mode_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let s = common::random_symplectic(&mut rng, 2);
        let gamma = common::cm_with_spectrum(&s, &[3.7, 1.2]);
        let a = gamma.view((0, 0), (2, 2)).determinant();
        let b = gamma.view((2, 2), (2, 2)).determinant();
        let c = gamma.view((0, 2), (2, 2)).determinant();
        let delta = a + b + 2.0 * c;
        let det = gamma.determinant();
        let disc = (delta * delta - 4.0 * det).max(0.0).sqrt();
        let plus = ((delta + disc) / 2.0).sqrt();
        let minus = ((delta - disc) / 2.0).sqrt();
        let spectrum = symplectic_spectrum(&CovMatrix::new(gamma).unwrap()).unwrap();
        assert_relative_eq!(spectrum.values()[0], plus, max_relative = 1e-9);
        assert_relative_eq!(spectrum.values()[1], minus, max_relative = 1e-9);
    }
}

#[test]
fn weibull_transmittance_law() {
    run(common::weibull_suite(1_000_000));
}

#[test]
fn rates_are_ordered() {
    run(common::ordering_suite(200));
}

#[test]
fn rates_are_monotone() {
    run(common::monotonicity_suite());
}

#[test]
fn squeezed_beats_coherent_between_20_and_30_db() {
    for sc in Scenario::ALL {
        for i in 0..=20 {
            let db = 20.0 + 0.5 * f64::from(i);
            let ch = FixedChannel::from_attenuation_db(db, 1e-4).unwrap();
            let block = BlockSize::Finite(300_000_000_000);
            let coh = ProtocolParams::default()
                .with_variances(1.0, 2.0)
                .with_scenario(sc);
            let sq = coh.with_variances(0.1, 2.0);
            let kc = key_rate(&coh, &ch, block).unwrap().key_rate;
            let ks = key_rate(&sq, &ch, block).unwrap().key_rate;
            assert!(ks >= kc, "{sc} at {db} dB: squeezed {ks} < coherent {kc}");
        }
    }
}

fn physical(cm: &CovMatrix) -> bool {
    symplectic_spectrum(cm)
        .map(|s| {
            s.values()
                .iter()
                .all(|&nu| nu >= 1.0 - PHYSICALITY_TOLERANCE)
        })
        .unwrap_or(false)
}

fn arb_state() -> impl Strategy<Value = CovMatrix> {
    (any::<u64>(), 1.0f64..30.0, 1.0f64..30.0, 1.0f64..30.0).prop_map(|(seed, a, b, c)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = common::random_symplectic(&mut rng, 3);
        CovMatrix::new(common::cm_with_spectrum(&s, &[a, b, c])).unwrap()
    })
}

fn arb_measurement() -> impl Strategy<Value = MeasurementKind> {
    prop_oneof![
        Just(MeasurementKind::HomodyneX),
        Just(MeasurementKind::HomodyneP),
        Just(MeasurementKind::Heterodyne),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn conditioning_preserves_physicality(cm in arb_state(), mode in 0usize..3, kind in arb_measurement()) {
        let out = condition_on_measurement(&cm, mode, kind).unwrap();
        prop_assert_eq!(out.modes(), 2);
        prop_assert!(physical(&out));
    }

    #[test]
    fn lossy_noisy_channel_preserves_physicality(
        cm in arb_state(), mode in 0usize..3, eta in 1e-6f64..1.0, eps in 0.0f64..0.5
    ) {
        prop_assert!(physical(&apply_loss_noise(&cm, mode, eta, eps).unwrap()));
    }

    #[test]
    fn fading_channel_preserves_physicality(
        v in 1.0f64..1000.0, mean_eta in 1e-6f64..1.0, spread in 0.0f64..1.0, eps in 0.0f64..0.1
    ) {
        // Any ⟨√η⟩ with ⟨√η⟩² ≤ ⟨η⟩ arises from a two-point distribution.
        let stats = FadingStats {
            mean_eta,
            mean_sqrt_eta: (mean_eta * (1.0 - spread)).sqrt(),
            points: 1,
            duration: 1.0,
        };
        let cm = tmsv_cm(v).unwrap();
        prop_assert!(physical(&fading_averaged_cm(&cm, 1, &stats, eps).unwrap()));
    }

    #[test]
    fn deterministic_fading_is_loss(v in 1.0f64..100.0, eta in 1e-4f64..1.0, eps in 0.0f64..0.1) {
        let cm = tmsv_cm(v).unwrap();
        let fixed = apply_loss_noise(&cm, 1, eta, eps).unwrap();
        let faded = fading_averaged_cm(&cm, 1, &FadingStats::deterministic(eta, 1.0), eps).unwrap();
        prop_assert!((fixed.entries() - faded.entries()).abs().max() < 1e-12 * v);
    }

    #[test]
    fn key_rate_never_negative(
        vs in 0.1f64..=1.0, vm in 0.0f64..100.0, db in 0.0f64..60.0, eps in 0.0f64..0.1, k in 0usize..4
    ) {
        let p = ProtocolParams::default().with_variances(vs, vm).with_scenario(Scenario::ALL[k]);
        let ch = FixedChannel::from_attenuation_db(db, eps).unwrap();
        let r = key_rate(&p, &ch, BlockSize::Finite(1_000_000_000)).unwrap();
        prop_assert!(r.key_rate >= 0.0);
        prop_assert!(r.leakage >= 0.0);
    }
}
