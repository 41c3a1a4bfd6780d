use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use super::*;
use crate::bilateral::{build_elliptical_ansatz, build_linear_ansatz};
use crate::linalg::Mat4;
use crate::testutil;
use crate::unilateral::SharingStep;

fn sharp_pair(p0: f64, p1: f64) -> [MeasurementSpec; 2] {
    [MeasurementSpec::sharp(p0), MeasurementSpec::sharp(p1)]
}

fn tsirelson_settings() -> (ObserverSetting, ObserverSetting) {
    (
        ObserverSetting::terminal(sharp_pair(FRAC_PI_2, 0.0)),
        ObserverSetting::terminal(sharp_pair(FRAC_PI_4, 3.0 * FRAC_PI_4)),
    )
}

#[test]
fn tsirelson_saturated_by_standard_settings() {
    let rho = pure_state(FRAC_PI_4).unwrap();
    let (a, b) = tsirelson_settings();
    assert_abs_diff_eq!(chsh(&rho, &a, &b).unwrap().chsh, TSIRELSON, epsilon = 1e-12);
}

#[test]
fn product_state_respects_local_bound() {
    let rho = pure_state(0.0).unwrap();
    for i in 0..40 {
        let t = i as f64 * 0.37;
        let a = ObserverSetting::terminal(sharp_pair(t, 2.0 * t + 0.4));
        let b = ObserverSetting::terminal(sharp_pair(-t, 0.3 - t));
        let rec = chsh(&rho, &a, &b).unwrap();
        assert!(rec.max_over_placements() <= 2.0 + 1e-10);
    }
}

#[test]
fn unilateral_first_pair_sharp_reaches_tsirelson() {
    let seq = SharingSequence {
        theta: FRAC_PI_4,
        phi: FRAC_PI_4,
        steps: vec![SharingStep { alpha: 1.0, beta: 0.0, mode: ReductionMode::Elliptical }],
    };
    let recs = run_unilateral(&seq).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].pair, (1, 1));
    assert_abs_diff_eq!(recs[0].chsh, TSIRELSON, epsilon = 1e-12);
}

#[test]
fn vanishing_sharpness_leaves_state_alone() {
    let rho = pure_state(0.6).unwrap();
    let weak = MeasurementSpec { alpha: 1e-12, beta: 0.0, phi: 0.3 };
    for mode in [ReductionMode::Elliptical, ReductionMode::Linear] {
        let setting = ObserverSetting::intermediate([weak, MeasurementSpec { phi: 1.1, ..weak }], [mode; 2]);
        let out = unbiased_update(&rho, &setting, Side::B).unwrap();
        assert!(out.rho().max_abs_diff(rho.rho()) < 1e-10);
    }
}

#[test]
fn sharp_z_on_both_inputs_fully_dephases() {
    let rho = pure_state(FRAC_PI_4).unwrap();
    let z = MeasurementSpec::sharp(FRAC_PI_2);
    let setting = ObserverSetting::intermediate([z, z], [ReductionMode::Elliptical; 2]);
    let out = unbiased_update(&rho, &setting, Side::B).unwrap();
    let expected = Mat4::diag([0.5, 0.0, 0.0, 0.5]);
    assert!(out.rho().max_abs_diff(&expected) < 1e-12);
}

#[test]
fn terminal_observers_cannot_update() {
    let rho = pure_state(0.3).unwrap();
    let (a, _) = tsirelson_settings();
    assert!(matches!(unbiased_update(&rho, &a, Side::A), Err(crate::Error::Contract(_))));
    assert!(averaged_transfer(&a).is_err());
}

#[test]
fn single_step_contracts_x_correlation() {
    // Sharp input at angle 0 and (α, β) at π/2 scale ⟨σx σx⟩ by (1 + F)/2.
    let theta = 0.4;
    let spec = MeasurementSpec { alpha: 0.45, beta: 0.3, phi: FRAC_PI_2 };
    for mode in [ReductionMode::Elliptical, ReductionMode::Linear] {
        let f = crate::instruments::reduction_closed(&spec, mode).unwrap();
        let setting = ObserverSetting::intermediate([MeasurementSpec::sharp(0.0), spec], [mode; 2]);
        let rho = pure_state(theta).unwrap();
        let out = unbiased_update(&rho, &setting, Side::B).unwrap();
        let r = out.correlation_tensor();
        let s = (2.0 * theta).sin();
        assert_abs_diff_eq!(r[1][1], s * (1.0 + f) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[2][2], -s * f / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[3][3], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r[0][3], (2.0 * theta).cos() / 2.0, epsilon = 1e-12);
    }
}

#[test]
fn all_sharp_bilateral_kills_second_stage() {
    let (a, b) = tsirelson_settings();
    let mode = [ReductionMode::Elliptical; 2];
    let cfg = BilateralConfig {
        a1: ObserverSetting::intermediate(a.specs(), mode),
        b1: ObserverSetting::intermediate(b.specs(), mode),
        a2: a,
        b2: b,
        theta: FRAC_PI_4,
    };
    let recs = run_bilateral(&cfg).unwrap();
    assert_abs_diff_eq!(recs.s1(), TSIRELSON, epsilon = 1e-12);
    assert!(recs.s2() <= 2.0 + 1e-12);
    assert_eq!(recs.as_array().map(|r| r.pair), [(1, 1), (2, 2), (1, 2), (2, 1)]);
}

#[test]
fn sign_placements_differ_only_in_one_term() {
    let e = [[0.1, 0.2], [0.3, 0.4]];
    assert_abs_diff_eq!(SignPlacement::default().combine(&e), 0.1 + 0.2 + 0.3 - 0.4);
    assert_abs_diff_eq!(SignPlacement::MinusOn00.combine(&e), -0.1 + 0.2 + 0.3 + 0.4);
}

#[test]
fn pure_state_rejects_bad_angle() {
    assert!(pure_state(-0.1).is_err());
    assert!(pure_state(2.0).is_err());
    assert!(CorrelationTensor::pure(PI).is_err());
}

#[test]
fn tensor_of_pure_state_matches_density_matrix() {
    for theta in [0.0, 0.3, FRAC_PI_4, 1.2, FRAC_PI_2] {
        let direct = CorrelationTensor::from_state(&pure_state(theta).unwrap());
        let closed = CorrelationTensor::pure(theta).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(direct.r[i][j], closed.r[i][j], epsilon = 1e-14);
            }
        }
    }
}

#[test]
fn second_pair_has_no_cosine_term() {
    for alpha in [0.1, 0.3, 0.55, 0.9] {
        for phi in [0.05, 0.2, 0.7] {
            for cfg in [build_elliptical_ansatz(alpha, phi).unwrap(), build_linear_ansatz(alpha, phi).unwrap()] {
                let t = extract_affine_coeffs(Pair::Second, &cfg).unwrap();
                assert!(t.t_c.abs() < 1e-10, "t_c = {}", t.t_c);
                assert!(t.phase.sin().abs() < 1e-9);
                if phi < 0.3 {
                    assert!(t.phase.abs() < 1e-9);
                }
            }
        }
    }
}

fn elliptical_first_triple(a: f64, p: f64) -> (f64, f64, f64) {
    let c = |x: f64| x.cos();
    let s = |x: f64| x.sin();
    let t_s = 0.5
        * (a + c(p / 4.0)
            + c(3.0 * p / 4.0)
            + a * (2.0 * c(p / 2.0) - a * (c(3.0 * p / 4.0) + c(5.0 * p / 4.0)) + c(3.0 * p / 2.0)));
    let t_c = (1.0 - a) * (-1.0 + 2.0 * c(p / 4.0)) * (1.0 + a + 2.0 * a * (c(p / 4.0) + c(p / 2.0))) * s(p / 4.0);
    let t_r = 0.5
        * (2.0 - 5.0 * a + 2.0 * a * a + c(p / 4.0) - c(3.0 * p / 4.0)
            + a * c(p / 2.0) * (3.0 - 2.0 * c(p) + 4.0 * a * s(p / 4.0) * s(p / 2.0)));
    (t_s, t_c, t_r)
}

fn linear_first_triple(a: f64, p: f64) -> (f64, f64, f64) {
    let c = |x: f64| x.cos();
    let s = |x: f64| x.sin();
    let t_s = 0.5
        * (1.0 - a * a + c(p / 2.0) + a * (2.0 * (c(3.0 * p / 4.0) + c(5.0 * p / 4.0)) - a * c(2.0 * p)));
    let t_c = -2.0 * (a - 1.0) * (s(p / 4.0) + a * s(p));
    let t_r = 0.5
        * (1.0 - 4.0 * a + 3.0 * a * a + c(p / 2.0) + 2.0 * a * c(3.0 * p / 4.0)
            - 2.0 * a * c(5.0 * p / 4.0)
            - a * a * c(2.0 * p));
    (t_s, t_c, t_r)
}

#[test]
fn elliptical_first_triple_spot_value() {
    let cfg = build_elliptical_ansatz(0.5, 0.2).unwrap();
    let t = extract_affine_coeffs(Pair::First, &cfg).unwrap();
    let (s, c, r) = elliptical_first_triple(0.5, 0.2);
    assert_abs_diff_eq!(t.t_s, s, epsilon = 1e-9);
    assert_abs_diff_eq!(t.t_c, c, epsilon = 1e-9);
    assert_abs_diff_eq!(t.t_r, r, epsilon = 1e-9);
    assert!(t.amp >= t.t_s.abs() && t.amp >= t.t_c.abs());
}

#[test]
fn first_triples_match_closed_forms_across_parameters() {
    for alpha in [0.05, 0.3, 0.62, 1.0] {
        for phi in [-0.4, 0.0, 0.13, 0.9, 2.5] {
            let cases = [
                (build_elliptical_ansatz(alpha, phi).unwrap(), elliptical_first_triple(alpha, phi)),
                (build_linear_ansatz(alpha, phi).unwrap(), linear_first_triple(alpha, phi)),
            ];
            for (cfg, (s, c, r)) in cases {
                let t = extract_affine_coeffs(Pair::First, &cfg).unwrap();
                assert_abs_diff_eq!(t.t_s, s, epsilon = 1e-9);
                assert_abs_diff_eq!(t.t_c, c, epsilon = 1e-9);
                assert_abs_diff_eq!(t.t_r, r, epsilon = 1e-9);
            }
        }
    }
}

#[test]
fn degenerate_triple_flags_phase() {
    let t = crate::bilateral::CoefficientTriple::new(0.0, 0.0, 2.0);
    assert!(!t.phase_defined);
    assert_eq!(t.phase, 0.0);
    assert_eq!(t.optimal_theta(), FRAC_PI_4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bilateral_chsh_within_tsirelson(cfg in testutil::bilateral_config()) {
        let recs = run_bilateral(&cfg).unwrap();
        for r in recs.as_array() {
            prop_assert!(r.max_over_placements() <= TSIRELSON + 1e-8);
        }
    }

    #[test]
    fn states_stay_valid_through_bilateral_updates(cfg in testutil::bilateral_config()) {
        let rho0 = pure_state(cfg.theta).unwrap();
        let ra = unbiased_update(&rho0, &cfg.a1, Side::A).unwrap();
        let rab = unbiased_update(&ra, &cfg.b1, Side::B).unwrap();
        prop_assert!(ra.is_valid(1e-10));
        prop_assert!(rab.is_valid(1e-10));
    }

    #[test]
    fn states_stay_valid_along_unilateral_chain(seq in testutil::sharing_sequence(6)) {
        let bobs = seq.bob_settings();
        let mut rho = pure_state(seq.theta).unwrap();
        for bob in &bobs[..bobs.len() - 1] {
            rho = unbiased_update(&rho, bob, Side::B).unwrap();
            prop_assert!(rho.is_valid(1e-10));
        }
    }

    #[test]
    fn tensor_route_matches_density_matrices(cfg in testutil::bilateral_config()) {
        let recs = run_bilateral(&cfg).unwrap();
        let fast = fast_bilateral(&cfg).unwrap();
        for (r, f) in recs.as_array().iter().zip(fast) {
            prop_assert!((r.chsh - f).abs() < 1e-12);
        }
    }

    #[test]
    fn tensor_route_matches_unilateral_chain(seq in testutil::sharing_sequence(5)) {
        let recs = run_unilateral(&seq).unwrap();
        let fast = crate::unilateral::chain_chsh(&seq).unwrap();
        for (r, f) in recs.iter().zip(fast) {
            prop_assert!((r.chsh - f).abs() < 1e-12);
        }
    }

    #[test]
    fn chsh_is_affine_in_double_angle(cfg in testutil::bilateral_config(), thetas in prop::collection::vec(0.0..=FRAC_PI_2, 20)) {
        for pair in [Pair::First, Pair::Second] {
            let t = extract_affine_coeffs(pair, &cfg).unwrap();
            for &th in &thetas {
                let recs = run_bilateral(&cfg.with_theta(th)).unwrap();
                let s = match pair { Pair::First => recs.s1(), Pair::Second => recs.s2() };
                prop_assert!((s - t.eval(th)).abs() < 1e-10);
            }
        }
    }
}
