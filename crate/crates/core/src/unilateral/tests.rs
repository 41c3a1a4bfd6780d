use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, SQRT_2};

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::instruments::reduction_closed;
use crate::scenario::{pure_state, unbiased_update, TSIRELSON};
use crate::linalg::Side;

fn linear_step(alpha: f64) -> SharingStep {
    SharingStep { alpha, beta: 0.0, mode: ReductionMode::Linear }
}

#[test]
fn first_observer_coefficients_are_the_pure_state() {
    let theta = 0.3;
    let c = state_coeffs(1, theta, &[]).unwrap();
    let (s, co) = (2.0 * theta).sin_cos();
    assert_eq!((c.t_x, c.t_y, c.t_z, c.z1, c.z2), (s, -s, 1.0, co, co));
}

#[test]
fn second_observer_after_identity_channel() {
    let c = state_coeffs(2, 0.5, &[1.0]).unwrap();
    let s = 1f64.sin();
    assert_abs_diff_eq!(c.t_x, s);
    assert_abs_diff_eq!(c.t_y, -s / 2.0);
    assert_abs_diff_eq!(c.t_z, 0.5);
}

#[test]
fn third_observer_coefficients_match_simulation() {
    let c = state_coeffs(3, FRAC_PI_4, &[0.8, 0.6]).unwrap();
    assert_abs_diff_eq!(c.t_x, 0.72, epsilon = 1e-15);
    // Linear steps with α = 0.2, 0.4 realise F = 0.8, 0.6.
    let seq = SharingSequence { theta: FRAC_PI_4, phi: 0.3, steps: vec![linear_step(0.2), linear_step(0.4), linear_step(1.0)] };
    let bobs = seq.bob_settings();
    let mut rho = pure_state(FRAC_PI_4).unwrap();
    for bob in &bobs[..2] {
        rho = unbiased_update(&rho, bob, Side::B).unwrap();
    }
    let r = rho.correlation_tensor();
    assert_abs_diff_eq!(r[1][1], c.t_x, epsilon = 1e-9);
    assert_abs_diff_eq!(r[2][2], c.t_y, epsilon = 1e-9);
    assert_abs_diff_eq!(r[3][3], c.t_z, epsilon = 1e-9);
    assert_abs_diff_eq!(r[3][0], c.z1, epsilon = 1e-9);
    assert_abs_diff_eq!(r[0][3], c.z2, epsilon = 1e-9);
}

#[test]
fn short_factor_list_is_rejected() {
    assert!(matches!(state_coeffs(3, 0.2, &[0.5]), Err(Error::Contract(_))));
    assert!(matches!(chsh_closed(0, 0.2, 0.1, 0.5, 0.0, &[]), Err(Error::Contract(_))));
    assert!(transmission(2, &[1.5]).is_err());
}

#[test]
fn sharp_first_pair_is_tsirelson() {
    assert_abs_diff_eq!(chsh_closed(1, FRAC_PI_4, FRAC_PI_4, 1.0, 0.0, &[]).unwrap(), 2.0 * SQRT_2, epsilon = 1e-14);
}

#[test]
fn second_pair_after_weak_elliptical_step() {
    let f = reduction_closed(&MeasurementSpec { alpha: 0.5, beta: 0.0, phi: FRAC_PI_2 }, ReductionMode::Elliptical)
        .unwrap();
    assert_abs_diff_eq!(f, 0.75f64.sqrt(), epsilon = 1e-15);
    for phi in [0.1f64, 0.7, 1.3] {
        let expected = 2.0 * (phi.cos() * (1.0 + f) / 2.0 + 0.5 * phi.sin());
        assert_abs_diff_eq!(chsh_closed(2, FRAC_PI_4, phi, 1.0, 0.0, &[f]).unwrap(), expected, epsilon = 1e-14);
        let seq = SharingSequence {
            theta: FRAC_PI_4,
            phi,
            steps: vec![
                SharingStep { alpha: 0.5, beta: 0.0, mode: ReductionMode::Elliptical },
                SharingStep { alpha: 1.0, beta: 0.0, mode: ReductionMode::Elliptical },
            ],
        };
        assert_abs_diff_eq!(run_unilateral(&seq).unwrap()[1].chsh, expected, epsilon = 1e-12);
    }
}

fn random_chain(rng: &mut ChaCha8Rng, mode: ReductionMode) -> SharingSequence {
    let n = rng.gen_range(1..=6);
    let steps = (0..n)
        .map(|_| {
            let alpha = rng.gen_range(0.01..=1.0);
            let beta = rng.gen_range(-1.0..1.0) * (1.0 - alpha);
            SharingStep { alpha, beta, mode }
        })
        .collect();
    SharingSequence { theta: rng.gen_range(0.0..=FRAC_PI_2), phi: rng.gen_range(-3.0..3.0), steps }
}

#[test]
fn closed_form_matches_simulation_on_random_chains() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for mode in [ReductionMode::Elliptical, ReductionMode::Linear] {
        for _ in 0..500 {
            let seq = random_chain(&mut rng, mode);
            let f = seq.reduction_factors().unwrap();
            let recs = run_unilateral(&seq).unwrap();
            for (i, (rec, step)) in recs.iter().zip(&seq.steps).enumerate() {
                let closed = chsh_closed(i + 1, seq.theta, seq.phi, step.alpha, step.beta, &f).unwrap();
                assert!((closed - rec.chsh).abs() < 1e-9, "k = {}: {closed} vs {}", i + 1, rec.chsh);
            }
        }
    }
}

#[test]
fn lower_bound_examples() {
    assert_abs_diff_eq!(lower_bound(1, FRAC_PI_4, FRAC_PI_3, 1.0).unwrap(), 1.0 / 3f64.sqrt(), epsilon = 1e-12);
    assert_abs_diff_eq!(lower_bound(1, FRAC_PI_4, FRAC_PI_2, 1.0).unwrap(), 1.0, epsilon = 1e-12);
    assert!(lower_bound(1, FRAC_PI_4, 1e-6, 1.0).unwrap() < 1e-6);
    assert!(matches!(lower_bound(2, 0.0, 0.3, 1.0), Err(Error::OutOfRegime(_))));
    assert!(matches!(lower_bound(1, FRAC_PI_4, 0.0, 1.0), Err(Error::OutOfRegime(_))));
}

#[test]
fn beta_interval_at_maximal_entanglement_is_upper_limited_only() {
    for alpha in [0.3, 0.6, 0.9] {
        let (lo, hi) = beta_interval(1, FRAC_PI_4, 0.4, alpha, 1.0).unwrap();
        assert_eq!(lo, 0.0);
        assert_abs_diff_eq!(hi, 1.0 - alpha);
    }
}

#[test]
fn beta_interval_just_above_bound_is_admissible() {
    let (theta, phi) = (0.7, 0.4);
    let bound = lower_bound(1, theta, phi, 1.0).unwrap();
    let alpha = bound + 1e-3;
    let (lo, hi) = beta_interval(1, theta, phi, alpha, 1.0).unwrap();
    assert!(lo < hi);
    for t in [0.01, 0.5, 0.99, 1.0] {
        let beta = lo + t * (hi - lo);
        assert!(chsh_closed(1, theta, phi, alpha, beta, &[]).unwrap() > 2.0);
    }
    assert!(matches!(beta_interval(1, theta, phi, bound, 1.0), Err(Error::EmptyInterval(_))));
}

/// For a fixed `(θ, φ, 𝒯)`: is some grid `β ∈ [0, 1 − α]` violating?
fn grid_feasible(k: usize, theta: f64, phi: f64, alpha: f64, f: &[f64]) -> bool {
    (0..50).any(|j| {
        let beta = (1.0 - alpha) * j as f64 / 49.0;
        chsh_closed(k, theta, phi, alpha, beta, f).unwrap() > 2.0
    })
}

#[test]
fn lower_bound_agrees_with_grid_search() {
    let f_all = [0.9, 0.7];
    let cases = [(FRAC_PI_4, 0.5), (0.7, 0.3), (0.75, 0.15), (FRAC_PI_4, 0.2)];
    for k in 1..=3 {
        let f = &f_all[..k - 1];
        let t = transmission(k, f).unwrap();
        for &(theta, phi) in &cases {
            let Ok(bound) = lower_bound(k, theta, phi, t) else { continue };
            for i in 0..50 {
                let alpha = 0.01 + 0.98 * i as f64 / 49.0;
                if (alpha - bound).abs() < 0.02 {
                    continue;
                }
                assert_eq!(grid_feasible(k, theta, phi, alpha, f), alpha > bound, "k={k} θ={theta} φ={phi} α={alpha}");
            }
        }
    }
}

#[test]
fn sharp_single_chain_is_valid() {
    let seq = SharingSequence {
        theta: FRAC_PI_4,
        phi: FRAC_PI_4,
        steps: vec![SharingStep { alpha: 1.0, beta: 0.0, mode: ReductionMode::Elliptical }],
    };
    let report = validate_sequence(&seq);
    assert!(report.valid, "{report:?}");
    assert_abs_diff_eq!(report.steps[0].margin_simulated, TSIRELSON - 2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(report.steps[0].margin_closed, TSIRELSON - 2.0, epsilon = 1e-12);
}

#[test]
fn zero_sharpness_invalidates_chain() {
    let mut seq = construct_sequence(&Theorem1Params::new(3, Case::II), PHI_START).unwrap();
    seq.steps[0].alpha = 0.0;
    let report = validate_sequence(&seq);
    assert!(!report.valid);
    assert!(!report.steps[0].alpha_in_range);
    assert!(report.error.is_some());
}

#[test]
fn two_observer_case_one_witness() {
    let seq = construct_sequence(&Theorem1Params::new(2, Case::I), PHI_START).unwrap();
    assert_eq!(seq.steps.iter().map(|s| s.mode).collect::<Vec<_>>(), [ReductionMode::Elliptical; 2]);
    let report = validate_sequence(&seq);
    assert!(report.valid, "{report:?}");
    assert!(run_unilateral(&seq).unwrap().iter().all(|r| r.chsh > 2.0));
}

#[test]
fn case_two_five_observers() {
    let params = Theorem1Params::new(5, Case::II);
    assert_eq!(params.e, 5.0);
    let seq = construct_sequence(&params, PHI_START).unwrap();
    assert!(seq.steps.iter().all(|s| s.alpha > 0.0 && s.alpha < 1.0));
    assert!(seq.steps.iter().all(|s| s.mode == ReductionMode::Linear));
    let report = validate_sequence(&seq);
    assert!(report.steps.iter().all(|s| s.margin_closed > 0.0 && s.above_bound && s.beta_admissible));
    assert!(report.steps.iter().all(|s| s.s_simulated > 2.0), "{report:?}");
}

#[test]
fn case_three_alternates_modes() {
    let params = Theorem1Params::new(4, Case::III);
    assert_eq!(params.e, 3.0);
    let seq = construct_sequence(&params, PHI_START).unwrap();
    let modes: Vec<_> = seq.steps.iter().map(|s| s.mode).collect();
    use ReductionMode::{Elliptical as E, Linear as L};
    assert_eq!(modes, [L, E, L, E]);
    assert!(validate_sequence(&seq).valid);
}

#[test]
fn case_three_six_observers_needs_bias_beyond_double_precision() {
    // 1 − β_1 would be of order φ³, far below the spacing of doubles near 1.
    let err = construct_sequence(&Theorem1Params::new(6, Case::III), PHI_START).unwrap_err();
    assert!(matches!(err, Error::ConstructionFailed(_)), "{err}");
}

#[test]
fn short_chains_round_trip_through_validation() {
    for case in [Case::I, Case::II, Case::III] {
        for n in 2..=3 {
            let seq = construct_sequence(&Theorem1Params::new(n, case), PHI_START).unwrap();
            assert_eq!(seq.len(), n);
            let report = validate_sequence(&seq);
            assert!(report.valid, "case {case} N={n}: {report:?}");
        }
    }
}

#[test]
fn ppm_rule_takes_upper_end() {
    let params = Theorem1Params { delta: BetaRule::Ppm, ..Theorem1Params::new(3, Case::II) };
    let seq = construct_sequence(&params, PHI_START).unwrap();
    for s in &seq.steps {
        assert_abs_diff_eq!(s.beta, 1.0 - s.alpha, epsilon = 1e-15);
    }
    assert!(validate_sequence(&seq).valid);
}

#[test]
fn params_enforce_case_invariants() {
    assert!(Theorem1Params::new(1, Case::I).validate().is_err());
    assert!(Theorem1Params { e: 3.9, ..Theorem1Params::new(3, Case::I) }.validate().is_err());
    assert!(Theorem1Params { e: 4.0, ..Theorem1Params::new(3, Case::I) }.validate().is_ok());
    assert!(Theorem1Params { e: 3.0, ..Theorem1Params::new(4, Case::II) }.validate().is_err());
    assert!(Theorem1Params { e: 3.0, ..Theorem1Params::new(6, Case::III) }.validate().is_err());
    assert!(Theorem1Params { c: f64::INFINITY, ..Theorem1Params::new(3, Case::I) }.validate().is_err());
    assert!(construct_sequence(&Theorem1Params::new(1, Case::II), PHI_START).is_err());
}

#[test]
fn impossible_chain_reports_construction_failure() {
    let err = construct_sequence(&Theorem1Params::new(8, Case::I), PHI_START).unwrap_err();
    assert!(matches!(err, Error::ConstructionFailed(_)), "{err}");
}

#[test]
fn cancellation_free_margin_agrees_with_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let seq = random_chain(&mut rng, ReductionMode::Elliptical);
        let f = seq.reduction_factors().unwrap();
        let report = validate_sequence(&seq);
        for (i, s) in report.steps.iter().enumerate() {
            let direct = chsh_closed(i + 1, seq.theta, seq.phi, s.alpha, s.beta, &f).unwrap() - 2.0;
            assert!((direct - s.margin_closed).abs() < 1e-12);
        }
    }
}

proptest! {
    #[test]
    fn transmission_never_increases(f in prop::collection::vec(0.0..=1.0f64, 0..12)) {
        let mut prev = 1.0;
        for k in 1..=f.len() + 1 {
            let t = transmission(k, &f).unwrap();
            prop_assert!(t <= prev + 1e-15);
            prev = t;
        }
    }

    #[test]
    fn coefficients_stay_in_unit_range(theta in 0.0..=FRAC_PI_2, f in prop::collection::vec(0.0..=1.0f64, 0..8)) {
        let c = state_coeffs(f.len() + 1, theta, &f).unwrap();
        prop_assert!(c.t_x.abs() <= 1.0 && c.t_y.abs() <= 1.0);
        prop_assert!((c.t_z - 0.5f64.powi(f.len() as i32)).abs() < 1e-15);
    }
}

