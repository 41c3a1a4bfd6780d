//! Random generators shared by the unit tests.

use proptest::prelude::*;
use std::f64::consts::{FRAC_PI_2, PI};

use crate::bilateral::BilateralConfig;
use crate::instruments::{MeasurementSpec, ReductionMode};
use crate::scenario::ObserverSetting;
use crate::unilateral::{SharingSequence, SharingStep};

pub fn mode() -> impl Strategy<Value = ReductionMode> {
    prop_oneof![Just(ReductionMode::Elliptical), Just(ReductionMode::Linear)]
}

/// Valid `(α, β)` with `β` of either sign.
pub fn sharpness_bias() -> impl Strategy<Value = (f64, f64)> {
    (0.01..=1.0f64, -0.999..0.999f64).prop_map(|(a, t)| (a, t * (1.0 - a)))
}

pub fn spec() -> impl Strategy<Value = MeasurementSpec> {
    (sharpness_bias(), -PI..PI).prop_map(|((alpha, beta), phi)| MeasurementSpec { alpha, beta, phi })
}

pub fn intermediate() -> impl Strategy<Value = ObserverSetting> {
    (spec(), spec(), mode(), mode()).prop_map(|(s0, s1, m0, m1)| ObserverSetting::intermediate([s0, s1], [m0, m1]))
}

pub fn terminal() -> impl Strategy<Value = ObserverSetting> {
    (spec(), spec()).prop_map(|(s0, s1)| ObserverSetting::terminal([s0, s1]))
}

pub fn theta() -> impl Strategy<Value = f64> {
    0.0..=FRAC_PI_2
}

pub fn bilateral_config() -> impl Strategy<Value = BilateralConfig> {
    (intermediate(), intermediate(), terminal(), terminal(), theta())
        .prop_map(|(a1, b1, a2, b2, theta)| BilateralConfig { a1, b1, a2, b2, theta })
}

pub fn sharing_step() -> impl Strategy<Value = SharingStep> {
    (0.01..=1.0f64, 0.0..0.999f64, mode()).prop_map(|(alpha, t, mode)| SharingStep {
        alpha,
        beta: t * (1.0 - alpha),
        mode,
    })
}

pub fn sharing_sequence(max_len: usize) -> impl Strategy<Value = SharingSequence> {
    (theta(), -PI..PI, prop::collection::vec(sharing_step(), 1..=max_len))
        .prop_map(|(theta, phi, steps)| SharingSequence { theta, phi, steps })
}
