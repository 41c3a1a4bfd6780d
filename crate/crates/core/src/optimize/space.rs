use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bilateral::BilateralConfig;
use crate::error::{contract, Error, Result};
use crate::instruments::{MeasurementSpec, ReductionMode};
use crate::scenario::{fast_bilateral, fast_unilateral, run_bilateral, run_unilateral_settings, ObserverSetting};

/// Smallest sharpness the optimizer may use.
pub const ALPHA_MIN: f64 = 1e-9;

/// Sharpness enters through `α = sin u`, which keeps `√(1 − α)`-type
/// reduction factors differentiable at `α = 1`.
fn alpha_of(u: f64) -> f64 {
    u.sin()
}

/// Representative of `phi` modulo `2π` in `[−π, π]`.
fn wrap_angle(phi: f64) -> f64 {
    let w = (phi + PI).rem_euclid(2.0 * PI) - PI;
    if w < -PI {
        -PI
    } else {
        w
    }
}


#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// `A_1` against `B_1, B_2` in sequence.
    UnilateralK2,
    /// `A_1, A_2` against `B_1, B_2`.
    Bilateral,
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::UnilateralK2 => "unilateral-k2",
            ScenarioKind::Bilateral => "bilateral",
        })
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uni" | "unilateral" | "unilateral-k2" => Ok(ScenarioKind::UnilateralK2),
            "bi" | "bilateral" => Ok(ScenarioKind::Bilateral),
            other => Err(contract(format!("unknown scenario {other:?}"))),
        }
    }
}

/// How biases are tied to sharpness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// `β = 0`
    Weak,
    /// `β = 1 − α`
    Ppm,
    /// `β = γ(1 − α)` with `γ = sin v ∈ [0, 1]` free.
    Free,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Weak => "weak",
            Strategy::Ppm => "ppm",
            Strategy::Free => "free",
        })
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "weak" => Ok(Strategy::Weak),
            "ppm" => Ok(Strategy::Ppm),
            "free" => Ok(Strategy::Free),
            other => Err(contract(format!("unknown strategy {other:?}"))),
        }
    }
}

/// A decoded point of a [`ParameterSpace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScenarioPoint {
    Bilateral(BilateralConfig),
    Unilateral { theta: f64, alice: ObserverSetting, bobs: [ObserverSetting; 2] },
}

impl ScenarioPoint {
    /// `[S_1, S_2]` through the correlation-tensor route.
    pub fn chsh_fast(&self) -> Result<[f64; 2]> {
        match self {
            ScenarioPoint::Bilateral(cfg) => {
                let v = fast_bilateral(cfg)?;
                Ok([v[0], v[1]])
            }
            ScenarioPoint::Unilateral { theta, alice, bobs } => {
                let v = fast_unilateral(*theta, alice, bobs)?;
                Ok([v[0], v[1]])
            }
        }
    }

    /// `[S_1, S_2]` through density matrices.
    pub fn chsh_simulated(&self) -> Result<[f64; 2]> {
        match self {
            ScenarioPoint::Bilateral(cfg) => {
                let r = run_bilateral(cfg)?;
                Ok([r.s1(), r.s2()])
            }
            ScenarioPoint::Unilateral { theta, alice, bobs } => {
                let r = run_unilateral_settings(*theta, alice, bobs)?;
                Ok([r[0].chsh, r[1].chsh])
            }
        }
    }

    pub(crate) fn observers(&self) -> Vec<ObserverSetting> {
        match self {
            ScenarioPoint::Bilateral(c) => vec![c.a1, c.b1, c.a2, c.b2],
            ScenarioPoint::Unilateral { alice, bobs, .. } => vec![*alice, bobs[0], bobs[1]],
        }
    }

    pub(crate) fn theta(&self) -> f64 {
        match self {
            ScenarioPoint::Bilateral(c) => c.theta,
            ScenarioPoint::Unilateral { theta, .. } => *theta,
        }
    }
}

/// Flat real parametrization of a scenario: `θ` first, then per observer and
/// input `(u, φ)` or `(u, v, φ)` with `α = sin u` and `β = sin v · (1 − α)`.
///
/// The elliptical factor carries a `√(1 − γ)` term, so `γ` also goes
/// through a sine; the projective strategy is the face `v = π/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    pub scenario: ScenarioKind,
    pub strategy: Strategy,
    pub mode: ReductionMode,
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParameterSpace {
    pub fn new(scenario: ScenarioKind, strategy: Strategy, mode: ReductionMode) -> Self {
        let labels: &[&str] = match scenario {
            ScenarioKind::Bilateral => &["A1", "B1", "A2", "B2"],
            ScenarioKind::UnilateralK2 => &["A1", "B1", "B2"],
        };
        let mut names = vec!["theta".to_string()];
        let mut lower = vec![0.0];
        let mut upper = vec![FRAC_PI_2];
        for label in labels {
            for input in 0..2 {
                names.push(format!("{label}.{input}.u"));
                lower.push(ALPHA_MIN.asin());
                upper.push(FRAC_PI_2);
                if strategy == Strategy::Free {
                    names.push(format!("{label}.{input}.v"));
                    lower.push(0.0);
                    upper.push(FRAC_PI_2);
                }
                // Angles are periodic; the wide box keeps them off the bounds.
                names.push(format!("{label}.{input}.phi"));
                lower.push(-2.0 * PI);
                upper.push(2.0 * PI);
            }
        }
        Self { scenario, strategy, mode, names, lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    fn stride(&self) -> usize {
        if self.strategy == Strategy::Free {
            3
        } else {
            2
        }
    }

    fn spec_at(&self, x: &[f64], slot: usize) -> MeasurementSpec {
        let base = 1 + self.stride() * slot;
        let alpha = alpha_of(x[base]);
        let (beta, phi) = match self.strategy {
            Strategy::Weak => (0.0, x[base + 1]),
            Strategy::Ppm => (1.0 - alpha, x[base + 1]),
            Strategy::Free => (x[base + 1].sin() * (1.0 - alpha), x[base + 2]),
        };
        MeasurementSpec { alpha, beta, phi }
    }

    pub fn decode(&self, x: &[f64]) -> Result<ScenarioPoint> {
        if x.len() != self.dim() {
            return Err(contract(format!("expected {} parameters, got {}", self.dim(), x.len())));
        }
        if let Some(i) = (0..x.len()).find(|&i| !(x[i] >= self.lower[i] && x[i] <= self.upper[i])) {
            return Err(contract(format!("{} = {} outside [{}, {}]", self.names[i], x[i], self.lower[i], self.upper[i])));
        }
        let pair = |o: usize| [self.spec_at(x, 2 * o), self.spec_at(x, 2 * o + 1)];
        let modes = [self.mode; 2];
        let point = match self.scenario {
            ScenarioKind::Bilateral => {
                let cfg = BilateralConfig {
                    a1: ObserverSetting::intermediate(pair(0), modes),
                    b1: ObserverSetting::intermediate(pair(1), modes),
                    a2: ObserverSetting::terminal(pair(2)),
                    b2: ObserverSetting::terminal(pair(3)),
                    theta: x[0],
                };
                cfg.validate()?;
                ScenarioPoint::Bilateral(cfg)
            }
            ScenarioKind::UnilateralK2 => {
                let point = ScenarioPoint::Unilateral {
                    theta: x[0],
                    alice: ObserverSetting::terminal(pair(0)),
                    bobs: [ObserverSetting::intermediate(pair(1), modes), ObserverSetting::terminal(pair(2))],
                };
                point.observers().iter().try_for_each(|o| o.validate())?;
                point
            }
        };
        Ok(point)
    }

    /// Inverse of [`decode`](Self::decode) for points that obey the strategy.
    pub fn encode(&self, point: &ScenarioPoint) -> Result<Vec<f64>> {
        let kind_matches = matches!(
            (self.scenario, point),
            (ScenarioKind::Bilateral, ScenarioPoint::Bilateral(_))
                | (ScenarioKind::UnilateralK2, ScenarioPoint::Unilateral { .. })
        );
        if !kind_matches {
            return Err(contract(format!("point does not belong to the {} space", self.scenario)));
        }
        let mut x = vec![point.theta()];
        for obs in point.observers() {
            for input in &obs.inputs {
                let MeasurementSpec { alpha, beta, phi } = input.spec;
                let expected = match self.strategy {
                    Strategy::Weak => Some(0.0),
                    Strategy::Ppm => Some(1.0 - alpha),
                    Strategy::Free => None,
                };
                if let Some(b) = expected {
                    if (beta - b).abs() > 1e-12 {
                        return Err(contract(format!("bias {beta} breaks the {} strategy", self.strategy)));
                    }
                }
                if !(ALPHA_MIN * (1.0 - 1e-9)..=1.0).contains(&alpha) {
                    return Err(contract(format!("sharpness {alpha} outside [{ALPHA_MIN}, 1]")));
                }
                x.push(alpha.clamp(ALPHA_MIN, 1.0).asin());
                if self.strategy == Strategy::Free {
                    let gamma = if alpha < 1.0 { beta / (1.0 - alpha) } else { 0.0 };
                    if !(-1e-12..=1.0 + 1e-12).contains(&gamma) {
                        return Err(contract(format!("bias {beta} exceeds 1 − α")));
                    }
                    x.push(gamma.clamp(0.0, 1.0).asin());
                }
                x.push(wrap_angle(phi));
            }
        }
        Ok(x)
    }

    /// Uniform draw inside the bounds.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| rng.gen_range(*lo..=*hi)).collect()
    }

}
