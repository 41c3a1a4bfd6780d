//! Two sequential observers per side: ansatz families, the optimal-θ rule,
//! curvature of `S_k` at `φ = 0`, and the α windows of double violation.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::instruments::{MeasurementSpec, ReductionMode};
use crate::scenario::{fast_bilateral, ObserverSetting, Role, PHASE_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pair {
    /// `(A_1, B_1)`
    First,
    /// `(A_2, B_2)`
    Second,
}

impl Pair {
    pub fn index(self) -> usize {
        match self {
            Pair::First => 1,
            Pair::Second => 2,
        }
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// Number of real parameters in [`BilateralConfig::to_vector`].
pub const CONFIG_DIM: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BilateralConfig {
    pub a1: ObserverSetting,
    pub b1: ObserverSetting,
    pub a2: ObserverSetting,
    pub b2: ObserverSetting,
    pub theta: f64,
}

impl BilateralConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=FRAC_PI_2).contains(&self.theta) {
            return Err(contract(format!("θ = {} outside [0, π/2]", self.theta)));
        }
        if self.a1.role != Role::Intermediate || self.b1.role != Role::Intermediate {
            return Err(contract("first-stage observers must be intermediate"));
        }
        if self.a2.role != Role::Terminal || self.b2.role != Role::Terminal {
            return Err(contract("second-stage observers must be terminal"));
        }
        [&self.a1, &self.b1, &self.a2, &self.b2].iter().try_for_each(|o| o.validate())
    }

    pub fn with_theta(&self, theta: f64) -> Self {
        Self { theta, ..*self }
    }

    fn observers(&self) -> [&ObserverSetting; 4] {
        [&self.a1, &self.b1, &self.a2, &self.b2]
    }

    /// `[θ, then (α, β, φ) for A1x0, A1x1, B1y0, B1y1, A2x0, A2x1, B2y0, B2y1]`.
    pub fn to_vector(&self) -> [f64; CONFIG_DIM] {
        let mut v = [0.0; CONFIG_DIM];
        v[0] = self.theta;
        for (o, obs) in self.observers().iter().enumerate() {
            for (i, spec) in obs.specs().iter().enumerate() {
                let base = 1 + 6 * o + 3 * i;
                v[base..base + 3].copy_from_slice(&[spec.alpha, spec.beta, spec.phi]);
            }
        }
        v
    }

    /// Inverse of [`to_vector`](Self::to_vector); `mode` applies to both
    /// first-stage observers.
    pub fn from_vector(v: &[f64], mode: ReductionMode) -> Result<Self> {
        if v.len() != CONFIG_DIM {
            return Err(contract(format!("expected {CONFIG_DIM} parameters, got {}", v.len())));
        }
        let specs = |o: usize| -> [MeasurementSpec; 2] {
            let s = |i: usize| {
                let b = 1 + 6 * o + 3 * i;
                MeasurementSpec { alpha: v[b], beta: v[b + 1], phi: v[b + 2] }
            };
            [s(0), s(1)]
        };
        let cfg = Self {
            a1: ObserverSetting::intermediate(specs(0), [mode; 2]),
            b1: ObserverSetting::intermediate(specs(1), [mode; 2]),
            a2: ObserverSetting::terminal(specs(2)),
            b2: ObserverSetting::terminal(specs(3)),
            theta: v[0],
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `S_k(θ) = t_s sin 2θ + t_c cos 2θ + t_r = 𝒜 sin(2θ + Φ) + t_r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTriple {
    pub t_s: f64,
    pub t_c: f64,
    pub t_r: f64,
    pub amp: f64,
    /// `atan2(t_c, t_s)`; 0 when the amplitude vanishes.
    pub phase: f64,
    pub phase_defined: bool,
}

impl CoefficientTriple {
    pub fn new(t_s: f64, t_c: f64, t_r: f64) -> Self {
        let amp = t_s.hypot(t_c);
        let phase_defined = amp > PHASE_EPS;
        let phase = if phase_defined { t_c.atan2(t_s) } else { 0.0 };
        Self { t_s, t_c, t_r, amp, phase, phase_defined }
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let (s, c) = (2.0 * theta).sin_cos();
        self.t_s * s + self.t_c * c + self.t_r
    }

    /// `π/4 − Φ/2` clipped to `[0, π/2]`, or `π/4` when `Φ` is undefined.
    pub fn optimal_theta(&self) -> f64 {
        if self.phase_defined {
            (FRAC_PI_4 - 0.5 * self.phase).clamp(0.0, FRAC_PI_2)
        } else {
            FRAC_PI_4
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(contract(format!("ansatz sharpness α = {alpha} outside (0, 1]")));
    }
    Ok(())
}

fn ppm(alpha: f64, phi: f64) -> MeasurementSpec {
    MeasurementSpec { alpha, beta: 1.0 - alpha, phi }
}

/// Elliptical ansatz: weak `A_1` input 0 and `B_1` input 1, sharp elsewhere.
pub fn build_elliptical_ansatz(alpha: f64, phi: f64) -> Result<BilateralConfig> {
    check_alpha(alpha)?;
    let sharp = MeasurementSpec::sharp;
    let a1_0 = PI - phi / 4.0;
    let a1_1 = PI + phi / 2.0;
    let a2_1 = PI - 2.0 * phi;
    let mode = [ReductionMode::Elliptical; 2];
    let cfg = BilateralConfig {
        a1: ObserverSetting::intermediate([ppm(alpha, a1_0), sharp(a1_1)], mode),
        b1: ObserverSetting::intermediate([sharp(-a1_0), ppm(alpha, phi)], mode),
        a2: ObserverSetting::terminal([sharp(a1_1), sharp(a2_1)]),
        b2: ObserverSetting::terminal([sharp(-a1_0), sharp(-a2_1)]),
        theta: FRAC_PI_4,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Linear ansatz: weak `A_1` input 0 and `B_1` input 1, sharp elsewhere.
pub fn build_linear_ansatz(alpha: f64, phi: f64) -> Result<BilateralConfig> {
    check_alpha(alpha)?;
    let sharp = MeasurementSpec::sharp;
    let a0 = [phi, -4.0 * phi];
    let a1 = [2.0 * PI - phi / 4.0, -(2.0 * PI - phi / 4.0)];
    let mode = [ReductionMode::Linear; 2];
    let cfg = BilateralConfig {
        a1: ObserverSetting::intermediate([ppm(alpha, a0[0]), sharp(a1[0])], mode),
        b1: ObserverSetting::intermediate([sharp(-a1[0]), ppm(alpha, PI - a0[0])], mode),
        a2: ObserverSetting::terminal([sharp(a0[1]), sharp(a1[1])]),
        b2: ObserverSetting::terminal([sharp(-a1[1]), sharp(PI - a0[1])]),
        theta: FRAC_PI_4,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn build_ansatz(mode: ReductionMode, alpha: f64, phi: f64) -> Result<BilateralConfig> {
    match mode {
        ReductionMode::Elliptical => build_elliptical_ansatz(alpha, phi),
        ReductionMode::Linear => build_linear_ansatz(alpha, phi),
    }
}

/// Three-point extraction through the correlation-tensor route.
pub fn fast_coeffs(pair: Pair, config: &BilateralConfig) -> Result<CoefficientTriple> {
    let s = |theta: f64| -> Result<f64> {
        let v = fast_bilateral(&config.with_theta(theta))?;
        Ok(v[pair.index() - 1])
    };
    let (q, z, h) = (s(FRAC_PI_4)?, s(0.0)?, s(FRAC_PI_2)?);
    let t_r = 0.5 * (z + h);
    Ok(CoefficientTriple::new(q - t_r, 0.5 * (z - h), t_r))
}

/// `π/4 − Φ_1/2` for `config`, clipped to `[0, π/2]`; `π/4` if `Φ_1` is undefined.
pub fn theta_shifted(config: &BilateralConfig) -> Result<f64> {
    Ok(fast_coeffs(Pair::First, config)?.optimal_theta())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaRule {
    /// `θ = π/4`
    Maximal,
    /// `θ = π/4 − Φ_1/2`, re-derived at every `φ`.
    Shifted,
}

impl fmt::Display for ThetaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThetaRule::Maximal => "maximal",
            ThetaRule::Shifted => "shifted",
        })
    }
}

impl std::str::FromStr for ThetaRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "maximal" => Ok(ThetaRule::Maximal),
            "shifted" => Ok(ThetaRule::Shifted),
            other => Err(contract(format!("unknown theta rule {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurvatureMethod {
    FiniteDifference,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureReport {
    pub pair: Pair,
    pub theta_rule: ThetaRule,
    pub c_value: f64,
    pub method: CurvatureMethod,
    pub h: Option<f64>,
    pub richardson_order: Option<u32>,
}

/// Coarse finite-difference step; the refined step is half of it.
pub const FD_STEP: f64 = 1e-2;

/// Configuration of the ansatz at `φ` with θ chosen by `rule`.
pub fn ansatz_at(mode: ReductionMode, alpha: f64, phi: f64, rule: ThetaRule) -> Result<BilateralConfig> {
    let cfg = build_ansatz(mode, alpha, phi)?;
    Ok(match rule {
        ThetaRule::Maximal => cfg,
        ThetaRule::Shifted => cfg.with_theta(theta_shifted(&cfg)?),
    })
}

/// `[S_1, S_2]` along the ansatz curve.
pub fn ansatz_chsh(mode: ReductionMode, alpha: f64, phi: f64, rule: ThetaRule) -> Result<[f64; 2]> {
    let v = fast_bilateral(&ansatz_at(mode, alpha, phi, rule)?)?;
    Ok([v[0], v[1]])
}

pub fn curvature(
    pair: Pair,
    alpha: f64,
    mode: ReductionMode,
    rule: ThetaRule,
    method: CurvatureMethod,
) -> Result<CurvatureReport> {
    let (c_value, h, richardson_order) = match method {
        CurvatureMethod::ClosedForm => (curvature_closed(pair, alpha, mode, rule), None, None),
        CurvatureMethod::FiniteDifference => {
            let s = |phi: f64| -> Result<f64> { Ok(ansatz_chsh(mode, alpha, phi, rule)?[pair.index() - 1]) };
            let s0 = s(0.0)?;
            let d2 = |h: f64| -> Result<f64> { Ok((s(h)? - 2.0 * s0 + s(-h)?) / (h * h)) };
            let coarse = d2(FD_STEP)?;
            let fine = d2(0.5 * FD_STEP)?;
            ((4.0 * fine - coarse) / 3.0, Some(FD_STEP), Some(4))
        }
    };
    Ok(CurvatureReport { pair, theta_rule: rule, c_value, method, h, richardson_order })
}

/// Closed-form `∂²_φ S_k` at `φ = 0`.
pub fn curvature_closed(pair: Pair, alpha: f64, mode: ReductionMode, rule: ThetaRule) -> f64 {
    let a = alpha;
    let d = a * a - 2.0 * a - 1.0;
    let root = (1.0 - a).max(0.0).sqrt();
    match (mode, rule, pair) {
        (ReductionMode::Elliptical, ThetaRule::Maximal, Pair::First) => (-1.0 - 8.0 * a + 25.0 * a * a) / 16.0,
        (ReductionMode::Elliptical, ThetaRule::Maximal, Pair::Second) => (-9.0 + 42.0 * root - 26.0 * a) / 16.0,
        (ReductionMode::Elliptical, ThetaRule::Shifted, Pair::First) => {
            a * (1.0 + a) * (9.0 * a - 1.0) / (8.0 * a * (2.0 - a) + 8.0)
        }
        (ReductionMode::Elliptical, ThetaRule::Shifted, Pair::Second) => {
            (-59.0 + 42.0 * root - 26.0 * a - 8.0 * (13.0 + 30.0 * a) / (d * d) - 8.0 * (19.0 + 15.0 * a) / d)
                / 16.0
        }
        (ReductionMode::Linear, ThetaRule::Maximal, Pair::First) => -0.25 - 9.0 * a / 8.0 + 4.0 * a * a,
        (ReductionMode::Linear, ThetaRule::Maximal, Pair::Second) => (265.0 + a * (-674.0 + 271.0 * a)) / 32.0,
        (ReductionMode::Linear, ThetaRule::Shifted, Pair::First) => a * (1.0 - 18.0 * a - 25.0 * a * a) / (8.0 * d),
        (ReductionMode::Linear, ThetaRule::Shifted, Pair::Second) => {
            let p = 249.0 + a * (290.0 + a * (-1911.0 + a * (-940.0 + a * (3247.0 + a * (271.0 * a - 1758.0)))));
            p / (32.0 * d * d)
        }
    }
}

/// Bisection tolerance on window edges.
pub const WINDOW_TOL: f64 = 1e-4;

/// Search range of [`find_window`].
pub const WINDOW_RANGE: (f64, f64) = (0.001, 0.999);

const WINDOW_GRID: usize = 500;

fn min_curvature(alpha: f64, mode: ReductionMode, rule: ThetaRule, method: CurvatureMethod) -> Result<f64> {
    let c1 = curvature(Pair::First, alpha, mode, rule, method)?.c_value;
    let c2 = curvature(Pair::Second, alpha, mode, rule, method)?.c_value;
    Ok(c1.min(c2))
}

/// Longest α interval where both curvatures are positive, from finite differences.
pub fn find_window(mode: ReductionMode, rule: ThetaRule) -> Result<(f64, f64)> {
    find_window_with(mode, rule, CurvatureMethod::FiniteDifference)
}

pub fn find_window_with(mode: ReductionMode, rule: ThetaRule, method: CurvatureMethod) -> Result<(f64, f64)> {
    let (lo, hi) = WINDOW_RANGE;
    let grid: Vec<f64> = (0..=WINDOW_GRID).map(|i| lo + (hi - lo) * i as f64 / WINDOW_GRID as f64).collect();
    let positive = grid
        .iter()
        .map(|&a| Ok(min_curvature(a, mode, rule, method)? > 0.0))
        .collect::<Result<Vec<bool>>>()?;

    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for i in 0..=grid.len() {
        match (positive.get(i).copied().unwrap_or(false), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if best.is_none_or(|(bs, be)| i - s > be - bs) {
                    best = Some((s, i));
                }
                start = None;
            }
            _ => {}
        }
    }
    let (s, e) = best.ok_or_else(|| {
        Error::EmptyWindow(format!("no α in {WINDOW_RANGE:?} with both curvatures positive ({mode}, {rule})"))
    })?;

    let sign = |a: f64| -> Result<bool> { Ok(min_curvature(a, mode, rule, method)? > 0.0) };
    let edge = |mut out: f64, mut inside: f64| -> Result<f64> {
        while (inside - out).abs() > WINDOW_TOL {
            let mid = 0.5 * (out + inside);
            if sign(mid)? {
                inside = mid;
            } else {
                out = mid;
            }
        }
        Ok(0.5 * (out + inside))
    };
    let left = if s == 0 { grid[0] } else { edge(grid[s - 1], grid[s])? };
    let right = if e == grid.len() { grid[e - 1] } else { edge(grid[e], grid[e - 1])? };
    Ok((left, right))
}
