//! Closed forms for one sharp `A_1` facing a chain `B_1 … B_N` on side B.
//!
//! `A_1` measures sharply at angles `{φ, −φ}`. Every `B_k` measures input 0
//! sharply at angle 0 and input 1 with `(α_k, β_k)` at angle `π/2`; all but
//! the last pass the state on. With `𝒯_{k−1} = Π_{i<k} (1 + F_i)/2`,
//!
//! ```text
//! S_k = 2[sin 2θ 𝒯_{k−1} cos φ + (2^{1−k} α_k + cos 2θ β_k) sin φ]
//! ```
//!
//! The Theorem-1 style constructions keep all quantities close to the
//! classical boundary, so the implementation tracks `1 − 𝒯` and
//! `1 − sin(2θ + φ)` directly instead of forming them by subtraction.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::instruments::{reduction_closed, reduction_deficit, MeasurementSpec, ReductionMode, SPEC_SLACK};
use crate::scenario::{fast_unilateral, run_unilateral, ObserverSetting};

/// `|cos 2θ|` below this counts as `θ = π/4` in [`beta_interval`].
pub const MAXIMAL_TOL: f64 = 1e-15;

/// Default starting angle of the φ search.
pub const PHI_START: f64 = 0.1;

/// Number of halvings tried after the starting angle.
pub const MAX_HALVINGS: u32 = 60;

/// Largest chain length accepted by [`Theorem1Params`].
pub const MAX_CHAIN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateCoefficients {
    pub k: usize,
    pub t_x: f64,
    pub t_y: f64,
    pub t_z: f64,
    pub z1: f64,
    pub z2: f64,
}

fn check_factors(k: usize, f_list: &[f64]) -> Result<()> {
    if k == 0 {
        return Err(contract("observer index k starts at 1"));
    }
    if f_list.len() + 1 < k {
        return Err(contract(format!("k = {k} needs {} reduction factors, got {}", k - 1, f_list.len())));
    }
    if let Some(f) = f_list[..k - 1].iter().find(|f| !(-SPEC_SLACK..=1.0 + SPEC_SLACK).contains(*f)) {
        return Err(contract(format!("reduction factor {f} outside [0, 1]")));
    }
    Ok(())
}

/// `𝒯_{k−1} = Π_{i<k} (1 + f_i)/2`.
pub fn transmission(k: usize, f_list: &[f64]) -> Result<f64> {
    check_factors(k, f_list)?;
    Ok(f_list[..k - 1].iter().map(|f| 0.5 * (1.0 + f)).product())
}

/// Correlation coefficients of the state reaching `B_k`.
pub fn state_coeffs(k: usize, theta: f64, f_list: &[f64]) -> Result<StateCoefficients> {
    let t = transmission(k, f_list)?;
    let half_f: f64 = f_list[..k - 1].iter().map(|f| 0.5 * f).product();
    let (s, c) = (2.0 * theta).sin_cos();
    let t_z = 0.5f64.powi(k as i32 - 1);
    Ok(StateCoefficients { k, t_x: s * t, t_y: -s * half_f, t_z, z1: c, z2: c * t_z })
}

pub fn chsh_closed(k: usize, theta: f64, phi: f64, alpha_k: f64, beta_k: f64, f_list: &[f64]) -> Result<f64> {
    let t = transmission(k, f_list)?;
    let (s, c) = (2.0 * theta).sin_cos();
    let w = 0.5f64.powi(k as i32 - 1);
    Ok(2.0 * (s * t * phi.cos() + (w * alpha_k + c * beta_k) * phi.sin()))
}

/// Geometry shared by the bound, the interval and the margin at step `k`.
#[derive(Debug, Clone, Copy)]
struct Step {
    w: f64,
    c: f64,
    sin_phi: f64,
    /// `1 − cos φ sin 2θ 𝒯 − cos 2θ sin φ`
    slack: f64,
}

impl Step {
    fn new(k: usize, theta: f64, phi: f64, deficit: f64) -> Self {
        let (s, c) = (2.0 * theta).sin_cos();
        let (sin_phi, cos_phi) = phi.sin_cos();
        // 1 − sin(2θ + φ) = 2 sin²(π/4 − θ − φ/2)
        let gap = 2.0 * (FRAC_PI_4 - theta - 0.5 * phi).sin().powi(2);
        Self {
            w: 0.5f64.powi(k as i32 - 1),
            c,
            sin_phi,
            slack: gap + s * cos_phi * deficit,
        }
    }

    fn lower_bound(&self) -> Result<f64> {
        let den = (self.w - self.c) * self.sin_phi;
        if den <= 0.0 || self.sin_phi <= 0.0 {
            return Err(Error::OutOfRegime(format!(
                "need cos 2θ < 2^(1−k) and sin φ > 0 (cos 2θ = {}, 2^(1−k) = {}, sin φ = {})",
                self.c, self.w, self.sin_phi
            )));
        }
        Ok(self.slack / den)
    }

    fn beta_interval(&self, alpha: f64) -> Result<(f64, f64)> {
        let bound = self.lower_bound()?;
        if alpha <= bound {
            return Err(Error::EmptyInterval(format!("α = {alpha} does not exceed ℒ = {bound}")));
        }
        if self.c < -MAXIMAL_TOL {
            return Err(Error::OutOfRegime(format!("cos 2θ = {} < 0", self.c)));
        }
        let hi = 1.0 - alpha;
        if self.c.abs() <= MAXIMAL_TOL {
            return Ok((0.0, hi));
        }
        // Zero crossing of S − 2 in β, written around the slack term.
        let lo = (self.slack + self.c * self.sin_phi - self.w * alpha * self.sin_phi) / (self.sin_phi * self.c);
        Ok((lo.max(0.0), hi))
    }

    /// `S_k − 2`.
    fn margin(&self, alpha: f64, beta: f64) -> f64 {
        2.0 * (self.sin_phi * (self.w * alpha - self.c * (1.0 - beta)) - self.slack)
    }
}

/// `ℒ_k` with `t_factor = 𝒯_{k−1}`.
pub fn lower_bound(k: usize, theta: f64, phi: f64, t_factor: f64) -> Result<f64> {
    if k == 0 {
        return Err(contract("observer index k starts at 1"));
    }
    Step::new(k, theta, phi, 1.0 - t_factor).lower_bound()
}

/// Biases `β` for which `(α_k, β)` violates at step `k`, as `(lo, hi)`.
///
/// Biases are taken non-negative, so `lo` is clipped at 0. Requires
/// `cos 2θ ≥ 0`; beyond that the admissible side of the crossing flips.
pub fn beta_interval(k: usize, theta: f64, phi: f64, alpha_k: f64, t_factor: f64) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(contract("observer index k starts at 1"));
    }
    Step::new(k, theta, phi, 1.0 - t_factor).beta_interval(alpha_k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharingStep {
    pub alpha: f64,
    pub beta: f64,
    pub mode: ReductionMode,
}

impl SharingStep {
    /// Input-1 measurement of this step.
    pub fn spec(&self) -> MeasurementSpec {
        MeasurementSpec { alpha: self.alpha, beta: self.beta, phi: FRAC_PI_2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharingSequence {
    pub theta: f64,
    pub phi: f64,
    pub steps: Vec<SharingStep>,
}

impl SharingSequence {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn validate_shape(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(contract("a sharing sequence needs at least one observer"));
        }
        if !self.phi.is_finite() {
            return Err(contract(format!("non-finite φ = {}", self.phi)));
        }
        if !(0.0..=FRAC_PI_2).contains(&self.theta) {
            return Err(contract(format!("θ = {} outside [0, π/2]", self.theta)));
        }
        self.steps.iter().try_for_each(|s| s.spec().validate())
    }

    pub fn alice_setting(&self) -> ObserverSetting {
        ObserverSetting::terminal([MeasurementSpec::sharp(self.phi), MeasurementSpec::sharp(-self.phi)])
    }

    pub fn bob_settings(&self) -> Vec<ObserverSetting> {
        let n = self.steps.len();
        self.steps
            .iter()
            .enumerate()
            .map(|(i, step)| {
                let specs = [MeasurementSpec::sharp(0.0), step.spec()];
                if i + 1 < n {
                    ObserverSetting::intermediate(specs, [step.mode; 2])
                } else {
                    ObserverSetting::terminal(specs)
                }
            })
            .collect()
    }

    /// Realized `F_k` of every step.
    pub fn reduction_factors(&self) -> Result<Vec<f64>> {
        self.steps.iter().map(|s| reduction_closed(&s.spec(), s.mode)).collect()
    }

    /// `1 − 𝒯_{k−1}` for `k = 1 … N`.
    fn deficits(&self) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.steps.len());
        let mut d = 0.0;
        for step in &self.steps {
            out.push(d);
            d = advance_deficit(d, reduction_deficit(&step.spec(), step.mode)?);
        }
        Ok(out)
    }
}

/// `1 − 𝒯_k` from `1 − 𝒯_{k−1}` and `1 − F_k`.
fn advance_deficit(d: f64, one_minus_f: f64) -> f64 {
    d + (1.0 - d) * 0.5 * one_minus_f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Case {
    /// Elliptical reduction throughout, `θ = π/4 − cφ/2`, `ε = eφ`.
    I,
    /// Linear reduction throughout, `θ = π/4 − φ/2`, `α_1 = φ^N`.
    II,
    /// Linear on odd steps, elliptical on even steps, `ε = φ^(⌊N/2⌋+1)`.
    III,
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::I => "I",
            Case::II => "II",
            Case::III => "III",
        })
    }
}

impl std::str::FromStr for Case {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Case::I),
            "II" | "2" => Ok(Case::II),
            "III" | "3" => Ok(Case::III),
            other => Err(contract(format!("unknown case {other:?}"))),
        }
    }
}

/// How `β_k` is picked inside its admissible interval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaRule {
    #[default]
    Midpoint,
    /// `β_k = 1 − α_k`, the upper end.
    Ppm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Params {
    pub n: usize,
    pub case: Case,
    /// Angle divisor in `θ = π/4 − cφ/2` (case I only).
    pub c: f64,
    pub e: f64,
    /// Fixed `ε`; `None` derives it from `φ` and `e`.
    pub eps_abs: Option<f64>,
    pub eps_rel: f64,
    pub delta: BetaRule,
}

impl Theorem1Params {
    pub fn new(n: usize, case: Case) -> Self {
        let (e, eps_rel) = match case {
            Case::I => (4.0, 0.5),
            Case::II => (n as f64, 0.1),
            Case::III => ((n / 2 + 1) as f64, 0.1),
        };
        Self { n, case, c: 2.0, e, eps_abs: None, eps_rel, delta: BetaRule::Midpoint }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=MAX_CHAIN).contains(&self.n) {
            return Err(contract(format!("N = {} outside [2, {MAX_CHAIN}]", self.n)));
        }
        if !(self.eps_rel.is_finite() && self.eps_rel > 0.0) {
            return Err(contract(format!("ϵ = {} must be positive", self.eps_rel)));
        }
        if let Some(eps) = self.eps_abs {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(contract(format!("ε = {eps} must be positive")));
            }
        }
        match self.case {
            Case::I => {
                if !(self.c.is_finite() && self.c > 0.0) {
                    return Err(contract(format!("c = {} must be finite and positive", self.c)));
                }
                if !(self.e >= 4.0) {
                    return Err(contract(format!("case I needs e ≥ 4, got {}", self.e)));
                }
            }
            Case::II if self.e != self.n as f64 => {
                return Err(contract(format!("case II fixes e = N = {}, got {}", self.n, self.e)));
            }
            Case::III if self.e != (self.n / 2 + 1) as f64 => {
                return Err(contract(format!("case III fixes e = {}, got {}", self.n / 2 + 1, self.e)));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn theta(&self, phi: f64) -> f64 {
        match self.case {
            Case::I => FRAC_PI_4 - 0.5 * self.c * phi,
            Case::II | Case::III => FRAC_PI_4 - 0.5 * phi,
        }
    }

    pub fn eps(&self, phi: f64) -> f64 {
        self.eps_abs.unwrap_or(match self.case {
            Case::I => self.e * phi,
            Case::II | Case::III => phi.powf(self.e),
        })
    }

    /// Mode of step `k` (1-based).
    pub fn mode(&self, k: usize) -> ReductionMode {
        match self.case {
            Case::I => ReductionMode::Elliptical,
            Case::II => ReductionMode::Linear,
            Case::III if k % 2 == 1 => ReductionMode::Linear,
            Case::III => ReductionMode::Elliptical,
        }
    }
}

/// Builds the chain at a fixed `φ`, or reports the first failing constraint.
pub fn build_at(params: &Theorem1Params, phi: f64) -> Result<SharingSequence> {
    params.validate()?;
    let theta = params.theta(phi);
    if !(0.0..=FRAC_PI_2).contains(&theta) {
        return Err(Error::OutOfRegime(format!("θ = {theta} outside [0, π/2]")));
    }
    let eps = params.eps(phi);
    let mut steps = Vec::with_capacity(params.n);
    let mut deficit = 0.0;
    for k in 1..=params.n {
        let geo = Step::new(k, theta, phi, deficit);
        let bound = geo.lower_bound().map_err(|e| Error::OutOfRegime(format!("step {k}: {e}")))?;
        let alpha = if k == 1 { bound + eps } else { (1.0 + params.eps_rel) * bound };
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::OutOfRegime(format!("step {k}: α = {alpha} outside (0, 1)")));
        }
        let (lo, hi) = geo.beta_interval(alpha).map_err(|e| Error::OutOfRegime(format!("step {k}: {e}")))?;
        if lo >= hi {
            return Err(Error::EmptyInterval(format!("step {k}: β interval [{lo}, {hi}] is empty")));
        }
        let beta = match params.delta {
            BetaRule::Midpoint => 0.5 * (lo + hi),
            BetaRule::Ppm => hi,
        };
        let margin = geo.margin(alpha, beta);
        if !(margin > 0.0) {
            return Err(Error::OutOfRegime(format!("step {k}: closed-form margin {margin:e} not positive")));
        }
        let step = SharingStep { alpha, beta, mode: params.mode(k) };
        step.spec().validate()?;
        deficit = advance_deficit(deficit, reduction_deficit(&step.spec(), step.mode)?);
        steps.push(step);
    }
    Ok(SharingSequence { theta, phi, steps })
}

/// Halves `φ` from `phi0` until [`build_at`] succeeds.
pub fn construct_sequence(params: &Theorem1Params, phi0: f64) -> Result<SharingSequence> {
    params.validate()?;
    if !(phi0.is_finite() && phi0 > 0.0) {
        return Err(contract(format!("starting angle {phi0} must be positive")));
    }
    let mut last = None;
    for j in 0..=MAX_HALVINGS {
        match build_at(params, phi0 * 0.5f64.powi(j as i32)) {
            Ok(seq) => return Ok(seq),
            Err(Error::Contract(msg)) => return Err(Error::Contract(msg)),
            Err(e) => last = Some(e),
        }
    }
    Err(Error::ConstructionFailed(format!(
        "no φ in {phi0}·2^-j, j ≤ {MAX_HALVINGS}, works; last failure: {}",
        last.map(|e| e.to_string()).unwrap_or_default()
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub mode: ReductionMode,
    /// `None` outside the regime `cos 2θ < 2^{1−k}`.
    pub lower_bound: Option<f64>,
    pub beta_lo: Option<f64>,
    pub beta_hi: Option<f64>,
    pub s_closed: f64,
    pub s_simulated: f64,
    /// `S_k − 2` from the cancellation-free closed form.
    pub margin_closed: f64,
    pub margin_simulated: f64,
    pub alpha_in_range: bool,
    pub above_bound: bool,
    pub beta_admissible: bool,
}

impl StepReport {
    pub fn valid(&self) -> bool {
        self.alpha_in_range
            && self.above_bound
            && self.beta_admissible
            && self.margin_closed > 0.0
            && self.margin_simulated > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub steps: Vec<StepReport>,
    pub valid: bool,
    /// Set when the chain could not be simulated at all.
    pub error: Option<String>,
}

impl SequenceReport {
    /// Smallest simulated `S_k − 2`.
    pub fn min_margin(&self) -> f64 {
        self.steps.iter().map(|s| s.margin_simulated).fold(f64::INFINITY, f64::min)
    }
}

/// Checks every step against the bound, the β interval and both CHSH routes.
pub fn validate_sequence(seq: &SharingSequence) -> SequenceReport {
    match validate_checked(seq) {
        Ok(report) => report,
        Err(e) => SequenceReport {
            steps: seq
                .steps
                .iter()
                .enumerate()
                .map(|(i, step)| StepReport {
                    k: i + 1,
                    alpha: step.alpha,
                    beta: step.beta,
                    mode: step.mode,
                    lower_bound: None,
                    beta_lo: None,
                    beta_hi: None,
                    s_closed: f64::NAN,
                    s_simulated: f64::NAN,
                    margin_closed: f64::NAN,
                    margin_simulated: f64::NAN,
                    alpha_in_range: step.alpha > 0.0 && step.alpha <= 1.0,
                    above_bound: false,
                    beta_admissible: false,
                })
                .collect(),
            valid: false,
            error: Some(e.to_string()),
        },
    }
}

fn validate_checked(seq: &SharingSequence) -> Result<SequenceReport> {
    seq.validate_shape()?;
    let records = run_unilateral(seq)?;
    let deficits = seq.deficits()?;
    let f_list = seq.reduction_factors()?;
    let mut steps = Vec::with_capacity(seq.len());
    for (i, step) in seq.steps.iter().enumerate() {
        let k = i + 1;
        let geo = Step::new(k, seq.theta, seq.phi, deficits[i]);
        let bound = geo.lower_bound().ok();
        let interval = geo.beta_interval(step.alpha).ok();
        let s_simulated = records[i].chsh;
        steps.push(StepReport {
            k,
            alpha: step.alpha,
            beta: step.beta,
            mode: step.mode,
            lower_bound: bound,
            beta_lo: interval.map(|i| i.0),
            beta_hi: interval.map(|i| i.1),
            s_closed: chsh_closed(k, seq.theta, seq.phi, step.alpha, step.beta, &f_list)?,
            s_simulated,
            margin_closed: geo.margin(step.alpha, step.beta),
            margin_simulated: s_simulated - 2.0,
            alpha_in_range: step.alpha > 0.0 && step.alpha <= 1.0,
            above_bound: bound.is_some_and(|l| step.alpha > l),
            beta_admissible: interval
                .is_some_and(|(lo, hi)| step.beta >= lo - SPEC_SLACK && step.beta <= hi + SPEC_SLACK),
        });
    }
    let valid = steps.iter().all(StepReport::valid);
    Ok(SequenceReport { steps, valid, error: None })
}

/// CHSH values of the chain through the correlation-tensor route.
pub fn chain_chsh(seq: &SharingSequence) -> Result<Vec<f64>> {
    seq.validate_shape()?;
    fast_unilateral(seq.theta, &seq.alice_setting(), &seq.bob_settings())
}

#[cfg(test)]
mod tests;
