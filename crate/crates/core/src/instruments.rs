//! Generalized binary qubit measurements and their quantum instruments.
//!
//! A measurement is fixed by its sharpness `alpha`, its outcome bias `beta`
//! and an axis `n = (cos φ, 0, sin φ)` in the x–z plane. The POVM is
//! `E± = (1+α±β)/2 · P± + (1−α±β)/2 · P∓` with `P± = (𝕀 ± n·σ)/2`.
//!
//! The same POVM admits many Kraus decompositions. Two are provided:
//!
//! * [`ReductionMode::Elliptical`]: the square-root (Lüders) instrument
//!   `K± = √E±`, whose coherence factor traces an ellipse in `(α, β)`.
//! * [`ReductionMode::Linear`]: a mixture of a sharp projective branch
//!   `√α·P±` and an undisturbing branch `√((1−α±β)/2)·𝕀`, giving `F = 1 − α`.
//!
//! Every instrument carries its reduction factor `F`, the factor by which
//! the off-diagonal blocks `P±ρP∓` shrink under the unconditional channel.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::linalg::{embed, pauli_basis, pauli_x, pauli_z, Mat2, Side, C64};
use crate::state::TwoQubitState;

/// Slack allowed on `α + |β| ≤ 1` for values computed in floating point.
pub const SPEC_SLACK: f64 = 1e-12;

/// Largest off-span component tolerated by [`reduction_general`].
pub const SPAN_TOL: f64 = 1e-10;

/// Smallest outcome probability [`conditional_outcome`] will condition on.
pub const MIN_OUTCOME_PROB: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSpec {
    pub alpha: f64,
    pub beta: f64,
    pub phi: f64,
}

impl MeasurementSpec {
    pub fn new(alpha: f64, beta: f64, phi: f64) -> Result<Self> {
        let spec = Self { alpha, beta, phi };
        spec.validate()?;
        Ok(spec)
    }

    /// Projective measurement along angle `phi`.
    pub fn sharp(phi: f64) -> Self {
        Self { alpha: 1.0, beta: 0.0, phi }
    }

    pub fn validate(&self) -> Result<()> {
        let Self { alpha, beta, phi } = *self;
        if !(alpha.is_finite() && beta.is_finite() && phi.is_finite()) {
            return Err(contract(format!("non-finite measurement parameters {self}")));
        }
        if alpha <= 0.0 || alpha > 1.0 + SPEC_SLACK {
            return Err(contract(format!("sharpness outside (0, 1]: {self}")));
        }
        if beta.abs() >= 1.0 {
            return Err(contract(format!("bias outside (-1, 1): {self}")));
        }
        if alpha + beta.abs() > 1.0 + SPEC_SLACK {
            return Err(contract(format!("positivity α + |β| ≤ 1 violated: {self}")));
        }
        Ok(())
    }

    pub fn axis(&self) -> [f64; 3] {
        [self.phi.cos(), 0.0, self.phi.sin()]
    }

    /// `n·σ` for the measurement axis.
    pub fn axis_operator(&self) -> Mat2 {
        pauli_x().scale_re(self.phi.cos()) + pauli_z().scale_re(self.phi.sin())
    }

    /// `(P+, P−)` along the measurement axis.
    pub fn projectors(&self) -> (Mat2, Mat2) {
        let id = Mat2::identity();
        let n = self.axis_operator();
        ((id + n).scale_re(0.5), (id - n).scale_re(0.5))
    }

    /// Components `(β, α cos φ, 0, α sin φ)` of the observable in the `(𝕀, σx, σy, σz)` basis.
    pub fn bloch_observable(&self) -> [f64; 4] {
        [self.beta, self.alpha * self.phi.cos(), 0.0, self.alpha * self.phi.sin()]
    }
}

impl fmt::Display for MeasurementSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(α={}, β={}, φ={})", self.alpha, self.beta, self.phi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReductionMode {
    Elliptical,
    Linear,
}

impl fmt::Display for ReductionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReductionMode::Elliptical => "elliptical",
            ReductionMode::Linear => "linear",
        })
    }
}

impl std::str::FromStr for ReductionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "elliptical" | "e" | "i" => Ok(Self::Elliptical),
            "linear" | "l" | "ii" => Ok(Self::Linear),
            other => Err(contract(format!("unknown reduction mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub fn sign(self) -> f64 {
        match self {
            Outcome::Plus => 1.0,
            Outcome::Minus => -1.0,
        }
    }
}

/// A measurement together with an explicit Kraus decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct Instrument {
    pub spec: MeasurementSpec,
    pub mode: ReductionMode,
    pub kraus: Vec<(Outcome, Mat2)>,
    pub f: f64,
}

impl Instrument {
    pub fn kraus_operators(&self) -> impl Iterator<Item = &Mat2> {
        self.kraus.iter().map(|(_, k)| k)
    }

    /// `Σ K†K` over the Kraus elements labelled `outcome`.
    pub fn effect(&self, outcome: Outcome) -> Mat2 {
        self.kraus
            .iter()
            .filter(|(o, _)| *o == outcome)
            .map(|(_, k)| k.adjoint() * *k)
            .sum()
    }

    /// Max-norm distance of `Σ K†K` from the identity.
    pub fn completeness_residual(&self) -> f64 {
        let total: Mat2 = self.kraus_operators().map(|k| k.adjoint() * *k).sum();
        total.max_abs_diff(&Mat2::identity())
    }

    /// Applies the unconditional channel `ρ ↦ Σ K ρ K†` to a single-qubit operator.
    pub fn channel_single(&self, rho: &Mat2) -> Mat2 {
        self.kraus_operators().map(|k| k.sandwich(rho)).sum()
    }

    /// Pauli transfer matrix `T[i][j] = ½ Tr[σ_i ℰ(σ_j)]` of the unconditional channel.
    pub fn transfer_matrix(&self) -> [[f64; 4]; 4] {
        let basis = pauli_basis();
        let mut t = [[0.0; 4]; 4];
        for (j, sj) in basis.iter().enumerate() {
            let image = self.channel_single(sj);
            for (i, si) in basis.iter().enumerate() {
                t[i][j] = 0.5 * (*si * image).trace().re;
            }
        }
        t
    }
}

/// Pauli transfer matrix of the channel `ρ ↦ Σ P±ρP± + F·(P+ρP− + P−ρP+)`.
///
/// Both reduction modes produce channels of this form, so this agrees with
/// [`Instrument::transfer_matrix`] while skipping the Kraus algebra.
pub fn transfer_closed(spec: &MeasurementSpec, f: f64) -> [[f64; 4]; 4] {
    let n = spec.axis();
    let mut t = [[0.0; 4]; 4];
    t[0][0] = 1.0;
    for i in 0..3 {
        for j in 0..3 {
            let nn = n[i] * n[j];
            let id = if i == j { 1.0 } else { 0.0 };
            t[i + 1][j + 1] = nn + f * (id - nn);
        }
    }
    t
}

pub fn observable(spec: &MeasurementSpec) -> Result<Mat2> {
    spec.validate()?;
    Ok(spec.axis_operator().scale_re(spec.alpha) + Mat2::identity().scale_re(spec.beta))
}

/// `(E+, E−)` for a valid spec.
pub fn povm_elements(spec: &MeasurementSpec) -> Result<(Mat2, Mat2)> {
    spec.validate()?;
    let (pp, pm) = spec.projectors();
    let MeasurementSpec { alpha, beta, .. } = *spec;
    let e_plus = pp.scale_re((1.0 + alpha + beta) / 2.0) + pm.scale_re((1.0 - alpha + beta) / 2.0);
    let e_minus = pm.scale_re((1.0 + alpha - beta) / 2.0) + pp.scale_re((1.0 - alpha - beta) / 2.0);
    Ok((e_plus, e_minus))
}

fn checked_sqrt(x: f64, what: &str) -> Result<f64> {
    if x < -SPEC_SLACK {
        return Err(contract(format!("negative radicand {x} in {what}")));
    }
    Ok(x.max(0.0).sqrt())
}

pub fn build_instrument(spec: &MeasurementSpec, mode: ReductionMode) -> Result<Instrument> {
    spec.validate()?;
    let (pp, pm) = spec.projectors();
    let MeasurementSpec { alpha, beta, .. } = *spec;
    let kraus = match mode {
        ReductionMode::Elliptical => {
            let a = checked_sqrt((1.0 + alpha + beta) / 2.0, "K+")?;
            let b = checked_sqrt((1.0 - alpha + beta) / 2.0, "K+")?;
            let c = checked_sqrt((1.0 + alpha - beta) / 2.0, "K-")?;
            let d = checked_sqrt((1.0 - alpha - beta) / 2.0, "K-")?;
            vec![
                (Outcome::Plus, pp.scale_re(a) + pm.scale_re(b)),
                (Outcome::Minus, pm.scale_re(c) + pp.scale_re(d)),
            ]
        }
        ReductionMode::Linear => {
            let s = alpha.sqrt();
            let id = Mat2::identity();
            vec![
                (Outcome::Plus, pp.scale_re(s)),
                (Outcome::Minus, pm.scale_re(s)),
                (Outcome::Plus, id.scale_re(checked_sqrt((1.0 - alpha + beta) / 2.0, "K+(2)")?)),
                (Outcome::Minus, id.scale_re(checked_sqrt((1.0 - alpha - beta) / 2.0, "K-(2)")?)),
            ]
        }
    };
    Ok(Instrument { spec: *spec, mode, kraus, f: reduction_closed(spec, mode)? })
}

/// Closed-form reduction factor: `F_I = [√((1−α−β)(1+α−β)) + √((1−α+β)(1+α+β))]/2`
/// for the elliptical mode, `F_II = 1 − α` for the linear mode.
pub fn reduction_closed(spec: &MeasurementSpec, mode: ReductionMode) -> Result<f64> {
    spec.validate()?;
    let MeasurementSpec { alpha, beta, .. } = *spec;
    Ok(match mode {
        ReductionMode::Elliptical => {
            let lo = ((1.0 - alpha - beta) * (1.0 + alpha - beta)).max(0.0).sqrt();
            let hi = ((1.0 - alpha + beta) * (1.0 + alpha + beta)).max(0.0).sqrt();
            0.5 * (lo + hi)
        }
        ReductionMode::Linear => 1.0 - alpha,
    })
}

/// `1 − F` without cancellation for weak measurements.
pub fn reduction_deficit(spec: &MeasurementSpec, mode: ReductionMode) -> Result<f64> {
    spec.validate()?;
    let MeasurementSpec { alpha, beta, .. } = *spec;
    Ok(match mode {
        ReductionMode::Elliptical => {
            // u − √(u² − α²) = α² / (u + √(u² − α²))
            let part = |u: f64| {
                let r = ((u - alpha) * (u + alpha)).max(0.0).sqrt();
                if u + r > 0.0 {
                    alpha * alpha / (u + r)
                } else {
                    0.0
                }
            };
            0.5 * (part(1.0 - beta) + part(1.0 + beta))
        }
        ReductionMode::Linear => alpha,
    })
}

/// Reduction factor from the trace formula `F = Σ_μ Tr(P+ K_μ) Tr(P− K_μ†)`.
///
/// Only defined when every Kraus element lies in the span of the projectors
/// of the spec's axis; other inputs are rejected.
pub fn reduction_general<'a, I>(kraus: I, spec: &MeasurementSpec) -> Result<f64>
where
    I: IntoIterator<Item = &'a Mat2>,
{
    let (pp, pm) = spec.projectors();
    let mut acc = C64::new(0.0, 0.0);
    for k in kraus {
        let tp = (pp * *k).trace();
        let tm = (pm * *k).trace();
        let in_span = pp.scale(tp) + pm.scale(tm);
        let off = in_span.max_abs_diff(k);
        if off > SPAN_TOL {
            return Err(Error::UnsupportedInstrument(format!(
                "Kraus element has off-axis component {off:e}"
            )));
        }
        acc += tp * (pm * k.adjoint()).trace();
    }
    if acc.im.abs() > SPAN_TOL {
        return Err(Error::UnsupportedInstrument(format!(
            "trace formula has imaginary residual {:e}",
            acc.im
        )));
    }
    Ok(acc.re)
}

/// Unconditional channel on one side of a two-qubit state.
pub fn apply_channel(rho: &TwoQubitState, inst: &Instrument, side: Side) -> TwoQubitState {
    let out = inst.kraus_operators().map(|k| embed(k, side).sandwich(rho.rho())).sum();
    TwoQubitState::from_trusted(out)
}

/// Probability of `outcome` and the normalized post-measurement state.
pub fn conditional_outcome(
    rho: &TwoQubitState,
    inst: &Instrument,
    side: Side,
    outcome: Outcome,
) -> Result<(f64, TwoQubitState)> {
    let prob = rho.expectation(&embed(&inst.effect(outcome), side));
    if prob <= MIN_OUTCOME_PROB {
        return Err(Error::DegenerateOutcome(prob));
    }
    let unnormalized: crate::linalg::Mat4 = inst
        .kraus
        .iter()
        .filter(|(o, _)| *o == outcome)
        .map(|(_, k)| embed(k, side).sandwich(rho.rho()))
        .sum();
    Ok((prob, TwoQubitState::from_trusted(unnormalized.scale_re(1.0 / prob))))
}
