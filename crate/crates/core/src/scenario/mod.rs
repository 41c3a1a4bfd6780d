//! Sequential measurement scenarios evaluated on density matrices.
//!
//! Intermediate observers choose each input with probability 1/2, so the
//! state handed to the next observer is the uniform mixture of the two
//! unconditional channels. Terminal observers only contribute statistics.
//!
//! CHSH values use `S = E(0,0) + E(0,1) + E(1,0) − E(1,1)` unless another
//! [`SignPlacement`] is requested.

mod tensor;

use serde::{Deserialize, Serialize};

use crate::bilateral::{BilateralConfig, CoefficientTriple, Pair};
use crate::error::{contract, Result};
use crate::instruments::{apply_channel, build_instrument, observable, transfer_closed, Instrument, MeasurementSpec, ReductionMode};
use crate::linalg::{tensor, Mat4, Side, C64};
use crate::unilateral::SharingSequence;

pub use crate::state::TwoQubitState;
pub use tensor::{fast_bilateral, fast_unilateral, CorrelationTensor};

/// Tsirelson bound `2√2`.
pub const TSIRELSON: f64 = 2.0 * std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputSetting {
    pub spec: MeasurementSpec,
    pub mode: ReductionMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Intermediate,
    Terminal,
}

/// Measurement choices of one observer for inputs 0 and 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObserverSetting {
    pub inputs: [InputSetting; 2],
    pub role: Role,
}

impl ObserverSetting {
    pub fn intermediate(specs: [MeasurementSpec; 2], modes: [ReductionMode; 2]) -> Self {
        Self {
            inputs: [
                InputSetting { spec: specs[0], mode: modes[0] },
                InputSetting { spec: specs[1], mode: modes[1] },
            ],
            role: Role::Intermediate,
        }
    }

    /// Terminal observers never disturb the state; the stored mode is unused.
    pub fn terminal(specs: [MeasurementSpec; 2]) -> Self {
        Self {
            role: Role::Terminal,
            ..Self::intermediate(specs, [ReductionMode::Elliptical; 2])
        }
    }

    pub fn spec(&self, input: usize) -> &MeasurementSpec {
        &self.inputs[input].spec
    }

    pub fn specs(&self) -> [MeasurementSpec; 2] {
        [self.inputs[0].spec, self.inputs[1].spec]
    }

    pub fn validate(&self) -> Result<()> {
        self.inputs.iter().try_for_each(|i| i.spec.validate())
    }

    pub fn instruments(&self) -> Result<[Instrument; 2]> {
        Ok([
            build_instrument(&self.inputs[0].spec, self.inputs[0].mode)?,
            build_instrument(&self.inputs[1].spec, self.inputs[1].mode)?,
        ])
    }
}

/// Which correlator carries the minus sign in the CHSH combination.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SignPlacement {
    MinusOn00,
    MinusOn01,
    MinusOn10,
    #[default]
    MinusOn11,
}

impl SignPlacement {
    pub const ALL: [SignPlacement; 4] = [Self::MinusOn00, Self::MinusOn01, Self::MinusOn10, Self::MinusOn11];

    pub fn combine(self, e: &[[f64; 2]; 2]) -> f64 {
        let (x, y) = match self {
            Self::MinusOn00 => (0, 0),
            Self::MinusOn01 => (0, 1),
            Self::MinusOn10 => (1, 0),
            Self::MinusOn11 => (1, 1),
        };
        e.iter().flatten().sum::<f64>() - 2.0 * e[x][y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRecord {
    /// Observer indices `(k, l)`, 1-based, A side first.
    pub pair: (usize, usize),
    /// `correlators[x][y] = ⟨A_x B_y⟩`.
    pub correlators: [[f64; 2]; 2],
    pub chsh: f64,
}

impl CorrelationRecord {
    pub fn from_correlators(pair: (usize, usize), correlators: [[f64; 2]; 2], placement: SignPlacement) -> Self {
        Self { pair, correlators, chsh: placement.combine(&correlators) }
    }

    pub fn max_over_placements(&self) -> f64 {
        SignPlacement::ALL
            .iter()
            .map(|p| p.combine(&self.correlators))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `|Φ(θ)⟩ = cos θ|00⟩ + sin θ|11⟩` for `θ ∈ [0, π/2]`.
pub fn pure_state(theta: f64) -> Result<TwoQubitState> {
    if !(-1e-12..=std::f64::consts::FRAC_PI_2 + 1e-12).contains(&theta) {
        return Err(contract(format!("θ = {theta} outside [0, π/2]")));
    }
    let v = [theta.cos(), 0.0, 0.0, theta.sin()];
    let mut rho = Mat4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            rho[(i, j)] = C64::new(v[i] * v[j], 0.0);
        }
    }
    Ok(TwoQubitState::from_trusted(rho))
}

/// `Tr[ρ (M_A ⊗ M_B)]`.
pub fn correlator(rho: &TwoQubitState, spec_a: &MeasurementSpec, spec_b: &MeasurementSpec) -> Result<f64> {
    let op = tensor(&observable(spec_a)?, &observable(spec_b)?);
    Ok(rho.expectation(&op))
}

pub fn chsh(rho: &TwoQubitState, a: &ObserverSetting, b: &ObserverSetting) -> Result<CorrelationRecord> {
    chsh_with(rho, a, b, SignPlacement::default())
}

pub fn chsh_with(
    rho: &TwoQubitState,
    a: &ObserverSetting,
    b: &ObserverSetting,
    placement: SignPlacement,
) -> Result<CorrelationRecord> {
    let mut e = [[0.0; 2]; 2];
    for (x, row) in e.iter_mut().enumerate() {
        for (y, v) in row.iter_mut().enumerate() {
            *v = correlator(rho, a.spec(x), b.spec(y))?;
        }
    }
    Ok(CorrelationRecord::from_correlators((1, 1), e, placement))
}

/// Uniform mixture of the unconditional channels for inputs 0 and 1.
pub fn unbiased_update(rho: &TwoQubitState, setting: &ObserverSetting, side: Side) -> Result<TwoQubitState> {
    if setting.role == Role::Terminal {
        return Err(contract("terminal observers do not pass the state on"));
    }
    let [i0, i1] = setting.instruments()?;
    let mixed = (*apply_channel(rho, &i0, side).rho() + *apply_channel(rho, &i1, side).rho()).scale_re(0.5);
    Ok(TwoQubitState::from_trusted(mixed))
}

/// Averaged transfer matrix `(T_0 + T_1)/2` of an intermediate observer.
pub fn averaged_transfer(setting: &ObserverSetting) -> Result<[[f64; 4]; 4]> {
    if setting.role == Role::Terminal {
        return Err(contract("terminal observers do not pass the state on"));
    }
    let mut out = [[0.0; 4]; 4];
    for input in &setting.inputs {
        let f = crate::instruments::reduction_closed(&input.spec, input.mode)?;
        let t = transfer_closed(&input.spec, f);
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] += 0.5 * t[i][j];
            }
        }
    }
    Ok(out)
}

/// Unilateral chain: `A_1` against `B_1 … B_N` in order on side B.
pub fn run_unilateral(seq: &SharingSequence) -> Result<Vec<CorrelationRecord>> {
    seq.validate_shape()?;
    run_unilateral_settings(seq.theta, &seq.alice_setting(), &seq.bob_settings())
}

/// General unilateral chain with arbitrary settings; every Bob except the last
/// must be intermediate.
pub fn run_unilateral_settings(
    theta: f64,
    alice: &ObserverSetting,
    bobs: &[ObserverSetting],
) -> Result<Vec<CorrelationRecord>> {
    alice.validate()?;
    let mut rho = pure_state(theta)?;
    let mut out = Vec::with_capacity(bobs.len());
    for (k, bob) in bobs.iter().enumerate() {
        bob.validate()?;
        let rec = chsh(&rho, alice, bob)?;
        out.push(CorrelationRecord { pair: (1, k + 1), ..rec });
        if k + 1 < bobs.len() {
            rho = unbiased_update(&rho, bob, Side::B)?;
        }
    }
    Ok(out)
}

/// CHSH records of all four observer pairings in the two-by-two scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BilateralRecords {
    pub a1b1: CorrelationRecord,
    pub a2b2: CorrelationRecord,
    pub a1b2: CorrelationRecord,
    pub a2b1: CorrelationRecord,
}

impl BilateralRecords {
    pub fn s1(&self) -> f64 {
        self.a1b1.chsh
    }

    pub fn s2(&self) -> f64 {
        self.a2b2.chsh
    }

    pub fn as_array(&self) -> [CorrelationRecord; 4] {
        [self.a1b1, self.a2b2, self.a1b2, self.a2b1]
    }
}

/// Two sequential observers per side. The second-stage pair sees the state
/// updated independently on both sides; each cross pair sees the state
/// updated only on the side whose first observer it does not include.
pub fn run_bilateral(config: &BilateralConfig) -> Result<BilateralRecords> {
    config.validate()?;
    let BilateralConfig { a1, b1, a2, b2, theta } = config;
    let rho0 = pure_state(*theta)?;
    let rho_a = unbiased_update(&rho0, a1, Side::A)?;
    let rho_b = unbiased_update(&rho0, b1, Side::B)?;
    let rho_ab = unbiased_update(&rho_a, b1, Side::B)?;
    let rec = |rho: &TwoQubitState, a: &ObserverSetting, b: &ObserverSetting, pair| -> Result<CorrelationRecord> {
        Ok(CorrelationRecord { pair, ..chsh(rho, a, b)? })
    };
    Ok(BilateralRecords {
        a1b1: rec(&rho0, a1, b1, (1, 1))?,
        a2b2: rec(&rho_ab, a2, b2, (2, 2))?,
        a1b2: rec(&rho_b, a1, b2, (1, 2))?,
        a2b1: rec(&rho_a, a2, b1, (2, 1))?,
    })
}

/// Below this amplitude the phase `Φ_k` is reported as undefined.
pub const PHASE_EPS: f64 = 1e-14;

/// Writes `S_k(θ) = t_s sin 2θ + t_c cos 2θ + t_r` by sampling θ ∈ {π/4, 0, π/2}.
pub fn extract_affine_coeffs(pair: Pair, config: &BilateralConfig) -> Result<CoefficientTriple> {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
    let s = |theta: f64| -> Result<f64> {
        let recs = run_bilateral(&config.with_theta(theta))?;
        Ok(match pair {
            Pair::First => recs.s1(),
            Pair::Second => recs.s2(),
        })
    };
    let (s_quarter, s_zero, s_half) = (s(FRAC_PI_4)?, s(0.0)?, s(FRAC_PI_2)?);
    let t_r = 0.5 * (s_zero + s_half);
    let t_c = 0.5 * (s_zero - s_half);
    let t_s = s_quarter - t_r;
    Ok(CoefficientTriple::new(t_s, t_c, t_r))
}

#[cfg(test)]
mod tests;
