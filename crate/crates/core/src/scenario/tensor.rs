//! Correlation-tensor evaluation of the same scenarios.
//!
//! A two-qubit state is carried as `R[i][j] = Tr[ρ (σ_i ⊗ σ_j)]`; observables
//! become vectors `(β, α cos φ, 0, α sin φ)` and channels act through their
//! Pauli transfer matrices. This is the route used inside optimizer loops.

use super::{averaged_transfer, ObserverSetting, SignPlacement, TwoQubitState};
use crate::bilateral::BilateralConfig;
use crate::error::{contract, Result};
use crate::linalg::Side;

type Mat = [[f64; 4]; 4];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationTensor {
    pub r: Mat,
}

impl CorrelationTensor {
    pub fn from_state(rho: &TwoQubitState) -> Self {
        Self { r: rho.correlation_tensor() }
    }

    /// Tensor of `|Φ(θ)⟩`.
    pub fn pure(theta: f64) -> Result<Self> {
        if !(-1e-12..=std::f64::consts::FRAC_PI_2 + 1e-12).contains(&theta) {
            return Err(contract(format!("θ = {theta} outside [0, π/2]")));
        }
        let (s, c) = (2.0 * theta).sin_cos();
        let mut r = [[0.0; 4]; 4];
        r[0][0] = 1.0;
        r[0][3] = c;
        r[3][0] = c;
        r[1][1] = s;
        r[2][2] = -s;
        r[3][3] = 1.0;
        Ok(Self { r })
    }

    /// Applies a single-qubit transfer matrix on `side`.
    pub fn apply(&self, t: &Mat, side: Side) -> Self {
        let mut out = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] = match side {
                    Side::A => (0..4).map(|k| t[i][k] * self.r[k][j]).sum(),
                    Side::B => (0..4).map(|k| self.r[i][k] * t[j][k]).sum(),
                };
            }
        }
        Self { r: out }
    }

    pub fn correlator(&self, ma: &[f64; 4], mb: &[f64; 4]) -> f64 {
        let mut acc = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                acc += ma[i] * self.r[i][j] * mb[j];
            }
        }
        acc
    }

    pub fn correlators(&self, a: &ObserverSetting, b: &ObserverSetting) -> [[f64; 2]; 2] {
        let ma = [a.spec(0).bloch_observable(), a.spec(1).bloch_observable()];
        let mb = [b.spec(0).bloch_observable(), b.spec(1).bloch_observable()];
        let mut e = [[0.0; 2]; 2];
        for x in 0..2 {
            for y in 0..2 {
                e[x][y] = self.correlator(&ma[x], &mb[y]);
            }
        }
        e
    }

    pub fn chsh(&self, a: &ObserverSetting, b: &ObserverSetting, placement: SignPlacement) -> f64 {
        placement.combine(&self.correlators(a, b))
    }
}

/// `[S(A1,B1), S(A2,B2), S(A1,B2), S(A2,B1)]` under the default sign placement.
pub fn fast_bilateral(config: &BilateralConfig) -> Result<[f64; 4]> {
    config.validate()?;
    let p = SignPlacement::default();
    let r0 = CorrelationTensor::pure(config.theta)?;
    let ta = averaged_transfer(&config.a1)?;
    let tb = averaged_transfer(&config.b1)?;
    let ra = r0.apply(&ta, Side::A);
    let rb = r0.apply(&tb, Side::B);
    let rab = ra.apply(&tb, Side::B);
    Ok([
        r0.chsh(&config.a1, &config.b1, p),
        rab.chsh(&config.a2, &config.b2, p),
        rb.chsh(&config.a1, &config.b2, p),
        ra.chsh(&config.a2, &config.b1, p),
    ])
}

/// CHSH values of `A_1` with each Bob in the chain.
pub fn fast_unilateral(theta: f64, alice: &ObserverSetting, bobs: &[ObserverSetting]) -> Result<Vec<f64>> {
    alice.validate()?;
    let p = SignPlacement::default();
    let mut r = CorrelationTensor::pure(theta)?;
    let mut out = Vec::with_capacity(bobs.len());
    for (k, bob) in bobs.iter().enumerate() {
        bob.validate()?;
        out.push(r.chsh(alice, bob, p));
        if k + 1 < bobs.len() {
            r = r.apply(&averaged_transfer(bob)?, Side::B);
        }
    }
    Ok(out)
}
