use crate::error::{contract, Result};
use crate::linalg::{check_density, pauli_basis, tensor, Mat4};

/// Tolerance at which states are accepted as density operators.
pub const STATE_TOL: f64 = 1e-10;

/// A two-qubit density operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoQubitState {
    rho: Mat4,
}

impl TwoQubitState {
    /// Validates `rho` as a density operator at [`STATE_TOL`].
    pub fn new(rho: Mat4) -> Result<Self> {
        if !check_density(&rho, STATE_TOL) {
            return Err(contract("matrix is not a valid density operator"));
        }
        Ok(Self { rho })
    }

    /// Wraps a matrix produced by a trace-preserving map on a valid state.
    pub(crate) fn from_trusted(rho: Mat4) -> Self {
        Self { rho }
    }

    pub fn maximally_mixed() -> Self {
        Self { rho: Mat4::identity().scale_re(0.25) }
    }

    pub fn rho(&self) -> &Mat4 {
        &self.rho
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        check_density(&self.rho, tol)
    }

    /// `Tr[ρ (a ⊗ b)]`, real part.
    pub fn expectation(&self, op: &Mat4) -> f64 {
        (self.rho * *op).trace().re
    }

    /// Correlation tensor `R[i][j] = Tr[ρ (σ_i ⊗ σ_j)]` with `σ_0 = 𝕀`.
    pub fn correlation_tensor(&self) -> [[f64; 4]; 4] {
        let basis = pauli_basis();
        let mut out = [[0.0; 4]; 4];
        for (i, si) in basis.iter().enumerate() {
            for (j, sj) in basis.iter().enumerate() {
                out[i][j] = self.expectation(&tensor(si, sj));
            }
        }
        out
    }
}
