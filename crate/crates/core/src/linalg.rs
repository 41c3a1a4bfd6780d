//! Fixed-size complex matrices for one- and two-qubit operators.
//!
//! Only the two sizes needed here exist: [`Mat2`] for single-qubit operators
//! and [`Mat4`] for two-qubit operators. Tensor products take the first factor
//! as Alice's (A) side, so `(a ⊗ b)[2i + k][2j + l] = a[i][j] · b[k][l]`.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Which half of a two-qubit system an operation acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

/// Square complex matrix of compile-time dimension `N`, stored row-major.
#[derive(Clone, Copy, PartialEq)]
pub struct Matrix<const N: usize> {
    data: [[C64; N]; N],
}

pub type Mat2 = Matrix<2>;
pub type Mat4 = Matrix<4>;

impl<const N: usize> std::fmt::Debug for Matrix<N> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "Matrix<{N}> [")?;
        for row in &self.data {
            write!(f, "  ")?;
            for z in row {
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl<const N: usize> Matrix<N> {
    pub const DIM: usize = N;

    pub fn zeros() -> Self {
        Self { data: [[ZERO; N]; N] }
    }

    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            m.data[i][i] = ONE;
        }
        m
    }

    pub fn from_rows(data: [[C64; N]; N]) -> Self {
        Self { data }
    }

    /// Real diagonal matrix.
    pub fn diag(values: [f64; N]) -> Self {
        let mut m = Self::zeros();
        for (i, v) in values.iter().enumerate() {
            m.data[i][i] = C64::new(*v, 0.0);
        }
        m
    }

    /// Builds a matrix from a row-major slice; the slice must hold exactly `N²` entries.
    pub fn from_row_major(entries: &[C64]) -> Result<Self> {
        if entries.len() != N * N {
            return Err(contract(format!(
                "expected {} entries for a {N}x{N} matrix, got {}",
                N * N,
                entries.len()
            )));
        }
        let mut m = Self::zeros();
        for (idx, z) in entries.iter().enumerate() {
            m.data[idx / N][idx % N] = *z;
        }
        Ok(m)
    }

    pub fn rows(&self) -> &[[C64; N]; N] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for j in 0..N {
                m.data[j][i] = self.data[i][j].conj();
            }
        }
        m
    }

    pub fn trace(&self) -> C64 {
        (0..N).map(|i| self.data[i][i]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut m = *self;
        m.data.iter_mut().flatten().for_each(|z| *z *= s);
        m
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    /// Computes `self · rho · self†`.
    pub fn sandwich(&self, rho: &Self) -> Self {
        *self * *rho * self.adjoint()
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .flatten()
            .zip(other.data.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.adjoint()) <= tol
    }

    /// `(self + self†) / 2`.
    pub fn hermitian_part(&self) -> Self {
        (*self + self.adjoint()).scale_re(0.5)
    }

    fn off_diagonal_norm(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..N {
            for j in 0..N {
                if i != j {
                    acc += self.data[i][j].norm_sqr();
                }
            }
        }
        acc.sqrt()
    }
}

impl<const N: usize> Default for Matrix<N> {
    fn default() -> Self {
        Self::zeros()
    }
}

impl<const N: usize> Index<(usize, usize)> for Matrix<N> {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i][j]
    }
}

impl<const N: usize> IndexMut<(usize, usize)> for Matrix<N> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i][j]
    }
}

impl<const N: usize> Add for Matrix<N> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl<const N: usize> AddAssign for Matrix<N> {
    fn add_assign(&mut self, rhs: Self) {
        for i in 0..N {
            for j in 0..N {
                self.data[i][j] += rhs.data[i][j];
            }
        }
    }
}

impl<const N: usize> Sub for Matrix<N> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        for i in 0..N {
            for j in 0..N {
                self.data[i][j] -= rhs.data[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Mul for Matrix<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut out = Self::zeros();
        for i in 0..N {
            for k in 0..N {
                let a = self.data[i][k];
                if a == ZERO {
                    continue;
                }
                for j in 0..N {
                    out.data[i][j] += a * rhs.data[k][j];
                }
            }
        }
        out
    }
}

impl<const N: usize> std::iter::Sum for Matrix<N> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::zeros(), |acc, m| acc + m)
    }
}

pub fn pauli_x() -> Mat2 {
    Mat2::from_rows([[ZERO, ONE], [ONE, ZERO]])
}

pub fn pauli_y() -> Mat2 {
    Mat2::from_rows([[ZERO, C64::new(0.0, -1.0)], [C64::new(0.0, 1.0), ZERO]])
}

pub fn pauli_z() -> Mat2 {
    Mat2::diag([1.0, -1.0])
}

/// `[𝕀, σx, σy, σz]`.
pub fn pauli_basis() -> [Mat2; 4] {
    [Mat2::identity(), pauli_x(), pauli_y(), pauli_z()]
}

/// Kronecker product with `a` on side A.
pub fn tensor(a: &Mat2, b: &Mat2) -> Mat4 {
    let mut out = Mat4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[(2 * i + k, 2 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Lifts a single-qubit operator onto one side of a two-qubit system.
pub fn embed(op: &Mat2, side: Side) -> Mat4 {
    match side {
        Side::A => tensor(op, &Mat2::identity()),
        Side::B => tensor(&Mat2::identity(), op),
    }
}

/// Traces out `side`, returning the reduced operator of the other half.
pub fn partial_trace(m: &Mat4, side: Side) -> Mat2 {
    let mut out = Mat2::zeros();
    for i in 0..2 {
        for j in 0..2 {
            out[(i, j)] = match side {
                Side::B => m[(2 * i, 2 * j)] + m[(2 * i + 1, 2 * j + 1)],
                Side::A => m[(i, j)] + m[(2 + i, 2 + j)],
            };
        }
    }
    out
}

/// Off-diagonal Frobenius norm at which the Jacobi sweep stops.
pub const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigenvalues of the Hermitian part of `m` in ascending order, by cyclic
/// complex Jacobi rotations.
pub fn hermitian_eigenvalues<const N: usize>(m: &Matrix<N>) -> [f64; N] {
    let mut a = m.hermitian_part();
    for _ in 0..JACOBI_MAX_SWEEPS {
        if a.off_diagonal_norm() <= JACOBI_TOL {
            break;
        }
        for p in 0..N {
            for q in (p + 1)..N {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r <= f64::MIN_POSITIVE {
                    continue;
                }
                // Unitary J = U·R: U removes the phase of a[p][q], R is the real rotation
                // zeroing the resulting real symmetric 2x2 block.
                let phase = apq / r;
                let tau = (a[(q, q)].re - a[(p, p)].re) / (2.0 * r);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let mut j = Matrix::<N>::identity();
                j[(p, p)] = C64::new(c, 0.0);
                j[(p, q)] = C64::new(s, 0.0);
                j[(q, p)] = phase.conj() * (-s);
                j[(q, q)] = phase.conj() * c;
                a = j.adjoint() * a * j;
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
            }
        }
    }
    let mut ev = [0.0; N];
    for (i, e) in ev.iter_mut().enumerate() {
        *e = a[(i, i)].re;
    }
    ev.sort_by(f64::total_cmp);
    ev
}

/// True iff `m` is Hermitian, unit-trace and positive semidefinite, all to within `tol`.
pub fn check_density(m: &Mat4, tol: f64) -> bool {
    if !m.is_finite() || !m.is_hermitian(tol) {
        return false;
    }
    if (m.trace() - ONE).norm() > tol {
        return false;
    }
    hermitian_eigenvalues(m).iter().all(|&e| e >= -tol)
}
