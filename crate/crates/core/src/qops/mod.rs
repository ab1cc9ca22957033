//! Dense operator and superoperator algebra.
//!
//! # Conventions
//!
//! * Operators are `d × d` complex matrices.
//! * Vectorization is **column-major stacking**: `vec(M)[i + j·d] = M[i, j]`.
//!   Every superoperator in this crate is a `d² × d²` matrix acting on such
//!   vectors, so `vec(A X B) = (Bᵀ ⊗ A) vec(X)`.
//! * The Hamiltonian part of a generator is `L_H[ρ] = −i[H, ρ]` (`ħ = 1`).
//!   For `H = (ω/2)σ_z` with `|0⟩` the excited state the coherence
//!   `ρ01 = ⟨0|ρ|1⟩` therefore evolves as `e^{−iωt}`.

mod expm;

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::{Error, Result};

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
const NORMALIZATION_TOL: f64 = 1e-10;
const RESOLVENT_TOL: f64 = 1e-9;

/// A square complex matrix acting on the system Hilbert space.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    m: DMatrix<Complex64>,
}

impl Operator {
    pub fn from_matrix(m: DMatrix<Complex64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        Ok(Self { m })
    }

    /// Builds an operator from row-major entries.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let d = rows.len();
        for row in rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: row.len(),
                });
            }
        }
        Ok(Self {
            m: DMatrix::from_fn(d, d, |i, j| rows[i][j]),
        })
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            m: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: DMatrix::identity(dim, dim),
        }
    }

    /// The matrix unit `|i⟩⟨j|`.
    pub fn matrix_unit(dim: usize, i: usize, j: usize) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        m[(i, j)] = Complex64::new(1.0, 0.0);
        Self { m }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.m[(i, j)]
    }

    pub fn adjoint(&self) -> Self {
        Self {
            m: self.m.adjoint(),
        }
    }

    pub fn trace(&self) -> Complex64 {
        self.m.trace()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self { m: &self.m * c }
    }

    /// `max |M − M†|` over entries.
    pub fn hermiticity_deviation(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                worst = worst.max((self.m[(i, j)] - self.m[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_deviation() <= tol
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Eigenvalues of the Hermitian part `(M + M†)/2`, ascending.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        hermitian_spectrum(&self.m)
    }

    /// Hilbert–Schmidt inner product `Tr(self† · other)`.
    pub fn inner(&self, other: &Operator) -> Complex64 {
        self.m.dotc(&other.m)
    }

    /// `Tr(self · other)`.
    pub fn trace_product(&self, other: &Operator) -> Complex64 {
        let d = self.dim();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..d {
            for k in 0..d {
                acc += self.m[(i, k)] * other.m[(k, i)];
            }
        }
        acc
    }

    fn check_dim(&self, other: &Operator) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator {
            m: &self.m + &rhs.m,
        }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator {
            m: &self.m - &rhs.m,
        }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator {
            m: &self.m * &rhs.m,
        }
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        Operator {
            m: &self.m * Complex64::new(rhs, 0.0),
        }
    }
}

/// Pauli matrices in the basis `{|0⟩, |1⟩}` with `σ_z|0⟩ = |0⟩`.
pub mod pauli {
    use super::Operator;
    use num_complex::Complex64;

    fn op(entries: [[Complex64; 2]; 2]) -> Operator {
        Operator::from_rows(&[entries[0].to_vec(), entries[1].to_vec()]).expect("2x2")
    }

    const O: Complex64 = Complex64::new(0.0, 0.0);
    const ONE: Complex64 = Complex64::new(1.0, 0.0);
    const I: Complex64 = Complex64::new(0.0, 1.0);

    pub fn identity() -> Operator {
        Operator::identity(2)
    }

    pub fn sigma_x() -> Operator {
        op([[O, ONE], [ONE, O]])
    }

    pub fn sigma_y() -> Operator {
        op([[O, -I], [I, O]])
    }

    pub fn sigma_z() -> Operator {
        op([[ONE, O], [O, -ONE]])
    }

    /// `σ₋ = |1⟩⟨0|`, lowering from the excited state `|0⟩`.
    pub fn sigma_minus() -> Operator {
        op([[O, O], [ONE, O]])
    }

    pub fn sigma_plus() -> Operator {
        op([[O, ONE], [O, O]])
    }
}

/// A validated density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(Operator);

impl DensityMatrix {
    pub fn new(op: Operator) -> Result<Self> {
        let herm = op.hermiticity_deviation();
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!(
                "not Hermitian (deviation {herm:.3e})"
            )));
        }
        let tr = op.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} is not 1")));
        }
        let min = op.hermitian_eigenvalues()[0];
        if min < -PSD_TOL {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        Ok(Self(op))
    }

    /// `|ψ⟩⟨ψ|` for a (not necessarily normalized) state vector.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if norm2 == 0.0 {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let v = DVector::from_column_slice(psi) / Complex64::new(norm2.sqrt(), 0.0);
        Self::new(Operator::from_matrix(&v * v.adjoint())?)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(Operator::identity(dim).scale(Complex64::new(1.0 / dim as f64, 0.0)))
    }

    pub fn operator(&self) -> &Operator {
        &self.0
    }

    pub fn into_operator(self) -> Operator {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }
}

/// A linear map on `d × d` operators stored as a `d² × d²` matrix acting on
/// column-major vectorizations.
#[derive(Clone, Debug, PartialEq)]
pub struct Superoperator {
    dim: usize,
    m: DMatrix<Complex64>,
}

impl Superoperator {
    pub fn from_matrix(dim: usize, m: DMatrix<Complex64>) -> Result<Self> {
        let n = dim * dim;
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: m.nrows(),
            });
        }
        Ok(Self { dim, m })
    }

    pub fn identity(dim: usize) -> Self {
        let n = dim * dim;
        Self {
            dim,
            m: DMatrix::identity(n, n),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        let n = dim * dim;
        Self {
            dim,
            m: DMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.m
    }

    pub fn apply(&self, op: &Operator) -> Result<Operator> {
        if op.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: op.dim(),
            });
        }
        devectorize(&(&self.m * vectorize(op)))
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Superoperator) -> Superoperator {
        Superoperator {
            dim: self.dim,
            m: &self.m * &other.m,
        }
    }

    pub fn scale(&self, c: Complex64) -> Superoperator {
        Superoperator {
            dim: self.dim,
            m: &self.m * c,
        }
    }

    /// Largest entry of `|Tr(S[X]) − Tr(X)|` over the matrix-unit basis.
    pub fn trace_preservation_deviation(&self) -> f64 {
        let d = self.dim;
        let n = d * d;
        let mut worst = 0.0f64;
        for col in 0..n {
            let mut tr = Complex64::new(0.0, 0.0);
            for k in 0..d {
                tr += self.m[(k + k * d, col)];
            }
            let (i, j) = (col % d, col / d);
            let expected = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((tr - Complex64::new(expected, 0.0)).norm());
        }
        worst
    }

    /// Largest entry of `|S[X†] − S[X]†|` over the matrix-unit basis.
    pub fn hermiticity_preservation_deviation(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                let a = self.m.column(i + j * d);
                let b = self.m.column(j + i * d);
                for k in 0..d {
                    for l in 0..d {
                        let lhs = b[k + l * d];
                        let rhs = a[l + k * d].conj();
                        worst = worst.max((lhs - rhs).norm());
                    }
                }
            }
        }
        worst
    }

    /// Largest entry magnitude of the difference.
    pub fn max_abs_diff(&self, other: &Superoperator) -> f64 {
        (&self.m - &other.m)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

impl Add for &Superoperator {
    type Output = Superoperator;
    fn add(self, rhs: &Superoperator) -> Superoperator {
        Superoperator {
            dim: self.dim,
            m: &self.m + &rhs.m,
        }
    }
}

impl Sub for &Superoperator {
    type Output = Superoperator;
    fn sub(self, rhs: &Superoperator) -> Superoperator {
        Superoperator {
            dim: self.dim,
            m: &self.m - &rhs.m,
        }
    }
}

/// Column-major stacking of an operator.
pub fn vectorize(op: &Operator) -> DVector<Complex64> {
    DVector::from_column_slice(op.m.as_slice())
}

/// Inverse of [`vectorize`]; the length must be a perfect square.
pub fn devectorize(v: &DVector<Complex64>) -> Result<Operator> {
    let n = v.len();
    let d = (n as f64).sqrt().round() as usize;
    if d * d != n {
        return Err(Error::DimensionMismatch {
            expected: d * d,
            found: n,
        });
    }
    Ok(Operator {
        m: DMatrix::from_column_slice(d, d, v.as_slice()),
    })
}

fn kron(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    a.kronecker(b)
}

fn check_common_dim(ops: &[Operator]) -> Result<usize> {
    let d = ops.first().map(Operator::dim).unwrap_or(0);
    for op in ops {
        ops[0].check_dim(op)?;
    }
    Ok(d)
}

/// `L_H[ρ] = −i[H, ρ]`.
pub fn hamiltonian_liouvillian(h: &Operator) -> Result<Superoperator> {
    let dev = h.hermiticity_deviation();
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation: dev });
    }
    let d = h.dim();
    let id = DMatrix::<Complex64>::identity(d, d);
    let comm = kron(&id, &h.m) - kron(&h.m.transpose(), &id);
    Ok(Superoperator {
        dim: d,
        m: comm * Complex64::new(0.0, -1.0),
    })
}

/// The Lindblad dissipator `L[ρ] = Σ_α (V_α ρ V_α† − ½{V_α†V_α, ρ})`.
///
/// `dim` is only used when `jumps` is empty, in which case the zero map is
/// returned.
pub fn lindblad_dissipator(jumps: &[Operator], dim: usize) -> Result<Superoperator> {
    if jumps.is_empty() {
        return Ok(Superoperator::zeros(dim));
    }
    let d = check_common_dim(jumps)?;
    let id = DMatrix::<Complex64>::identity(d, d);
    let half = Complex64::new(0.5, 0.0);
    let mut m = DMatrix::zeros(d * d, d * d);
    for v in jumps {
        let vdv = v.m.adjoint() * &v.m;
        m += kron(&v.m.map(|z| z.conj()), &v.m);
        m -= kron(&id, &vdv) * half;
        m -= kron(&vdv.transpose(), &id) * half;
    }
    Ok(Superoperator { dim: d, m })
}

/// `‖Σ_α V_α†V_α − I‖_F`.
pub fn jump_normalization_deviation(jumps: &[Operator]) -> f64 {
    let Some(first) = jumps.first() else {
        return f64::INFINITY;
    };
    let d = first.dim();
    let mut acc = DMatrix::<Complex64>::zeros(d, d);
    for v in jumps {
        if v.dim() != d {
            return f64::INFINITY;
        }
        acc += v.m.adjoint() * &v.m;
    }
    (acc - DMatrix::identity(d, d)).norm()
}

/// The jump map `E[ρ] = Σ_α V_α ρ V_α†`. Requires `Σ V†V = I`, which makes
/// `E` trace preserving and gives `L = E − I`.
pub fn jump_superoperator(jumps: &[Operator]) -> Result<Superoperator> {
    let deviation = jump_normalization_deviation(jumps);
    if deviation > NORMALIZATION_TOL {
        return Err(Error::JumpNormalization { deviation });
    }
    let d = check_common_dim(jumps)?;
    let mut m = DMatrix::zeros(d * d, d * d);
    for v in jumps {
        m += kron(&v.m.map(|z| z.conj()), &v.m);
    }
    Ok(Superoperator { dim: d, m })
}

/// `exp(t · gen)`.
pub fn propagate(gen: &Superoperator, t: f64) -> Result<Superoperator> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "propagation time must be non-negative, got {t}"
        )));
    }
    let scaled = &gen.m * Complex64::new(t, 0.0);
    Ok(Superoperator {
        dim: gen.dim,
        m: expm::expm(&scaled)?,
    })
}

/// Exponential of an arbitrary complex square matrix.
pub fn matrix_exponential(a: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    expm::expm(a)
}

/// `(u − gen)⁻¹`.
pub fn resolvent(gen: &Superoperator, u: Complex64) -> Result<Superoperator> {
    let n = gen.m.nrows();
    let shifted = DMatrix::<Complex64>::identity(n, n) * u - &gen.m;
    let inv = invert_checked(&shifted).ok_or(Error::Singular { u })?;
    Ok(Superoperator {
        dim: gen.dim,
        m: inv,
    })
}

/// Inverse with a residual check `‖A·A⁻¹ − I‖_max ≤ 1e-9`.
pub(crate) fn invert_checked(a: &DMatrix<Complex64>) -> Option<DMatrix<Complex64>> {
    let n = a.nrows();
    let inv = a.clone().try_inverse()?;
    if inv.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return None;
    }
    let residual = (a * &inv - DMatrix::identity(n, n))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    (residual <= RESOLVENT_TOL).then_some(inv)
}

fn hermitian_spectrum(m: &DMatrix<Complex64>) -> Vec<f64> {
    let herm = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let mut ev: Vec<f64> = SymmetricEigen::new(herm)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// The Choi matrix `C = Σ_{ij} |i⟩⟨j| ⊗ Φ(|i⟩⟨j|)`; block `(i, j)` is
/// `Φ(E_ij)`.
pub fn choi_matrix(map: &Superoperator) -> DMatrix<Complex64> {
    let d = map.dim;
    DMatrix::from_fn(d * d, d * d, |row, col| {
        let (i, k) = (row / d, row % d);
        let (j, l) = (col / d, col % d);
        map.m[(k + l * d, i + j * d)]
    })
}

/// Ascending eigenvalues of the (Hermitian part of the) Choi matrix.
pub fn choi_spectrum(map: &Superoperator) -> Vec<f64> {
    hermitian_spectrum(&choi_matrix(map))
}

/// Smallest Choi eigenvalue; non-negative (to eigen-solver noise) iff the
/// map is completely positive.
pub fn choi_min_eigenvalue(map: &Superoperator) -> f64 {
    choi_spectrum(map)[0]
}

/// Classification threshold for [`choi_min_eigenvalue`].
pub const CP_TOLERANCE: f64 = PSD_TOL;
