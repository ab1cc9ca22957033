//! Solvers for the reduced state `ρ_S(t)`.
//!
//! * [`evolve_ensemble`] averages the fixed-rate Lindblad solutions over the
//!   rate ensemble. It is exact and serves as the reference.
//! * [`evolve_volterra`] integrates the effective memory-kernel equation
//!   `dρ/dt = L_H ρ + ∫₀ᵗ K(t−s) e^{(t−s)L_H} L ρ(s) ds`.
//! * [`mc_trajectories`] unravels either evolution into random jump
//!   sequences.
//!
//! All solvers work on blocks of vectorized operators, so the same code
//! evolves one state or the full map (see [`evolution_maps`]).

mod ensemble;
mod locality;
mod memory;
mod montecarlo;
mod volterra;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::qops::{
    devectorize, hamiltonian_liouvillian, jump_normalization_deviation, jump_superoperator,
    lindblad_dissipator, pauli, propagate, vectorize, DensityMatrix, Operator, Superoperator,
};
use crate::ratebath::RateEnsemble;
use crate::{Complex64, Error, Result};

pub use ensemble::evolve_ensemble;
pub use locality::{locality_witness, LocalityWitness};
pub use memory::{effective_memory_superop, exact_memory_superop};
pub use montecarlo::{mc_trajectories, MCConfig, McScheme};
pub use volterra::{evolve_volterra, RICHARDSON_TOL};

/// Largest acceptable `‖Σ V†V − I‖` for jump-based schemes.
pub const JUMP_NORMALIZATION_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Picture {
    Schroedinger,
    Interaction,
}

/// `dρ_R/dt = L_H ρ_R + γ_R L ρ_R` for every rate of the ensemble.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    hamiltonian: Operator,
    jumps: Vec<Operator>,
    ensemble: RateEnsemble,
    picture: Picture,
    l_h: Superoperator,
    dissipator: Superoperator,
}

impl ModelSpec {
    pub fn new(
        hamiltonian: Operator,
        jumps: Vec<Operator>,
        ensemble: RateEnsemble,
        picture: Picture,
    ) -> Result<Self> {
        let d = hamiltonian.dim();
        for v in &jumps {
            if v.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: v.dim(),
                });
            }
        }
        let l_h = hamiltonian_liouvillian(&hamiltonian)?;
        let dissipator = lindblad_dissipator(&jumps, d)?;
        Ok(Self {
            hamiltonian,
            jumps,
            ensemble,
            picture,
            l_h,
            dissipator,
        })
    }

    /// Qubit with `H = (ω/2)σ_z` and the pure-dephasing jumps of
    /// [`dephasing_jumps`].
    pub fn dephasing(omega: f64, ensemble: RateEnsemble, picture: Picture) -> Result<Self> {
        Self::new(
            &pauli::sigma_z() * (omega / 2.0),
            dephasing_jumps(),
            ensemble,
            picture,
        )
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &[Operator] {
        &self.jumps
    }

    pub fn ensemble(&self) -> &RateEnsemble {
        &self.ensemble
    }

    pub fn picture(&self) -> Picture {
        self.picture
    }

    pub fn with_picture(mut self, picture: Picture) -> Self {
        self.picture = picture;
        self
    }

    pub fn with_ensemble(mut self, ensemble: RateEnsemble) -> Self {
        self.ensemble = ensemble;
        self
    }

    /// `L_H = −i[H, ·]`.
    pub fn hamiltonian_generator(&self) -> &Superoperator {
        &self.l_h
    }

    /// The rate-free dissipator `L`.
    pub fn dissipator(&self) -> &Superoperator {
        &self.dissipator
    }

    /// `L_H + γ L`.
    pub fn generator(&self, rate: f64) -> Superoperator {
        &self.l_h + &self.dissipator.scale(Complex64::new(rate, 0.0))
    }

    /// `E = Σ V ρ V†`; fails unless `Σ V†V = I`.
    pub fn jump_map(&self) -> Result<Superoperator> {
        let deviation = jump_normalization_deviation(&self.jumps);
        if deviation > JUMP_NORMALIZATION_TOL {
            return Err(Error::JumpNormalization { deviation });
        }
        jump_superoperator(&self.jumps)
    }

    /// Whether `L_H` and `L` commute, which makes the effective equation exact.
    pub fn commutator_norm(&self) -> f64 {
        let a = self.l_h.matrix();
        let b = self.dissipator.matrix();
        (a * b - b * a).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// `{σ_z/√2, I/√2}`: `E[ρ] = (ρ + σ_zρσ_z)/2` is idempotent, so `L = E − I`
/// leaves populations alone and maps each coherence `c ↦ −c`.
pub fn dephasing_jumps() -> Vec<Operator> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    vec![&pauli::sigma_z() * s, &pauli::identity() * s]
}

/// Uniform grid `t_k = k·t_max/steps`, `k = 0..=steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TimeGrid {
    pub t_max: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub const DEFAULT_STEPS: usize = 2000;

    pub fn new(t_max: f64, steps: usize) -> Result<Self> {
        if !(t_max > 0.0 && t_max.is_finite()) || steps == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid needs t_max > 0 and steps > 0 (got {t_max}, {steps})"
            )));
        }
        Ok(Self { t_max, steps })
    }

    /// `[0, 20/⟨γ⟩]` with step `0.01/⟨γ⟩`.
    pub fn default_for(ensemble: &RateEnsemble) -> Self {
        Self {
            t_max: 20.0 / ensemble.stats().mean_rate,
            steps: Self::DEFAULT_STEPS,
        }
    }

    pub fn step(&self) -> f64 {
        self.t_max / self.steps as f64
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.t_max
        } else {
            k as f64 * self.step()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    fn refined(&self) -> Self {
        Self {
            t_max: self.t_max,
            steps: 2 * self.steps,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Ensemble,
    Volterra,
    McFrozenRate,
    McRenewal,
}

impl SolverKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Ensemble => "ensemble",
            Self::Volterra => "volterra",
            Self::McFrozenRate => "mc_frozen_rate",
            Self::McRenewal => "mc_renewal",
        }
    }
}

/// Per-point health of a computed state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PointDiagnostics {
    /// `|Tr ρ(t) − 1|`
    pub trace_drift: f64,
    pub hermiticity: f64,
    pub min_eigenvalue: f64,
}

#[derive(Clone, Debug)]
pub struct EvolutionResult {
    pub grid: TimeGrid,
    pub solver: SolverKind,
    pub picture: Picture,
    pub states: Vec<Operator>,
    pub diagnostics: Vec<PointDiagnostics>,
    /// Monte Carlo only: standard error of each entry, real part in the real
    /// component and imaginary part in the imaginary component.
    pub standard_errors: Option<Vec<Operator>>,
    /// Volterra only: largest entry-wise change under step halving.
    pub richardson_estimate: Option<f64>,
}

impl EvolutionResult {
    fn from_columns(
        grid: TimeGrid,
        solver: SolverKind,
        picture: Picture,
        columns: &[DMatrix<Complex64>],
    ) -> Result<Self> {
        let states = columns
            .iter()
            .map(|c| devectorize(&c.column(0).into_owned()))
            .collect::<Result<Vec<_>>>()?;
        let diagnostics = states.iter().map(diagnose).collect();
        Ok(Self {
            grid,
            solver,
            picture,
            states,
            diagnostics,
            standard_errors: None,
            richardson_estimate: None,
        })
    }

    pub fn times(&self) -> Vec<f64> {
        self.grid.times()
    }

    pub fn max_trace_drift(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.trace_drift)
            .fold(0.0, f64::max)
    }

    pub fn max_hermiticity_deviation(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.hermiticity)
            .fold(0.0, f64::max)
    }

    /// `ρ(t_k)[i, j]` for every grid point.
    pub fn entry_series(&self, i: usize, j: usize) -> Vec<Complex64> {
        self.states.iter().map(|s| s.get(i, j)).collect()
    }
}

fn diagnose(state: &Operator) -> PointDiagnostics {
    PointDiagnostics {
        trace_drift: (state.trace() - Complex64::new(1.0, 0.0)).norm(),
        hermiticity: state.hermiticity_deviation(),
        min_eigenvalue: state.hermitian_eigenvalues()[0],
    }
}

/// Solver selection for map reconstruction.
#[derive(Clone, Copy, Debug)]
pub enum Solver {
    Ensemble,
    Volterra,
    MonteCarlo(MCConfig),
}

/// The linear maps `ρ(0) ↦ ρ(t_k)` obtained by evolving all `d²` matrix
/// units at once with the chosen solver.
pub fn evolution_maps(
    model: &ModelSpec,
    grid: TimeGrid,
    solver: Solver,
) -> Result<Vec<Superoperator>> {
    let d = model.dim();
    let x0 = DMatrix::<Complex64>::identity(d * d, d * d);
    let blocks = match solver {
        Solver::Ensemble => {
            let mut b = ensemble::evolve_block(model, &x0, grid)?;
            to_picture(model, grid, &mut b)?;
            b
        }
        Solver::Volterra => {
            let mut b = volterra::evolve_block_checked(model, &x0, grid)?.0;
            to_picture(model, grid, &mut b)?;
            b
        }
        Solver::MonteCarlo(cfg) => montecarlo::run(model, &x0, grid, &cfg)?.mean,
    };
    blocks
        .into_iter()
        .map(|m| Superoperator::from_matrix(d, m))
        .collect()
}

fn initial_block(model: &ModelSpec, rho0: &DensityMatrix) -> Result<DMatrix<Complex64>> {
    if rho0.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: rho0.dim(),
        });
    }
    let v = vectorize(rho0.operator());
    Ok(DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
}

/// Moves Schrödinger-picture blocks to the interaction picture,
/// `X_I(t) = e^{−t L_H} X(t)`, when the model asks for it.
fn to_picture(model: &ModelSpec, grid: TimeGrid, blocks: &mut [DMatrix<Complex64>]) -> Result<()> {
    if model.picture == Picture::Schroedinger {
        return Ok(());
    }
    let back = propagate(&model.l_h.scale(Complex64::new(-1.0, 0.0)), grid.step())?.into_matrix();
    let mut frame = DMatrix::<Complex64>::identity(back.nrows(), back.ncols());
    for block in blocks.iter_mut() {
        *block = &frame * &*block;
        frame = &back * frame;
    }
    Ok(())
}
