use nalgebra::DMatrix;

use super::{initial_block, to_picture, EvolutionResult, ModelSpec, SolverKind, TimeGrid};
use crate::qops::{propagate, DensityMatrix};
use crate::{Complex64, Result};

/// `ρ_S(t_k) = Σ_R P_R exp[(L_H + γ_R L) t_k] ρ0`.
pub fn evolve_ensemble(
    model: &ModelSpec,
    rho0: &DensityMatrix,
    grid: TimeGrid,
) -> Result<EvolutionResult> {
    let x0 = initial_block(model, rho0)?;
    let mut blocks = evolve_block(model, &x0, grid)?;
    to_picture(model, grid, &mut blocks)?;
    EvolutionResult::from_columns(grid, SolverKind::Ensemble, model.picture(), &blocks)
}

/// Schrödinger-picture ensemble average applied to every column of `x0`.
pub(super) fn evolve_block(
    model: &ModelSpec,
    x0: &DMatrix<Complex64>,
    grid: TimeGrid,
) -> Result<Vec<DMatrix<Complex64>>> {
    let mut out = vec![DMatrix::<Complex64>::zeros(x0.nrows(), x0.ncols()); grid.len()];
    for entry in model.ensemble().entries() {
        let step = propagate(&model.generator(entry.rate), grid.step())?.into_matrix();
        let weight = Complex64::new(entry.weight, 0.0);
        let mut x = x0.clone();
        for (k, acc) in out.iter_mut().enumerate() {
            if k > 0 {
                x = &step * x;
            }
            *acc += &x * weight;
        }
    }
    Ok(out)
}
