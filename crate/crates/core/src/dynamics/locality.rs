use nalgebra::DMatrix;
use serde::Serialize;

use super::{evolve_ensemble, ModelSpec, Picture, TimeGrid};
use crate::qops::{vectorize, DensityMatrix, Superoperator};
use crate::{Complex64, Result};

/// How far the exact evolution is from any time-independent generator.
#[derive(Clone, Debug, Serialize)]
pub struct LocalityWitness {
    /// `max_k ‖ρ̇(t_k) − (L_H + X)ρ(t_k)‖` for the least-squares `X`.
    pub max_residual: f64,
    pub time_of_max: f64,
    #[serde(skip)]
    pub generator: Superoperator,
}

/// Fits the best constant `X` to `ρ̇ − L_H ρ = X ρ` along one exact
/// trajectory (central differences on interior grid points) and reports the
/// largest misfit. A Markovian evolution gives zero up to differencing error.
pub fn locality_witness(
    model: &ModelSpec,
    rho0: &DensityMatrix,
    grid: TimeGrid,
) -> Result<LocalityWitness> {
    let model = model.clone().with_picture(Picture::Schroedinger);
    let result = evolve_ensemble(&model, rho0, grid)?;
    let h = grid.step();
    let d = model.dim();
    let n = d * d;
    let inner = grid.steps - 1;
    let l_h = model.hamiltonian_generator().matrix();

    let mut states = DMatrix::<Complex64>::zeros(n, inner);
    let mut targets = DMatrix::<Complex64>::zeros(n, inner);
    for k in 1..grid.steps {
        let prev = vectorize(&result.states[k - 1]);
        let next = vectorize(&result.states[k + 1]);
        let here = vectorize(&result.states[k]);
        let deriv = (next - prev) / Complex64::new(2.0 * h, 0.0);
        targets.set_column(k - 1, &(deriv - l_h * &here));
        states.set_column(k - 1, &here);
    }
    let pinv = states
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| crate::Error::InvalidParameter(e.to_string()))?;
    let x = &targets * pinv;
    let misfit = &targets - &x * &states;
    let (mut max_residual, mut time_of_max) = (0.0, 0.0);
    for (k, col) in misfit.column_iter().enumerate() {
        let r = col.norm();
        if r > max_residual {
            max_residual = r;
            time_of_max = grid.time(k + 1);
        }
    }
    Ok(LocalityWitness {
        max_residual,
        time_of_max,
        generator: Superoperator::from_matrix(d, x)?,
    })
}
