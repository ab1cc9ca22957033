use nalgebra::DMatrix;

use super::ModelSpec;
use crate::qops::{invert_checked, resolvent, Superoperator};
use crate::ratebath::KernelDecomposition;
use crate::{Complex64, Error, Result};

/// `𝕃(u) = ⟨G_R(u)⟩⁻¹ ⟨G_R(u) γ_R L⟩` with `G_R(u) = (u − L_H − γ_R L)⁻¹`,
/// the memory superoperator that makes the averaged evolution exact.
pub fn exact_memory_superop(model: &ModelSpec, u: Complex64) -> Result<Superoperator> {
    let d = model.dim();
    let n = d * d;
    let mut avg = DMatrix::<Complex64>::zeros(n, n);
    let mut weighted = DMatrix::<Complex64>::zeros(n, n);
    for e in model.ensemble().entries() {
        let g = resolvent(&model.generator(e.rate), u)?.into_matrix();
        weighted += &g * Complex64::new(e.weight * e.rate, 0.0);
        avg += g * Complex64::new(e.weight, 0.0);
    }
    let inv = invert_checked(&avg).ok_or(Error::Singular { u })?;
    Superoperator::from_matrix(d, inv * weighted * model.dissipator().matrix())
}

/// `K(u − L_H) L = [k₀ + Σ_j c_j (u − p_j − L_H)⁻¹] L`, the memory of the
/// effective equation.
pub fn effective_memory_superop(
    model: &ModelSpec,
    kernel: &KernelDecomposition,
    u: Complex64,
) -> Result<Superoperator> {
    let d = model.dim();
    let n = d * d;
    let mut k = DMatrix::<Complex64>::identity(n, n) * Complex64::new(kernel.markov_weight, 0.0);
    for m in &kernel.modes {
        let r = resolvent(model.hamiltonian_generator(), u - m.pole)?.into_matrix();
        k += r * Complex64::new(m.amplitude, 0.0);
    }
    Superoperator::from_matrix(d, k * model.dissipator().matrix())
}
