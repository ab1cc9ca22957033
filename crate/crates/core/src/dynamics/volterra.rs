use nalgebra::DMatrix;

use super::{initial_block, to_picture, EvolutionResult, ModelSpec, SolverKind, TimeGrid};
use crate::qops::{matrix_exponential, DensityMatrix};
use crate::ratebath::{kernel_decompose, KernelDecomposition};
use crate::{Complex64, Error, Result};

/// Largest tolerated change of any state entry when the step is halved.
pub const RICHARDSON_TOL: f64 = 1e-4;

type Mat = DMatrix<Complex64>;

/// Integrates `dρ/dt = L_H ρ + k₀ L ρ + Σ_j m_j` with
/// `m_j(t) = ∫₀ᵗ c_j e^{(p_j + L_H)(t−s)} L ρ(s) ds`.
///
/// Each `m_j` is advanced exactly over a step except for the source `Lρ`,
/// which is interpolated linearly; the state is treated the same way with
/// the memory as source. The new state enters both updates linearly, so
/// every step is one precomputed linear solve. The scheme is second order;
/// the run is repeated with half the step and rejected when the two differ
/// by more than [`RICHARDSON_TOL`].
pub fn evolve_volterra(
    model: &ModelSpec,
    rho0: &DensityMatrix,
    grid: TimeGrid,
    kernel: &KernelDecomposition,
) -> Result<EvolutionResult> {
    let x0 = initial_block(model, rho0)?;
    let (mut blocks, estimate) = checked(model, kernel, &x0, grid)?;
    to_picture(model, grid, &mut blocks)?;
    let mut result =
        EvolutionResult::from_columns(grid, SolverKind::Volterra, model.picture(), &blocks)?;
    result.richardson_estimate = Some(estimate);
    Ok(result)
}

pub(super) fn evolve_block_checked(
    model: &ModelSpec,
    x0: &Mat,
    grid: TimeGrid,
) -> Result<(Vec<Mat>, f64)> {
    let kernel = kernel_decompose(model.ensemble())?;
    checked(model, &kernel, x0, grid)
}

fn checked(
    model: &ModelSpec,
    kernel: &KernelDecomposition,
    x0: &Mat,
    grid: TimeGrid,
) -> Result<(Vec<Mat>, f64)> {
    let coarse = integrate(model, kernel, x0, grid)?;
    let fine = integrate(model, kernel, x0, grid.refined())?;
    let estimate = coarse
        .iter()
        .enumerate()
        .map(|(k, x)| max_abs(&(x - &fine[2 * k])))
        .fold(0.0, f64::max);
    if estimate > RICHARDSON_TOL {
        return Err(Error::StepTooCoarse {
            estimate,
            tolerance: RICHARDSON_TOL,
        });
    }
    Ok((coarse, estimate))
}

fn max_abs(m: &Mat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `(e^{hB}, ∫₀ʰ e^{sB} ds, ∫₀ʰ e^{(h−s)B} s ds)` from one block exponential.
fn van_loan(b: &Mat, h: f64) -> Result<(Mat, Mat, Mat)> {
    let n = b.nrows();
    let hc = Complex64::new(h, 0.0);
    let mut big = Mat::zeros(3 * n, 3 * n);
    big.view_mut((0, 0), (n, n)).copy_from(&(b * hc));
    for i in 0..n {
        big[(i, n + i)] = hc;
        big[(n + i, 2 * n + i)] = hc;
    }
    let e = matrix_exponential(&big)?;
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, n)).into_owned(),
        e.view((0, 2 * n), (n, n)).into_owned(),
    ))
}

struct Mode {
    decay: Mat,
    /// `c W1`, weight of the old source
    old: Mat,
    /// `c (W0 − W1) L`, weight of the new state
    new: Mat,
}

fn integrate(
    model: &ModelSpec,
    kernel: &KernelDecomposition,
    x0: &Mat,
    grid: TimeGrid,
) -> Result<Vec<Mat>> {
    let h = grid.step();
    let n = x0.nrows();
    let id = Mat::identity(n, n);
    let l_h = model.hamiltonian_generator().matrix();
    let l = model.dissipator().matrix();

    let a = l_h + l * Complex64::new(kernel.markov_weight, 0.0);
    let (e_a, f12, f13) = van_loan(&a, h)?;
    let v1 = &f12 - &f13 / Complex64::new(h, 0.0);
    let v_new = &f12 - &v1;

    let mut modes = Vec::with_capacity(kernel.modes.len());
    let mut q_total = Mat::zeros(n, n);
    for m in &kernel.modes {
        let b = l_h + &id * Complex64::new(m.pole, 0.0);
        let (decay, f12, f13) = van_loan(&b, h)?;
        let c = Complex64::new(m.amplitude, 0.0);
        let w_new = &f13 / Complex64::new(h, 0.0);
        let w1 = &f12 - &w_new;
        let new = &w_new * l * c;
        q_total += &new;
        modes.push(Mode {
            decay,
            old: w1 * c,
            new,
        });
    }
    let system = &id - &v_new * &q_total;
    let solve = system.try_inverse().ok_or(Error::Singular {
        u: Complex64::new(h, 0.0),
    })?;

    let cols = x0.ncols();
    let mut memory: Vec<Mat> = vec![Mat::zeros(n, cols); modes.len()];
    let mut total = Mat::zeros(n, cols);
    let mut x = x0.clone();
    let mut out = Vec::with_capacity(grid.len());
    out.push(x.clone());
    let mut pending: Vec<Mat> = vec![Mat::zeros(n, cols); modes.len()];
    for _ in 0..grid.steps {
        let source = l * &x;
        let mut a_sum = Mat::zeros(n, cols);
        for ((mode, m), p) in modes.iter().zip(&memory).zip(pending.iter_mut()) {
            *p = &mode.decay * m + &mode.old * &source;
            a_sum += &*p;
        }
        let rhs = &e_a * &x + &v1 * &total + &v_new * &a_sum;
        x = &solve * rhs;
        total.fill(Complex64::new(0.0, 0.0));
        for ((mode, m), p) in modes.iter().zip(memory.iter_mut()).zip(&pending) {
            *m = p + &mode.new * &x;
            total += &*m;
        }
        out.push(x.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn van_loan_scalar() {
        let b = Mat::from_element(1, 1, Complex64::new(-2.0, 0.0));
        let h: f64 = 0.3;
        let (e, f12, f13) = van_loan(&b, h).unwrap();
        assert!((e[(0, 0)].re - (-2.0 * h).exp()).abs() < 1e-15);
        let want12 = (1.0 - (-2.0 * h).exp()) / 2.0;
        assert!((f12[(0, 0)].re - want12).abs() < 1e-15);
        // ∫₀ʰ e^{−2(h−s)} s ds
        let want13 = h / 2.0 - (1.0 - (-2.0 * h).exp()) / 4.0;
        assert!((f13[(0, 0)].re - want13).abs() < 1e-15);
    }
}
