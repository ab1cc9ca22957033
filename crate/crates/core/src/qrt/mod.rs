//! Two-time correlations and the quantum regression theorem (QRT).
//!
//! The QRT predicts `⟨S(t)A(t+τ)⟩` by propagating the equal-time value
//! `⟨S(t)A(t)⟩` with the one-time expectation propagator `𝔾(τ)`. For a rate
//! ensemble this misses the correlation between the rate seen before `t` and
//! after it; [`qrt_residual`] measures the difference.

use nalgebra::{DMatrix, DVector, SVD};

use crate::dynamics::{evolve_ensemble, ModelSpec, Picture, TimeGrid};
use crate::qops::{
    devectorize, pauli, propagate, vectorize, DensityMatrix, Operator, Superoperator,
};
use crate::ratebath::RateEnsemble;
use crate::{Complex64, Error, Result};

/// Largest accepted condition number of a basis Gram matrix.
pub const GRAM_CONDITION_LIMIT: f64 = 1e6;

type Mat = DMatrix<Complex64>;

/// A complete set of observables `{A_μ}`.
#[derive(Clone, Debug)]
pub struct ObservableBasis {
    operators: Vec<Operator>,
    labels: Vec<String>,
    /// row `μ` is `vec(A_μᵀ)ᵀ`, so `(M vec X)_μ = Tr(A_μ X)`
    measurement: Mat,
    inverse: Mat,
}

impl ObservableBasis {
    pub fn new(operators: Vec<Operator>, labels: Vec<String>) -> Result<Self> {
        let Some(first) = operators.first() else {
            return Err(Error::InvalidParameter("empty observable basis".into()));
        };
        let d = first.dim();
        if operators.len() != d * d || labels.len() != operators.len() {
            return Err(Error::InvalidParameter(format!(
                "a complete basis for dimension {d} needs {} operators and labels",
                d * d
            )));
        }
        let mut measurement = Mat::zeros(d * d, d * d);
        for (mu, a) in operators.iter().enumerate() {
            if a.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: a.dim(),
                });
            }
            let t = Operator::from_matrix(a.matrix().transpose())?;
            measurement.set_row(mu, &vectorize(&t).transpose());
        }
        let cond = gram_condition(&operators);
        if !(cond <= GRAM_CONDITION_LIMIT) {
            return Err(Error::InvalidParameter(format!(
                "observable basis is ill-conditioned (Gram condition {cond:.3e})"
            )));
        }
        let inverse = measurement
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidParameter("observable basis is singular".into()))?;
        Ok(Self {
            operators,
            labels,
            measurement,
            inverse,
        })
    }

    /// `{σ_x, σ_y, σ_z, I}`.
    pub fn pauli() -> Self {
        Self::new(
            vec![
                pauli::sigma_x(),
                pauli::sigma_y(),
                pauli::sigma_z(),
                pauli::identity(),
            ],
            ["sx", "sy", "sz", "id"].map(String::from).to_vec(),
        )
        .expect("Pauli basis is well conditioned")
    }

    pub fn operators(&self) -> &[Operator] {
        &self.operators
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.operators[0].dim()
    }

    /// `(Tr A_μ X)_μ`.
    pub fn measure(&self, x: &Operator) -> DVector<Complex64> {
        &self.measurement * vectorize(x)
    }

    /// A superoperator expressed on expectation values, `M S M⁻¹`.
    pub fn represent(&self, map: &Superoperator) -> Mat {
        &self.measurement * map.matrix() * &self.inverse
    }
}

fn gram_condition(ops: &[Operator]) -> f64 {
    let n = ops.len();
    let gram = Mat::from_fn(n, n, |i, j| ops[i].inner(&ops[j]));
    let sv = SVD::new(gram, false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

/// `⟨A_μ⟩(t_k)` from the ensemble solver, one vector per grid point.
pub fn expectation_series(
    model: &ModelSpec,
    rho0: &DensityMatrix,
    basis: &ObservableBasis,
    grid: TimeGrid,
) -> Result<Vec<DVector<Complex64>>> {
    check_basis(model, basis)?;
    let res = evolve_ensemble(model, rho0, grid)?;
    Ok(res.states.iter().map(|s| basis.measure(s)).collect())
}

fn check_basis(model: &ModelSpec, basis: &ObservableBasis) -> Result<()> {
    if basis.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: basis.dim(),
        });
    }
    Ok(())
}

fn check_times(t: f64, tau: f64) -> Result<()> {
    if t >= 0.0 && tau >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "correlation times must be non-negative, got t={t}, τ={tau}"
        )))
    }
}

/// Propagators of one ensemble member, cached per requested time.
struct Member {
    weight: f64,
    generator: Superoperator,
}

struct Propagators<'a> {
    model: &'a ModelSpec,
    members: Vec<Member>,
}

impl<'a> Propagators<'a> {
    fn new(model: &'a ModelSpec) -> Self {
        let members = model
            .ensemble()
            .entries()
            .iter()
            .map(|e| Member {
                weight: e.weight,
                generator: model.generator(e.rate),
            })
            .collect();
        Self { model, members }
    }

    fn free(&self, t: f64) -> Result<Mat> {
        Ok(propagate(self.model.hamiltonian_generator(), t)?.into_matrix())
    }

    fn free_back(&self, t: f64) -> Result<Mat> {
        let back = self
            .model
            .hamiltonian_generator()
            .scale(Complex64::new(-1.0, 0.0));
        Ok(propagate(&back, t)?.into_matrix())
    }

    /// `Σ_R P_R Tr{A_μ Λ_R(t, τ)[ρ_R(t) S]}` with `Λ_R` the member's
    /// propagator from `t` to `t+τ` in the model's picture.
    fn correlation(
        &self,
        rho0: &DVector<Complex64>,
        s: &Operator,
        basis: &ObservableBasis,
        t: f64,
        tau: f64,
    ) -> Result<DVector<Complex64>> {
        let interaction = self.model.picture() == Picture::Interaction;
        let (to_t, back_t, back_end) = if interaction {
            (
                Some(self.free(t)?),
                Some(self.free_back(t)?),
                Some(self.free_back(t + tau)?),
            )
        } else {
            (None, None, None)
        };
        let mut out = DVector::<Complex64>::zeros(basis.len());
        for m in &self.members {
            let state = propagate(&m.generator, t)?.into_matrix() * rho0;
            let state = match &back_t {
                Some(b) => b * state,
                None => state,
            };
            let y = &devectorize(&state)? * s;
            let mut v = vectorize(&y);
            if let Some(f) = &to_t {
                v = f * v;
            }
            v = propagate(&m.generator, tau)?.into_matrix() * v;
            if let Some(b) = &back_end {
                v = b * v;
            }
            out += &basis.measurement * v * Complex64::new(m.weight, 0.0);
        }
        Ok(out)
    }

    /// Average map `ρ(0) ↦ ρ(τ)` in the model's picture.
    fn average_map(&self, tau: f64) -> Result<Superoperator> {
        let n = self.model.dim() * self.model.dim();
        let mut acc = Mat::zeros(n, n);
        for m in &self.members {
            acc += propagate(&m.generator, tau)?.into_matrix() * Complex64::new(m.weight, 0.0);
        }
        if self.model.picture() == Picture::Interaction {
            acc = self.free_back(tau)? * acc;
        }
        Superoperator::from_matrix(self.model.dim(), acc)
    }
}

/// `⟨S(t)A_μ(t+τ)⟩` averaged over the rate ensemble.
pub fn two_time_correlation(
    model: &ModelSpec,
    rho0: &DensityMatrix,
    s: &Operator,
    basis: &ObservableBasis,
    t: f64,
    tau: f64,
) -> Result<DVector<Complex64>> {
    check_basis(model, basis)?;
    check_times(t, tau)?;
    Propagators::new(model).correlation(&vectorize(rho0.operator()), s, basis, t, tau)
}

/// `𝔾(τ)`: maps `⟨A_ν⟩(0)` to `⟨A_μ⟩(τ)` for every initial state.
pub fn expectation_propagator(model: &ModelSpec, basis: &ObservableBasis, tau: f64) -> Result<Mat> {
    check_basis(model, basis)?;
    check_times(0.0, tau)?;
    Ok(basis.represent(&Propagators::new(model).average_map(tau)?))
}

/// `𝔾(τ_k)·⟨S(t)A(t)⟩` for each lag.
pub fn qrt_prediction(
    model: &ModelSpec,
    rho0: &DensityMatrix,
    s: &Operator,
    basis: &ObservableBasis,
    t: f64,
    taus: &[f64],
) -> Result<Vec<DVector<Complex64>>> {
    let equal_time = two_time_correlation(model, rho0, s, basis, t, 0.0)?;
    taus.iter()
        .map(|&tau| Ok(expectation_propagator(model, basis, tau)? * &equal_time))
        .collect()
}

/// Actual and QRT-predicted correlators on a `(t, τ)` grid.
#[derive(Clone, Debug)]
pub struct CorrelationSurface {
    pub t: Vec<f64>,
    pub tau: Vec<f64>,
    pub labels: Vec<String>,
    /// `[t index][τ index][μ]`
    pub actual: Vec<Vec<Vec<Complex64>>>,
    pub predicted: Vec<Vec<Vec<Complex64>>>,
    pub residual: Vec<Vec<Vec<Complex64>>>,
}

impl CorrelationSurface {
    /// `max_{τ, μ} |I_μ(t_i, τ)|`.
    pub fn residual_envelope(&self, i: usize) -> f64 {
        self.residual[i]
            .iter()
            .flat_map(|v| v.iter().map(|z| z.norm()))
            .fold(0.0, f64::max)
    }

    pub fn max_residual(&self) -> f64 {
        (0..self.t.len())
            .map(|i| self.residual_envelope(i))
            .fold(0.0, f64::max)
    }
}

/// The inhomogeneity `I(t, τ) = actual − 𝔾(τ)·actual(t, 0)` on a grid.
pub fn qrt_residual(
    model: &ModelSpec,
    rho0: &DensityMatrix,
    s: &Operator,
    basis: &ObservableBasis,
    ts: &[f64],
    taus: &[f64],
) -> Result<CorrelationSurface> {
    check_basis(model, basis)?;
    let props = Propagators::new(model);
    let g: Vec<Mat> = taus
        .iter()
        .map(|&tau| {
            check_times(0.0, tau)?;
            Ok(basis.represent(&props.average_map(tau)?))
        })
        .collect::<Result<_>>()?;
    let v0 = vectorize(rho0.operator());
    let mut actual = Vec::with_capacity(ts.len());
    let mut predicted = Vec::with_capacity(ts.len());
    let mut residual = Vec::with_capacity(ts.len());
    for &t in ts {
        check_times(t, 0.0)?;
        let equal = props.correlation(&v0, s, basis, t, 0.0)?;
        let mut a_row = Vec::with_capacity(taus.len());
        let mut p_row = Vec::with_capacity(taus.len());
        let mut r_row = Vec::with_capacity(taus.len());
        for (k, &tau) in taus.iter().enumerate() {
            let a = if tau == 0.0 {
                equal.clone()
            } else {
                props.correlation(&v0, s, basis, t, tau)?
            };
            let p = &g[k] * &equal;
            r_row.push((&a - &p).iter().copied().collect());
            a_row.push(a.iter().copied().collect());
            p_row.push(p.iter().copied().collect());
        }
        actual.push(a_row);
        predicted.push(p_row);
        residual.push(r_row);
    }
    Ok(CorrelationSurface {
        t: ts.to_vec(),
        tau: taus.to_vec(),
        labels: basis.labels().to_vec(),
        actual,
        predicted,
        residual,
    })
}

/// Stationary state reached from `ρ0` under the mean generator
/// `L_H + ⟨γ⟩L`: the spectral projector onto its null space applied to `ρ0`.
/// Degenerate null spaces (conserved populations) keep the conserved part
/// of `ρ0`.
pub fn stationary_state(model: &ModelSpec, rho0: &DensityMatrix) -> Result<Operator> {
    let gen = model.generator(model.ensemble().stats().mean_rate);
    let p = null_projector(gen.matrix())?;
    devectorize(&(p * vectorize(rho0.operator())))
}

fn null_projector(a: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let svd = SVD::new(a.clone(), true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let scale = svd
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
        .max(1.0);
    let null: Vec<usize> = (0..n)
        .filter(|&i| svd.singular_values[i] <= 1e-10 * scale)
        .collect();
    if null.is_empty() {
        return Err(Error::InvalidParameter(
            "generator has no stationary state".into(),
        ));
    }
    let right = Mat::from_fn(n, null.len(), |r, c| v_t[(null[c], r)].conj());
    let left = Mat::from_fn(n, null.len(), |r, c| u[(r, null[c])]);
    let overlap = left.adjoint() * &right;
    let inv = overlap.try_inverse().ok_or(Error::Singular {
        u: Complex64::new(0.0, 0.0),
    })?;
    Ok(&right * inv * left.adjoint())
}

/// `g±(t) = ½[1 ± P0(t)]`.
pub fn dephasing_weights(ens: &RateEnsemble, t: f64) -> Result<(f64, f64)> {
    let p0 = ens.survival(t)?;
    Ok((0.5 * (1.0 + p0), 0.5 * (1.0 - p0)))
}

/// `ρ(t) = g₊ρ0 + g₋σ_zρ0σ_z` (interaction picture).
pub fn dephasing_analytic(
    ens: &RateEnsemble,
    rho0: &DensityMatrix,
    t: f64,
) -> Result<DensityMatrix> {
    if rho0.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: rho0.dim(),
        });
    }
    let (gp, gm) = dephasing_weights(ens, t)?;
    let z = pauli::sigma_z();
    let r = rho0.operator();
    DensityMatrix::new(&(r * gp) + &(&(&(&z * r) * &z) * gm))
}

/// `h(t, τ) = P0(t+τ) − P0(t)P0(τ)`, zero for a single rate.
pub fn dephasing_h(ens: &RateEnsemble, t: f64, tau: f64) -> Result<f64> {
    Ok(ens.survival(t + tau)? - ens.survival(t)? * ens.survival(tau)?)
}

/// Closed-form dephasing residual in the Pauli basis: `I₀ h(t, τ)` with
/// `I₀ = D Tr{[ρ(0) − ρ(∞)] S A}`, `D = diag(1, 1, 0, 0)`.
pub fn dephasing_residual(
    ens: &RateEnsemble,
    rho0: &DensityMatrix,
    s: &Operator,
    t: f64,
    tau: f64,
) -> Result<[Complex64; 4]> {
    let r = rho0.operator();
    let diag = Operator::from_matrix(Mat::from_diagonal(&r.matrix().diagonal()))?;
    let coherent = &(r - &diag) * s;
    let h = dephasing_h(ens, t, tau)?;
    Ok([
        coherent.trace_product(&pauli::sigma_x()) * h,
        coherent.trace_product(&pauli::sigma_y()) * h,
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
    ])
}

/// `M̂ = M G M⁻¹`, the generator `L_H + γL` acting on expectation values:
/// `Tr{A_μ G[S]} = Σ_ν M̂_μν Tr{A_ν S}`.
pub fn generator_matrix(model: &ModelSpec, basis: &ObservableBasis, rate: f64) -> Result<Mat> {
    check_basis(model, basis)?;
    Ok(basis.represent(&model.generator(rate)))
}

/// Heisenberg-picture generator `A ↦ i[H, A] + γ Σ (V†AV − ½{V†V, A})`,
/// assembled directly from `H` and the jumps.
pub fn heisenberg_generator(model: &ModelSpec, rate: f64) -> Result<Superoperator> {
    let d = model.dim();
    let id = Mat::identity(d, d);
    let h = model.hamiltonian().matrix();
    let i = Complex64::new(0.0, 1.0);
    // vec(AXB) = (Bᵀ ⊗ A) vec X
    let mut m = (id.kronecker(h) - h.transpose().kronecker(&id)) * i;
    let g = Complex64::new(rate, 0.0);
    for v in model.jumps() {
        let vm = v.matrix();
        let vd = vm.adjoint();
        let vdv = &vd * vm;
        m += (vm.transpose().kronecker(&vd)
            - (id.kronecker(&vdv) + vdv.transpose().kronecker(&id)) * Complex64::new(0.5, 0.0))
            * g;
    }
    Superoperator::from_matrix(d, m)
}
