//! Environment models as ensembles of dissipation rates.
//!
//! A bath whose coupling strength is frozen at one of several values `γ_R`
//! acts on the system through a renewal process with waiting-time density
//! `w(t) = Σ P_R γ_R e^{−γ_R t}`. This module provides the ensembles, their
//! renewal functions, the memory kernel `K(u) = w(u)/P0(u)` in
//! partial-fraction form, a heavy-tailed fractional fit, Laplace inversion
//! and power-law fitting.

mod ensemble;
mod fractional;
mod kernel;
mod powerlaw;
mod talbot;

pub use ensemble::{EnsembleFamily, EnsembleStats, RateEnsemble, RateEntry, MERGE_TOLERANCE};
pub use fractional::{FractionalKernelModel, CUTOFF_BRACKET};
pub use kernel::{
    kernel_decompose, spectral_p0, spectral_w, sprinkling, KernelDecomposition, KernelMode,
    Polynomial, RationalSpectral, RootMethod, RECONSTRUCTION_TOL,
};
pub use powerlaw::{
    default_fit_window, fit_power_law, fit_waiting_density, log_grid, PowerLawFit, MIN_FIT_POINTS,
    R2_THRESHOLD,
};
pub use talbot::{talbot_invert, Talbot, TALBOT_NODES};

use crate::Result;

pub fn two_state_ensemble(p_up: f64, rate_up: f64, rate_down: f64) -> Result<RateEnsemble> {
    RateEnsemble::two_state(p_up, rate_up, rate_down)
}

pub fn manifold_ensemble(gamma: f64, a: f64, b: f64, n: usize) -> Result<RateEnsemble> {
    RateEnsemble::manifold(gamma, a, b, n)
}

pub fn fractional_model(
    alpha: f64,
    mean_rate: f64,
    beta: f64,
    mean_waiting_time: f64,
) -> Result<FractionalKernelModel> {
    FractionalKernelModel::new(alpha, mean_rate, beta, mean_waiting_time)
}
