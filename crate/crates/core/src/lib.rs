//! Non-Markovian open-system dynamics generated by composite environments
//! whose dissipation rate is itself a random variable.
//!
//! The environment is described by a finite rate ensemble `{(γ_R, P_R)}`.
//! Each rate drives an ordinary Lindblad evolution, and the reduced state is
//! the `P_R`-weighted average of those evolutions. On top of that picture the
//! crate provides:
//!
//! * [`qops`]: dense operator and superoperator algebra (column-major
//!   vectorization, Liouvillians, dissipators, propagators, resolvents and
//!   Choi-matrix positivity checks).
//! * [`ratebath`]: rate ensembles and the renewal-process analytics they
//!   induce (survival, waiting-time and sprinkling functions, the exact
//!   memory-kernel partial fractions, the fractional kernel model, Talbot
//!   inversion and power-law fitting).
//! * [`dynamics`]: the ensemble-average solver, the memory-kernel Volterra
//!   solver, the exact memory superoperator and Monte Carlo unravelings.
//! * [`qrt`]: expectation values, two-time correlators and the
//!   quantum-regression residual.
//!
//! Units: `ħ = 1`, rates in units of a base rate `γ`, times in units of `1/γ`.

pub mod dynamics;
mod error;
pub mod qops;
pub mod qrt;
pub mod ratebath;

pub use error::{Error, Result};
pub use num_complex::Complex64;
