//! Fixed-Talbot numerical inversion of Laplace transforms.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::{Error, Result};

/// Default node count.
pub const TALBOT_NODES: usize = 32;

/// Fixed-Talbot inversion on the contour `s(θ) = r θ (cot θ + i)`.
///
/// The contour radius is `r = 2 M_c / (5t)` with `M_c` fixed by
/// `contour_order`; `nodes` only refines the quadrature on that contour, so
/// comparing two node counts measures quadrature error alone. A `shift` σ
/// inverts `F(s + σ)` and multiplies by `e^{σt}`, which moves a rightmost
/// pole at `σ` to the origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Talbot {
    pub nodes: usize,
    pub contour_order: usize,
    pub shift: f64,
}

impl Default for Talbot {
    fn default() -> Self {
        Self {
            nodes: TALBOT_NODES,
            contour_order: TALBOT_NODES,
            shift: 0.0,
        }
    }
}

impl Talbot {
    pub fn with_nodes(self, nodes: usize) -> Self {
        Self { nodes, ..self }
    }

    pub fn with_shift(self, shift: f64) -> Self {
        Self { shift, ..self }
    }

    pub fn invert<F>(&self, f: F, t: f64) -> Result<f64>
    where
        F: Fn(Complex64) -> Complex64,
    {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Talbot {
                t,
                reason: "time must be positive and finite",
            });
        }
        if self.nodes < 2 || self.contour_order == 0 {
            return Err(Error::Talbot {
                t,
                reason: "too few nodes",
            });
        }
        let m = self.nodes as f64;
        let r = 2.0 * self.contour_order as f64 / (5.0 * t);
        let edge = (r * t).exp();
        if !edge.is_finite() {
            return Err(Error::Talbot {
                t,
                reason: "contour parameter overflow",
            });
        }
        let shifted = |s: Complex64| f(s + self.shift);
        let mut acc = 0.5 * edge * shifted(Complex64::new(r, 0.0)).re;
        for k in 1..self.nodes {
            let theta = k as f64 * PI / m;
            let cot = theta.cos() / theta.sin();
            let s = Complex64::new(r * theta * cot, r * theta);
            let sigma = theta + (theta * cot - 1.0) * cot;
            acc += ((s * t).exp() * shifted(s) * Complex64::new(1.0, sigma)).re;
        }
        let value = (self.shift * t).exp() * r / m * acc;
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::Talbot {
                t,
                reason: "non-finite quadrature sum",
            })
        }
    }

    /// Inverts at every grid point; failures are reported per point.
    pub fn invert_series<F>(&self, f: F, times: &[f64]) -> Vec<Result<f64>>
    where
        F: Fn(Complex64) -> Complex64,
    {
        times.iter().map(|&t| self.invert(&f, t)).collect()
    }
}

/// Inverts `f` on `times` with the default 32-node scheme.
pub fn talbot_invert<F>(f: F, times: &[f64]) -> Vec<Result<f64>>
where
    F: Fn(Complex64) -> Complex64,
{
    Talbot::default().invert_series(f, times)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverts_simple_exponential() {
        let v = Talbot::default().invert(|u| 1.0 / (u + 1.0), 1.0).unwrap();
        assert!((v - (-1.0f64).exp()).abs() <= 1e-8 * (-1.0f64).exp());
    }

    #[test]
    fn inverts_power() {
        // 1/u² ↔ t
        for t in [0.1, 1.0, 7.0] {
            let v = Talbot::default().invert(|u| 1.0 / (u * u), t).unwrap();
            assert!((v - t).abs() <= 1e-9 * t);
        }
    }

    #[test]
    fn rejects_non_positive_time() {
        assert!(Talbot::default().invert(|u| 1.0 / u, 0.0).is_err());
        let res = talbot_invert(|u| 1.0 / u, &[1.0, -1.0, 1e-320]);
        assert!(res[0].is_ok());
        assert!(res[1].is_err());
        assert!(res[2].is_err());
    }

    #[test]
    fn shift_handles_oscillatory_pair() {
        // u/(u²+1) ↔ cos t has poles on the imaginary axis; a zero shift still works
        let tal = Talbot::default();
        for t in [0.5, 2.0, 5.0] {
            let v = tal.invert(|u| u / (u * u + 1.0), t).unwrap();
            assert!((v - t.cos()).abs() < 1e-8);
        }
    }
}
