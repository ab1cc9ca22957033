use num_complex::Complex64;
use serde::Serialize;

use crate::{Error, Result};

/// Bracket for the cutoff rate `γ_c`.
pub const CUTOFF_BRACKET: (f64, f64) = (1e-12, 1e3);

/// Completely monotone fit of a heavy-tailed waiting-time density,
/// `w(u) = ⟨γ⟩ / (u + ⟨γ⟩ + β^{1−α} σ_α(u))`, `σ_α(u) = (u+γ_c)^α − γ_c^α`.
///
/// With `γ_c = 0` the mean waiting time diverges and `K(u) → A_α u^{1−α}`
/// at small `u`, `A_α = ⟨γ⟩ / β^{1−α}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FractionalKernelModel {
    pub alpha: f64,
    pub mean_rate: f64,
    pub beta: f64,
    pub cutoff: f64,
    pub amplitude: f64,
}

impl FractionalKernelModel {
    /// Solves `α(β/γ_c)^{1−α} = ⟨γ⟩⟨τ⟩ − 1` for `γ_c` by bisection in
    /// `log γ_c` over [`CUTOFF_BRACKET`]. An infinite `⟨τ⟩` gives `γ_c = 0`.
    pub fn new(alpha: f64, mean_rate: f64, beta: f64, mean_waiting_time: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "fractional exponent must lie in (0, 1), got {alpha}"
            )));
        }
        if !(mean_rate > 0.0 && mean_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "mean rate must be positive, got {mean_rate}"
            )));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "fluctuation rate must be non-negative, got {beta}"
            )));
        }
        if mean_waiting_time.is_nan() || mean_waiting_time <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "mean waiting time must be positive, got {mean_waiting_time}"
            )));
        }
        let amplitude = mean_rate / beta.powf(1.0 - alpha);
        let cutoff = if mean_waiting_time.is_infinite() {
            0.0
        } else {
            let target = mean_rate * mean_waiting_time - 1.0;
            solve_cutoff(alpha, beta, target)?
        };
        Ok(Self {
            alpha,
            mean_rate,
            beta,
            cutoff,
            amplitude,
        })
    }

    /// `α(β/γ_c)^{1−α} − (⟨γ⟩⟨τ⟩ − 1)`, zero at a consistent cutoff.
    pub fn cutoff_residual(&self, mean_waiting_time: f64) -> f64 {
        relation(self.alpha, self.beta, self.cutoff) - (self.mean_rate * mean_waiting_time - 1.0)
    }

    pub fn sigma(&self, u: Complex64) -> Complex64 {
        (u + self.cutoff).powf(self.alpha) - self.cutoff.powf(self.alpha)
    }

    fn denominator(&self, u: Complex64) -> Complex64 {
        u + self.beta.powf(1.0 - self.alpha) * self.sigma(u)
    }

    pub fn waiting_laplace(&self, u: Complex64) -> Complex64 {
        self.mean_rate / (self.denominator(u) + self.mean_rate)
    }

    /// `P0(u) = (1 − w(u)) / u`.
    pub fn survival_laplace(&self, u: Complex64) -> Complex64 {
        let d = self.denominator(u);
        d / (u * (d + self.mean_rate))
    }

    /// `K(u) = u w(u) / (1 − w(u))`.
    pub fn kernel_laplace(&self, u: Complex64) -> Complex64 {
        self.mean_rate * u / self.denominator(u)
    }

    /// Sprinkling transform `f(u) = w(u) / (1 − w(u))`.
    pub fn sprinkling_laplace(&self, u: Complex64) -> Complex64 {
        self.mean_rate / self.denominator(u)
    }
}

fn relation(alpha: f64, beta: f64, cutoff: f64) -> f64 {
    alpha * (beta / cutoff).powf(1.0 - alpha)
}

fn solve_cutoff(alpha: f64, beta: f64, target: f64) -> Result<f64> {
    // the relation decreases in γ_c, so a root needs g(lo) > 0 > g(hi)
    let g = |x: f64| relation(alpha, beta, x.exp()) - target;
    let (mut lo, mut hi) = (CUTOFF_BRACKET.0.ln(), CUTOFF_BRACKET.1.ln());
    let (glo, ghi) = (g(lo), g(hi));
    if !(glo >= 0.0 && ghi <= 0.0) {
        return Err(Error::NoBracket { lo: glo, hi: ghi });
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn re(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn cutoff_unit_case() {
        // 1 + 0.5 = ⟨γ⟩⟨τ⟩ with ⟨γ⟩ = 1
        let m = FractionalKernelModel::new(0.5, 1.0, 1.0, 1.5).unwrap();
        assert_abs_diff_eq!(m.cutoff, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(0.5 * (1.0 / m.cutoff).powf(0.5), 0.5, epsilon = 1e-12);
        assert!(m.cutoff_residual(1.5).abs() < 1e-12);
    }

    #[test]
    fn cutoff_matches_closed_form() {
        for &(alpha, beta, gamma, tau) in &[
            (0.3, 0.7, 1.0, 4.0),
            (0.8, 2.0, 3.0, 1.1),
            (0.5, 0.1, 0.4, 9.0),
        ] {
            let m = FractionalKernelModel::new(alpha, gamma, beta, tau).unwrap();
            let d: f64 = gamma * tau - 1.0;
            let want = beta * (alpha / d).powf(1.0 / (1.0 - alpha));
            assert!((m.cutoff - want).abs() <= 1e-12 * want);
        }
    }

    #[test]
    fn infinite_waiting_time_gives_pure_power_law() {
        let m = FractionalKernelModel::new(0.5, 2.0, 0.5, f64::INFINITY).unwrap();
        assert_eq!(m.cutoff, 0.0);
        assert_abs_diff_eq!(m.amplitude, 2.0 / 0.5f64.sqrt(), epsilon = 1e-14);
        // K(u) → A_α u^{1−α} as u → 0
        let u = 1e-10;
        let k = m.kernel_laplace(re(u)).re;
        assert!((k / (m.amplitude * u.powf(0.5)) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn unbracketed_cutoff_is_reported() {
        match FractionalKernelModel::new(0.5, 1.0, 1.0, 1.0) {
            Err(Error::NoBracket { lo, hi }) => assert!(lo > 0.0 && hi > 0.0),
            other => panic!("expected NoBracket, got {other:?}"),
        }
        assert!(FractionalKernelModel::new(1.0, 1.0, 1.0, 2.0).is_err());
        assert!(FractionalKernelModel::new(0.5, 0.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn waiting_transform_is_normalized_and_decreasing() {
        let m = FractionalKernelModel::new(0.4, 1.0, 0.8, 6.0).unwrap();
        assert_abs_diff_eq!(m.waiting_laplace(re(1e-14)).re, 1.0, epsilon = 1e-9);
        let mut prev = 1.0;
        for k in 0..200 {
            let u = 1e-6 * 1.1f64.powi(k);
            let w = m.waiting_laplace(re(u)).re;
            assert!(w > 0.0 && w < 1.0 && w < prev);
            prev = w;
        }
    }

    #[test]
    fn small_u_expansion_gives_mean_waiting_time() {
        let tau = 6.0;
        let m = FractionalKernelModel::new(0.4, 1.0, 0.8, tau).unwrap();
        let u = 1e-7;
        let slope = (1.0 - m.waiting_laplace(re(u)).re) / u;
        assert!((slope - tau).abs() < 1e-4 * tau);
    }

    #[test]
    fn transforms_are_consistent() {
        let m = FractionalKernelModel::new(0.6, 1.3, 0.4, 5.0).unwrap();
        for u in [re(0.2), Complex64::new(1.0, 2.0), re(40.0)] {
            let w = m.waiting_laplace(u);
            assert!((m.survival_laplace(u) - (1.0 - w) / u).norm() < 1e-12);
            assert!(
                (m.kernel_laplace(u) - u * w / (1.0 - w)).norm()
                    < 1e-10 * m.kernel_laplace(u).norm()
            );
            assert!(
                (m.sprinkling_laplace(u) - w / (1.0 - w)).norm()
                    < 1e-10 * m.sprinkling_laplace(u).norm()
            );
        }
    }
}
