use serde::Serialize;

use super::ensemble::RateEnsemble;
use crate::{Error, Result};

pub const MIN_FIT_POINTS: usize = 10;

/// Fits with a lower coefficient of determination are not power laws.
pub const R2_THRESHOLD: f64 = 0.95;

/// Ordinary least squares of `log w` against `log t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
    pub window: (f64, f64),
}

impl PowerLawFit {
    pub fn is_power_law(&self) -> bool {
        self.r_squared >= R2_THRESHOLD
    }
}

/// Fits `w(t) ∝ t^{slope}` to the samples whose `t` lies inside `window`.
pub fn fit_power_law(samples: &[(f64, f64)], window: (f64, f64)) -> Result<PowerLawFit> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "invalid fit window [{lo}, {hi}]"
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(t, w) in samples {
        if t >= lo && t <= hi {
            if !(w > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "density must be positive inside the window, got w({t}) = {w}"
                )));
            }
            xs.push(t.ln());
            ys.push(w.ln());
        }
    }
    if xs.len() < MIN_FIT_POINTS {
        return Err(Error::TooFewPoints {
            needed: MIN_FIT_POINTS,
            found: xs.len(),
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    Ok(PowerLawFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        points: xs.len(),
        window,
    })
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo; n];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| match k {
            0 => lo,
            _ if k == n - 1 => hi,
            _ => (a + (b - a) * k as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

/// `[5/⟨γ⟩, 1/γ_min]`; when that is empty or too narrow to hold a decade,
/// the upper end becomes `100 · 5/⟨γ⟩`.
pub fn default_fit_window(ens: &RateEnsemble) -> (f64, f64) {
    let lo = 5.0 / ens.stats().mean_rate;
    let slowest = ens.min_rate();
    let hi = if slowest > 0.0 {
        1.0 / slowest
    } else {
        f64::INFINITY
    };
    if hi.is_finite() && hi >= 10.0 * lo {
        (lo, hi)
    } else {
        (lo, 100.0 * lo)
    }
}

/// Samples `w(t)` of an ensemble on a log grid over `window` and fits it.
pub fn fit_waiting_density(
    ens: &RateEnsemble,
    window: (f64, f64),
    points: usize,
) -> Result<PowerLawFit> {
    let samples = log_grid(window.0, window.1, points)
        .into_iter()
        .map(|t| Ok((t, ens.waiting_density(t)?)))
        .collect::<Result<Vec<_>>>()?;
    fit_power_law(&samples, window)
}
