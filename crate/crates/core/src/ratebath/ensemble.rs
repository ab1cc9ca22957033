use num_complex::Complex64;
use serde::Serialize;

use crate::{Error, Result};

/// Relative rate separation below which two entries are merged.
pub const MERGE_TOLERANCE: f64 = 1e-9;

/// Input weights may miss unit sum by this much before they are rejected;
/// accepted weights are then renormalized exactly.
const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// One dissipation rate and its probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateEntry {
    pub rate: f64,
    pub weight: f64,
}

/// How an ensemble was built; only manifold ensembles carry an exponent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EnsembleFamily {
    Custom,
    TwoState,
    Manifold { a: f64, b: f64 },
}

/// A finite distribution of dissipation rates.
///
/// Entries are sorted by descending rate, weights sum to one and no two rates
/// coincide: entries whose rates differ by less than [`MERGE_TOLERANCE`]
/// relative to the larger one are merged (weights added, rate averaged).
/// Zero-weight entries are dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct RateEnsemble {
    entries: Vec<RateEntry>,
    family: EnsembleFamily,
}

/// Moments and derived rates of an ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnsembleStats {
    /// `⟨γ⟩ = Σ P_R γ_R`
    pub mean_rate: f64,
    /// `⟨τ⟩ = Σ P_R / γ_R`, infinite when a zero rate is present.
    pub mean_waiting_time: f64,
    /// `⟨γ²⟩`
    pub second_moment: f64,
    /// Fluctuation rate `β = (⟨γ²⟩ − ⟨γ⟩²) / ⟨γ⟩`.
    pub beta: f64,
    /// `η = P↑γ↓ + P↓γ↑`, two-entry ensembles only.
    pub eta: Option<f64>,
    /// `α = a/b`, manifold ensembles with `b > 0` only.
    pub alpha: Option<f64>,
}

impl RateEnsemble {
    /// Builds a custom ensemble from `(rate, weight)` pairs.
    pub fn new(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        Self::build(pairs, EnsembleFamily::Custom)
    }

    pub fn single(rate: f64) -> Result<Self> {
        Self::new([(rate, 1.0)])
    }

    /// `w(t) = P↑γ↑e^{−γ↑t} + P↓γ↓e^{−γ↓t}`.
    pub fn two_state(p_up: f64, rate_up: f64, rate_down: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_up) {
            return Err(Error::InvalidParameter(format!(
                "probability must lie in [0, 1], got {p_up}"
            )));
        }
        if !(rate_up > 0.0 && rate_down > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "two-state rates must be positive, got {rate_up} and {rate_down}"
            )));
        }
        Self::build(
            [(rate_up, p_up), (rate_down, 1.0 - p_up)],
            EnsembleFamily::TwoState,
        )
    }

    /// `N` levels with `γ_R = γe^{−bR}` and `P_R ∝ e^{−aR}`, `R = 0..N−1`.
    pub fn manifold(gamma: f64, a: f64, b: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("manifold needs N >= 1".into()));
        }
        if !(gamma > 0.0 && a > 0.0 && b >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "manifold needs γ > 0, a > 0, b >= 0 (got γ={gamma}, a={a}, b={b})"
            )));
        }
        let norm = -(-a).exp_m1() / -(-a * n as f64).exp_m1();
        let pairs = (0..n).map(|r| {
            let r = r as f64;
            (gamma * (-b * r).exp(), norm * (-a * r).exp())
        });
        Self::build(pairs, EnsembleFamily::Manifold { a, b })
    }

    fn build(pairs: impl IntoIterator<Item = (f64, f64)>, family: EnsembleFamily) -> Result<Self> {
        let mut entries = Vec::new();
        for (rate, weight) in pairs {
            if !(rate.is_finite() && rate >= 0.0) {
                return Err(Error::InvalidParameter(format!("invalid rate {rate}")));
            }
            if !(weight.is_finite() && weight >= 0.0) {
                return Err(Error::InvalidParameter(format!("invalid weight {weight}")));
            }
            if weight > 0.0 {
                entries.push(RateEntry { rate, weight });
            }
        }
        if entries.is_empty() {
            return Err(Error::InvalidParameter(
                "ensemble needs at least one entry with positive weight".into(),
            ));
        }
        let total: f64 = entries.iter().map(|e| e.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        for e in &mut entries {
            e.weight /= total;
        }

        entries.sort_by(|x, y| y.rate.total_cmp(&x.rate));
        let mut merged: Vec<RateEntry> = Vec::with_capacity(entries.len());
        for e in entries {
            match merged.last_mut() {
                Some(prev) if prev.rate - e.rate <= MERGE_TOLERANCE * prev.rate => {
                    let w = prev.weight + e.weight;
                    prev.rate = (prev.rate * prev.weight + e.rate * e.weight) / w;
                    prev.weight = w;
                }
                _ => merged.push(e),
            }
        }
        let total: f64 = merged.iter().map(|e| e.weight).sum();
        for e in &mut merged {
            e.weight /= total;
        }
        Ok(Self {
            entries: merged,
            family,
        })
    }

    pub fn entries(&self) -> &[RateEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn family(&self) -> EnsembleFamily {
        self.family
    }

    pub fn rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.rate)
    }

    pub fn max_rate(&self) -> f64 {
        self.entries[0].rate
    }

    pub fn min_rate(&self) -> f64 {
        self.entries[self.entries.len() - 1].rate
    }

    pub fn stats(&self) -> EnsembleStats {
        let mut mean = 0.0;
        let mut second = 0.0;
        let mut tau = 0.0;
        for e in &self.entries {
            mean += e.weight * e.rate;
            second += e.weight * e.rate * e.rate;
            tau += if e.rate > 0.0 {
                e.weight / e.rate
            } else {
                f64::INFINITY
            };
        }
        let variance: f64 = self
            .entries
            .iter()
            .map(|e| e.weight * (e.rate - mean) * (e.rate - mean))
            .sum();
        let beta = if mean > 0.0 { variance / mean } else { 0.0 };
        let eta = match self.entries.as_slice() {
            [up, down] => Some(up.weight * down.rate + down.weight * up.rate),
            _ => None,
        };
        let alpha = match self.family {
            EnsembleFamily::Manifold { a, b } if b > 0.0 => Some(a / b),
            _ => None,
        };
        EnsembleStats {
            mean_rate: mean,
            mean_waiting_time: tau,
            second_moment: second,
            beta,
            eta,
            alpha,
        }
    }

    /// Survival probability `P0(t) = Σ P_R e^{−γ_R t}`.
    pub fn survival(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.survival_unchecked(t))
    }

    pub(crate) fn survival_unchecked(&self, t: f64) -> f64 {
        self.entries
            .iter()
            .map(|e| e.weight * (-e.rate * t).exp())
            .sum()
    }

    /// Waiting-time density `w(t) = −dP0/dt = Σ P_R γ_R e^{−γ_R t}`.
    pub fn waiting_density(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self
            .entries
            .iter()
            .map(|e| e.weight * e.rate * (-e.rate * t).exp())
            .sum())
    }

    /// `w(u) = ⟨γ_R / (u + γ_R)⟩`.
    pub fn waiting_laplace(&self, u: Complex64) -> Complex64 {
        self.entries
            .iter()
            .map(|e| e.weight * e.rate / (u + e.rate))
            .sum()
    }

    /// `P0(u) = ⟨1 / (u + γ_R)⟩`.
    pub fn survival_laplace(&self, u: Complex64) -> Complex64 {
        self.entries.iter().map(|e| e.weight / (u + e.rate)).sum()
    }

    /// `K(u) = w(u) / P0(u)` evaluated from the defining sums.
    pub fn kernel_laplace(&self, u: Complex64) -> Complex64 {
        self.waiting_laplace(u) / self.survival_laplace(u)
    }
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "time must be non-negative, got {t}"
        )))
    }
}
