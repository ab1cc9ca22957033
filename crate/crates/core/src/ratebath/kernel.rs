use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use super::ensemble::RateEnsemble;
use crate::{Error, Result};

/// Relative tolerance of the partial-fraction reconstruction check.
pub const RECONSTRUCTION_TOL: f64 = 1e-8;

const RECONSTRUCTION_SAMPLES: usize = 50;

/// A real polynomial stored by ascending power.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Polynomial {
    pub coefficients: Vec<f64>,
}

impl Polynomial {
    fn one() -> Self {
        Self {
            coefficients: vec![1.0],
        }
    }

    /// Multiplies in place by `(u + c)`.
    fn mul_linear(&mut self, c: f64) {
        let n = self.coefficients.len();
        self.coefficients.push(0.0);
        for k in (0..=n).rev() {
            let shifted = if k > 0 { self.coefficients[k - 1] } else { 0.0 };
            self.coefficients[k] = self.coefficients[k] * c + shifted;
        }
    }

    fn axpy(&mut self, a: f64, other: &Polynomial) {
        if self.coefficients.len() < other.coefficients.len() {
            self.coefficients.resize(other.coefficients.len(), 0.0);
        }
        for (s, o) in self.coefficients.iter_mut().zip(&other.coefficients) {
            *s += a * o;
        }
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    pub fn eval(&self, u: Complex64) -> Complex64 {
        self.coefficients
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * u + c)
    }
}

/// `N(u) / D(u)` with `D(u) = Π (u + γ_R)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RationalSpectral {
    pub numerator: Polynomial,
    pub denominator: Polynomial,
}

impl RationalSpectral {
    pub fn eval(&self, u: Complex64) -> Complex64 {
        self.numerator.eval(u) / self.denominator.eval(u)
    }
}

fn product_except(ens: &RateEnsemble, skip: Option<usize>) -> Polynomial {
    let mut p = Polynomial::one();
    for (k, g) in ens.rates().enumerate() {
        if Some(k) != skip {
            p.mul_linear(g);
        }
    }
    p
}

/// `w(u) = Σ P_R γ_R Π_{S≠R}(u+γ_S) / Π_S(u+γ_S)`.
pub fn spectral_w(ens: &RateEnsemble) -> RationalSpectral {
    spectral(ens, |e| e.weight * e.rate)
}

/// `P0(u) = Σ P_R Π_{S≠R}(u+γ_S) / Π_S(u+γ_S)`.
pub fn spectral_p0(ens: &RateEnsemble) -> RationalSpectral {
    spectral(ens, |e| e.weight)
}

fn spectral(
    ens: &RateEnsemble,
    coef: impl Fn(&super::ensemble::RateEntry) -> f64,
) -> RationalSpectral {
    let mut numerator = Polynomial {
        coefficients: vec![0.0; ens.len()],
    };
    for (k, e) in ens.entries().iter().enumerate() {
        numerator.axpy(coef(e), &product_except(ens, Some(k)));
    }
    RationalSpectral {
        numerator,
        denominator: product_except(ens, None),
    }
}

/// Which root finder produced the poles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RootMethod {
    /// Single rate: no poles.
    None,
    /// Eigenvalues of the companion matrix of the `P0` numerator.
    Companion,
    /// Bisection of the secular equation inside each rate gap.
    Secular,
}

/// One exponential term `c e^{p t}` of the regular kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelMode {
    pub amplitude: f64,
    pub pole: f64,
}

/// `K(u) = k₀ + Σ c_j / (u − p_j)`, i.e. `K(t) = 2k₀δ(t) + Σ c_j e^{p_j t}`.
///
/// Poles are the zeros of `P0(u)`; they are real and interlace the `−γ_R`.
/// Residues are `1 / P0'(p_j)`, hence negative.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelDecomposition {
    pub markov_weight: f64,
    pub modes: Vec<KernelMode>,
    pub method: RootMethod,
}

impl KernelDecomposition {
    pub fn laplace(&self, u: Complex64) -> Complex64 {
        self.modes
            .iter()
            .fold(Complex64::new(self.markov_weight, 0.0), |acc, m| {
                acc + m.amplitude / (u - m.pole)
            })
    }

    /// Regular part `Σ c_j e^{p_j t}`.
    pub fn regular(&self, t: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| m.amplitude * (m.pole * t).exp())
            .sum()
    }

    /// Sprinkling rate `f(t) = k₀ + Σ (c_j/p_j)(e^{p_j t} − 1)`.
    pub fn sprinkling(&self, t: f64) -> f64 {
        self.markov_weight
            + self
                .modes
                .iter()
                .map(|m| m.amplitude / m.pole * (m.pole * t).exp_m1())
                .sum::<f64>()
    }

    /// `lim f(t)` as `t → ∞`.
    pub fn sprinkling_limit(&self) -> f64 {
        self.markov_weight - self.modes.iter().map(|m| m.amplitude / m.pole).sum::<f64>()
    }

    /// Largest relative deviation from `w(u)/P0(u)` over log-spaced real `u`.
    pub fn reconstruction_residual(&self, ens: &RateEnsemble) -> f64 {
        let scale = ens.stats().mean_rate.max(f64::MIN_POSITIVE);
        let (lo, hi) = (1e-3f64.ln(), 1e3f64.ln());
        (0..RECONSTRUCTION_SAMPLES)
            .map(|k| {
                let x = lo + (hi - lo) * k as f64 / (RECONSTRUCTION_SAMPLES - 1) as f64;
                let u = Complex64::new(scale * x.exp(), 0.0);
                let exact = ens.kernel_laplace(u);
                (self.laplace(u) - exact).norm() / exact.norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Splits the memory kernel into its Markovian weight and exponential modes.
///
/// Poles come from the companion matrix (polished by one Newton step) when
/// that is accurate; otherwise, and always for wide rate spreads, each pole
/// is bracketed and bisected in its gap `(−γ_k, −γ_{k+1})`.
pub fn kernel_decompose(ens: &RateEnsemble) -> Result<KernelDecomposition> {
    if ens.min_rate() <= 0.0 {
        return Err(Error::InvalidParameter(
            "kernel decomposition needs strictly positive rates".into(),
        ));
    }
    let k0 = ens.stats().mean_rate;
    if ens.len() == 1 {
        return Ok(KernelDecomposition {
            markov_weight: k0,
            modes: Vec::new(),
            method: RootMethod::None,
        });
    }

    if let Ok(roots) = companion_poles(ens) {
        let dec = assemble(ens, k0, &roots, RootMethod::Companion);
        if dec.reconstruction_residual(ens) <= RECONSTRUCTION_TOL {
            return Ok(dec);
        }
    }
    let roots = secular_poles(ens)?;
    let dec = assemble(ens, k0, &roots, RootMethod::Secular);
    let residual = dec.reconstruction_residual(ens);
    if residual > RECONSTRUCTION_TOL {
        return Err(Error::RootFinding {
            message: "partial fractions do not reproduce the kernel".into(),
            residual,
        });
    }
    Ok(dec)
}

/// Sprinkling rate of an ensemble at time `t`.
pub fn sprinkling(ens: &RateEnsemble, t: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "time must be non-negative, got {t}"
        )));
    }
    Ok(kernel_decompose(ens)?.sprinkling(t))
}

/// A pole stored relative to the rate it sits next to, `p = −γ_k + δ`,
/// so that `p + γ_R` keeps full precision near the pole.
#[derive(Clone, Copy, Debug)]
struct Root {
    anchor: usize,
    offset: f64,
}

impl Root {
    fn value(&self, rates: &[f64]) -> f64 {
        -rates[self.anchor] + self.offset
    }

    fn shift(&self, rates: &[f64], r: usize) -> f64 {
        (rates[r] - rates[self.anchor]) + self.offset
    }
}

fn assemble(
    ens: &RateEnsemble,
    k0: f64,
    roots: &[Root],
    method: RootMethod,
) -> KernelDecomposition {
    let rates: Vec<f64> = ens.rates().collect();
    let modes = roots
        .iter()
        .map(|root| {
            let deriv: f64 = ens
                .entries()
                .iter()
                .enumerate()
                .map(|(r, e)| {
                    let s = root.shift(&rates, r);
                    -e.weight / (s * s)
                })
                .sum();
            KernelMode {
                amplitude: 1.0 / deriv,
                pole: root.value(&rates),
            }
        })
        .collect();
    KernelDecomposition {
        markov_weight: k0,
        modes,
        method,
    }
}

fn secular_value(ens: &RateEnsemble, rates: &[f64], root: Root) -> f64 {
    ens.entries()
        .iter()
        .enumerate()
        .map(|(r, e)| e.weight / root.shift(rates, r))
        .sum()
}

/// Poles from the companion matrix of the numerator of `P0`.
fn companion_poles(ens: &RateEnsemble) -> Result<Vec<Root>> {
    let rates: Vec<f64> = ens.rates().collect();
    let num = spectral_p0(ens).numerator;
    let n = num.degree();
    let lead = num.coefficients[n];
    let mut c = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        c[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        c[(i, n - 1)] = -num.coefficients[i] / lead;
    }
    let eig = c.complex_eigenvalues();
    let mut vals: Vec<f64> = Vec::with_capacity(n);
    for z in eig.iter() {
        if z.im.abs() > 1e-8 * (z.re.abs() + ens.min_rate()) || !z.re.is_finite() {
            return Err(Error::RootFinding {
                message: "companion matrix returned a complex pole".into(),
                residual: z.im.abs(),
            });
        }
        vals.push(z.re);
    }
    vals.sort_by(|a, b| a.total_cmp(b));

    // pole j must lie in (−γ_{j}, −γ_{j+1}) with rates sorted descending
    let mut roots = Vec::with_capacity(n);
    for (j, &p) in vals.iter().enumerate() {
        let (hi_anchor, lo_anchor) = (j + 1, j);
        let upper = -rates[hi_anchor];
        let lower = -rates[lo_anchor];
        if !(p > lower && p < upper) {
            return Err(Error::RootFinding {
                message: "companion poles do not interlace the rates".into(),
                residual: p,
            });
        }
        let anchor = if p - lower < upper - p {
            lo_anchor
        } else {
            hi_anchor
        };
        let mut root = Root {
            anchor,
            offset: p + rates[anchor],
        };
        // one Newton step on the secular equation
        let f = secular_value(ens, &rates, root);
        let df: f64 = ens
            .entries()
            .iter()
            .enumerate()
            .map(|(r, e)| {
                let s = root.shift(&rates, r);
                -e.weight / (s * s)
            })
            .sum();
        let polished = Root {
            anchor,
            offset: root.offset - f / df,
        };
        let q = polished.value(&rates);
        if q > lower && q < upper && polished.offset.is_finite() {
            root = polished;
        }
        roots.push(root);
    }
    Ok(roots)
}

/// Bisection of `Σ P_R / (p + γ_R) = 0` in each gap between consecutive rates.
///
/// The root is searched in the half of the gap where it lies, as an offset
/// from the nearer endpoint, which keeps relative precision for poles that
/// hug a rate.
fn secular_poles(ens: &RateEnsemble) -> Result<Vec<Root>> {
    let rates: Vec<f64> = ens.rates().collect();
    let mut roots = Vec::with_capacity(rates.len() - 1);
    for j in 0..rates.len() - 1 {
        // gap (−γ_j, −γ_{j+1}); P0 decreases from +∞ to −∞ across it
        let gap = rates[j] - rates[j + 1];
        let mid = Root {
            anchor: j,
            offset: 0.5 * gap,
        };
        let root = if secular_value(ens, &rates, mid) >= 0.0 {
            // root in upper half, measure from −γ_{j+1} (offset negative)
            bisect(ens, &rates, j + 1, -0.5 * gap, 0.0)
        } else {
            bisect(ens, &rates, j, 0.0, 0.5 * gap)
        }?;
        roots.push(root);
    }
    Ok(roots)
}

fn bisect(
    ens: &RateEnsemble,
    rates: &[f64],
    anchor: usize,
    mut lo: f64,
    mut hi: f64,
) -> Result<Root> {
    // the secular function decreases with the offset on either half
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = secular_value(
            ens,
            rates,
            Root {
                anchor,
                offset: mid,
            },
        );
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let offset = 0.5 * (lo + hi);
    if offset.is_finite() {
        Ok(Root { anchor, offset })
    } else {
        Err(Error::RootFinding {
            message: "secular bisection diverged".into(),
            residual: offset,
        })
    }
}
