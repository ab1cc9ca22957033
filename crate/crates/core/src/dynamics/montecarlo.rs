use nalgebra::{DMatrix, SymmetricEigen};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use super::{initial_block, EvolutionResult, ModelSpec, Picture, SolverKind, TimeGrid};
use crate::qops::{devectorize, DensityMatrix, Operator};
use crate::{Complex64, Error, Result};

type Mat = DMatrix<Complex64>;

/// Trajectories per deterministic accumulation unit.
const CHUNK: usize = 256;
/// Chunks simulated concurrently before folding into the running total.
const BATCH: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum McScheme {
    /// Draw one rate per trajectory, then Poisson events at that rate.
    FrozenRate,
    /// Draw a fresh rate for every waiting time.
    Renewal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MCConfig {
    pub trajectories: usize,
    pub seed: u64,
    pub scheme: McScheme,
    /// Worker threads; `None` lets the pool decide. Results do not depend
    /// on this value.
    pub threads: Option<usize>,
}

impl MCConfig {
    pub fn new(trajectories: usize, seed: u64, scheme: McScheme) -> Self {
        Self {
            trajectories,
            seed,
            scheme,
            threads: None,
        }
    }
}

/// Averages jump trajectories: unitary motion between events, the jump map
/// `E` at each event.
///
/// Trajectory `i` draws from a ChaCha8 stream keyed by `(seed, i)`, and
/// trajectories are summed in fixed chunks of index order with compensated
/// sums, so the result is identical for every thread count.
pub fn mc_trajectories(
    model: &ModelSpec,
    rho0: &DensityMatrix,
    grid: TimeGrid,
    cfg: &MCConfig,
) -> Result<EvolutionResult> {
    let x0 = initial_block(model, rho0)?;
    let blocks = run(model, &x0, grid, cfg)?;
    let solver = match cfg.scheme {
        McScheme::FrozenRate => SolverKind::McFrozenRate,
        McScheme::Renewal => SolverKind::McRenewal,
    };
    let mut result = EvolutionResult::from_columns(grid, solver, model.picture(), &blocks.mean)?;
    result.standard_errors = Some(
        blocks
            .standard_errors
            .iter()
            .map(|m| devectorize(&m.column(0).into_owned()))
            .collect::<Result<Vec<Operator>>>()?,
    );
    Ok(result)
}

pub(super) struct McBlocks {
    pub mean: Vec<Mat>,
    /// Per entry: standard error of the real part in `re`, of the
    /// imaginary part in `im`.
    pub standard_errors: Vec<Mat>,
}

/// Frame in which `e^{tL_H}` is diagonal.
struct Frame {
    /// `conj(V) ⊗ V`, eigenbasis vectorization to the original one
    to_original: Mat,
    from_original: Mat,
    /// Bohr frequency `E_a − E_b` of entry `a + b·d`
    bohr: Vec<f64>,
    jump: Mat,
}

impl Frame {
    fn new(model: &ModelSpec) -> Result<Self> {
        let d = model.dim();
        let eig = SymmetricEigen::new(model.hamiltonian().matrix().clone());
        let v = eig.eigenvectors;
        let w = v.map(|z| z.conj()).kronecker(&v);
        let w_adj = w.adjoint();
        let jump = &w_adj * model.jump_map()?.matrix() * &w;
        let bohr = (0..d * d)
            .map(|r| eig.eigenvalues[r % d] - eig.eigenvalues[r / d])
            .collect();
        Ok(Self {
            to_original: w,
            from_original: w_adj,
            bohr,
            jump,
        })
    }

    /// `e^{t L_H}` on eigenbasis coordinates.
    fn rotate(&self, y: &mut Mat, t: f64) {
        for (r, &w) in self.bohr.iter().enumerate() {
            let phase = Complex64::new(0.0, -w * t).exp();
            for c in 0..y.ncols() {
                y[(r, c)] *= phase;
            }
        }
    }
}

#[derive(Clone, Copy, Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// First and second moments of every entry at every grid point.
struct Moments {
    // layout: [point][entry][re, im, re², im²]
    acc: Vec<[Neumaier; 4]>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Self {
            acc: vec![[Neumaier::default(); 4]; len],
        }
    }

    fn record(&mut self, point: usize, x: &Mat) {
        let n = x.len();
        for (e, z) in x.iter().enumerate() {
            let a = &mut self.acc[point * n + e];
            a[0].add(z.re);
            a[1].add(z.im);
            a[2].add(z.re * z.re);
            a[3].add(z.im * z.im);
        }
    }

    fn totals(&self) -> Vec<[f64; 4]> {
        self.acc
            .iter()
            .map(|a| [a[0].value(), a[1].value(), a[2].value(), a[3].value()])
            .collect()
    }
}

struct Sampler {
    rates: Vec<f64>,
    pick: WeightedIndex<f64>,
    scheme: McScheme,
}

impl Sampler {
    fn waiting_time(&self, rng: &mut ChaCha8Rng, frozen: f64) -> f64 {
        let rate = match self.scheme {
            McScheme::FrozenRate => frozen,
            McScheme::Renewal => self.rates[self.pick.sample(rng)],
        };
        let e: f64 = Exp1.sample(rng);
        e / rate
    }
}

pub(super) fn run(model: &ModelSpec, x0: &Mat, grid: TimeGrid, cfg: &MCConfig) -> Result<McBlocks> {
    if cfg.trajectories == 0 {
        return Err(Error::InvalidParameter(
            "need at least one trajectory".into(),
        ));
    }
    let frame = Frame::new(model)?;
    let ens = model.ensemble();
    let sampler = Sampler {
        rates: ens.rates().collect(),
        pick: WeightedIndex::new(ens.entries().iter().map(|e| e.weight))
            .map_err(|e| Error::InvalidParameter(e.to_string()))?,
        scheme: cfg.scheme,
    };
    let y0 = &frame.from_original * x0;
    let entries = x0.len();
    let points = grid.len();
    let times = grid.times();

    let simulate = |index: usize, moments: &mut Moments| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(index as u64);
        let frozen = sampler.rates[sampler.pick.sample(&mut rng)];
        let mut y = y0.clone();
        let mut last = 0.0;
        let mut next = sampler.waiting_time(&mut rng, frozen);
        // interaction-picture record e^{−t_last L_H}·state is constant between events
        let mut held: Option<Mat> = None;
        for (k, &t) in times.iter().enumerate() {
            while next <= t {
                frame.rotate(&mut y, next - last);
                y = &frame.jump * y;
                last = next;
                next += sampler.waiting_time(&mut rng, frozen);
                held = None;
            }
            match model.picture() {
                Picture::Schroedinger => {
                    let mut z = y.clone();
                    frame.rotate(&mut z, t - last);
                    moments.record(k, &(&frame.to_original * z));
                }
                Picture::Interaction => {
                    let rec = held.get_or_insert_with(|| {
                        let mut z = y.clone();
                        frame.rotate(&mut z, -last);
                        &frame.to_original * z
                    });
                    moments.record(k, rec);
                }
            }
        }
    };

    let chunks = cfg.trajectories.div_ceil(CHUNK);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut total = vec![[Neumaier::default(); 4]; points * entries];
    for batch_start in (0..chunks).step_by(BATCH) {
        let batch_end = (batch_start + BATCH).min(chunks);
        let partial: Vec<Vec<[f64; 4]>> = pool.install(|| {
            (batch_start..batch_end)
                .into_par_iter()
                .map(|c| {
                    let mut m = Moments::new(points * entries);
                    let lo = c * CHUNK;
                    let hi = (lo + CHUNK).min(cfg.trajectories);
                    for i in lo..hi {
                        simulate(i, &mut m);
                    }
                    m.totals()
                })
                .collect()
        });
        for chunk in &partial {
            for (acc, v) in total.iter_mut().zip(chunk) {
                for q in 0..4 {
                    acc[q].add(v[q]);
                }
            }
        }
    }

    let n = cfg.trajectories as f64;
    let (rows, cols) = x0.shape();
    let mut mean = Vec::with_capacity(points);
    let mut standard_errors = Vec::with_capacity(points);
    for k in 0..points {
        let slice = &total[k * entries..(k + 1) * entries];
        let mut m = Mat::zeros(rows, cols);
        let mut s = Mat::zeros(rows, cols);
        for (e, acc) in slice.iter().enumerate() {
            let [re, im, re2, im2] = acc.map(|a| a.value());
            m[e] = Complex64::new(re / n, im / n);
            s[e] = Complex64::new(standard_error(re, re2, n), standard_error(im, im2, n));
        }
        mean.push(m);
        standard_errors.push(s);
    }
    Ok(McBlocks {
        mean,
        standard_errors,
    })
}

/// Standard error of the mean from the first two raw moments.
fn standard_error(sum: f64, sum_sq: f64, n: f64) -> f64 {
    if n < 2.0 {
        return f64::NAN;
    }
    let var = ((sum_sq - sum * sum / n) / (n - 1.0)).max(0.0);
    (var / n).sqrt()
}
