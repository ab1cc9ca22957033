use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use nmbath_core::dynamics::{
    dephasing_jumps, evolution_maps, evolve_ensemble, evolve_volterra, mc_trajectories,
    EvolutionResult, MCConfig, McScheme, ModelSpec, Picture, Solver, TimeGrid,
};
use nmbath_core::qops::{choi_min_eigenvalue, pauli, DensityMatrix, Operator, CP_TOLERANCE};
use nmbath_core::qrt::{dephasing_residual, qrt_residual, CorrelationSurface, ObservableBasis};
use nmbath_core::ratebath::{
    default_fit_window, fit_power_law, kernel_decompose, log_grid, EnsembleStats,
    FractionalKernelModel, KernelMode, PowerLawFit, RateEnsemble, RootMethod, Talbot,
};
use nmbath_core::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::config::{
    ConfigError, EnsembleSpec, Format, HamiltonianSpec, JumpSpec, Matrix, OperatorSpec,
    PictureSpec, RunConfig, SolverName, StateSpec,
};
use crate::output::{complex_columns, write_json, Table};

/// Residual level below which the regression theorem counts as exact.
pub const QRT_EXACT_TOL: f64 = 1e-10;
/// Late-time residual, relative to the correlator scale, that counts as
/// asymptotic validity.
pub const QRT_ASYMPTOTIC_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("solver error: {0}")]
    Solver(nmbath_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Solver(_) => 3,
            Self::Io(_) => 1,
        }
    }
}

impl From<nmbath_core::Error> for CliError {
    /// Unnormalized jumps are only detected by the solvers that need `E`,
    /// but they are still a property of the input.
    fn from(e: nmbath_core::Error) -> Self {
        match e {
            nmbath_core::Error::JumpNormalization { .. } => config_err(e),
            e => Self::Solver(e),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Kernel,
    Evolve,
    Correlate,
    Cpcheck,
    Fitpow,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Kernel => "kernel",
            Self::Evolve => "evolve",
            Self::Correlate => "correlate",
            Self::Cpcheck => "cpcheck",
            Self::Fitpow => "fitpow",
        }
    }
}

/// Runs one command and returns the files it wrote.
pub fn run(cmd: Command, cfg: &RunConfig, threads: Option<usize>) -> CliResult<Vec<PathBuf>> {
    let mut out = Outputs::new(cfg)?;
    match cmd {
        Command::Kernel => kernel(cfg, &mut out)?,
        Command::Evolve => evolve(cfg, threads, &mut out)?,
        Command::Correlate => correlate(cfg, &mut out)?,
        Command::Cpcheck => cpcheck(cfg, threads, &mut out)?,
        Command::Fitpow => fitpow(cfg, &mut out)?,
    }
    Ok(out.written)
}

struct Outputs<'a> {
    cfg: &'a RunConfig,
    written: Vec<PathBuf>,
}

impl<'a> Outputs<'a> {
    fn new(cfg: &'a RunConfig) -> io::Result<Self> {
        fs::create_dir_all(&cfg.output.dir)?;
        Ok(Self {
            cfg,
            written: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.cfg.output.dir.join(name)
    }

    fn csv(&mut self, name: &str, table: &Table) -> io::Result<()> {
        if self.cfg.wants(Format::Csv) {
            let p = self.path(name);
            table.write(&p)?;
            self.written.push(p);
        }
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        if self.cfg.wants(Format::Json) {
            let p = self.path(name);
            write_json(&p, value)?;
            self.written.push(p);
        }
        Ok(())
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(ConfigError::Invalid(msg.into()))
}

fn config_err(e: nmbath_core::Error) -> CliError {
    invalid(e.to_string())
}

enum Source {
    Finite(RateEnsemble),
    Fractional(FractionalKernelModel),
}

fn source(cfg: &RunConfig) -> CliResult<Source> {
    let ens = match &cfg.ensemble {
        EnsembleSpec::Single { rate } => RateEnsemble::single(*rate),
        EnsembleSpec::Custom { rates, weights } => {
            RateEnsemble::new(rates.iter().copied().zip(weights.iter().copied()))
        }
        EnsembleSpec::TwoState {
            p_up,
            rate_up,
            rate_down,
        } => RateEnsemble::two_state(*p_up, *rate_up, *rate_down),
        EnsembleSpec::Manifold { gamma, a, b, n } => RateEnsemble::manifold(*gamma, *a, *b, *n),
        EnsembleSpec::Fractional {
            alpha,
            mean_rate,
            beta,
            mean_waiting_time,
        } => {
            return FractionalKernelModel::new(*alpha, *mean_rate, *beta, *mean_waiting_time)
                .map(Source::Fractional)
                .map_err(config_err)
        }
    };
    ens.map(Source::Finite).map_err(config_err)
}

fn finite(cfg: &RunConfig, cmd: Command) -> CliResult<RateEnsemble> {
    match source(cfg)? {
        Source::Finite(e) => Ok(e),
        Source::Fractional(_) => Err(invalid(format!(
            "fractional ensembles are supported only by `kernel` and `fitpow`, not `{}`",
            cmd.name()
        ))),
    }
}

fn operator(m: &Matrix) -> CliResult<Operator> {
    Operator::from_rows(m).map_err(config_err)
}

fn named_operator(name: &str) -> Option<Operator> {
    Some(match name {
        "sx" => pauli::sigma_x(),
        "sy" => pauli::sigma_y(),
        "sz" => pauli::sigma_z(),
        "id" => pauli::identity(),
        "sp" => pauli::sigma_plus(),
        "sm" => pauli::sigma_minus(),
        _ => return None,
    })
}

fn build_model(cfg: &RunConfig, ens: RateEnsemble) -> CliResult<ModelSpec> {
    let m = &cfg.model;
    let h = match &m.hamiltonian {
        HamiltonianSpec::Dephasing => &pauli::sigma_z() * (0.5 * m.omega),
        HamiltonianSpec::Zero => {
            let d = match &m.jumps {
                JumpSpec::Dephasing => 2,
                JumpSpec::Matrices(v) => v.first().map_or(2, |x| x.len()),
            };
            Operator::zeros(d)
        }
        HamiltonianSpec::Matrix(x) => operator(x)?,
    };
    let jumps = match &m.jumps {
        JumpSpec::Dephasing => dephasing_jumps(),
        JumpSpec::Matrices(v) => v.iter().map(operator).collect::<CliResult<_>>()?,
    };
    let picture = match m.picture {
        PictureSpec::Interaction => Picture::Interaction,
        PictureSpec::Schroedinger => Picture::Schroedinger,
    };
    ModelSpec::new(h, jumps, ens, picture).map_err(config_err)
}

fn initial_state(cfg: &RunConfig, dim: usize) -> CliResult<DensityMatrix> {
    let c = |re: f64| Complex64::new(re, 0.0);
    let qubit = |psi: [Complex64; 2]| {
        if dim != 2 {
            return Err(invalid(
                "named initial states other than `mixed` need a two-level model",
            ));
        }
        DensityMatrix::pure(&psi).map_err(config_err)
    };
    match &cfg.model.rho0 {
        StateSpec::Plus => qubit([c(1.0), c(1.0)]),
        StateSpec::Minus => qubit([c(1.0), c(-1.0)]),
        StateSpec::Excited => qubit([c(1.0), c(0.0)]),
        StateSpec::Ground => qubit([c(0.0), c(1.0)]),
        StateSpec::Mixed => Ok(DensityMatrix::maximally_mixed(dim)),
        StateSpec::Matrix(x) => DensityMatrix::new(operator(x)?).map_err(config_err),
    }
}

fn time_grid(cfg: &RunConfig, ens: &RateEnsemble) -> CliResult<TimeGrid> {
    let t_max = cfg.grid.t_max.unwrap_or(20.0 / ens.stats().mean_rate);
    TimeGrid::new(t_max, cfg.grid.steps).map_err(config_err)
}

fn mc_config(cfg: &RunConfig, scheme: McScheme, threads: Option<usize>) -> MCConfig {
    MCConfig {
        threads,
        ..MCConfig::new(cfg.solver.trajectories, cfg.solver.seed, scheme)
    }
}

// ---------------------------------------------------------------- kernel

#[derive(Serialize)]
struct EntrySummary {
    rate: f64,
    weight: f64,
}

#[derive(Serialize)]
struct KernelPart {
    markov_weight: f64,
    method: RootMethod,
    modes: Vec<KernelMode>,
    reconstruction_residual: f64,
}

#[derive(Serialize)]
struct Limits {
    f_initial: f64,
    mean_rate: f64,
    f_initial_rel_error: f64,
    t_max: f64,
    f_final: f64,
    inverse_mean_waiting_time: f64,
    f_final_rel_error: f64,
    f_asymptote: f64,
}

#[derive(Serialize)]
struct KernelSummary {
    entries: Vec<EntrySummary>,
    stats: EnsembleStats,
    kernel: KernelPart,
    limits: Limits,
}

#[derive(Serialize)]
struct FractionalSummary {
    model: FractionalKernelModel,
    talbot_nodes: usize,
    failed_points: usize,
}

fn kernel(cfg: &RunConfig, out: &mut Outputs) -> CliResult<()> {
    match source(cfg)? {
        Source::Finite(ens) => {
            let grid = time_grid(cfg, &ens)?;
            let dec = kernel_decompose(&ens)?;
            let mut table = Table::new(["t", "w", "p0", "f", "k_reg"].map(String::from).to_vec());
            for t in grid.times() {
                table.row(&[
                    t,
                    ens.waiting_density(t)?,
                    ens.survival(t)?,
                    dec.sprinkling(t),
                    dec.regular(t),
                ]);
            }
            out.csv("kernel.csv", &table)?;
            let stats = ens.stats();
            let f0 = dec.sprinkling(0.0);
            let f_end = dec.sprinkling(grid.t_max);
            let inv_tau = 1.0 / stats.mean_waiting_time;
            let summary = KernelSummary {
                entries: ens
                    .entries()
                    .iter()
                    .map(|e| EntrySummary {
                        rate: e.rate,
                        weight: e.weight,
                    })
                    .collect(),
                stats,
                kernel: KernelPart {
                    markov_weight: dec.markov_weight,
                    method: dec.method,
                    modes: dec.modes.clone(),
                    reconstruction_residual: dec.reconstruction_residual(&ens),
                },
                limits: Limits {
                    f_initial: f0,
                    mean_rate: stats.mean_rate,
                    f_initial_rel_error: (f0 - stats.mean_rate).abs() / stats.mean_rate,
                    t_max: grid.t_max,
                    f_final: f_end,
                    inverse_mean_waiting_time: inv_tau,
                    f_final_rel_error: (f_end - inv_tau).abs() / inv_tau,
                    f_asymptote: dec.sprinkling_limit(),
                },
            };
            out.json("kernel.json", &summary)?;
        }
        Source::Fractional(model) => {
            let t_max = cfg.grid.t_max.unwrap_or(20.0 / model.mean_rate);
            let grid = TimeGrid::new(t_max, cfg.grid.steps).map_err(config_err)?;
            let talbot = Talbot::default();
            let mut table = Table::new(["t", "w", "p0", "f"].map(String::from).to_vec());
            let mut failed = 0;
            // Talbot needs t > 0, so the series starts at the first step
            for t in grid.times().into_iter().skip(1) {
                let w = talbot.invert(|u| model.waiting_laplace(u), t);
                let p = talbot.invert(|u| model.survival_laplace(u), t);
                let f = talbot.invert(|u| model.sprinkling_laplace(u), t);
                match (w, p, f) {
                    (Ok(w), Ok(p), Ok(f)) => table.row(&[t, w, p, f]),
                    _ => failed += 1,
                }
            }
            out.csv("kernel.csv", &table)?;
            out.json(
                "kernel.json",
                &FractionalSummary {
                    model,
                    talbot_nodes: talbot.nodes,
                    failed_points: failed,
                },
            )?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- evolve

fn solve(
    cfg: &RunConfig,
    model: &ModelSpec,
    rho0: &DensityMatrix,
    grid: TimeGrid,
    name: SolverName,
    threads: Option<usize>,
) -> CliResult<EvolutionResult> {
    Ok(match name {
        SolverName::Ensemble => evolve_ensemble(model, rho0, grid)?,
        SolverName::Volterra => {
            evolve_volterra(model, rho0, grid, &kernel_decompose(model.ensemble())?)?
        }
        SolverName::McFrozen => mc_trajectories(
            model,
            rho0,
            grid,
            &mc_config(cfg, McScheme::FrozenRate, threads),
        )?,
        SolverName::McRenewal => mc_trajectories(
            model,
            rho0,
            grid,
            &mc_config(cfg, McScheme::Renewal, threads),
        )?,
    })
}

#[derive(Serialize)]
struct SolverSummary {
    name: &'static str,
    max_trace_drift: f64,
    max_hermiticity_deviation: f64,
    min_eigenvalue: f64,
    richardson_estimate: Option<f64>,
    trajectories: Option<usize>,
    seed: Option<u64>,
    max_standard_error: Option<f64>,
}

#[derive(Serialize)]
struct CrossResidual {
    first: &'static str,
    second: &'static str,
    max_abs_diff: f64,
}

#[derive(Serialize)]
struct EvolveSummary {
    t_max: f64,
    steps: usize,
    picture: Picture,
    solvers: Vec<SolverSummary>,
    cross_residuals: Vec<CrossResidual>,
    max_cross_residual: Option<f64>,
}

fn warn_empty(cmd: Command) {
    eprintln!(
        "warning: solver.list is empty, `{}` has nothing to do",
        cmd.name()
    );
}

fn evolve(cfg: &RunConfig, threads: Option<usize>, out: &mut Outputs) -> CliResult<()> {
    if cfg.solver.list.is_empty() {
        warn_empty(Command::Evolve);
        return Ok(());
    }
    let ens = finite(cfg, Command::Evolve)?;
    let grid = time_grid(cfg, &ens)?;
    let model = build_model(cfg, ens)?;
    let rho0 = initial_state(cfg, model.dim())?;
    let d = model.dim();
    let mut results = Vec::new();
    for &name in &cfg.solver.list {
        let res = solve(cfg, &model, &rho0, grid, name, threads)?;
        out.csv(
            &format!("evolve_{}.csv", name.as_str()),
            &state_table(&res, d),
        )?;
        results.push((name, res));
    }
    let mut cross = Vec::new();
    for (i, (a, ra)) in results.iter().enumerate() {
        for (b, rb) in &results[i + 1..] {
            let diff = ra
                .states
                .iter()
                .zip(&rb.states)
                .map(|(x, y)| (x - y).max_abs())
                .fold(0.0, f64::max);
            cross.push(CrossResidual {
                first: a.as_str(),
                second: b.as_str(),
                max_abs_diff: diff,
            });
        }
    }
    let is_mc = |n: SolverName| matches!(n, SolverName::McFrozen | SolverName::McRenewal);
    let summary = EvolveSummary {
        t_max: grid.t_max,
        steps: grid.steps,
        picture: model.picture(),
        solvers: results
            .iter()
            .map(|(n, r)| SolverSummary {
                name: n.as_str(),
                max_trace_drift: r.max_trace_drift(),
                max_hermiticity_deviation: r.max_hermiticity_deviation(),
                min_eigenvalue: r
                    .diagnostics
                    .iter()
                    .map(|p| p.min_eigenvalue)
                    .fold(f64::INFINITY, f64::min),
                richardson_estimate: r.richardson_estimate,
                trajectories: is_mc(*n).then_some(cfg.solver.trajectories),
                seed: is_mc(*n).then_some(cfg.solver.seed),
                max_standard_error: r.standard_errors.as_ref().map(|v| {
                    v.iter()
                        .flat_map(|s| s.matrix().iter().flat_map(|z| [z.re, z.im]))
                        .fold(0.0, f64::max)
                }),
            })
            .collect(),
        max_cross_residual: cross.iter().map(|c| c.max_abs_diff).reduce(f64::max),
        cross_residuals: cross,
    };
    out.json("evolve.json", &summary).map_err(CliError::from)
}

fn state_table(res: &EvolutionResult, d: usize) -> Table {
    let mut header = vec!["t".to_string()];
    for i in 0..d {
        for j in 0..d {
            header.extend(complex_columns(&format!("rho{i}{j}")));
        }
    }
    if d == 2 {
        header.extend(["bloch_x", "bloch_y", "bloch_z"].map(String::from));
    }
    header.extend(["trace_drift", "min_eigenvalue"].map(String::from));
    if res.standard_errors.is_some() {
        for i in 0..d {
            for j in 0..d {
                header.extend(complex_columns(&format!("se_rho{i}{j}")));
            }
        }
    }
    let mut table = Table::new(header);
    let paulis = [pauli::sigma_x(), pauli::sigma_y(), pauli::sigma_z()];
    for (k, t) in res.times().into_iter().enumerate() {
        let s = &res.states[k];
        let mut row = vec![t];
        for i in 0..d {
            for j in 0..d {
                let z = s.get(i, j);
                row.extend([z.re, z.im]);
            }
        }
        if d == 2 {
            row.extend(paulis.iter().map(|p| p.trace_product(s).re));
        }
        row.extend([
            res.diagnostics[k].trace_drift,
            res.diagnostics[k].min_eigenvalue,
        ]);
        if let Some(se) = &res.standard_errors {
            for i in 0..d {
                for j in 0..d {
                    let z = se[k].get(i, j);
                    row.extend([z.re, z.im]);
                }
            }
        }
        table.row(&row);
    }
    table
}

// ---------------------------------------------------------------- correlate

#[derive(Serialize)]
struct EnvelopePoint {
    t: f64,
    max_residual: f64,
}

#[derive(Serialize)]
struct ClosedForm {
    max_abs_diff: f64,
}

#[derive(Serialize)]
struct CorrelateSummary {
    labels: Vec<String>,
    max_residual: f64,
    regression_exact: bool,
    /// `max_{τ,μ} |⟨S(t₀)A_μ(t₀+τ)⟩|` at the first grid time
    correlator_scale: f64,
    late_ratio: f64,
    asymptotically_valid: bool,
    envelope: Vec<EnvelopePoint>,
    dephasing_closed_form: Option<ClosedForm>,
}

fn basis_for(dim: usize) -> CliResult<ObservableBasis> {
    if dim == 2 {
        return Ok(ObservableBasis::pauli());
    }
    let mut ops = Vec::new();
    let mut labels = Vec::new();
    for i in 0..dim {
        for j in 0..dim {
            ops.push(Operator::matrix_unit(dim, i, j));
            labels.push(format!("e{i}{j}"));
        }
    }
    Ok(ObservableBasis::new(ops, labels)?)
}

fn is_dephasing_model(cfg: &RunConfig, model: &ModelSpec) -> bool {
    let h = model.hamiltonian().matrix();
    cfg.model.jumps == JumpSpec::Dephasing
        && model.picture() == Picture::Interaction
        && h[(0, 1)].norm() == 0.0
        && h[(1, 0)].norm() == 0.0
}

fn grid_points(max: f64, steps: usize) -> Vec<f64> {
    (0..=steps)
        .map(|k| max * k as f64 / steps.max(1) as f64)
        .collect()
}

fn correlate(cfg: &RunConfig, out: &mut Outputs) -> CliResult<()> {
    let ens = finite(cfg, Command::Correlate)?;
    let t_max = cfg.grid.t_max.unwrap_or(20.0 / ens.stats().mean_rate);
    let tau_max = cfg.grid.tau_max.unwrap_or(t_max);
    if !(t_max > 0.0 && tau_max > 0.0 && cfg.grid.steps > 0 && cfg.grid.tau_steps > 0) {
        return Err(invalid(
            "correlation grids need positive extents and step counts",
        ));
    }
    let ts = grid_points(t_max, cfg.grid.steps);
    let taus = grid_points(tau_max, cfg.grid.tau_steps);
    let model = build_model(cfg, ens.clone())?;
    let rho0 = initial_state(cfg, model.dim())?;
    let s = match &cfg.correlate_s {
        OperatorSpec::Named(n) => named_operator(n)
            .filter(|_| model.dim() == 2)
            .ok_or_else(|| invalid(format!("named operator `{n}` needs a two-level model")))?,
        OperatorSpec::Matrix(x) => operator(x)?,
    };
    let basis = basis_for(model.dim())?;
    let surf = qrt_residual(&model, &rho0, &s, &basis, &ts, &taus)?;

    let mut header = vec!["t".to_string(), "tau".to_string()];
    for part in ["actual", "predicted", "residual"] {
        for l in basis.labels() {
            header.extend(complex_columns(&format!("{part}_{l}")));
        }
    }
    let mut table = Table::new(header);
    for (i, &t) in ts.iter().enumerate() {
        for (k, &tau) in taus.iter().enumerate() {
            let mut row = vec![t, tau];
            for part in [&surf.actual, &surf.predicted, &surf.residual] {
                row.extend(part[i][k].iter().flat_map(|z| [z.re, z.im]));
            }
            table.row(&row);
        }
    }
    out.csv("correlate.csv", &table)?;

    let closed = if is_dephasing_model(cfg, &model) {
        Some(ClosedForm {
            max_abs_diff: closed_form_gap(&ens, &rho0, &s, &surf)?,
        })
    } else {
        None
    };
    let scale = surf.actual[0]
        .iter()
        .flat_map(|v| v.iter().map(|z| z.norm()))
        .fold(0.0, f64::max);
    let late = surf.residual_envelope(ts.len() - 1);
    let late_ratio = if scale > 0.0 { late / scale } else { f64::NAN };
    let max_residual = surf.max_residual();
    let summary = CorrelateSummary {
        labels: basis.labels().to_vec(),
        max_residual,
        regression_exact: max_residual <= QRT_EXACT_TOL,
        correlator_scale: scale,
        late_ratio,
        asymptotically_valid: late_ratio < QRT_ASYMPTOTIC_TOL,
        envelope: ts
            .iter()
            .enumerate()
            .map(|(i, &t)| EnvelopePoint {
                t,
                max_residual: surf.residual_envelope(i),
            })
            .collect(),
        dephasing_closed_form: closed,
    };
    out.json("correlate.json", &summary).map_err(CliError::from)
}

fn closed_form_gap(
    ens: &RateEnsemble,
    rho0: &DensityMatrix,
    s: &Operator,
    surf: &CorrelationSurface,
) -> CliResult<f64> {
    let mut worst: f64 = 0.0;
    for (i, &t) in surf.t.iter().enumerate() {
        for (k, &tau) in surf.tau.iter().enumerate() {
            let want = dephasing_residual(ens, rho0, s, t, tau)?;
            for (got, w) in surf.residual[i][k].iter().zip(want) {
                worst = worst.max((got - w).norm());
            }
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------- cpcheck

#[derive(Serialize)]
struct CpSolver {
    name: &'static str,
    min_eigenvalue: f64,
    time_of_min: f64,
    completely_positive: bool,
}

#[derive(Serialize)]
struct CpSummary {
    tolerance: f64,
    solvers: Vec<CpSolver>,
}

fn cpcheck(cfg: &RunConfig, threads: Option<usize>, out: &mut Outputs) -> CliResult<()> {
    if cfg.solver.list.is_empty() {
        warn_empty(Command::Cpcheck);
        return Ok(());
    }
    let ens = finite(cfg, Command::Cpcheck)?;
    let grid = time_grid(cfg, &ens)?;
    let model = build_model(cfg, ens)?;
    let mut columns = Vec::new();
    let mut solvers = Vec::new();
    for &name in &cfg.solver.list {
        let solver = match name {
            SolverName::Ensemble => Solver::Ensemble,
            SolverName::Volterra => Solver::Volterra,
            SolverName::McFrozen => {
                Solver::MonteCarlo(mc_config(cfg, McScheme::FrozenRate, threads))
            }
            SolverName::McRenewal => Solver::MonteCarlo(mc_config(cfg, McScheme::Renewal, threads)),
        };
        let mins: Vec<f64> = evolution_maps(&model, grid, solver)?
            .iter()
            .map(choi_min_eigenvalue)
            .collect();
        let (k, &min) = mins
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("grid is non-empty");
        solvers.push(CpSolver {
            name: name.as_str(),
            min_eigenvalue: min,
            time_of_min: grid.time(k),
            completely_positive: min >= -CP_TOLERANCE,
        });
        columns.push(mins);
    }
    let mut header = vec!["t".to_string()];
    header.extend(
        cfg.solver
            .list
            .iter()
            .map(|n| format!("min_choi_{}", n.as_str())),
    );
    let mut table = Table::new(header);
    for (k, t) in grid.times().into_iter().enumerate() {
        let mut row = vec![t];
        row.extend(columns.iter().map(|c| c[k]));
        table.row(&row);
    }
    out.csv("cpcheck.csv", &table)?;
    out.json(
        "cpcheck.json",
        &CpSummary {
            tolerance: CP_TOLERANCE,
            solvers,
        },
    )
    .map_err(CliError::from)
}

// ---------------------------------------------------------------- fitpow

#[derive(Serialize)]
struct FitSummary {
    source: &'static str,
    #[serde(flatten)]
    fit: PowerLawFit,
    /// `−slope − 1`, the α of `w(t) ∝ t^{−(1+α)}`
    alpha_estimate: f64,
    is_power_law: bool,
    rejected: bool,
}

fn fitpow(cfg: &RunConfig, out: &mut Outputs) -> CliResult<()> {
    let points = cfg.fit.points;
    let (kind, window, samples) = match source(cfg)? {
        Source::Finite(ens) => {
            let window = cfg.fit.window.unwrap_or_else(|| default_fit_window(&ens));
            let samples = log_grid(window.0, window.1, points)
                .into_iter()
                .map(|t| Ok((t, ens.waiting_density(t)?)))
                .collect::<CliResult<Vec<_>>>()?;
            ("ensemble", window, samples)
        }
        Source::Fractional(model) => {
            let lo = 5.0 / model.mean_rate;
            let window = cfg.fit.window.unwrap_or((lo, 100.0 * lo));
            let talbot = Talbot::default();
            let samples = log_grid(window.0, window.1, points)
                .into_iter()
                .map(|t| Ok((t, talbot.invert(|u| model.waiting_laplace(u), t)?)))
                .collect::<CliResult<Vec<_>>>()?;
            ("fractional", window, samples)
        }
    };
    let fit = fit_power_law(&samples, window)?;
    let mut table = Table::new(["t", "w", "w_fit"].map(String::from).to_vec());
    for &(t, w) in &samples {
        table.row(&[t, w, (fit.intercept + fit.slope * t.ln()).exp()]);
    }
    out.csv("fitpow.csv", &table)?;
    out.json(
        "fitpow.json",
        &FitSummary {
            source: kind,
            fit,
            alpha_estimate: -fit.slope - 1.0,
            is_power_law: fit.is_power_law(),
            rejected: !fit.is_power_law(),
        },
    )
    .map_err(CliError::from)
}

/// Reads and parses a config file.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::Config(ConfigError::Invalid(format!(
            "cannot read {}: {e}",
            path.display()
        )))
    })?;
    Ok(RunConfig::parse(&text)?)
}
