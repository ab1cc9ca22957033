//! Run configuration: a flat `section.key = value` text format.
//!
//! ```text
//! # comments start with '#'
//! model.hamiltonian = dephasing        # dephasing | zero | matrix
//! model.omega = 1.0
//! model.jumps = dephasing              # dephasing | matrix ; matrix | ...
//! model.picture = interaction          # interaction | schroedinger
//! model.rho0 = plus                    # plus | minus | ground | excited | mixed | matrix
//! ensemble.type = custom               # single | custom | two_state | manifold | fractional
//! ensemble.rates = 1.0, 2.0
//! ensemble.weights = 0.5, 0.5
//! grid.t_max = 10.0
//! grid.steps = 2000
//! solver.list = ensemble, volterra     # ensemble | volterra | mc_frozen | mc_renewal
//! ```
//!
//! Matrices are written row by row: entries separated by `,`, rows by `;`.
//! Entries are real (`0.5`), imaginary (`2i`) or complex (`0.5-2i`).
//! Several matrices in one value are separated by `|`.

use std::fmt::{self, Write as _};
use std::path::PathBuf;

use nmbath_core::Complex64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {key}: {message}")]
    Field {
        line: usize,
        key: String,
        message: String,
    },
    #[error("{key}: {message}")]
    Missing { key: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

pub type Matrix = Vec<Vec<Complex64>>;

#[derive(Clone, Debug, PartialEq)]
pub enum HamiltonianSpec {
    /// `ω σ_z / 2`
    Dephasing,
    Zero,
    Matrix(Matrix),
}

#[derive(Clone, Debug, PartialEq)]
pub enum JumpSpec {
    Dephasing,
    Matrices(Vec<Matrix>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum StateSpec {
    Plus,
    Minus,
    Ground,
    Excited,
    Mixed,
    Matrix(Matrix),
}

#[derive(Clone, Debug, PartialEq)]
pub enum OperatorSpec {
    Named(String),
    Matrix(Matrix),
}

pub const NAMED_OPERATORS: [&str; 6] = ["sx", "sy", "sz", "id", "sp", "sm"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PictureSpec {
    Interaction,
    Schroedinger,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EnsembleSpec {
    Single {
        rate: f64,
    },
    Custom {
        rates: Vec<f64>,
        weights: Vec<f64>,
    },
    TwoState {
        p_up: f64,
        rate_up: f64,
        rate_down: f64,
    },
    Manifold {
        gamma: f64,
        a: f64,
        b: f64,
        n: usize,
    },
    Fractional {
        alpha: f64,
        mean_rate: f64,
        beta: f64,
        mean_waiting_time: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverName {
    Ensemble,
    Volterra,
    McFrozen,
    McRenewal,
}

impl SolverName {
    pub const ALL: [SolverName; 4] = [
        Self::Ensemble,
        Self::Volterra,
        Self::McFrozen,
        Self::McRenewal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ensemble => "ensemble",
            Self::Volterra => "volterra",
            Self::McFrozen => "mc_frozen",
            Self::McRenewal => "mc_renewal",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn as_str(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelBlock {
    pub hamiltonian: HamiltonianSpec,
    pub omega: f64,
    pub jumps: JumpSpec,
    pub picture: PictureSpec,
    pub rho0: StateSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridBlock {
    /// Defaults to `20/⟨γ⟩`.
    pub t_max: Option<f64>,
    pub steps: usize,
    /// Defaults to `t_max`.
    pub tau_max: Option<f64>,
    pub tau_steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverBlock {
    pub list: Vec<SolverName>,
    pub trajectories: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitBlock {
    /// Defaults to the ensemble's fit window.
    pub window: Option<(f64, f64)>,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputBlock {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelBlock,
    pub ensemble: EnsembleSpec,
    pub grid: GridBlock,
    pub solver: SolverBlock,
    pub correlate_s: OperatorSpec,
    pub fit: FitBlock,
    pub output: OutputBlock,
}

impl RunConfig {
    /// Defaults around a given ensemble.
    pub fn with_ensemble(ensemble: EnsembleSpec) -> Self {
        Self {
            model: ModelBlock {
                hamiltonian: HamiltonianSpec::Dephasing,
                omega: 1.0,
                jumps: JumpSpec::Dephasing,
                picture: PictureSpec::Interaction,
                rho0: StateSpec::Plus,
            },
            ensemble,
            grid: GridBlock {
                t_max: None,
                steps: 2000,
                tau_max: None,
                tau_steps: 40,
            },
            solver: SolverBlock {
                list: vec![SolverName::Ensemble],
                trajectories: 10_000,
                seed: 0,
            },
            correlate_s: OperatorSpec::Named("id".into()),
            fit: FitBlock {
                window: None,
                points: 200,
            },
            output: OutputBlock {
                dir: PathBuf::from("out"),
                formats: vec![Format::Csv, Format::Json],
            },
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Parser::default().run(text)
    }

    /// Canonical text with every field spelled out; parses back to `self`.
    pub fn to_normalized(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        let m = &self.model;
        put(
            "model.hamiltonian",
            match &m.hamiltonian {
                HamiltonianSpec::Dephasing => "dephasing".into(),
                HamiltonianSpec::Zero => "zero".into(),
                HamiltonianSpec::Matrix(x) => fmt_matrix(x),
            },
        );
        put("model.omega", fmt_f64(m.omega));
        put(
            "model.jumps",
            match &m.jumps {
                JumpSpec::Dephasing => "dephasing".into(),
                JumpSpec::Matrices(v) => v.iter().map(fmt_matrix).collect::<Vec<_>>().join(" | "),
            },
        );
        put(
            "model.picture",
            match m.picture {
                PictureSpec::Interaction => "interaction".into(),
                PictureSpec::Schroedinger => "schroedinger".into(),
            },
        );
        put(
            "model.rho0",
            match &m.rho0 {
                StateSpec::Plus => "plus".into(),
                StateSpec::Minus => "minus".into(),
                StateSpec::Ground => "ground".into(),
                StateSpec::Excited => "excited".into(),
                StateSpec::Mixed => "mixed".into(),
                StateSpec::Matrix(x) => fmt_matrix(x),
            },
        );
        match &self.ensemble {
            EnsembleSpec::Single { rate } => {
                put("ensemble.type", "single".into());
                put("ensemble.rate", fmt_f64(*rate));
            }
            EnsembleSpec::Custom { rates, weights } => {
                put("ensemble.type", "custom".into());
                put("ensemble.rates", fmt_list(rates));
                put("ensemble.weights", fmt_list(weights));
            }
            EnsembleSpec::TwoState {
                p_up,
                rate_up,
                rate_down,
            } => {
                put("ensemble.type", "two_state".into());
                put("ensemble.p_up", fmt_f64(*p_up));
                put("ensemble.rate_up", fmt_f64(*rate_up));
                put("ensemble.rate_down", fmt_f64(*rate_down));
            }
            EnsembleSpec::Manifold { gamma, a, b, n } => {
                put("ensemble.type", "manifold".into());
                put("ensemble.gamma", fmt_f64(*gamma));
                put("ensemble.a", fmt_f64(*a));
                put("ensemble.b", fmt_f64(*b));
                put("ensemble.n", n.to_string());
            }
            EnsembleSpec::Fractional {
                alpha,
                mean_rate,
                beta,
                mean_waiting_time,
            } => {
                put("ensemble.type", "fractional".into());
                put("ensemble.alpha", fmt_f64(*alpha));
                put("ensemble.mean_rate", fmt_f64(*mean_rate));
                put("ensemble.beta", fmt_f64(*beta));
                put("ensemble.mean_waiting_time", fmt_f64(*mean_waiting_time));
            }
        }
        let g = &self.grid;
        put("grid.t_max", g.t_max.map_or("auto".into(), fmt_f64));
        put("grid.steps", g.steps.to_string());
        put("grid.tau_max", g.tau_max.map_or("auto".into(), fmt_f64));
        put("grid.tau_steps", g.tau_steps.to_string());
        let s = &self.solver;
        put(
            "solver.list",
            s.list
                .iter()
                .map(|x| x.as_str())
                .collect::<Vec<_>>()
                .join(", "),
        );
        put("solver.trajectories", s.trajectories.to_string());
        put("solver.seed", s.seed.to_string());
        put(
            "correlate.s",
            match &self.correlate_s {
                OperatorSpec::Named(n) => n.clone(),
                OperatorSpec::Matrix(x) => fmt_matrix(x),
            },
        );
        put(
            "fit.window",
            self.fit
                .window
                .map_or("auto".into(), |(a, b)| fmt_list(&[a, b])),
        );
        put("fit.points", self.fit.points.to_string());
        put("output.dir", self.output.dir.display().to_string());
        put(
            "output.formats",
            self.output
                .formats
                .iter()
                .map(|f| f.as_str())
                .collect::<Vec<_>>()
                .join(", "),
        );
        out
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_normalized())
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter()
        .map(|&x| fmt_f64(x))
        .collect::<Vec<_>>()
        .join(", ")
}

fn fmt_complex(z: Complex64) -> String {
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{:?}{sign}{:?}i", z.re, z.im.abs())
}

fn fmt_matrix(m: &Matrix) -> String {
    m.iter()
        .map(|row| {
            row.iter()
                .map(|&z| fmt_complex(z))
                .collect::<Vec<_>>()
                .join(", ")
        })
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn parse_complex(s: &str) -> Option<Complex64> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    let Some(body) = s.strip_suffix('i') else {
        return s.parse::<f64>().ok().map(|re| Complex64::new(re, 0.0));
    };
    // split at the last sign that is not part of an exponent
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let imag = |t: &str| match t {
        "" | "+" => Some(1.0),
        "-" => Some(-1.0),
        _ => t.parse::<f64>().ok(),
    };
    match split {
        Some(k) => Some(Complex64::new(body[..k].parse().ok()?, imag(&body[k..])?)),
        None => Some(Complex64::new(0.0, imag(body)?)),
    }
}

pub fn parse_matrix(s: &str) -> Option<Matrix> {
    let rows: Vec<Vec<Complex64>> = s
        .split(';')
        .map(|r| r.split(',').map(parse_complex).collect::<Option<Vec<_>>>())
        .collect::<Option<_>>()?;
    let n = rows.len();
    (n > 0 && rows.iter().all(|r| r.len() == n)).then_some(rows)
}

#[derive(Default)]
struct Parser {
    seen: Vec<(String, usize)>,
}

struct Raw {
    key: String,
    value: String,
    line: usize,
}

impl Parser {
    fn run(&mut self, text: &str) -> Result<RunConfig, ConfigError> {
        let mut raws = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    message: format!("expected `section.key = value`, found `{content}`"),
                });
            };
            let key = k.trim().to_string();
            if !key.contains('.') || key.starts_with('.') || key.ends_with('.') {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    message: format!("key `{key}` must have the form `section.key`"),
                });
            }
            if let Some((_, first)) = self.seen.iter().find(|(s, _)| *s == key) {
                return Err(ConfigError::Field {
                    line: line_no,
                    key,
                    message: format!("duplicate key (first set on line {first})"),
                });
            }
            self.seen.push((key.clone(), line_no));
            raws.push(Raw {
                key,
                value: v.trim().to_string(),
                line: line_no,
            });
        }
        build(&raws)
    }
}

struct Fields<'a> {
    raws: &'a [Raw],
    used: Vec<bool>,
}

impl<'a> Fields<'a> {
    fn get(&mut self, key: &str) -> Option<&'a Raw> {
        let i = self.raws.iter().position(|r| r.key == key)?;
        self.used[i] = true;
        Some(&self.raws[i])
    }

    fn parse<T>(
        &mut self,
        key: &str,
        what: &str,
        f: impl Fn(&str) -> Option<T>,
    ) -> Result<Option<T>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(r) => f(&r.value).map(Some).ok_or_else(|| ConfigError::Field {
                line: r.line,
                key: key.into(),
                message: format!("expected {what}, found `{}`", r.value),
            }),
        }
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.parse(key, "a number", |s| {
            s.parse::<f64>().ok().filter(|x| !x.is_nan())
        })
    }

    fn required_f64(&mut self, key: &str) -> Result<f64, ConfigError> {
        self.f64(key)?.ok_or_else(|| missing(key))
    }

    fn usize(&mut self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.parse(key, "a non-negative integer", |s| s.parse().ok())
    }

    fn auto_f64(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        Ok(self
            .parse(key, "a number or `auto`", |s| match s {
                "auto" => Some(None),
                _ => s.parse::<f64>().ok().filter(|x| !x.is_nan()).map(Some),
            })?
            .flatten())
    }

    fn list(&mut self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.parse(key, "a comma-separated list of numbers", |s| {
            s.split(',')
                .map(|x| x.trim().parse::<f64>().ok().filter(|v| !v.is_nan()))
                .collect()
        })
    }
}

fn missing(key: &str) -> ConfigError {
    ConfigError::Missing {
        key: key.into(),
        message: "required".into(),
    }
}

fn build(raws: &[Raw]) -> Result<RunConfig, ConfigError> {
    let mut f = Fields {
        raws,
        used: vec![false; raws.len()],
    };
    let ensemble = build_ensemble(&mut f)?;
    let mut cfg = RunConfig::with_ensemble(ensemble);

    if let Some(h) = f.parse(
        "model.hamiltonian",
        "`dephasing`, `zero` or a matrix",
        |s| match s {
            "dephasing" => Some(HamiltonianSpec::Dephasing),
            "zero" => Some(HamiltonianSpec::Zero),
            _ => parse_matrix(s).map(HamiltonianSpec::Matrix),
        },
    )? {
        cfg.model.hamiltonian = h;
    }
    if let Some(w) = f.f64("model.omega")? {
        cfg.model.omega = w;
    }
    if let Some(j) = f.parse(
        "model.jumps",
        "`dephasing` or `|`-separated matrices",
        |s| match s {
            "dephasing" => Some(JumpSpec::Dephasing),
            _ => s
                .split('|')
                .map(parse_matrix)
                .collect::<Option<Vec<_>>>()
                .map(JumpSpec::Matrices),
        },
    )? {
        cfg.model.jumps = j;
    }
    if let Some(p) = f.parse(
        "model.picture",
        "`interaction` or `schroedinger`",
        |s| match s {
            "interaction" => Some(PictureSpec::Interaction),
            "schroedinger" => Some(PictureSpec::Schroedinger),
            _ => None,
        },
    )? {
        cfg.model.picture = p;
    }
    if let Some(r) = f.parse("model.rho0", "a state name or a matrix", |s| match s {
        "plus" => Some(StateSpec::Plus),
        "minus" => Some(StateSpec::Minus),
        "ground" => Some(StateSpec::Ground),
        "excited" => Some(StateSpec::Excited),
        "mixed" => Some(StateSpec::Mixed),
        _ => parse_matrix(s).map(StateSpec::Matrix),
    })? {
        cfg.model.rho0 = r;
    }

    cfg.grid.t_max = f.auto_f64("grid.t_max")?;
    if let Some(n) = f.usize("grid.steps")? {
        cfg.grid.steps = n;
    }
    cfg.grid.tau_max = f.auto_f64("grid.tau_max")?;
    if let Some(n) = f.usize("grid.tau_steps")? {
        cfg.grid.tau_steps = n;
    }

    if let Some(list) = f.parse(
        "solver.list",
        "a comma-separated list of solver names",
        |s| {
            if s.is_empty() {
                return Some(Vec::new());
            }
            s.split(',')
                .map(|x| SolverName::ALL.into_iter().find(|n| n.as_str() == x.trim()))
                .collect()
        },
    )? {
        cfg.solver.list = list;
    }
    if let Some(n) = f.usize("solver.trajectories")? {
        cfg.solver.trajectories = n;
    }
    if let Some(n) = f.parse("solver.seed", "an unsigned integer", |s| s.parse().ok())? {
        cfg.solver.seed = n;
    }

    if let Some(s) = f.parse("correlate.s", "an operator name or a matrix", |s| {
        if NAMED_OPERATORS.contains(&s) {
            Some(OperatorSpec::Named(s.into()))
        } else {
            parse_matrix(s).map(OperatorSpec::Matrix)
        }
    })? {
        cfg.correlate_s = s;
    }

    if let Some(w) = f.parse(
        "fit.window",
        "`auto` or two numbers `lo, hi`",
        |s| match s {
            "auto" => Some(None),
            _ => {
                let v: Vec<f64> = s
                    .split(',')
                    .map(|x| x.trim().parse().ok())
                    .collect::<Option<_>>()?;
                (v.len() == 2).then(|| Some((v[0], v[1])))
            }
        },
    )? {
        cfg.fit.window = w;
    }
    if let Some(n) = f.usize("fit.points")? {
        cfg.fit.points = n;
    }

    if let Some(d) = f.parse("output.dir", "a path", |s| {
        (!s.is_empty()).then(|| PathBuf::from(s))
    })? {
        cfg.output.dir = d;
    }
    if let Some(v) = f.parse("output.formats", "a list of `csv`, `json`", |s| {
        s.split(',')
            .map(|x| match x.trim() {
                "csv" => Some(Format::Csv),
                "json" => Some(Format::Json),
                _ => None,
            })
            .collect()
    })? {
        cfg.output.formats = v;
    }

    if let Some(i) = f.used.iter().position(|u| !u) {
        let r = &raws[i];
        return Err(ConfigError::Field {
            line: r.line,
            key: r.key.clone(),
            message: "unknown key for this configuration".into(),
        });
    }
    Ok(cfg)
}

fn build_ensemble(f: &mut Fields) -> Result<EnsembleSpec, ConfigError> {
    let kind = f
        .get("ensemble.type")
        .ok_or_else(|| missing("ensemble.type"))?;
    Ok(match kind.value.as_str() {
        "single" => EnsembleSpec::Single {
            rate: f.required_f64("ensemble.rate")?,
        },
        "custom" => {
            let rates = f
                .list("ensemble.rates")?
                .ok_or_else(|| missing("ensemble.rates"))?;
            let weights = f
                .list("ensemble.weights")?
                .ok_or_else(|| missing("ensemble.weights"))?;
            if rates.len() != weights.len() {
                let r = f.get("ensemble.weights").expect("present");
                return Err(ConfigError::Field {
                    line: r.line,
                    key: r.key.clone(),
                    message: format!("{} weights for {} rates", weights.len(), rates.len()),
                });
            }
            EnsembleSpec::Custom { rates, weights }
        }
        "two_state" => EnsembleSpec::TwoState {
            p_up: f.required_f64("ensemble.p_up")?,
            rate_up: f.required_f64("ensemble.rate_up")?,
            rate_down: f.required_f64("ensemble.rate_down")?,
        },
        "manifold" => EnsembleSpec::Manifold {
            gamma: f.required_f64("ensemble.gamma")?,
            a: f.required_f64("ensemble.a")?,
            b: f.required_f64("ensemble.b")?,
            n: f.usize("ensemble.n")?
                .ok_or_else(|| missing("ensemble.n"))?,
        },
        "fractional" => EnsembleSpec::Fractional {
            alpha: f.required_f64("ensemble.alpha")?,
            mean_rate: f.required_f64("ensemble.mean_rate")?,
            beta: f.required_f64("ensemble.beta")?,
            mean_waiting_time: f.required_f64("ensemble.mean_waiting_time")?,
        },
        other => {
            return Err(ConfigError::Field {
                line: kind.line,
                key: kind.key.clone(),
                message: format!(
                "unknown ensemble type `{other}` (single, custom, two_state, manifold, fractional)"
            ),
            })
        }
    })
}
