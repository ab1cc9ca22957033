use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nmbath::config::{
    EnsembleSpec, HamiltonianSpec, JumpSpec, OperatorSpec, SolverName, StateSpec,
};
use nmbath::RunConfig;
use nmbath_core::Complex64;
use proptest::prelude::*;
use serde_json::Value;

fn nmbath(args: &[&str], cfg: &Path, out: &Path, threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nmbath"));
    cmd.args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out);
    match threads {
        Some(t) => cmd.env("NMBATH_THREADS", t),
        None => cmd.env_remove("NMBATH_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("run.cfg");
    fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const TWO_STATE: &str = "\
ensemble.type = two_state
ensemble.p_up = 0.5
ensemble.rate_up = 2
ensemble.rate_down = 1
grid.t_max = 4
grid.steps = 80
grid.tau_steps = 8
";

#[test]
fn kernel_summary_for_two_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TWO_STATE);
    let out = dir.path().join("o");
    let r = nmbath(&["kernel"], &cfg, &out, None);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let s = json(&out.join("kernel.json"));
    assert!((s["stats"]["mean_rate"].as_f64().unwrap() - 1.5).abs() < 1e-12);
    assert!((s["stats"]["beta"].as_f64().unwrap() - 0.166667).abs() < 1e-6);
    assert!((s["stats"]["eta"].as_f64().unwrap() - 1.5).abs() < 1e-12);
    let csv = fs::read_to_string(out.join("kernel.csv")).unwrap();
    assert!(csv.starts_with("t,w,p0,f,k_reg\n"));
    assert!(!csv.contains('\r'));
    assert_eq!(csv.lines().count(), 82);
}

#[test]
fn single_rate_kernel_has_no_poles() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "ensemble.type = single\nensemble.rate = 0.7\ngrid.steps = 10\n",
    );
    let out = dir.path().join("o");
    assert!(nmbath(&["kernel"], &cfg, &out, None).status.success());
    let s = json(&out.join("kernel.json"));
    assert_eq!(s["kernel"]["modes"].as_array().unwrap().len(), 0);
    assert!((s["kernel"]["markov_weight"].as_f64().unwrap() - 0.7).abs() < 1e-15);
}

#[test]
fn manifold_summary_reports_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "ensemble.type = manifold\nensemble.gamma = 1\nensemble.a = 0.25\nensemble.b = 0.5\nensemble.n = 400\ngrid.steps = 10\n",
    );
    let out = dir.path().join("o");
    assert!(nmbath(&["kernel"], &cfg, &out, None).status.success());
    let s = json(&out.join("kernel.json"));
    assert!((s["stats"]["alpha"].as_f64().unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn evolve_cross_residual_for_dephasing() {
    let dir = tempfile::tempdir().unwrap();
    let text = "\
ensemble.type = two_state
ensemble.p_up = 0.5
ensemble.rate_up = 2
ensemble.rate_down = 1
solver.list = ensemble, volterra
";
    let cfg = write_config(dir.path(), text);
    let out = dir.path().join("o");
    let r = nmbath(&["evolve"], &cfg, &out, None);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let s = json(&out.join("evolve.json"));
    assert!(s["max_cross_residual"].as_f64().unwrap() <= 1e-6);
    let header = fs::read_to_string(out.join("evolve_volterra.csv")).unwrap();
    let header = header.lines().next().unwrap().to_string();
    assert!(
        header.contains("rho01_re")
            && header.contains("bloch_x")
            && header.contains("min_eigenvalue")
    );
}

#[test]
fn mc_standard_errors_scale() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{TWO_STATE}solver.list = mc_frozen\n");
    let cfg = write_config(dir.path(), &text);
    let max_se = |n: &str| {
        let out = dir.path().join(format!("o{n}"));
        let r = nmbath(&["evolve", "--trajectories", n], &cfg, &out, None);
        assert!(r.status.success());
        let csv = fs::read_to_string(out.join("evolve_mc_frozen.csv")).unwrap();
        assert!(csv.lines().next().unwrap().contains("se_rho01_re"));
        json(&out.join("evolve.json"))["solvers"][0]["max_standard_error"]
            .as_f64()
            .unwrap()
    };
    let ratio = max_se("2500") / max_se("10000");
    assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let text =
        format!("{TWO_STATE}solver.list = mc_frozen, mc_renewal\nsolver.trajectories = 3000\n");
    let cfg = write_config(dir.path(), &text);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(nmbath(&["evolve", "--seed", "9"], &cfg, &a, Some("1"))
        .status
        .success());
    assert!(nmbath(&["evolve", "--seed", "9"], &cfg, &b, Some("4"))
        .status
        .success());
    for f in [
        "evolve_mc_frozen.csv",
        "evolve_mc_renewal.csv",
        "evolve.json",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn correlate_reports_h_at_one_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = "\
ensemble.type = custom
ensemble.rates = 1, 2
ensemble.weights = 0.5, 0.5
grid.t_max = 1
grid.steps = 1
grid.tau_max = 1
grid.tau_steps = 1
correlate.s = id
";
    let cfg = write_config(dir.path(), text);
    let out = dir.path().join("o");
    assert!(nmbath(&["correlate"], &cfg, &out, None).status.success());
    let csv = fs::read_to_string(out.join("correlate.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "residual_sx_re").unwrap();
    let last: Vec<f64> = csv
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|x| x.parse().unwrap())
        .collect();
    assert_eq!((last[0], last[1]), (1.0, 1.0));
    assert!((last[col] - 0.013520).abs() < 1e-6);
    let s = json(&out.join("correlate.json"));
    assert!(s["dephasing_closed_form"]["max_abs_diff"].as_f64().unwrap() < 1e-8);
}

#[test]
fn correlate_single_rate_is_exact_and_asymptotic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "ensemble.type = single\nensemble.rate = 1\ngrid.steps = 20\ngrid.tau_steps = 10\n",
    );
    let out = dir.path().join("o");
    assert!(nmbath(&["correlate"], &cfg, &out, None).status.success());
    let s = json(&out.join("correlate.json"));
    assert!(s["max_residual"].as_f64().unwrap() <= 1e-10);
    assert_eq!(s["regression_exact"], Value::Bool(true));
}

#[test]
fn cpcheck_and_fitpow() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{TWO_STATE}solver.list = ensemble, volterra\n");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("o");
    assert!(nmbath(&["cpcheck"], &cfg, &out, None).status.success());
    let s = json(&out.join("cpcheck.json"));
    for solver in s["solvers"].as_array().unwrap() {
        assert!(solver["min_eigenvalue"].as_f64().unwrap() >= -1e-8);
    }

    let cfg = write_config(
        dir.path(),
        "ensemble.type = manifold\nensemble.gamma = 1\nensemble.a = 0.25\nensemble.b = 0.5\nensemble.n = 400\n",
    );
    assert!(nmbath(&["fitpow"], &cfg, &out, None).status.success());
    let s = json(&out.join("fitpow.json"));
    assert!((s["slope"].as_f64().unwrap() + 1.5).abs() <= 0.1);
    assert!(s["r_squared"].as_f64().unwrap() >= 0.999);

    let cfg = write_config(dir.path(), "ensemble.type = single\nensemble.rate = 1\n");
    assert!(nmbath(&["fitpow"], &cfg, &out, None).status.success());
    assert_eq!(
        json(&out.join("fitpow.json"))["rejected"],
        Value::Bool(true)
    );
}

#[test]
fn fractional_is_limited_to_kernel_and_fitpow() {
    let dir = tempfile::tempdir().unwrap();
    let text = "\
ensemble.type = fractional
ensemble.alpha = 0.5
ensemble.mean_rate = 1
ensemble.beta = 1
ensemble.mean_waiting_time = inf
grid.steps = 50
";
    let cfg = write_config(dir.path(), text);
    let out = dir.path().join("o");
    assert!(nmbath(&["kernel"], &cfg, &out, None).status.success());
    assert!(nmbath(&["fitpow"], &cfg, &out, None).status.success());
    let fit = json(&out.join("fitpow.json"));
    assert!((fit["slope"].as_f64().unwrap() + 1.5).abs() < 0.1);
    for cmd in ["evolve", "correlate", "cpcheck"] {
        assert_eq!(
            nmbath(&[cmd], &cfg, &out, None).status.code(),
            Some(2),
            "{cmd}"
        );
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = write_config(dir.path(), "ensemble.type = single\nensemble.rate = fast\n");
    let r = nmbath(&["kernel"], &cfg, &out, None);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("line 2"));

    let cfg = write_config(
        dir.path(),
        "ensemble.type = custom\nensemble.rates = 1, 2\nensemble.weights = 0.2, 0.2\n",
    );
    assert_eq!(nmbath(&["kernel"], &cfg, &out, None).status.code(), Some(2));

    // far too coarse for the step-halving check
    let cfg = write_config(
        dir.path(),
        &format!(
            "{}solver.list = volterra\ngrid.steps = 2\n",
            TWO_STATE.replace("grid.steps = 80\n", "")
        ),
    );
    assert_eq!(nmbath(&["evolve"], &cfg, &out, None).status.code(), Some(3));

    // Σ V†V = diag(1, 2): fine for the ensemble solver, rejected by trajectories
    let cfg = write_config(
        dir.path(),
        &format!("{TWO_STATE}model.jumps = 0,1;0,0 | 1,0;0,-1\nsolver.list = mc_renewal\n"),
    );
    assert_eq!(nmbath(&["evolve"], &cfg, &out, None).status.code(), Some(2));

    let cfg = write_config(dir.path(), &format!("{TWO_STATE}solver.list =\n"));
    let r = nmbath(&["evolve"], &cfg, &out, None);
    assert_eq!(r.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&r.stderr).contains("warning"));

    let cfg = write_config(dir.path(), TWO_STATE);
    assert_eq!(
        nmbath(&["evolve"], &cfg, &out, Some("zero")).status.code(),
        Some(2)
    );
}

#[test]
fn normalized_config_round_trips() {
    let text = "\
# a comment
model.hamiltonian = 0.5, 0.1-0.2i; 0.1+0.2i, -0.5
model.jumps = 0, 1; 0, 0 | 0, 0; 0, 1
model.picture = schroedinger
model.rho0 = mixed
ensemble.type = custom
ensemble.rates = 1, 2.5
ensemble.weights = 0.25, 0.75
solver.list = ensemble, mc_renewal
fit.window = 2, 50
";
    let cfg = RunConfig::parse(text).unwrap();
    assert!(matches!(cfg.model.hamiltonian, HamiltonianSpec::Matrix(_)));
    assert!(matches!(&cfg.model.jumps, JumpSpec::Matrices(v) if v.len() == 2));
    assert_eq!(
        cfg.solver.list,
        vec![SolverName::Ensemble, SolverName::McRenewal]
    );
    assert_eq!(RunConfig::parse(&cfg.to_normalized()).unwrap(), cfg);
}

fn matrix() -> impl Strategy<Value = Vec<Vec<Complex64>>> {
    (1usize..4).prop_flat_map(|n| {
        prop::collection::vec(
            prop::collection::vec(
                (-1e3f64..1e3, -1e3f64..1e3).prop_map(|(a, b)| Complex64::new(a, b)),
                n,
            ),
            n,
        )
    })
}

fn ensemble() -> impl Strategy<Value = EnsembleSpec> {
    prop_oneof![
        (1e-6f64..1e6).prop_map(|rate| EnsembleSpec::Single { rate }),
        prop::collection::vec((1e-3f64..1e3, 0.0f64..1.0), 1..6).prop_map(|v| {
            EnsembleSpec::Custom {
                rates: v.iter().map(|x| x.0).collect(),
                weights: v.iter().map(|x| x.1).collect(),
            }
        }),
        (0.0f64..1.0, 0.1f64..10.0, 0.1f64..10.0).prop_map(|(p_up, rate_up, rate_down)| {
            EnsembleSpec::TwoState {
                p_up,
                rate_up,
                rate_down,
            }
        }),
        (0.1f64..10.0, 0.0f64..1.0, 0.0f64..1.0, 1usize..1000)
            .prop_map(|(gamma, a, b, n)| EnsembleSpec::Manifold { gamma, a, b, n }),
        (
            0.01f64..0.99,
            0.1f64..10.0,
            0.0f64..5.0,
            prop_oneof![Just(f64::INFINITY), 0.1f64..100.0]
        )
            .prop_map(|(alpha, mean_rate, beta, mean_waiting_time)| {
                EnsembleSpec::Fractional {
                    alpha,
                    mean_rate,
                    beta,
                    mean_waiting_time,
                }
            }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn emitted_config_parses_to_same_plan(
        ens in ensemble(),
        h in prop::option::of(matrix()),
        jumps in prop::option::of(prop::collection::vec(matrix(), 1..3)),
        rho in prop::option::of(matrix()),
        s in prop::option::of(matrix()),
        omega in -10.0f64..10.0,
        t_max in prop::option::of(1e-3f64..1e3),
        steps in 1usize..100_000,
        list in prop::collection::vec(prop::sample::select(SolverName::ALL.to_vec()), 0..4),
        seed: u64,
        window in prop::option::of((1e-3f64..1.0, 1.0f64..1e3)),
    ) {
        let mut cfg = RunConfig::with_ensemble(ens);
        if let Some(h) = h { cfg.model.hamiltonian = HamiltonianSpec::Matrix(h); }
        if let Some(j) = jumps { cfg.model.jumps = JumpSpec::Matrices(j); }
        if let Some(r) = rho { cfg.model.rho0 = StateSpec::Matrix(r); }
        if let Some(s) = s { cfg.correlate_s = OperatorSpec::Matrix(s); }
        cfg.model.omega = omega;
        cfg.grid.t_max = t_max;
        cfg.grid.steps = steps;
        cfg.solver.list = list;
        cfg.solver.seed = seed;
        cfg.fit.window = window;
        let text = cfg.to_normalized();
        let back = RunConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_normalized(), text);
    }
}
