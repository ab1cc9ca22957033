use nmbath_core::ratebath::*;
use nmbath_core::Complex64;
use proptest::prelude::*;

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Random ensembles with 1..=8 well-separated rates in [0.1, 5].
fn ensembles() -> impl Strategy<Value = RateEnsemble> {
    (1usize..=8)
        .prop_flat_map(|n| {
            (
                proptest::collection::vec(0.0f64..1.0, n),
                proptest::collection::vec(0.05f64..1.0, n),
            )
        })
        .prop_map(|(xs, ws)| {
            let mut rates: Vec<f64> = xs.iter().map(|x| 0.1 * 50f64.powf(*x)).collect();
            rates.sort_by(|a, b| a.total_cmp(b));
            for k in 1..rates.len() {
                if rates[k] < rates[k - 1] * 1.02 {
                    rates[k] = rates[k - 1] * 1.02;
                }
            }
            let total: f64 = ws.iter().sum();
            RateEnsemble::new(rates.into_iter().zip(ws.iter().map(|w| w / total))).unwrap()
        })
}

/// Solves `f(t) = w(t) + ∫₀ᵗ w(t−s) f(s) ds` on a uniform grid.
///
/// Each exponential component of `w` carries its own convolution state,
/// advanced exactly by `e^{−γh}`; the new sample enters by the trapezoid
/// rule, which makes each step a scalar linear solve.
fn renewal_quadrature(ens: &RateEnsemble, h: f64, steps: usize) -> Vec<f64> {
    let e = ens.entries();
    let mean = ens.stats().mean_rate;
    let decay: Vec<f64> = e.iter().map(|x| (-x.rate * h).exp()).collect();
    let mut conv = vec![0.0; e.len()];
    let mut f = vec![mean];
    for n in 0..steps {
        let t = (n + 1) as f64 * h;
        let fn_ = f[n];
        let mut rhs = ens.waiting_density(t).unwrap();
        for (k, x) in e.iter().enumerate() {
            conv[k] = decay[k] * (conv[k] + 0.5 * h * fn_);
            rhs += x.weight * x.rate * conv[k];
        }
        let next = rhs / (1.0 - 0.5 * h * mean);
        for c in conv.iter_mut() {
            *c += 0.5 * h * next;
        }
        f.push(next);
    }
    f
}

#[test]
fn renewal_oracle_matches_partial_fractions() {
    let ensembles = [
        RateEnsemble::two_state(0.5, 2.0, 1.0).unwrap(),
        RateEnsemble::manifold(1.0, 0.3, 0.6, 5).unwrap(),
        RateEnsemble::new([(0.2, 0.1), (0.9, 0.3), (3.0, 0.6)]).unwrap(),
    ];
    for ens in &ensembles {
        let mean = ens.stats().mean_rate;
        let h = 5e-4 / ens.max_rate();
        let steps = (20.0 / mean / h).ceil() as usize;
        let oracle = renewal_quadrature(ens, h, steps);
        let dec = kernel_decompose(ens).unwrap();
        let worst = oracle
            .iter()
            .enumerate()
            .map(|(n, f)| (f - dec.sprinkling(n as f64 * h)).abs() / mean)
            .fold(0.0, f64::max);
        assert!(worst <= 1e-5, "renewal mismatch {worst}");
    }
}

#[test]
fn sprinkling_derivative_is_regular_kernel() {
    let ens = RateEnsemble::manifold(1.0, 0.3, 0.6, 5).unwrap();
    let dec = kernel_decompose(&ens).unwrap();
    let h = 1e-4;
    for k in 1..200 {
        let t = 0.05 * k as f64;
        let d = (dec.sprinkling(t + h) - dec.sprinkling(t - h)) / (2.0 * h);
        assert!((d - dec.regular(t)).abs() <= 1e-4);
    }
}

#[test]
fn two_state_sprinkling_closed_form() {
    let ens = RateEnsemble::two_state(0.5, 2.0, 1.0).unwrap();
    let s = ens.stats();
    let eta = s.eta.unwrap();
    for k in 0..100 {
        let t = 0.1 * k as f64;
        let want =
            s.mean_rate - (s.mean_rate - 1.0 / s.mean_waiting_time) * (1.0 - (-eta * t).exp());
        assert!((sprinkling(&ens, t).unwrap() - want).abs() <= 1e-12);
    }
}

#[test]
fn large_u_behaviour() {
    for ens in [
        RateEnsemble::two_state(0.3, 4.0, 0.5).unwrap(),
        RateEnsemble::manifold(1.0, 0.3, 0.6, 5).unwrap(),
    ] {
        let s = ens.stats();
        let u = 1e6;
        let w = ens.waiting_laplace(re(u)).re;
        assert!((u * w - s.mean_rate).abs() <= 1e-4 * s.mean_rate);
        // 1 − w(u)(u+⟨γ⟩)/⟨γ⟩ vanishes like β/u
        let gap = 1.0 - w * (u + s.mean_rate) / s.mean_rate;
        assert!(gap.abs() < 1e-5);
        assert!((u * gap - s.beta).abs() <= 1e-4 * s.beta.max(1e-3));
    }
}

#[test]
fn small_u_gives_mean_waiting_time() {
    let ens = RateEnsemble::manifold(1.0, 0.3, 0.6, 5).unwrap();
    let tau = ens.stats().mean_waiting_time;
    let u = 1e-7 * ens.min_rate();
    let w = ens.waiting_laplace(re(u)).re;
    assert!(((1.0 - w) / u - tau).abs() <= 1e-4 * tau);
}

#[test]
fn talbot_recovers_rational_pairs() {
    let ens = RateEnsemble::two_state(0.5, 2.0, 1.0).unwrap();
    let mean = ens.stats().mean_rate;
    let tal = Talbot::default().with_shift(-ens.min_rate());
    for k in 0..=40 {
        let t = (0.1 * (500f64).powf(k as f64 / 40.0)) / mean;
        let got = tal.invert(|u| ens.waiting_laplace(u), t).unwrap();
        let want = ens.waiting_density(t).unwrap();
        assert!(
            (got - want).abs() <= 1e-8 * want,
            "t={t} got={got} want={want}"
        );
        let fine = tal
            .with_nodes(64)
            .invert(|u| ens.waiting_laplace(u), t)
            .unwrap();
        assert!((fine - got).abs() <= 1e-9 * want.abs());
    }
}

#[test]
fn talbot_unshifted_exponential() {
    let v = talbot_invert(|u| 1.0 / (u + 1.0), &[1.0]);
    let want = (-1.0f64).exp();
    assert!((v[0].as_ref().unwrap() - want).abs() <= 1e-8 * want);
}

#[test]
fn talbot_sprinkling_matches_partial_fractions() {
    let ens = RateEnsemble::manifold(1.0, 0.3, 0.6, 5).unwrap();
    let dec = kernel_decompose(&ens).unwrap();
    let tal = Talbot::default();
    // f(u) = K(u)/u has a simple pole at the origin and no δ part
    for t in [0.2, 1.0, 5.0, 20.0] {
        let got = tal.invert(|u| dec.laplace(u) / u, t).unwrap();
        let want = dec.sprinkling(t);
        assert!((got - want).abs() <= 1e-8 * want);
    }
}

#[test]
fn fractional_tail_is_positive_and_decreasing() {
    let m = fractional_model(0.5, 1.0, 1.0, f64::INFINITY).unwrap();
    assert_eq!(m.cutoff, 0.0);
    let times = log_grid(1.0, 1e3, 30);
    let w: Vec<f64> = talbot_invert(|u| m.waiting_laplace(u), &times)
        .into_iter()
        .map(|r| r.unwrap())
        .collect();
    for pair in w.windows(2) {
        assert!(pair[0] > 0.0 && pair[1] > 0.0 && pair[1] < pair[0]);
    }
    // heavy tail close to t^{−3/2}
    let fit = fit_power_law(
        &times.iter().copied().zip(w).collect::<Vec<_>>(),
        (1e2, 1e3),
    )
    .unwrap();
    assert!((fit.slope + 1.5).abs() < 0.1, "slope {}", fit.slope);
}

#[test]
fn manifold_power_laws() {
    let half = RateEnsemble::manifold(1.0, 0.25, 0.5, 400).unwrap();
    let fit = fit_waiting_density(&half, (5.0, 500.0), 200).unwrap();
    assert!((fit.slope + 1.5).abs() <= 0.1 && fit.r_squared >= 0.999);
    let unit = RateEnsemble::manifold(1.0, 0.2, 0.2, 400).unwrap();
    let fit = fit_waiting_density(&unit, (5.0, 500.0), 200).unwrap();
    assert!((fit.slope + 2.0).abs() <= 0.1 && fit.r_squared >= 0.999);
}

#[test]
fn manifold_fit_on_default_window() {
    let ens = RateEnsemble::manifold(1.0, 0.25, 0.5, 400).unwrap();
    let fit = fit_waiting_density(&ens, default_fit_window(&ens), 400).unwrap();
    assert!((fit.slope + 1.5).abs() <= 0.1, "slope {}", fit.slope);
    assert!(fit.r_squared >= 0.999, "R² {}", fit.r_squared);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn ensemble_invariants(ens in ensembles()) {
        let s = ens.stats();
        prop_assert!(s.mean_rate * s.mean_waiting_time >= 1.0 - 1e-12);
        prop_assert!((ens.survival(0.0).unwrap() - 1.0).abs() <= 1e-15);
        let mut prev = f64::INFINITY;
        for k in 0..100 {
            let t = 0.2 * k as f64;
            let p = ens.survival(t).unwrap();
            prop_assert!(p <= prev);
            prop_assert!(ens.waiting_density(t).unwrap() >= 0.0);
            prev = p;
        }
    }

    #[test]
    fn kernel_invariants(ens in ensembles()) {
        let dec = kernel_decompose(&ens).unwrap();
        let s = ens.stats();
        prop_assert_eq!(dec.modes.len(), ens.len() - 1);
        prop_assert!((dec.markov_weight - s.mean_rate).abs() <= 1e-14 * s.mean_rate);
        let rates: Vec<f64> = ens.rates().collect();
        for (j, m) in dec.modes.iter().enumerate() {
            prop_assert!(m.pole < 0.0 && m.amplitude < 0.0);
            prop_assert!(m.pole > -rates[j] && m.pole < -rates[j + 1]);
        }
        prop_assert!(dec.reconstruction_residual(&ens) <= RECONSTRUCTION_TOL);
        prop_assert!((dec.sprinkling(0.0) - s.mean_rate).abs() <= 1e-10 * s.mean_rate);
        let inv_tau = 1.0 / s.mean_waiting_time;
        prop_assert!((dec.sprinkling_limit() - inv_tau).abs() <= 1e-10 * inv_tau);
    }

    #[test]
    fn spectral_identity(ens in ensembles(), x in -2.0f64..3.0) {
        let u = re(10f64.powf(x));
        let p0 = spectral_p0(&ens).eval(u);
        let w = spectral_w(&ens).eval(u);
        prop_assert!((p0 - (1.0 - w) / u).norm() <= 1e-12 * p0.norm().max(1.0));
        prop_assert!((spectral_w(&ens).eval(re(0.0)) - 1.0).norm() <= 1e-12);
    }

    #[test]
    fn two_state_closed_forms(p in 0.01f64..0.99, g_up in 0.1f64..10.0, ratio in 1.05f64..20.0, x in -2.0f64..2.0) {
        let g_down = g_up / ratio;
        let ens = RateEnsemble::two_state(p, g_up, g_down).unwrap();
        let s = ens.stats();
        let eta = s.eta.unwrap();
        prop_assert!((eta * (1.0 - 1.0 / (s.mean_rate * s.mean_waiting_time)) - s.beta).abs() <= 1e-10 * s.beta.max(1.0));

        let u = re(10f64.powf(x) * s.mean_rate);
        let sigma = u / (u + eta / (s.mean_rate * s.mean_waiting_time));
        let closed = s.mean_rate / (u + s.mean_rate + s.beta * sigma);
        let w = ens.waiting_laplace(u);
        prop_assert!((closed - w).norm() <= 1e-10 * w.norm());

        let dec = kernel_decompose(&ens).unwrap();
        prop_assert_eq!(dec.modes.len(), 1);
        let m = dec.modes[0];
        prop_assert!((m.pole + eta).abs() <= 1e-10 * eta);
        prop_assert!((m.amplitude + s.mean_rate * s.beta).abs() <= 1e-10 * (s.mean_rate * s.beta));

        let t = 10f64.powf(x) / s.mean_rate;
        let f = s.mean_rate - (s.mean_rate - 1.0 / s.mean_waiting_time) * (1.0 - (-eta * t).exp());
        prop_assert!((dec.sprinkling(t) - f).abs() <= 1e-10 * f);
    }

    #[test]
    fn merging_preserves_moments(ens in ensembles(), extra in 0usize..3) {
        // splitting an entry into identical copies changes nothing
        let mut pairs: Vec<(f64, f64)> = ens.entries().iter().map(|e| (e.rate, e.weight)).collect();
        let (r, w) = pairs[0];
        pairs[0] = (r, w / (extra + 1) as f64);
        for _ in 0..extra {
            pairs.push((r, w / (extra + 1) as f64));
        }
        let again = RateEnsemble::new(pairs).unwrap();
        prop_assert_eq!(again.len(), ens.len());
        let (a, b) = (ens.stats(), again.stats());
        prop_assert!((a.mean_rate - b.mean_rate).abs() <= 1e-14 * a.mean_rate);
    }
}
