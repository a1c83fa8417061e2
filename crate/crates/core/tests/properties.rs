use pdiv::barrier_optimizer::{certify_slopes, find_b_omega};
use pdiv::mc_oracle::MCEstimate;
use pdiv::{Jumps, Kernels, Model, Payoff, Scale, SearchConfig, Valuation};
use proptest::prelude::*;

fn model_strategy() -> impl Strategy<Value = Model> {
    (0.5f64..3.0, prop_oneof![Just(0.0), 0.1f64..0.8], 0.1f64..1.5, 0.1f64..0.9, 0.5f64..2.0, 0.5f64..3.0).prop_map(
        |(c, sigma, a, p, eta, gap)| {
            let jumps = Jumps::Hyperexponential { arrival_rate: a, weights: vec![p, 1.0 - p], rates: vec![eta, eta + gap] };
            Model::new(c, sigma, jumps).unwrap()
        },
    )
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn psi_is_convex(m in model_strategy(), t1 in 0.0f64..5.0, d1 in 0.01f64..3.0, d2 in 0.01f64..3.0) {
        let (t2, t3) = (t1 + d1, t1 + d1 + d2);
        let w = (t3 - t2) / (t3 - t1);
        let chord = w * m.psi(t1) + (1.0 - w) * m.psi(t3);
        prop_assert!(m.psi(t2) <= chord + 1e-10 * (1.0 + chord.abs()));
    }

    #[test]
    fn phi_q_is_the_root(m in model_strategy()) {
        for q in [0.01, 0.1, 1.0, 10.0] {
            let r = m.phi_q(q).unwrap();
            prop_assert!(r > 0.0);
            prop_assert!(((m.psi(r) - q) / q).abs() < 1e-10, "q {q}: psi {}", m.psi(r));
        }
    }

    #[test]
    fn psi_difference_quotient_converges_linearly(m in model_strategy()) {
        let d0 = m.psi_prime_at_zero();
        let err = |h: f64| ((m.psi(h) - m.psi(0.0)) / h - d0).abs();
        let (e3, e4, e5) = (err(1e-3), err(1e-4), err(1e-5));
        prop_assert!(e4 < 0.15 * e3 && e5 < 0.15 * e4, "errors {e3:e} {e4:e} {e5:e}");
    }

    #[test]
    fn scale_functions_are_monotone(m in model_strategy(), q in 0.05f64..2.0) {
        let e = Scale::build(&m, q).unwrap();
        let xs = grid(0.0, 6.0, 61);
        for w in xs.windows(2) {
            prop_assert!(e.w(w[1]) > e.w(w[0]));
            prop_assert!(e.z(w[1]) >= e.z(w[0]));
        }
        prop_assert!(xs.iter().all(|&x| e.z(x) >= 1.0));
    }

    #[test]
    fn scale_ratio_tends_to_one_at_zero(m in model_strategy(), q in 0.05f64..2.0, gamma in 0.1f64..3.0) {
        let a = Scale::build(&m, q).unwrap();
        let b = Scale::build(&m, q + gamma).unwrap();
        let ratio = b.w(1e-6) / a.w(1e-6);
        prop_assert!((ratio - 1.0).abs() < 1e-3, "ratio {ratio}");
    }

    #[test]
    fn kernels_stay_in_range(m in model_strategy(), q in 0.05f64..2.0, gamma in 0.1f64..3.0, b in 0.2f64..4.0, t in 0.01f64..1.0) {
        let p = Kernels::new(&m, q, gamma, b).unwrap();
        let x = t * b;
        let unit = [
            p.exit_down(x).unwrap(),
            p.exit_up(x).unwrap(),
            p.observed_passage_lt(x).unwrap(),
            p.joint_observed_transform(x, 0.7).unwrap(),
            p.reflected_passage_exp_transform(x).unwrap(),
            p.killed_passage_lt(x).unwrap(),
        ];
        for v in unit {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v), "{v}");
        }
        prop_assert!(p.injection_until_observed(x).unwrap() >= -1e-12);
        // b - Y at the observed passage is never positive.
        prop_assert!(p.observed_overshoot(x).unwrap() <= 1e-12);
    }

    #[test]
    fn potential_masses(m in model_strategy(), t in 0.01f64..1.5, b in 0.3f64..3.0) {
        let ctx = Valuation::new(&m, 0.25, 0.5, 1.0, 1.5, b, Payoff::zero()).unwrap();
        let x = t * b;
        let double = ctx.double_barrier_measure(x).unwrap().mass();
        prop_assert!((double - 1.0).abs() < 1e-6, "double {double}");
        if x <= b {
            let single = ctx.single_barrier_measure(x).unwrap().mass();
            let target = 1.0 - ctx.killed_passage_lt(x).unwrap();
            prop_assert!((single - target).abs() < 1e-6, "single {single} vs {target}");
        }
    }

    #[test]
    fn fitted_payoffs_are_concave(vals in prop::collection::vec(-2.0f64..2.0, 3..12), slope in 0.0f64..1.0) {
        let xs: Vec<f64> = (0..vals.len()).map(|k| k as f64 * 0.5).collect();
        let mut acc = 0.0;
        let vs: Vec<f64> = vals.iter().map(|v| { acc += v; acc }).collect();
        let (f, _) = Payoff::fit_concave(&xs, &vs, slope).unwrap();
        let kx = f.knot_xs();
        let kv = f.knot_values();
        let slopes: Vec<f64> = (1..kx.len()).map(|i| (kv[i] - kv[i - 1]) / (kx[i] - kx[i - 1])).collect();
        for s in slopes.windows(2) {
            prop_assert!(s[1] <= s[0] + 1e-12);
        }
        prop_assert!(f.terminal_slope() <= *slopes.last().unwrap_or(&f64::INFINITY) + 1e-12);
    }

    #[test]
    fn standard_error_is_sample_std_over_root_n(xs in prop::collection::vec(-10.0f64..10.0, 2..200)) {
        let est = MCEstimate::from_samples(&xs, 1);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        prop_assert!((est.mean - mean).abs() < 1e-12);
        prop_assert!((est.std_error - (var / n).sqrt()).abs() < 1e-12 * (1.0 + var.sqrt()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn optimal_barrier_satisfies_slope_corridor(
        m in model_strategy(),
        delta in 0.1f64..1.0,
        lambda in 0.1f64..1.0,
        phi in 1.1f64..2.5,
        cap in 0.5f64..6.0,
    ) {
        let probe = Valuation::new(&m, delta, lambda, 1.0, phi, 1.0, Payoff::capped_identity(cap).unwrap()).unwrap();
        let b = find_b_omega(&probe, &SearchConfig::default()).unwrap();
        let ctx = probe.with_barrier(b).unwrap();
        let xs = grid(b * 1e-3, 3.0 * b.max(0.1), 200);
        let report = certify_slopes(&ctx, &xs);
        prop_assert!(report.max_violation() < 1e-8, "b {b}: {report:?}");
    }
}
