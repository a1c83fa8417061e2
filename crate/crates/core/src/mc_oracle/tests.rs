use super::*;
use crate::levy_model::JumpSpec;

fn canonical() -> SpectrallyPositiveModel<f64> {
    SpectrallyPositiveModel::hyperexponential(1.5, 1.0, vec![0.6, 0.4], vec![1.0, 3.0]).unwrap()
}

fn ctx(model: &SpectrallyPositiveModel<f64>, b: f64) -> ValuationContext<f64> {
    let omega = PayoffFunction::capped_identity(5.0).unwrap();
    ValuationContext::new(model, 0.25, 0.25, 1.0, 1.5, b, omega).unwrap()
}

fn small(n: usize) -> SimConfig {
    SimConfig::default().with_paths(n).with_seed(7)
}

#[test]
fn pure_drift_injections_are_deterministic() {
    let (c, b, q) = (1.0, 2.0, 0.5);
    let m = SpectrallyPositiveModel::new(c, 0.0, JumpSpec::None).unwrap();
    let ctx = ValuationContext::new(&m, 0.25, 0.25, 1.0, 1.5, b, PayoffFunction::zero()).unwrap();
    let cfg = small(64);
    let est = simulate_double_barrier(&ctx, b, &cfg).unwrap();
    // The path reaches 0 at b / c and is then held there at injection rate c
    // until the discount factor reaches the floor.
    let exact = c / q * (-q * b / c).exp();
    let truncated = c / q * ((-q * b / c).exp() - cfg.discount_floor);
    assert!((est.injections.mean - truncated).abs() < 1e-12, "{} vs {truncated}", est.injections.mean);
    assert!((est.injections.mean - exact).abs() <= est.injections.std_error);
    assert!(est.injections.std_error < 1e-8);
    assert_eq!(est.dividends.mean, 0.0);
    assert_eq!(est.payoff.mean, 0.0);
}

#[test]
fn same_seed_is_bit_identical_across_worker_counts() {
    let m = canonical();
    let c = ctx(&m, 2.0);
    let cfg = small(2_000);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let k = simulate_kernel(c.params(), KernelId::ObservedPassageLt, 1.0, &cfg).unwrap();
            let v = simulate_double_barrier(&c, 1.0, &cfg).unwrap();
            (k.mean.to_bits(), k.std_error.to_bits(), v.value.mean.to_bits(), v.value.std_error.to_bits())
        })
    };
    assert_eq!(run(1), run(4));
    assert_eq!(run(1), run(3));
}

#[test]
fn different_seeds_differ() {
    let m = canonical();
    let c = ctx(&m, 2.0);
    let a = simulate_kernel(c.params(), KernelId::ExitDown, 1.0, &small(500)).unwrap();
    let b = simulate_kernel(c.params(), KernelId::ExitDown, 1.0, &small(500).with_seed(8)).unwrap();
    assert_ne!(a.mean, b.mean);
}

#[test]
fn kernels_agree_with_closed_forms() {
    let m = canonical();
    let c = ctx(&m, 2.0);
    let cfg = small(20_000);
    for id in [KernelId::ExitDown, KernelId::ObservedPassageLt, KernelId::KilledPassageLt, KernelId::Joint { theta: 0.4 }] {
        let est = simulate_kernel(c.params(), id, 1.0, &cfg).unwrap();
        let exact = id.closed_form(&c, 1.0).unwrap();
        assert!(est.within(exact, 4.0), "{id}: {} +- {} vs {exact}", est.mean, est.std_error);
    }
}

#[test]
fn error_shrinks_like_inverse_root_n() {
    let m = canonical();
    let c = ctx(&m, 2.0);
    let a = simulate_kernel(c.params(), KernelId::ExitUp, 1.0, &small(5_000)).unwrap();
    let b = simulate_kernel(c.params(), KernelId::ExitUp, 1.0, &small(20_000)).unwrap();
    let ratio = a.std_error / b.std_error;
    assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn value_components_agree_with_closed_form() {
    let m = canonical();
    let c = ctx(&m, 2.0);
    let est = simulate_double_barrier(&c, 1.0, &small(20_000)).unwrap();
    let v = c.value_double_barrier(1.0);
    assert!(est.value.within(v, 4.0), "{} +- {} vs {v}", est.value.mean, est.value.std_error);
    let net = c.net_dividend_value(1.0).unwrap();
    assert!(est.payoff.within(v - net, 4.0));
}

#[test]
fn histogram_mass_matches_measure() {
    let m = canonical();
    let c = ctx(&m, 2.0);
    let edges = [0.0, 0.5, 1.0, 2.0, 3.0];
    let h = simulate_histogram(c.params(), MeasureKind::DoubleBarrier, 1.0, &edges, &small(20_000)).unwrap();
    let meas = c.double_barrier_measure(1.0).unwrap();
    assert!(h.atom.within(meas.atom(), 4.0));
    for (k, bin) in h.bins.iter().enumerate() {
        let exact = meas.density_mass(edges[k], Some(edges[k + 1]));
        assert!(bin.within(exact, 4.0), "bin {k}: {} vs {exact}", bin.mean);
    }
}

#[test]
fn brownian_exit_has_small_weak_error() {
    let m = SpectrallyPositiveModel::new(1.0, 2f64.sqrt(), JumpSpec::None).unwrap();
    let p = KernelParams::new(&m, 2.0, 1.0, 1.0).unwrap();
    let coarse = SimConfig { brownian_step_dt: 2e-3, ..small(20_000) };
    let fine = SimConfig { brownian_step_dt: 1e-3, ..small(20_000) };
    let exact = p.exit_down(0.5).unwrap();
    let a = simulate_kernel(&p, KernelId::ExitDown, 0.5, &coarse).unwrap();
    let b = simulate_kernel(&p, KernelId::ExitDown, 0.5, &fine).unwrap();
    assert!(b.within(exact, 4.0), "{} +- {} vs {exact}", b.mean, b.std_error);
    assert!((a.mean - b.mean).abs() < 2.0 * b.std_error);
}

#[test]
fn kernel_ids_round_trip() {
    for s in ["exit_down", "joint:0.25", "reflected_scale:1.5", "single_barrier_bin:0.5:1", "double_barrier_atom"] {
        let id: KernelId = s.parse().unwrap();
        assert_eq!(id.to_string().parse::<KernelId>().unwrap(), id);
    }
    assert!("nope".parse::<KernelId>().is_err());
    assert!("joint".parse::<KernelId>().is_err());
    assert!("joint:x".parse::<KernelId>().is_err());
}

#[test]
fn paired_difference_cancels_common_noise() {
    let m = canonical();
    let lo = ctx(&m, 1.5);
    let hi = ctx(&m, 2.0);
    let cfg = small(5_000);
    let a = value_samples(&lo, 1.0, &cfg).unwrap();
    let b = value_samples(&hi, 1.0, &cfg).unwrap();
    let d = MCEstimate::paired_difference(&a, &b, cfg.base_seed).unwrap();
    let sa = MCEstimate::from_samples(&a, cfg.base_seed);
    let sb = MCEstimate::from_samples(&b, cfg.base_seed);
    assert!(d.std_error < 0.5 * (sa.std_error.powi(2) + sb.std_error.powi(2)).sqrt());
    let exact = lo.value_double_barrier(1.0) - hi.value_double_barrier(1.0);
    assert!(d.within(exact, 4.0), "{} +- {} vs {exact}", d.mean, d.std_error);
}

#[test]
fn config_validation() {
    assert!(SimConfig { n_paths: 0, ..SimConfig::default() }.validate().is_err());
    assert!(SimConfig { discount_floor: 1.0, ..SimConfig::default() }.validate().is_err());
    assert!(SimConfig { brownian_step_dt: 0.0, ..SimConfig::default() }.validate().is_err());
    let m = canonical();
    let c = ctx(&m, 2.0);
    assert!(simulate_double_barrier(&c, -1.0, &small(10)).is_err());
}
