use proptest::prelude::*;

use super::*;
use crate::barrier_optimizer::certify_slopes;
use crate::quadrature::Integrator;

fn canonical(c: f64) -> SpectrallyPositiveModel<f64> {
    SpectrallyPositiveModel::hyperexponential(c, 1.0, vec![0.6, 0.4], vec![1.0, 3.0]).unwrap()
}

fn two_state() -> RegimeModel<f64> {
    let j = SwitchJump::exponential(2.0).unwrap();
    RegimeModel::new(
        vec![canonical(1.5), canonical(2.5)],
        vec![vec![0.0, 0.5], vec![0.8, 0.0]],
        vec![0.5, 0.5],
        1.0,
        1.5,
        vec![vec![SwitchJump::none(), j.clone()], vec![j, SwitchJump::none()]],
    )
    .unwrap()
}

fn symmetric(jump: SwitchJump<f64>) -> RegimeModel<f64> {
    RegimeModel::new(
        vec![canonical(1.5), canonical(1.5)],
        vec![vec![0.0, 0.6], vec![0.6, 0.0]],
        vec![0.4, 0.4],
        1.0,
        1.5,
        vec![vec![SwitchJump::none(), jump.clone()], vec![jump, SwitchJump::none()]],
    )
    .unwrap()
}

fn grid() -> Vec<f64> {
    geometric_grid(6.0, 60, 1.04).unwrap()
}

/// Concave test function: `phi_0 x` up to `k`, then slope `s1` up to `2k`, then `tail`.
fn concave(xs: &[f64], s0: f64, s1: f64, tail: f64, k: f64) -> Vec<f64> {
    xs.iter()
        .map(|&x| {
            let a = x.min(k);
            let b = (x - k).clamp(0.0, k);
            let c = (x - 2.0 * k).max(0.0);
            s0 * a + s1 * b + tail * c
        })
        .collect()
}

#[test]
fn point_mass_at_zero_averages_states() {
    let reg = RegimeModel::new(
        vec![canonical(1.5), canonical(2.0), canonical(2.5)],
        vec![vec![0.0, 0.3, 0.9], vec![0.5, 0.0, 0.5], vec![1.0, 1.0, 0.0]],
        vec![0.5; 3],
        1.0,
        1.5,
        vec![vec![SwitchJump::none(); 3]; 3],
    )
    .unwrap();
    let xs = grid();
    let vals = vec![concave(&xs, 1.4, 0.8, 0.3, 1.0), concave(&xs, 1.2, 0.6, 0.1, 0.7), concave(&xs, 1.0, 1.0, 0.5, 2.0)];
    let f = GridFunction::new(xs.clone(), vals, vec![0.3, 0.1, 0.5]).unwrap();
    let hat = hat_operator(&reg, &f, 0).unwrap();
    for &x in &xs {
        let expect = 0.25 * f.eval(1, x) + 0.75 * f.eval(2, x);
        assert!((hat.eval(x) - expect).abs() < 1e-12);
    }
    assert!((hat.terminal_slope() - (0.25 * 0.1 + 0.75 * 0.5)).abs() < 1e-15);
}

#[test]
fn zero_function_lifts_to_expected_shortfall() {
    let mu = 2.0;
    let reg = symmetric(SwitchJump::exponential(mu).unwrap());
    let f = GridFunction::zero(grid(), 2).unwrap();
    let hat = hat_operator(&reg, &f, 0).unwrap();
    // E[phi min(x + J, 0)] = -phi e^{-mu x} / mu for J = -Exp(mu).
    for &x in f.knots() {
        assert!((hat.eval(x) + 1.5 * (-mu * x).exp() / mu).abs() < 1e-12);
    }
    assert!((hat.eval(0.0) + 1.5 / mu).abs() < 1e-14);
}

#[test]
fn lifted_expectation_matches_quadrature() {
    let xs = grid();
    let f = GridFunction::new(xs.clone(), vec![concave(&xs, 1.5, 0.7, 0.2, 0.8); 2], vec![0.2; 2]).unwrap();
    let law = SwitchJump::new(
        vec![0.3, 0.5, 0.2],
        vec![
            SwitchComponent::Exponential { rate: 1.5 },
            SwitchComponent::Exponential { rate: 4.0 },
            SwitchComponent::PointMass { at: -0.6 },
        ],
    )
    .unwrap();
    let pieces = f.pieces(1);
    let g = |u: f64| if u < 0.0 { 1.5 * u + f.values(1)[0] } else { f.eval(1, u) };
    let quad = Integrator::default();
    for &x in &[0.0, 0.3, 1.1, 2.9, 7.5] {
        let closed = lifted_expectation(&f, &pieces, 1, 1.5, &law, x);
        let breaks: Vec<f64> = xs.iter().map(|&k| x - k).chain([x]).filter(|&s| s > 0.0).collect();
        let exp_part = |mu: f64| quad.integrate_with_breaks(|s| mu * (-mu * s).exp() * g(x - s), 0.0, 60.0, &breaks);
        let numeric = 0.3 * exp_part(1.5) + 0.5 * exp_part(4.0) + 0.2 * g(x - 0.6);
        assert!((closed - numeric).abs() < 1e-8, "x = {x}: {closed} vs {numeric}");
    }
}

#[test]
fn lifted_slope_formula_matches_differentiation() {
    let xs = grid();
    let phi = 1.5;
    let mu = 2.0;
    let f = GridFunction::new(xs.clone(), vec![concave(&xs, 1.3, 0.6, 0.25, 0.9); 2], vec![0.25; 2]).unwrap();
    let law = SwitchJump::exponential(mu).unwrap();
    let pieces = f.pieces(1);
    let fprime = |u: f64| {
        let h = 1e-7;
        (f.eval(1, u + h) - f.eval(1, u)) / h
    };
    for &x in &[0.45, 1.23, 2.71] {
        let h = 1e-6;
        let numeric = (lifted_expectation(&f, &pieces, 1, phi, &law, x + h) - lifted_expectation(&f, &pieces, 1, phi, &law, x - h)) / (2.0 * h);
        // phi + \int_{-x}^0 (f'(x + y) - phi) dF(y).
        let breaks: Vec<f64> = xs.iter().map(|&k| x - k).filter(|&s| s > 0.0).collect();
        let formula = phi
            + Integrator::default().integrate_with_breaks(|s| (fprime(x - s) - phi) * mu * (-mu * s).exp(), 0.0, x, &breaks);
        assert!((numeric - formula).abs() < 1e-6, "x = {x}: {numeric} vs {formula}");
    }
}

#[test]
fn symmetric_states_share_barriers_and_values() {
    let reg = symmetric(SwitchJump::exponential(3.0).unwrap());
    let sol = solve_fixed_point(&reg, &FixedPointConfig::default()).unwrap();
    assert!((sol.barriers[0] - sol.barriers[1]).abs() < 1e-6);
    for k in 0..sol.value.knots().len() {
        assert!((sol.value.values(0)[k] - sol.value.values(1)[k]).abs() < 1e-9);
    }
}

#[test]
fn identical_states_without_jumps_reduce_to_the_standalone_problem() {
    let reg = symmetric(SwitchJump::none());
    let cfg = FixedPointConfig::default();
    let sol = solve_fixed_point(&reg, &cfg).unwrap();
    // With identical states and no switch jump, f_hat(., i) = V itself, so b*
    // is the optimal barrier of the auxiliary problem with payoff V.
    let omega = hat_operator(&reg, &sol.value, 0).unwrap();
    let ctx = ValuationContext::new(reg.model(0), 0.4, 0.6, 1.0, 1.5, 1.0, omega).unwrap();
    let b = find_b_omega(&ctx, &cfg.search).unwrap();
    assert!((b - sol.barriers[0]).abs() < 1e-6 && (b - sol.barriers[1]).abs() < 1e-6);
}

#[test]
fn fixed_point_is_invariant_under_its_barrier_operator() {
    let reg = two_state();
    let sol = solve_fixed_point(&reg, &FixedPointConfig::default()).unwrap();
    let again = apply_t_b(&reg, &sol.value, &sol.barriers).unwrap();
    assert!(again.distance(&sol.value).unwrap() < 1e-7);
}

#[test]
fn fixed_point_satisfies_slope_corridors() {
    let reg = two_state();
    let sol = solve_fixed_point(&reg, &FixedPointConfig::default()).unwrap();
    for i in 0..2 {
        let omega = hat_operator(&reg, &sol.value, i).unwrap();
        let ctx = ValuationContext::new(reg.model(i), 0.5, reg.switch_rate(i), 1.0, 1.5, sol.barriers[i], omega).unwrap();
        let grid: Vec<f64> = (1..60).map(|k| 0.05 * k as f64).collect();
        let report = certify_slopes(&ctx, &grid);
        assert!(report.max_violation() < 1e-7, "state {i}: {report:?}");
        let vals = sol.value.values(i);
        let xs = sol.value.knots();
        for k in 1..xs.len() - 1 {
            let left = (vals[k] - vals[k - 1]) / (xs[k] - xs[k - 1]);
            let right = (vals[k + 1] - vals[k]) / (xs[k + 1] - xs[k]);
            assert!(right <= left + 1e-9);
            assert!(left <= 1.5 + 1e-9);
        }
    }
}

#[test]
fn t_sup_is_monotone() {
    let reg = two_state();
    let xs = grid();
    let f = GridFunction::new(xs.clone(), vec![concave(&xs, 1.0, 0.5, 0.1, 1.0); 2], vec![0.1; 2]).unwrap();
    let g = GridFunction::new(xs.clone(), vec![concave(&xs, 1.2, 0.7, 0.3, 1.0).iter().map(|v| v + 0.2).collect(); 2], vec![0.3; 2]).unwrap();
    let search = BarrierSearchConfig::default();
    let (tf, _) = apply_t_sup(&reg, &f, &search).unwrap();
    let (tg, _) = apply_t_sup(&reg, &g, &search).unwrap();
    for i in 0..2 {
        for k in 0..xs.len() {
            assert!(tf.values(i)[k] <= tg.values(i)[k] + 1e-12);
        }
    }
}

#[test]
fn iteration_is_independent_of_the_starting_point() {
    let reg = two_state();
    let cfg = FixedPointConfig::default();
    let a = solve_fixed_point(&reg, &cfg).unwrap();
    let b = solve_fixed_point_from(&reg, GridFunction::identity(a.value.knots().to_vec(), 2).unwrap(), &cfg).unwrap();
    for i in 0..2 {
        assert!((a.barriers[i] - b.barriers[i]).abs() < 10.0 * cfg.search.tol_b);
    }
    let beta = reg.beta();
    assert!(a.contraction_ratios().iter().all(|&r| r <= beta + 0.05));
}

#[test]
fn validation() {
    let m = canonical(1.5);
    let jumps = vec![vec![SwitchJump::none(); 2]; 2];
    let gen = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    assert!(RegimeModel::new(vec![m.clone(), m.clone()], gen.clone(), vec![0.5, 0.0], 1.0, 1.5, jumps.clone()).is_err());
    assert!(RegimeModel::new(vec![m.clone(), m.clone()], vec![vec![0.0, -1.0], vec![1.0, 0.0]], vec![0.5; 2], 1.0, 1.5, jumps.clone()).is_err());
    assert!(RegimeModel::new(vec![m.clone(), m.clone()], gen, vec![0.5; 2], 1.0, 1.0, jumps).is_err());
    assert!(SwitchJump::new(vec![1.0], vec![SwitchComponent::PointMass { at: 0.5 }]).is_err());
    assert!(SwitchJump::new(vec![1.0], vec![SwitchComponent::Exponential { rate: 0.0 }]).is_err());
    let single = RegimeModel::new(vec![m], vec![vec![0.0]], vec![0.5], 1.0, 1.5, vec![vec![SwitchJump::none()]]).unwrap();
    let f = GridFunction::zero(grid(), 1).unwrap();
    assert!(matches!(hat_operator(&single, &f, 0), Err(Error::Unsupported(_))));
    assert!(apply_t_b(&two_state(), &GridFunction::zero(grid(), 2).unwrap(), &[1.0, 0.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn t_b_contracts(
        s0 in 0.2f64..1.5, s1 in 0.0f64..1.0, t in 0.0f64..1.0, k in 0.3f64..2.0, shift in -1.0f64..1.0,
        r0 in 0.2f64..1.5, r1 in 0.0f64..1.0, u in 0.0f64..1.0, b0 in 0.3f64..2.5, b1 in 0.3f64..2.5,
    ) {
        let reg = two_state();
        let xs = grid();
        let (s1, t) = (s1.min(s0), t.min(s1.min(s0)));
        let (r1, u) = (r1.min(r0), u.min(r1.min(r0)));
        let fv: Vec<f64> = concave(&xs, s0, s1, t, k).iter().map(|v| v + shift).collect();
        let f = GridFunction::new(xs.clone(), vec![fv.clone(), fv], vec![t; 2]).unwrap();
        let gv = concave(&xs, r0, r1, u, 1.0);
        let g = GridFunction::new(xs.clone(), vec![gv.clone(), gv], vec![u; 2]).unwrap();
        let tf = apply_t_b(&reg, &f, &[b0, b1]).unwrap();
        let tg = apply_t_b(&reg, &g, &[b0, b1]).unwrap();
        let lhs = tf.distance(&tg).unwrap();
        let rhs = (reg.beta() + 0.05) * f.distance(&g).unwrap();
        prop_assert!(lhs <= rhs + 1e-9, "{lhs} > {rhs}");
    }
}
