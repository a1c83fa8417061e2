//! Simulation of the Markov-modulated surplus under a per-state barrier vector.

use rand::Rng;
use rand_distr::Exp1;

use super::jumps::{pick, JumpSampler, SwitchDraw, SwitchSampler};
use super::path::{Lower, PathState, Regime, Rules, Upper};
use super::{check_start, MCEstimate, SimConfig};
use crate::error::{Error, Result};
use crate::regime_solver::{RegimeModel, SwitchComponent};

struct State {
    reg: Regime,
    switch_cum: Vec<f64>,
    targets: Vec<usize>,
    jumps: Vec<SwitchSampler>,
}

fn build_states(regime: &RegimeModel<f64>, barriers: &[f64]) -> Result<Vec<State>> {
    let m = regime.n_states();
    if barriers.len() != m {
        return Err(Error::domain("one barrier per state is required"));
    }
    if let Some(b) = barriers.iter().find(|&&b| !(b > 0.0)) {
        return Err(Error::domain(format!("barriers must be > 0, got {b}")));
    }
    (0..m)
        .map(|i| {
            let model = regime.model(i);
            let reg = Regime {
                c: model.drift_c(),
                sigma: model.sigma(),
                jumps: JumpSampler::from_model(model),
                rate: regime.discount(i),
                b: barriers[i],
            };
            let targets: Vec<usize> = (0..m).filter(|&j| regime.rate(i, j) > 0.0).collect();
            let total = regime.switch_rate(i);
            let mut acc = 0.0;
            let switch_cum = targets
                .iter()
                .map(|&j| {
                    acc += regime.rate(i, j) / total;
                    acc
                })
                .collect();
            let jumps = targets
                .iter()
                .map(|&j| {
                    let law = regime.switch_jump(i, j);
                    let comps = law
                        .components()
                        .iter()
                        .map(|c| match *c {
                            SwitchComponent::PointMass { at } => SwitchDraw::Point(at),
                            SwitchComponent::Exponential { rate } => SwitchDraw::Exponential(rate),
                        })
                        .collect();
                    SwitchSampler::new(law.weights(), comps)
                })
                .collect::<Result<_>>()?;
            Ok(State { reg, switch_cum, targets, jumps })
        })
        .collect()
}

fn run_regime<R: Rng + ?Sized>(states: &[State], rules: &Rules<'_>, lambdas: &[f64], x0: f64, i0: usize, rng: &mut R) -> PathState {
    let mut st = PathState::new(x0, 0);
    let mut i = i0;
    loop {
        let s = &states[i];
        let a = s.reg.jumps.rate();
        let total = a + rules.gamma + lambdas[i];
        let e: f64 = rng.sample(Exp1);
        let dur = e / total;
        let horizon = st.time_to_floor(&s.reg, rules);
        if dur >= horizon {
            st.drift(&s.reg, rules, horizon, rng);
            return st;
        }
        st.drift(&s.reg, rules, dur, rng);
        let v = rng.random::<f64>() * total;
        if v < a {
            let size = s.reg.jumps.sample(rng);
            st.jump(&s.reg, rules, size);
        } else if v < a + rules.gamma {
            st.observe(&s.reg, rules);
        } else {
            let k = pick(&s.switch_cum, rng.random::<f64>());
            let size = s.jumps[k].sample(rng);
            st.switch_jump(size);
            i = s.targets[k];
        }
    }
}

/// Per-path discounted dividends minus `phi` times discounted injections.
pub fn regime_value_samples(
    regime: &RegimeModel<f64>,
    barriers: &[f64],
    x0: f64,
    i0: usize,
    cfg: &SimConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_start(x0)?;
    if i0 >= regime.n_states() {
        return Err(Error::domain(format!("initial state {i0} out of range")));
    }
    let states = build_states(regime, barriers)?;
    let lambdas: Vec<f64> = (0..regime.n_states()).map(|i| regime.switch_rate(i)).collect();
    let rules = Rules {
        gamma: regime.gamma(),
        lower: Lower::Reflect,
        upper: Upper::ObservedPay,
        omega: None,
        edges: None,
        floor: cfg.discount_floor,
        dt: cfg.brownian_step_dt,
    };
    let phi = regime.phi();
    Ok(cfg.run(|rng| {
        let st = run_regime(&states, &rules, &lambdas, x0, i0, rng);
        st.dividends - phi * st.injections
    }))
}

/// Value of the regime-modulated barrier strategy from `(x0, i0)`.
pub fn simulate_regime(
    regime: &RegimeModel<f64>,
    barriers: &[f64],
    x0: f64,
    i0: usize,
    cfg: &SimConfig,
) -> Result<MCEstimate> {
    let s = regime_value_samples(regime, barriers, x0, i0, cfg)?;
    let tail = (0..regime.n_states())
        .map(|i| {
            let model = regime.model(i);
            let r = regime.discount(i);
            let jumps = model.jump_intensity() * model.jump_first_moment() / r;
            let shortfall = (0..regime.n_states()).map(|j| regime.rate(i, j) * regime.switch_jump(i, j).mean_abs()).sum::<f64>() / r;
            let level = x0.max(barriers[i]);
            level + jumps + regime.phi() * ((model.drift_c().abs() + model.sigma() + model.sigma().powi(2)) / r + shortfall)
        })
        .fold(0.0, f64::max);
    let mut est = MCEstimate::from_samples(&s, cfg.base_seed);
    est.std_error += cfg.discount_floor * tail;
    Ok(est)
}
