//! Single-path engine: event-driven between jump, observation and switch
//! epochs, exact for `sigma = 0` and Euler-stepped for `sigma > 0`.

use rand::Rng;
use rand_distr::StandardNormal;

use super::jumps::JumpSampler;
use crate::barrier_valuation::PayoffFunction;

/// Behaviour when the surplus goes below 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Lower {
    Reflect,
    Kill,
}

/// Behaviour above the barrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Upper {
    /// Pay the excess over `b` at observation epochs.
    ObservedPay,
    /// Stop at the first observation epoch with surplus above `b`.
    ObservedStop,
    /// Stop at the first time the surplus exceeds `b`.
    PassageStop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum StopKind {
    Lower,
    Upper,
    Horizon,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Stop {
    pub kind: StopKind,
    pub discount: f64,
    pub level: f64,
}

/// State-specific dynamics and discounting.
#[derive(Debug, Clone)]
pub(crate) struct Regime {
    pub c: f64,
    pub sigma: f64,
    pub jumps: JumpSampler,
    pub rate: f64,
    pub b: f64,
}

/// Everything the engine needs besides the regime.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Rules<'a> {
    pub gamma: f64,
    pub lower: Lower,
    pub upper: Upper,
    pub omega: Option<(&'a PayoffFunction<f64>, f64)>,
    pub edges: Option<&'a [f64]>,
    pub floor: f64,
    pub dt: f64,
}

/// Discounted accumulators of one path.
#[derive(Debug, Clone)]
pub(crate) struct PathState {
    pub u: f64,
    pub discount: f64,
    pub dividends: f64,
    pub injections: f64,
    pub payoff: f64,
    pub atom: f64,
    pub bins: Vec<f64>,
    pub stop: Option<Stop>,
}

/// `\int_l^h e^{-r s} ds`.
fn disc_int(r: f64, l: f64, h: f64) -> f64 {
    if h <= l {
        return 0.0;
    }
    if r == 0.0 {
        return h - l;
    }
    (-r * l).exp() * -(-r * (h - l)).exp_m1() / r
}

/// `\int_l^h e^{-r s}(a + k s) ds`.
fn disc_lin(r: f64, l: f64, h: f64, a: f64, k: f64) -> f64 {
    if h <= l {
        return 0.0;
    }
    if r == 0.0 {
        return a * (h - l) + 0.5 * k * (h * h - l * l);
    }
    // Antiderivative of s e^{-r s} is -e^{-r s}(s / r + 1 / r^2).
    let anti = |s: f64| -(-r * s).exp() * (s / r + 1.0 / (r * r));
    a * disc_int(r, l, h) + k * (anti(h) - anti(l))
}

impl PathState {
    pub(crate) fn new(x0: f64, n_bins: usize) -> Self {
        Self {
            u: x0,
            discount: 1.0,
            dividends: 0.0,
            injections: 0.0,
            payoff: 0.0,
            atom: 0.0,
            bins: vec![0.0; n_bins],
            stop: None,
        }
    }

    fn halt(&mut self, kind: StopKind, discount: f64, level: f64) {
        self.stop = Some(Stop { kind, discount, level });
    }

    /// Accumulates payoff and occupation along `u(s) = u0 - c s` for `s` in `[l, h]`.
    fn accumulate_linear(&mut self, reg: &Regime, rules: &Rules<'_>, u0: f64, l: f64, h: f64) {
        if h <= l {
            return;
        }
        let c = reg.c;
        let d = self.discount;
        if let Some((omega, lambda)) = rules.omega {
            let mut cuts = vec![l];
            for &xk in omega.knot_xs() {
                let s = (u0 - xk) / c;
                if s > l && s < h {
                    cuts.push(s);
                }
            }
            cuts.push(h);
            cuts.sort_by(f64::total_cmp);
            for w in cuts.windows(2) {
                let mid = u0 - c * 0.5 * (w[0] + w[1]);
                let seg = omega.segment_at(mid.max(0.0));
                let a = seg.intercept + seg.slope * u0;
                self.payoff += lambda * d * disc_lin(reg.rate, w[0], w[1], a, -seg.slope * c);
            }
        }
        if let Some(edges) = rules.edges {
            for (i, e) in edges.windows(2).enumerate() {
                let lo = ((u0 - e[1]) / c).max(l);
                let hi = ((u0 - e[0]) / c).min(h);
                if hi > lo {
                    self.bins[i] += reg.rate * d * disc_int(reg.rate, lo, hi);
                }
            }
        }
    }

    /// Accumulates a stay at level 0 over `[l, h]` (reflected regime).
    fn accumulate_at_zero(&mut self, reg: &Regime, rules: &Rules<'_>, l: f64, h: f64) {
        let m = self.discount * disc_int(reg.rate, l, h);
        self.injections += reg.c * m;
        self.atom += reg.rate * m;
        if let Some((omega, lambda)) = rules.omega {
            self.payoff += lambda * omega.eval(0.0) * m;
        }
    }

    /// Runs the continuous part of the path for `dur` time units.
    pub(crate) fn drift<R: Rng + ?Sized>(&mut self, reg: &Regime, rules: &Rules<'_>, dur: f64, rng: &mut R) {
        if reg.sigma > 0.0 {
            self.euler(reg, rules, dur, rng);
            return;
        }
        let u0 = self.u;
        let c = reg.c;
        let end = u0 - c * dur;
        if end >= 0.0 {
            self.accumulate_linear(reg, rules, u0, 0.0, dur);
            self.u = end;
        } else {
            let s0 = u0 / c;
            self.accumulate_linear(reg, rules, u0, 0.0, s0);
            match rules.lower {
                Lower::Kill => {
                    let d = self.discount * (-reg.rate * s0).exp();
                    self.halt(StopKind::Lower, d, 0.0);
                    return;
                }
                Lower::Reflect => {
                    self.accumulate_at_zero(reg, rules, s0, dur);
                    self.u = 0.0;
                }
            }
        }
        self.discount *= (-reg.rate * dur).exp();
    }

    fn euler<R: Rng + ?Sized>(&mut self, reg: &Regime, rules: &Rules<'_>, dur: f64, rng: &mut R) {
        let n = (dur / rules.dt).ceil().max(1.0) as usize;
        let h = dur / n as f64;
        let step_disc = (-reg.rate * h).exp();
        let sd = reg.sigma * h.sqrt();
        let occ = disc_int(reg.rate, 0.0, h);
        for _ in 0..n {
            let u = self.u;
            let d = self.discount;
            if let Some((omega, lambda)) = rules.omega {
                self.payoff += lambda * d * omega.eval(u) * occ;
            }
            if u == 0.0 {
                self.atom += reg.rate * d * occ;
            } else if let Some(edges) = rules.edges {
                let k = edges.partition_point(|&e| e <= u);
                if k >= 1 && k < edges.len() {
                    self.bins[k - 1] += reg.rate * d * occ;
                }
            }
            let z: f64 = rng.sample(StandardNormal);
            let mut next = u - reg.c * h + sd * z;
            self.discount *= step_disc;
            if next < 0.0 {
                match rules.lower {
                    Lower::Kill => {
                        self.halt(StopKind::Lower, self.discount, 0.0);
                        return;
                    }
                    Lower::Reflect => {
                        self.injections += self.discount * -next;
                        next = 0.0;
                    }
                }
            }
            // Brownian bridge crossing probabilities for the stopping boundaries.
            let var = reg.sigma * reg.sigma * h;
            if rules.lower == Lower::Kill && u > 0.0 && rng.random::<f64>() < (-2.0 * u * next / var).exp() {
                self.halt(StopKind::Lower, self.discount, 0.0);
                return;
            }
            self.u = next;
            if rules.upper == Upper::PassageStop {
                if next > reg.b {
                    self.halt(StopKind::Upper, self.discount, next);
                    return;
                }
                if rng.random::<f64>() < (-2.0 * (reg.b - u) * (reg.b - next) / var).exp() {
                    self.halt(StopKind::Upper, self.discount, reg.b);
                    return;
                }
            }
        }
    }

    /// Applies an upward jump.
    pub(crate) fn jump(&mut self, reg: &Regime, rules: &Rules<'_>, size: f64) {
        self.u += size;
        if rules.upper == Upper::PassageStop && self.u > reg.b {
            self.halt(StopKind::Upper, self.discount, self.u);
        }
    }

    /// Applies an observation epoch.
    pub(crate) fn observe(&mut self, reg: &Regime, rules: &Rules<'_>) {
        if self.u <= reg.b {
            return;
        }
        match rules.upper {
            Upper::ObservedPay => {
                self.dividends += self.discount * (self.u - reg.b);
                self.u = reg.b;
            }
            Upper::ObservedStop => self.halt(StopKind::Upper, self.discount, self.u),
            Upper::PassageStop => {}
        }
    }

    /// Applies a non-positive switch jump; the shortfall below 0 is injected.
    pub(crate) fn switch_jump(&mut self, size: f64) {
        self.u += size;
        if self.u < 0.0 {
            self.injections += self.discount * -self.u;
            self.u = 0.0;
        }
    }

    /// Time left before the discount factor drops below the floor.
    pub(crate) fn time_to_floor(&self, reg: &Regime, rules: &Rules<'_>) -> f64 {
        if reg.rate <= 0.0 {
            return f64::INFINITY;
        }
        ((self.discount / rules.floor).ln() / reg.rate).max(0.0)
    }
}

/// Runs a single-regime path from `x0` until it stops or the discount floor is reached.
pub(crate) fn run_single<R: Rng + ?Sized>(reg: &Regime, rules: &Rules<'_>, x0: f64, rng: &mut R) -> PathState {
    let n_bins = rules.edges.map_or(0, |e| e.len().saturating_sub(1));
    let mut st = PathState::new(x0, n_bins);
    if rules.upper == Upper::PassageStop && x0 > reg.b {
        st.halt(StopKind::Upper, 1.0, x0);
        return st;
    }
    let a = reg.jumps.rate();
    let total = a + rules.gamma;
    loop {
        let e: f64 = rng.sample(rand_distr::Exp1);
        let dur = e / total;
        let horizon = st.time_to_floor(reg, rules);
        if dur >= horizon {
            st.drift(reg, rules, horizon, rng);
            if st.stop.is_none() {
                let (d, u) = (st.discount, st.u);
                st.halt(StopKind::Horizon, d, u);
            }
            return st;
        }
        st.drift(reg, rules, dur, rng);
        if st.stop.is_some() {
            return st;
        }
        if rng.random::<f64>() * total < a {
            let size = reg.jumps.sample(rng);
            st.jump(reg, rules, size);
        } else {
            st.observe(reg, rules);
        }
        if st.stop.is_some() {
            return st;
        }
    }
}
