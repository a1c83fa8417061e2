//! Regime-modulated dividend problem: the lifting operator `f -> f_hat`,
//! the per-barrier operator `T_b`, the optimizing operator `T_sup` and the
//! fixed-point iteration for the optimal barrier vector.
//!
//! Value functions are represented on a shared knot grid as piecewise-linear
//! functions with an affine tail, and are extended to `x < 0` by
//! `phi x + f(0, i)`.

use rayon::prelude::*;

use crate::barrier_optimizer::{find_b_omega, BarrierSearchConfig};
use crate::barrier_valuation::{PayoffFunction, ValuationContext};
use crate::error::{Error, Result};
use crate::levy_model::SpectrallyPositiveModel;
use crate::scalar::Real;

/// One component of a switch jump law on `(-inf, 0]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SwitchComponent<S> {
    /// Deterministic jump of size `at <= 0`.
    PointMass { at: S },
    /// `-E / rate` with `E` standard exponential.
    Exponential { rate: S },
}

/// Finite mixture law of the downward jump `J_ij` at a switch from `i` to `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchJump<S> {
    weights: Vec<S>,
    components: Vec<SwitchComponent<S>>,
}

impl<S: Real> SwitchJump<S> {
    /// Normalizes `weights` and validates the components.
    pub fn new(weights: Vec<S>, components: Vec<SwitchComponent<S>>) -> Result<Self> {
        const FIELD: &str = "regime.switch_jumps";
        if weights.is_empty() || weights.len() != components.len() {
            return Err(Error::config(FIELD, "weights and components must be non-empty and of equal length"));
        }
        if weights.iter().any(|&w| !(w > S::zero()) || !w.is_finite()) {
            return Err(Error::config(FIELD, "mixture weights must be > 0"));
        }
        for c in &components {
            match *c {
                SwitchComponent::PointMass { at } if !(at <= S::zero()) || !at.is_finite() => {
                    return Err(Error::config(FIELD, "point masses must sit at a finite level <= 0"));
                }
                SwitchComponent::Exponential { rate } if !(rate > S::zero()) || !rate.is_finite() => {
                    return Err(Error::config(FIELD, "exponential rates must be > 0"));
                }
                _ => {}
            }
        }
        let total: S = weights.iter().copied().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { weights, components })
    }

    /// No jump at the switch.
    pub fn none() -> Self {
        Self { weights: vec![S::one()], components: vec![SwitchComponent::PointMass { at: S::zero() }] }
    }

    /// Exponential jump with mean `1 / rate`.
    pub fn exponential(rate: S) -> Result<Self> {
        Self::new(vec![S::one()], vec![SwitchComponent::Exponential { rate }])
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn components(&self) -> &[SwitchComponent<S>] {
        &self.components
    }

    /// `E|J|`.
    pub fn mean_abs(&self) -> S {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(&w, c)| match *c {
                SwitchComponent::PointMass { at } => w * (-at),
                SwitchComponent::Exponential { rate } => w / rate,
            })
            .sum()
    }

    /// `P(J <= -x)` for `x >= 0`, the probability that a jump from level `x` ends below 0.
    pub fn tail_below(&self, x: S) -> S {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(&w, c)| match *c {
                SwitchComponent::PointMass { at } => {
                    if at < -x {
                        w
                    } else {
                        S::zero()
                    }
                }
                SwitchComponent::Exponential { rate } => w * (-rate * x).exp(),
            })
            .sum()
    }
}

/// Markov-modulated surplus with shared observation intensity and injection cost.
#[derive(Debug, Clone)]
pub struct RegimeModel<S> {
    models: Vec<SpectrallyPositiveModel<S>>,
    generator: Vec<Vec<S>>,
    discounts: Vec<S>,
    gamma: S,
    phi: S,
    switch_jumps: Vec<Vec<SwitchJump<S>>>,
}

impl<S: Real> RegimeModel<S> {
    /// `generator[i][j]` is the switch rate from `i` to `j`; diagonal entries are ignored.
    pub fn new(
        models: Vec<SpectrallyPositiveModel<S>>,
        generator: Vec<Vec<S>>,
        discounts: Vec<S>,
        gamma: S,
        phi: S,
        switch_jumps: Vec<Vec<SwitchJump<S>>>,
    ) -> Result<Self> {
        let m = models.len();
        if m == 0 {
            return Err(Error::config("regime.models", "at least one state is required"));
        }
        if generator.len() != m || generator.iter().any(|r| r.len() != m) {
            return Err(Error::config("regime.generator", "must be an m x m matrix"));
        }
        for (i, row) in generator.iter().enumerate() {
            for (j, &r) in row.iter().enumerate() {
                if i != j && (!(r >= S::zero()) || !r.is_finite()) {
                    return Err(Error::config("regime.generator", "off-diagonal rates must be finite and >= 0"));
                }
            }
        }
        if discounts.len() != m || discounts.iter().any(|&d| !(d > S::zero()) || !d.is_finite()) {
            return Err(Error::config("regime.discounts", "one discount rate > 0 per state is required"));
        }
        if !(gamma > S::zero()) || !gamma.is_finite() {
            return Err(Error::config("auxiliary.gamma", "must be > 0"));
        }
        if !(phi > S::one()) || !phi.is_finite() {
            return Err(Error::config("auxiliary.phi", "must be > 1"));
        }
        if switch_jumps.len() != m || switch_jumps.iter().any(|r| r.len() != m) {
            return Err(Error::config("regime.switch_jumps", "must be an m x m array of jump laws"));
        }
        Ok(Self { models, generator, discounts, gamma, phi, switch_jumps })
    }

    pub fn n_states(&self) -> usize {
        self.models.len()
    }

    pub fn model(&self, i: usize) -> &SpectrallyPositiveModel<S> {
        &self.models[i]
    }

    pub fn rate(&self, i: usize, j: usize) -> S {
        if i == j {
            S::zero()
        } else {
            self.generator[i][j]
        }
    }

    /// `lambda_i`, the total switch rate out of `i`.
    pub fn switch_rate(&self, i: usize) -> S {
        (0..self.n_states()).map(|j| self.rate(i, j)).sum()
    }

    pub fn discount(&self, i: usize) -> S {
        self.discounts[i]
    }

    pub fn gamma(&self) -> S {
        self.gamma
    }

    pub fn phi(&self) -> S {
        self.phi
    }

    pub fn switch_jump(&self, i: usize, j: usize) -> &SwitchJump<S> {
        &self.switch_jumps[i][j]
    }

    /// `max_i lambda_i / (lambda_i + delta_i)`, the contraction factor of `T_b` and `T_sup`.
    pub fn beta(&self) -> S {
        (0..self.n_states())
            .map(|i| {
                let l = self.switch_rate(i);
                l / (l + self.discounts[i])
            })
            .fold(S::zero(), S::max)
    }

    fn require_switching(&self) -> Result<()> {
        for i in 0..self.n_states() {
            if !(self.switch_rate(i) > S::zero()) {
                return Err(Error::Unsupported(format!(
                    "state {i} is absorbing (lambda_i = 0); solve it as a single-model problem"
                )));
            }
        }
        Ok(())
    }
}

/// Per-state piecewise-linear functions on a shared knot grid with affine tails.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction<S> {
    xs: Vec<S>,
    values: Vec<Vec<S>>,
    tail_slopes: Vec<S>,
}

impl<S: Real> GridFunction<S> {
    pub fn new(xs: Vec<S>, values: Vec<Vec<S>>, tail_slopes: Vec<S>) -> Result<Self> {
        if xs.is_empty() || xs[0] != S::zero() || xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("regime.grid", "knots must start at 0 and increase strictly"));
        }
        if values.is_empty() || values.len() != tail_slopes.len() || values.iter().any(|v| v.len() != xs.len()) {
            return Err(Error::config("regime.grid", "one value per knot and one tail slope per state"));
        }
        Ok(Self { xs, values, tail_slopes })
    }

    /// `f = 0` in every state.
    pub fn zero(xs: Vec<S>, m: usize) -> Result<Self> {
        let n = xs.len();
        Self::new(xs, vec![vec![S::zero(); n]; m], vec![S::zero(); m])
    }

    /// `f(x, i) = x` in every state.
    pub fn identity(xs: Vec<S>, m: usize) -> Result<Self> {
        let v = xs.clone();
        Self::new(xs, vec![v; m], vec![S::one(); m])
    }

    pub fn knots(&self) -> &[S] {
        &self.xs
    }

    pub fn n_states(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self, i: usize) -> &[S] {
        &self.values[i]
    }

    pub fn tail_slope(&self, i: usize) -> S {
        self.tail_slopes[i]
    }

    /// Linear interpolation for `0 <= u <= x_last`, affine tail beyond; `u < 0` uses the first piece.
    pub fn eval(&self, i: usize, u: S) -> S {
        let (xs, vs) = (&self.xs, &self.values[i]);
        let n = xs.len();
        if n == 1 || u >= xs[n - 1] {
            return vs[n - 1] + self.tail_slopes[i] * (u - xs[n - 1]);
        }
        let k = xs.partition_point(|&x| x <= u).clamp(1, n - 1) - 1;
        let t = (u - xs[k]) / (xs[k + 1] - xs[k]);
        vs[k] + t * (vs[k + 1] - vs[k])
    }

    /// Linear pieces `(lo, hi, alpha, beta)` of `u -> alpha + beta u` on `[lo, hi)`, `hi = None` meaning `+inf`.
    fn pieces(&self, i: usize) -> Vec<(S, Option<S>, S, S)> {
        let (xs, vs) = (&self.xs, &self.values[i]);
        let mut out: Vec<_> = xs
            .windows(2)
            .zip(vs.windows(2))
            .map(|(x, v)| {
                let beta = (v[1] - v[0]) / (x[1] - x[0]);
                (x[0], Some(x[1]), v[0] - beta * x[0], beta)
            })
            .collect();
        let (xl, vl, t) = (*xs.last().unwrap(), *vs.last().unwrap(), self.tail_slopes[i]);
        out.push((xl, None, vl - t * xl, t));
        out
    }

    /// `rho(f, g) = max_i sup_{x >= 0} |f(x, i) - g(x, i)| / (1 + x)`, exact for
    /// functions on the same grid (the difference is piecewise linear and affine beyond the last knot).
    pub fn distance(&self, other: &Self) -> Result<S> {
        if self.xs != other.xs || self.n_states() != other.n_states() {
            return Err(Error::domain("grid functions must share knots and state count"));
        }
        let mut d = S::zero();
        for i in 0..self.n_states() {
            for (k, &x) in self.xs.iter().enumerate() {
                d = d.max((self.values[i][k] - other.values[i][k]).abs() / (S::one() + x));
            }
            d = d.max((self.tail_slopes[i] - other.tail_slopes[i]).abs());
        }
        Ok(d)
    }

    /// `max_i sup_x |f(x, i)| / (1 + x)`.
    pub fn norm(&self) -> S {
        let zero = Self { xs: self.xs.clone(), values: vec![vec![S::zero(); self.xs.len()]; self.n_states()], tail_slopes: vec![S::zero(); self.n_states()] };
        self.distance(&zero).unwrap_or(S::zero())
    }

    /// Same functions on a new grid (interpolated, tails kept).
    pub fn regrid(&self, xs: Vec<S>) -> Result<Self> {
        let values = (0..self.n_states()).map(|i| xs.iter().map(|&x| self.eval(i, x)).collect()).collect();
        Self::new(xs, values, self.tail_slopes.clone())
    }
}

/// `n + 1` knots from 0 to `x_max` with geometrically growing spacing (ratio `growth`).
pub fn geometric_grid<S: Real>(x_max: S, n: usize, growth: S) -> Result<Vec<S>> {
    if n == 0 || !(x_max > S::zero()) || !(growth >= S::one()) {
        return Err(Error::config("regime.grid", "need n >= 1, x_max > 0 and growth >= 1"));
    }
    let steps: Vec<S> = (0..n).map(|k| growth.powi(k as i32)).collect();
    let total: S = steps.iter().copied().sum();
    let mut xs = Vec::with_capacity(n + 1);
    let mut acc = S::zero();
    xs.push(acc);
    for s in steps {
        acc = acc + x_max * s / total;
        xs.push(acc);
    }
    xs[n] = x_max;
    Ok(xs)
}

/// `\int_{s1}^{s2} mu e^{-mu s}(a - beta s) ds`, `s2 = None` meaning `+inf`.
fn exp_weighted_linear<S: Real>(mu: S, s1: S, s2: Option<S>, a: S, beta: S) -> S {
    let e1 = (-mu * s1).exp();
    let inv = S::one() / mu;
    let (e0, m1) = match s2 {
        Some(s2) => {
            let e2 = (-mu * s2).exp();
            (e1 - e2, (s1 + inv) * e1 - (s2 + inv) * e2)
        }
        None => (e1, (s1 + inv) * e1),
    };
    a * e0 - beta * m1
}

/// `E[g(x + J)]` where `g = f(., j)` on `[0, inf)` and `g(u) = phi u + f(0, j)` below 0.
fn lifted_expectation<S: Real>(f: &GridFunction<S>, pieces: &[(S, Option<S>, S, S)], j: usize, phi: S, law: &SwitchJump<S>, x: S) -> S {
    let g = |u: S| if u < S::zero() { phi * u + f.values(j)[0] } else { f.eval(j, u) };
    let f0 = f.values(j)[0];
    law.weights()
        .iter()
        .zip(law.components())
        .map(|(&w, comp)| {
            let e = match *comp {
                SwitchComponent::PointMass { at } => g(x + at),
                SwitchComponent::Exponential { rate } => {
                    // Substitute s = x - u and integrate each linear piece of g against mu e^{-mu s}.
                    let mut sum = exp_weighted_linear(rate, x, None, f0 + phi * x, phi);
                    for &(lo, hi, alpha, beta) in pieces {
                        if lo >= x {
                            break;
                        }
                        let top = hi.map_or(x, |h| h.min(x));
                        sum = sum + exp_weighted_linear(rate, x - top, Some(x - lo), alpha + beta * x, beta);
                    }
                    sum
                }
            };
            w * e
        })
        .sum()
}

/// Largest PAV adjustment accepted when re-fitting `f_hat` as a concave function.
const CONCAVITY_REPAIR_LIMIT: f64 = 1e-6;

/// `f_hat(., i)` on the knots of `f`, re-fitted as a concave payoff.
///
/// The tail slope is the asymptotic slope `sum_j (lambda_ij / lambda_i) f'(inf, j)`.
pub fn hat_operator<S: Real>(regime: &RegimeModel<S>, f: &GridFunction<S>, i: usize) -> Result<PayoffFunction<S>> {
    hat_operator_with_repair(regime, f, i).map(|(p, _)| p)
}

/// [`hat_operator`] together with the size of the concavity repair.
pub fn hat_operator_with_repair<S: Real>(regime: &RegimeModel<S>, f: &GridFunction<S>, i: usize) -> Result<(PayoffFunction<S>, S)> {
    let m = regime.n_states();
    if f.n_states() != m || i >= m {
        return Err(Error::domain("grid function and regime disagree on the number of states"));
    }
    let lambda_i = regime.switch_rate(i);
    if !(lambda_i > S::zero()) {
        return Err(Error::Unsupported(format!("f_hat is undefined in the absorbing state {i}")));
    }
    let phi = regime.phi();
    let targets: Vec<(usize, S)> = (0..m).filter(|&j| j != i && regime.rate(i, j) > S::zero()).map(|j| (j, regime.rate(i, j) / lambda_i)).collect();
    let pieces: Vec<_> = (0..m).map(|j| f.pieces(j)).collect();
    let values: Vec<S> = f
        .knots()
        .iter()
        .map(|&x| {
            targets
                .iter()
                .map(|&(j, w)| w * lifted_expectation(f, &pieces[j], j, phi, regime.switch_jump(i, j), x))
                .sum()
        })
        .collect();
    let tail: S = targets.iter().map(|&(j, w)| w * f.tail_slope(j)).sum();
    let tail = tail.max(S::zero()).min(S::one());
    let (omega, adjust) = PayoffFunction::fit_concave(f.knots(), &values, tail)?;
    if adjust > S::lit(CONCAVITY_REPAIR_LIMIT) {
        return Err(Error::Convergence(format!("concavity repair of f_hat in state {i} moved values by {adjust}")));
    }
    Ok((omega, adjust))
}

fn state_context<S: Real>(regime: &RegimeModel<S>, i: usize, b: S, omega: PayoffFunction<S>) -> Result<ValuationContext<S>> {
    ValuationContext::new(regime.model(i), regime.discount(i), regime.switch_rate(i), regime.gamma(), regime.phi(), b, omega)
}

/// Knot values and clamped tail slope of the double barrier value of `ctx`.
fn sample_value<S: Real>(ctx: &ValuationContext<S>, xs: &[S]) -> (Vec<S>, S) {
    let v = xs.iter().map(|&x| ctx.value_double_barrier(x)).collect();
    let tail = ctx.value_derivative(*xs.last().unwrap()).max(S::zero()).min(S::one());
    (v, tail)
}

/// `T_b f`: per state, the double barrier value with barrier `b_i` and payoff `f_hat(., i)`.
pub fn apply_t_b<S: Real>(regime: &RegimeModel<S>, f: &GridFunction<S>, barriers: &[S]) -> Result<GridFunction<S>> {
    regime.require_switching()?;
    if barriers.len() != regime.n_states() {
        return Err(Error::domain("one barrier per state is required"));
    }
    if let Some(b) = barriers.iter().find(|&&b| !(b > S::zero())) {
        return Err(Error::domain(format!("barriers must be > 0, got {b}")));
    }
    let rows: Vec<(Vec<S>, S)> = (0..regime.n_states())
        .into_par_iter()
        .map(|i| {
            let omega = hat_operator(regime, f, i)?;
            let ctx = state_context(regime, i, barriers[i], omega)?;
            Ok(sample_value(&ctx, f.knots()))
        })
        .collect::<Result<_>>()?;
    let (values, tails) = rows.into_iter().unzip();
    GridFunction::new(f.knots().to_vec(), values, tails)
}

/// `T_sup f` and the per-state optimal barriers `b^f`.
pub fn apply_t_sup<S: Real>(
    regime: &RegimeModel<S>,
    f: &GridFunction<S>,
    search: &BarrierSearchConfig<S>,
) -> Result<(GridFunction<S>, Vec<S>)> {
    regime.require_switching()?;
    let rows: Vec<(Vec<S>, S, S)> = (0..regime.n_states())
        .into_par_iter()
        .map(|i| {
            let omega = hat_operator(regime, f, i)?;
            let probe = state_context(regime, i, S::one(), omega)?;
            let b = find_b_omega(&probe, search)?;
            let ctx = probe.with_barrier(b)?;
            let (v, t) = sample_value(&ctx, f.knots());
            Ok((v, t, b))
        })
        .collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(rows.len());
    let mut tails = Vec::with_capacity(rows.len());
    let mut barriers = Vec::with_capacity(rows.len());
    for (v, t, b) in rows {
        values.push(v);
        tails.push(t);
        barriers.push(b);
    }
    Ok((GridFunction::new(f.knots().to_vec(), values, tails)?, barriers))
}

/// Settings of [`solve_fixed_point`].
#[derive(Debug, Clone, Copy)]
pub struct FixedPointConfig<S> {
    /// Target accuracy `rho(f_n, V) < tol`.
    pub tol: S,
    pub max_iter: usize,
    pub search: BarrierSearchConfig<S>,
    /// Number of grid intervals.
    pub n_knots: usize,
    /// Ratio of consecutive grid spacings.
    pub growth: S,
    /// The grid extends to `grid_factor` times the largest barrier.
    pub grid_factor: S,
}

impl<S: Real> Default for FixedPointConfig<S> {
    fn default() -> Self {
        Self {
            tol: S::lit(1e-8),
            max_iter: 200,
            search: BarrierSearchConfig::default(),
            n_knots: 80,
            growth: S::lit(1.04),
            grid_factor: S::lit(5.0),
        }
    }
}

/// One iteration of the fixed-point loop.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<S> {
    pub n: usize,
    /// `rho(f_n, f_{n-1})`.
    pub rho: S,
    pub barriers: Vec<S>,
    /// The grid was stretched after this iteration.
    pub regridded: bool,
}

/// Result of [`solve_fixed_point`].
#[derive(Debug, Clone)]
pub struct FixedPointSolution<S> {
    pub value: GridFunction<S>,
    pub barriers: Vec<S>,
    pub log: Vec<IterationRecord<S>>,
}

impl<S: Real> FixedPointSolution<S> {
    /// Ratios `rho_{n+1} / rho_n` for consecutive iterations on the same grid.
    pub fn contraction_ratios(&self) -> Vec<S> {
        self.log.windows(2).filter(|w| w[0].rho > S::zero() && !w[0].regridded).map(|w| w[1].rho / w[0].rho).collect()
    }
}

/// Grid reaching `grid_factor` times the largest barrier of `T_sup 0`.
pub fn initial_grid<S: Real>(regime: &RegimeModel<S>, cfg: &FixedPointConfig<S>) -> Result<Vec<S>> {
    let probe = geometric_grid(S::one(), cfg.n_knots, cfg.growth)?;
    let zero = GridFunction::zero(probe, regime.n_states())?;
    let (_, b) = apply_t_sup(regime, &zero, &cfg.search)?;
    let b_max = b.into_iter().fold(S::zero(), S::max);
    geometric_grid(cfg.grid_factor * b_max.max(S::lit(0.2)), cfg.n_knots, cfg.growth)
}

/// Iterates `f_{n+1} = T_sup f_n` from `f_0 = 0` on [`initial_grid`].
pub fn solve_fixed_point<S: Real>(regime: &RegimeModel<S>, cfg: &FixedPointConfig<S>) -> Result<FixedPointSolution<S>> {
    let xs = initial_grid(regime, cfg)?;
    solve_fixed_point_from(regime, GridFunction::zero(xs, regime.n_states())?, cfg)
}

/// Iterates `f_{n+1} = T_sup f_n` from `f0` until `rho(f_{n+1}, f_n) < tol (1 - beta) / beta`.
///
/// When a barrier comes within two knots of the end of the grid, the grid is
/// stretched to `grid_factor` times that barrier and the iteration continues.
pub fn solve_fixed_point_from<S: Real>(
    regime: &RegimeModel<S>,
    f0: GridFunction<S>,
    cfg: &FixedPointConfig<S>,
) -> Result<FixedPointSolution<S>> {
    if !(cfg.tol > S::zero()) {
        return Err(Error::config("regime.tol", "must be > 0"));
    }
    regime.require_switching()?;
    let beta = regime.beta();
    let stop = cfg.tol * (S::one() - beta) / beta;
    let mut f = f0;
    let mut log = Vec::new();
    for n in 1..=cfg.max_iter {
        let (next, barriers) = apply_t_sup(regime, &f, &cfg.search)?;
        let rho = next.distance(&f)?;
        let xs = next.knots();
        let b_max = barriers.iter().copied().fold(S::zero(), S::max);
        let regridded = b_max >= xs[xs.len() - 3];
        log.push(IterationRecord { n, rho, barriers: barriers.clone(), regridded });
        if regridded {
            let grid = geometric_grid(cfg.grid_factor * b_max, cfg.n_knots, cfg.growth)?;
            f = next.regrid(grid)?;
            continue;
        }
        f = next;
        if rho < stop {
            return Ok(FixedPointSolution { value: f, barriers, log });
        }
    }
    let last = log.last().map_or(S::infinity(), |r| r.rho);
    Err(Error::Convergence(format!("fixed point not reached after {} iterations, last rho = {last}", cfg.max_iter)))
}

#[cfg(test)]
mod tests;
