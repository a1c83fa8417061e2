//! Event-driven Monte Carlo simulation of the surplus process under
//! Poisson observation, used as an independent oracle for the closed forms.
//!
//! Each path draws from its own ChaCha8 stream, keyed by the base seed and
//! the path index, and per-path results are reduced in path order. Estimates
//! are therefore bit-identical regardless of how many worker threads run.

mod jumps;
mod path;
mod regime;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::barrier_valuation::{PayoffFunction, ValuationContext};
use crate::error::{Error, Result};
use crate::fluctuation_kernels::KernelParams;
use crate::levy_model::SpectrallyPositiveModel;

use jumps::JumpSampler;
use path::{run_single, Lower, PathState, Regime, Rules, StopKind, Upper};
pub use regime::{regime_value_samples, simulate_regime};

/// Monte Carlo settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    /// A path stops once its accumulated discount factor falls below this value.
    pub discount_floor: f64,
    /// Euler step, used only when `sigma > 0`.
    pub brownian_step_dt: f64,
    pub base_seed: u64,
    /// Path `i` reads ChaCha stream `i * stream_stride`.
    pub stream_stride: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { n_paths: 100_000, discount_floor: 1e-10, brownian_step_dt: 1e-3, base_seed: 20_240_917, stream_stride: 1 }
    }
}

impl SimConfig {
    pub fn with_paths(mut self, n: usize) -> Self {
        self.n_paths = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.base_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::config("simulation.n_paths", "must be >= 1"));
        }
        if !(self.discount_floor > 0.0 && self.discount_floor < 1.0) {
            return Err(Error::config("simulation.discount_floor", "must lie in (0, 1)"));
        }
        if !(self.brownian_step_dt > 0.0) || !self.brownian_step_dt.is_finite() {
            return Err(Error::config("simulation.brownian_step_dt", "must be > 0"));
        }
        if self.stream_stride == 0 {
            return Err(Error::config("simulation.stream_stride", "must be >= 1"));
        }
        Ok(())
    }

    fn rng(&self, path: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base_seed);
        rng.set_stream((path as u64).wrapping_mul(self.stream_stride));
        rng
    }

    /// Runs `f` once per path on that path's stream and returns results in path order.
    pub(crate) fn run<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&mut ChaCha8Rng) -> T + Sync,
    {
        (0..self.n_paths).into_par_iter().map(|i| f(&mut self.rng(i))).collect()
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl MCEstimate {
    /// Mean and `sample_std / sqrt(n)`, accumulated in slice order.
    pub fn from_samples(samples: &[f64], seed: u64) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self { mean, std_error: (var / n as f64).sqrt(), n_paths: n, seed }
    }

    /// Estimate of `E[a - b]` from paired samples drawn with common random numbers.
    pub fn paired_difference(a: &[f64], b: &[f64], seed: u64) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::domain("paired samples must have equal length"));
        }
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        Ok(Self::from_samples(&d, seed))
    }

    /// `|mean - target| / std_error`.
    pub fn z_score(&self, target: f64) -> f64 {
        let diff = (self.mean - target).abs();
        if self.std_error > 0.0 {
            diff / self.std_error
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn within(&self, target: f64, k: f64) -> bool {
        self.z_score(target) <= k
    }

    fn widen(mut self, bound: f64) -> Self {
        self.std_error += bound;
        self
    }
}

/// Discounted dividends, injections and payoff integral of the double barrier strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleBarrierEstimate {
    pub dividends: MCEstimate,
    pub injections: MCEstimate,
    pub payoff: MCEstimate,
    /// `dividends - phi injections + payoff`.
    pub value: MCEstimate,
}

/// Pathwise functional estimated by [`simulate_kernel`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelId {
    ExitDown,
    ExitUp,
    ObservedPassageLt,
    InjectionUntilObserved,
    Joint { theta: f64 },
    ReflectedPassageExp,
    ReflectedScale { y: f64 },
    KilledPassageLt,
    /// Single barrier potential mass of `[lo, hi)`.
    SingleBarrierBin { lo: f64, hi: f64 },
    /// Double barrier potential mass of `[lo, hi)` excluding the atom at 0.
    DoubleBarrierBin { lo: f64, hi: f64 },
    DoubleBarrierAtom,
}

impl fmt::Display for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ExitDown => write!(f, "exit_down"),
            Self::ExitUp => write!(f, "exit_up"),
            Self::ObservedPassageLt => write!(f, "observed_passage_lt"),
            Self::InjectionUntilObserved => write!(f, "injection_until_observed"),
            Self::Joint { theta } => write!(f, "joint:{theta}"),
            Self::ReflectedPassageExp => write!(f, "reflected_passage_exp"),
            Self::ReflectedScale { y } => write!(f, "reflected_scale:{y}"),
            Self::KilledPassageLt => write!(f, "killed_passage_lt"),
            Self::SingleBarrierBin { lo, hi } => write!(f, "single_barrier_bin:{lo}:{hi}"),
            Self::DoubleBarrierBin { lo, hi } => write!(f, "double_barrier_bin:{lo}:{hi}"),
            Self::DoubleBarrierAtom => write!(f, "double_barrier_atom"),
        }
    }
}

impl FromStr for KernelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let name = parts.next().unwrap_or_default();
        let args: Vec<f64> = parts
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::domain(format!("bad kernel argument in {s:?}")))?;
        let id = match (name.trim(), args.as_slice()) {
            ("exit_down", []) => Self::ExitDown,
            ("exit_up", []) => Self::ExitUp,
            ("observed_passage_lt", []) => Self::ObservedPassageLt,
            ("injection_until_observed", []) => Self::InjectionUntilObserved,
            ("joint", [theta]) => Self::Joint { theta: *theta },
            ("reflected_passage_exp", []) => Self::ReflectedPassageExp,
            ("reflected_scale", [y]) => Self::ReflectedScale { y: *y },
            ("killed_passage_lt", []) => Self::KilledPassageLt,
            ("single_barrier_bin", [lo, hi]) => Self::SingleBarrierBin { lo: *lo, hi: *hi },
            ("double_barrier_bin", [lo, hi]) => Self::DoubleBarrierBin { lo: *lo, hi: *hi },
            ("double_barrier_atom", []) => Self::DoubleBarrierAtom,
            _ => return Err(Error::domain(format!("unknown kernel id {s:?}"))),
        };
        Ok(id)
    }
}

impl KernelId {
    /// Closed-form value of the functional at `x`.
    pub fn closed_form(&self, ctx: &ValuationContext<f64>, x: f64) -> Result<f64> {
        let p = ctx.params();
        match *self {
            Self::ExitDown => p.exit_down(x),
            Self::ExitUp => p.exit_up(x),
            Self::ObservedPassageLt => p.observed_passage_lt(x),
            Self::InjectionUntilObserved => p.injection_until_observed(x),
            Self::Joint { theta } => p.joint_observed_transform(x, theta),
            Self::ReflectedPassageExp => p.reflected_passage_exp_transform(x),
            Self::ReflectedScale { y } => p.reflected_scale_at_passage(x, y),
            Self::KilledPassageLt => p.killed_passage_lt(x),
            Self::SingleBarrierBin { lo, hi } => Ok(ctx.single_barrier_measure(x)?.density_mass(lo, Some(hi))),
            Self::DoubleBarrierBin { lo, hi } => Ok(ctx.double_barrier_measure(x)?.density_mass(lo, Some(hi))),
            Self::DoubleBarrierAtom => Ok(ctx.double_barrier_measure(x)?.atom()),
        }
    }

    fn rules(&self) -> (Lower, Upper) {
        match self {
            Self::ExitDown | Self::ExitUp => (Lower::Kill, Upper::PassageStop),
            Self::ObservedPassageLt | Self::InjectionUntilObserved | Self::Joint { .. } => {
                (Lower::Reflect, Upper::ObservedStop)
            }
            Self::ReflectedPassageExp | Self::ReflectedScale { .. } => (Lower::Reflect, Upper::PassageStop),
            Self::KilledPassageLt | Self::SingleBarrierBin { .. } => (Lower::Kill, Upper::ObservedPay),
            Self::DoubleBarrierBin { .. } | Self::DoubleBarrierAtom => (Lower::Reflect, Upper::ObservedPay),
        }
    }

    fn edges(&self) -> Option<[f64; 2]> {
        match *self {
            Self::SingleBarrierBin { lo, hi } | Self::DoubleBarrierBin { lo, hi } => Some([lo, hi]),
            _ => None,
        }
    }

    fn sample(&self, p: &KernelParams<f64>, st: &PathState) -> f64 {
        let stop = st.stop.expect("paths always stop");
        let up = stop.kind == StopKind::Upper;
        let b = p.b();
        match *self {
            Self::ExitDown | Self::KilledPassageLt => {
                if stop.kind == StopKind::Lower {
                    stop.discount
                } else {
                    0.0
                }
            }
            Self::ExitUp | Self::ObservedPassageLt if up => stop.discount,
            Self::InjectionUntilObserved => st.injections,
            Self::Joint { theta } if up => stop.discount * (theta * (b - stop.level)).exp(),
            Self::ReflectedPassageExp if up => stop.discount * (p.phi() * (b - stop.level)).exp(),
            Self::ReflectedScale { y } if up => stop.discount * p.engine_qg().w(b - stop.level + y),
            Self::SingleBarrierBin { .. } | Self::DoubleBarrierBin { .. } => st.bins[0],
            Self::DoubleBarrierAtom => st.atom,
            _ => 0.0,
        }
    }
}

fn regime_of(model: &SpectrallyPositiveModel<f64>, rate: f64, b: f64) -> Result<Regime> {
    if !(rate > 0.0) {
        return Err(Error::domain("simulation requires a positive discount rate"));
    }
    Ok(Regime { c: model.drift_c(), sigma: model.sigma(), jumps: JumpSampler::from_model(model), rate, b })
}

fn check_start(x0: f64) -> Result<()> {
    if !(x0 >= 0.0) || !x0.is_finite() {
        return Err(Error::domain(format!("simulation requires x0 >= 0, got {x0}")));
    }
    Ok(())
}

/// Per-path samples of a kernel functional.
pub fn kernel_samples(p: &KernelParams<f64>, id: KernelId, x0: f64, cfg: &SimConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_start(x0)?;
    let reg = regime_of(p.model(), p.q(), p.b())?;
    let (lower, upper) = id.rules();
    let edges = id.edges();
    let rules = Rules {
        gamma: p.gamma(),
        lower,
        upper,
        omega: None,
        edges: edges.as_ref().map(|e| e.as_slice()),
        floor: cfg.discount_floor,
        dt: cfg.brownian_step_dt,
    };
    Ok(cfg.run(|rng| id.sample(p, &run_single(&reg, &rules, x0, rng))))
}

/// Estimates a kernel functional started from `x0`.
pub fn simulate_kernel(p: &KernelParams<f64>, id: KernelId, x0: f64, cfg: &SimConfig) -> Result<MCEstimate> {
    let s = kernel_samples(p, id, x0, cfg)?;
    Ok(MCEstimate::from_samples(&s, cfg.base_seed))
}

/// Which potential measure a histogram estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureKind {
    /// Reflected at 0, dividends above `b` at observation epochs.
    DoubleBarrier,
    /// Killed below 0, dividends above `b` at observation epochs.
    SingleBarrier,
}

/// Binned potential measure with the mass of the atom at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramEstimate {
    pub atom: MCEstimate,
    pub bins: Vec<MCEstimate>,
}

/// Estimates `q \int e^{-q t} P_x(U_t in bin) dt` for consecutive bins given by `edges`.
pub fn simulate_histogram(
    p: &KernelParams<f64>,
    kind: MeasureKind,
    x0: f64,
    edges: &[f64],
    cfg: &SimConfig,
) -> Result<HistogramEstimate> {
    cfg.validate()?;
    check_start(x0)?;
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("histogram edges must be strictly increasing"));
    }
    let reg = regime_of(p.model(), p.q(), p.b())?;
    let lower = match kind {
        MeasureKind::DoubleBarrier => Lower::Reflect,
        MeasureKind::SingleBarrier => Lower::Kill,
    };
    let rules = Rules {
        gamma: p.gamma(),
        lower,
        upper: Upper::ObservedPay,
        omega: None,
        edges: Some(edges),
        floor: cfg.discount_floor,
        dt: cfg.brownian_step_dt,
    };
    let paths: Vec<(f64, Vec<f64>)> = cfg.run(|rng| {
        let st = run_single(&reg, &rules, x0, rng);
        (st.atom, st.bins)
    });
    let atoms: Vec<f64> = paths.iter().map(|p| p.0).collect();
    let bins = (0..edges.len() - 1)
        .map(|k| {
            let s: Vec<f64> = paths.iter().map(|p| p.1[k]).collect();
            MCEstimate::from_samples(&s, cfg.base_seed)
        })
        .collect();
    Ok(HistogramEstimate { atom: MCEstimate::from_samples(&atoms, cfg.base_seed), bins })
}

/// Per-path components `(dividends, injections, payoff)` of the double barrier strategy.
fn double_barrier_paths(ctx: &ValuationContext<f64>, x0: f64, cfg: &SimConfig) -> Result<(Vec<[f64; 3]>, f64)> {
    cfg.validate()?;
    check_start(x0)?;
    let reg = regime_of(ctx.model(), ctx.q(), ctx.b())?;
    let rules = Rules {
        gamma: ctx.gamma(),
        lower: Lower::Reflect,
        upper: Upper::ObservedPay,
        omega: Some((ctx.omega(), ctx.lambda())),
        edges: None,
        floor: cfg.discount_floor,
        dt: cfg.brownian_step_dt,
    };
    let rows = cfg.run(|rng| {
        let st = run_single(&reg, &rules, x0, rng);
        [st.dividends, st.injections, st.payoff]
    });
    let tail = cfg.discount_floor * tail_scale(&reg, ctx.phi(), ctx.omega(), ctx.lambda(), x0.max(ctx.b()));
    Ok((rows, tail))
}

/// Bound on the undiscounted value remaining after the horizon, per unit of discount.
///
/// Future dividends are at most the current surplus plus all future jumps;
/// injections are at most the drift plus the Brownian local time rate;
/// the payoff grows at most linearly in the surplus.
fn tail_scale(reg: &Regime, phi: f64, omega: &PayoffFunction<f64>, lambda: f64, level: f64) -> f64 {
    let r = reg.rate;
    let jumps = reg.jumps.rate() * reg.jumps.mean() / r;
    let dividends = level + jumps;
    let injections = (reg.c.abs() + reg.sigma) / r + reg.sigma * reg.sigma / r;
    let payoff = lambda / r * (omega.eval(0.0).abs() + omega.first_slope().abs() * (level + jumps + injections));
    dividends + phi * injections + payoff
}

/// Per-path values `dividends - phi injections + payoff` of the double barrier strategy.
pub fn value_samples(ctx: &ValuationContext<f64>, x0: f64, cfg: &SimConfig) -> Result<Vec<f64>> {
    let phi = ctx.phi();
    let (rows, _) = double_barrier_paths(ctx, x0, cfg)?;
    Ok(rows.iter().map(|r| r[0] - phi * r[1] + r[2]).collect())
}

/// Simulates the double barrier strategy with barrier `ctx.b()` from `x0`.
pub fn simulate_double_barrier(ctx: &ValuationContext<f64>, x0: f64, cfg: &SimConfig) -> Result<DoubleBarrierEstimate> {
    let phi = ctx.phi();
    let (rows, tail) = double_barrier_paths(ctx, x0, cfg)?;
    let seed = cfg.base_seed;
    let col = |k: usize| -> Vec<f64> { rows.iter().map(|r| r[k]).collect() };
    let value: Vec<f64> = rows.iter().map(|r| r[0] - phi * r[1] + r[2]).collect();
    Ok(DoubleBarrierEstimate {
        dividends: MCEstimate::from_samples(&col(0), seed).widen(tail),
        injections: MCEstimate::from_samples(&col(1), seed).widen(tail),
        payoff: MCEstimate::from_samples(&col(2), seed).widen(tail),
        value: MCEstimate::from_samples(&value, seed).widen(tail),
    })
}

#[cfg(test)]
mod tests;
