//! Optimal dividend barrier of the auxiliary problem and slope certification.

use crate::barrier_valuation::ValuationContext;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Bracketing and bisection settings for [`find_b_omega`].
#[derive(Debug, Clone, Copy)]
pub struct BarrierSearchConfig<S> {
    /// Width of the final bracket.
    pub tol_b: S,
    /// Initial upper end of the bracket.
    pub bracket_hi_init: S,
    /// Maximum number of times the upper end is doubled.
    pub max_doublings: usize,
}

impl<S: Real> Default for BarrierSearchConfig<S> {
    fn default() -> Self {
        Self { tol_b: S::lit(1e-8), bracket_hi_init: S::lit(10.0), max_doublings: 60 }
    }
}

/// `h(b) = phi - 1 - E_b[\int_0^kappa e^{-q t}(q phi - lambda omega'_+(U_t)) dt]`.
///
/// The barrier stored in `ctx` is ignored.
pub fn root_function<S: Real>(ctx: &ValuationContext<S>, b: S) -> Result<S> {
    if !(b > S::zero()) || !b.is_finite() {
        return Err(Error::domain(format!("root_function requires b > 0, got {b}")));
    }
    Ok(ctx.with_barrier(b)?.barrier_root_value())
}

/// Smallest `b` with `h(b) <= 0`, returned as the left end of a bracket of width `tol_b`.
pub fn find_b_omega<S: Real>(ctx: &ValuationContext<S>, config: &BarrierSearchConfig<S>) -> Result<S> {
    if !(config.tol_b > S::zero()) || !(config.bracket_hi_init > S::zero()) {
        return Err(Error::config("optimizer", "tol_b and bracket_hi_init must be > 0"));
    }
    let limit = ctx.lambda() / ctx.q() * ctx.omega().terminal_slope();
    if limit >= S::one() {
        return Err(Error::Convergence(format!(
            "no finite optimal barrier under tolerance: (lambda / q) omega'(inf) = {limit} >= 1"
        )));
    }
    let mut lo = S::zero();
    let mut hi = config.bracket_hi_init;
    let mut doublings = 0;
    loop {
        let h = root_function(ctx, hi)?;
        if !h.is_finite() {
            return Err(Error::Convergence(format!("h is not finite at b = {hi}")));
        }
        if h <= S::zero() {
            break;
        }
        if doublings == config.max_doublings {
            return Err(Error::Convergence(format!(
                "no finite optimal barrier under tolerance: h({hi}) = {h} > 0 after {doublings} doublings"
            )));
        }
        lo = hi;
        hi = hi + hi;
        doublings += 1;
    }
    let two = S::lit(2.0);
    while hi - lo > config.tol_b {
        let mid = (lo + hi) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        let h = root_function(ctx, mid)?;
        if !h.is_finite() {
            return Err(Error::Convergence(format!("h is not finite at b = {mid}")));
        }
        if h > S::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if lo > S::zero() { lo } else { hi })
}

/// Largest violations of the slope and shape conditions on a grid.
#[derive(Debug, Clone, Copy, Default)]
pub struct SlopeReport<S> {
    /// `max(1 - V', V' - phi)` over grid points in `(0, b)`.
    pub below_barrier: S,
    /// `max(-V', V' - 1)` over grid points in `[b, inf)`.
    pub above_barrier: S,
    /// Largest increase of `V'` between consecutive grid points.
    pub derivative_increase: S,
    /// Largest decrease of `V` between consecutive grid points.
    pub value_decrease: S,
    /// Largest positive second divided difference of `V`.
    pub convexity: S,
}

impl<S: Real> SlopeReport<S> {
    pub fn max_violation(&self) -> S {
        [self.below_barrier, self.above_barrier, self.derivative_increase, self.value_decrease, self.convexity]
            .into_iter()
            .fold(S::zero(), |a, v| a.max(v))
    }
}

/// Checks `1 <= V' <= phi` below the barrier, `0 <= V' <= 1` above it, and
/// that `V` is increasing and concave on the (sorted, positive) grid.
pub fn certify_slopes<S: Real>(ctx: &ValuationContext<S>, grid: &[S]) -> SlopeReport<S> {
    let b = ctx.b();
    let phi = ctx.phi();
    let mut r = SlopeReport {
        below_barrier: S::zero(),
        above_barrier: S::zero(),
        derivative_increase: S::zero(),
        value_decrease: S::zero(),
        convexity: S::zero(),
    };
    let xs: Vec<S> = grid.iter().copied().filter(|&x| x > S::zero()).collect();
    let d: Vec<S> = xs.iter().map(|&x| ctx.value_derivative(x)).collect();
    let v: Vec<S> = xs.iter().map(|&x| ctx.value_double_barrier(x)).collect();
    for (&x, &dx) in xs.iter().zip(&d) {
        if x < b {
            r.below_barrier = r.below_barrier.max(S::one() - dx).max(dx - phi);
        } else {
            r.above_barrier = r.above_barrier.max(-dx).max(dx - S::one());
        }
    }
    for i in 1..xs.len() {
        r.derivative_increase = r.derivative_increase.max(d[i] - d[i - 1]);
        r.value_decrease = r.value_decrease.max(v[i - 1] - v[i]);
        if i + 1 < xs.len() {
            let s0 = (v[i] - v[i - 1]) / (xs[i] - xs[i - 1]);
            let s1 = (v[i + 1] - v[i]) / (xs[i + 1] - xs[i]);
            r.convexity = r.convexity.max(s1 - s0);
        }
    }
    r
}
