//! Piecewise-linear concave payoff functions on `[0, inf)`.

use crate::error::{Error, Result};
use crate::scalar::Real;

const FIELD: &str = "auxiliary.omega";

/// One linear piece `u -> intercept + slope u` on `[lo, hi)`, `hi = None` meaning `+inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<S> {
    pub lo: S,
    pub hi: Option<S>,
    pub intercept: S,
    pub slope: S,
}

/// Continuous, concave, piecewise-linear `omega` given by knots `(x_k, omega(x_k))`
/// with `x_0 = 0` and a terminal slope used beyond the last knot.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffFunction<S> {
    xs: Vec<S>,
    vs: Vec<S>,
    slopes: Vec<S>,
    terminal_slope: S,
}

fn concavity_slack<S: Real>(s: S) -> S {
    S::lit(1e-10) * (S::one() + s.abs())
}

impl<S: Real> PayoffFunction<S> {
    pub fn new(knots: Vec<(S, S)>, terminal_slope: S) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::config(FIELD, "at least one knot is required"));
        }
        if knots[0].0 != S::zero() {
            return Err(Error::config(FIELD, "the first knot must be at x = 0"));
        }
        if knots.iter().any(|(x, v)| !x.is_finite() || !v.is_finite()) {
            return Err(Error::config(FIELD, "knots must be finite"));
        }
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::config(FIELD, "knot abscissae must be strictly increasing"));
        }
        if !(terminal_slope >= S::zero() && terminal_slope <= S::one()) {
            return Err(Error::config(format!("{FIELD}.terminal_slope"), "must lie in [0, 1]"));
        }
        let xs: Vec<S> = knots.iter().map(|k| k.0).collect();
        let vs: Vec<S> = knots.iter().map(|k| k.1).collect();
        let slopes: Vec<S> = knots.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
        let mut chain = slopes.clone();
        chain.push(terminal_slope);
        for w in chain.windows(2) {
            if w[1] > w[0] + concavity_slack(w[0]) {
                return Err(Error::config(FIELD, "slopes must be non-increasing (omega concave)"));
            }
        }
        Ok(Self { xs, vs, slopes, terminal_slope })
    }

    /// `omega = 0`.
    pub fn zero() -> Self {
        Self { xs: vec![S::zero()], vs: vec![S::zero()], slopes: Vec::new(), terminal_slope: S::zero() }
    }

    /// `omega(u) = min(u, cap)`.
    pub fn capped_identity(cap: S) -> Result<Self> {
        if !(cap > S::zero()) {
            return Err(Error::config(FIELD, "cap must be > 0"));
        }
        Self::new(vec![(S::zero(), S::zero()), (cap, cap)], S::zero())
    }

    /// Least-squares concave fit on fixed knots: slopes are projected onto the
    /// non-increasing cone by weighted pool-adjacent-violators (weights are the
    /// knot spacings), the terminal slope is clamped to
    /// `[0, min(1, last slope)]`, slopes below it are raised to it and the
    /// value at 0 is kept. Returns the fit and the largest change of a knot
    /// value.
    pub fn fit_concave(xs: &[S], vs: &[S], terminal_slope: S) -> Result<(Self, S)> {
        if xs.len() != vs.len() || xs.is_empty() {
            return Err(Error::config(FIELD, "knot and value arrays must be non-empty and of equal length"));
        }
        let n = xs.len();
        let raw: Vec<S> = (0..n - 1).map(|k| (vs[k + 1] - vs[k]) / (xs[k + 1] - xs[k])).collect();
        let weights: Vec<S> = (0..n - 1).map(|k| xs[k + 1] - xs[k]).collect();
        let pooled = pav_non_increasing(&raw, &weights);
        let last = pooled.last().copied().unwrap_or(S::one());
        let tail = terminal_slope.max(S::zero()).min(last.max(S::zero()).min(S::one()));
        let fitted: Vec<S> = pooled.into_iter().map(|s| s.max(tail)).collect();
        let mut out = vec![vs[0]];
        for k in 0..n - 1 {
            let prev = out[k];
            out.push(prev + fitted[k] * weights[k]);
        }
        let adjust = out.iter().zip(vs).fold(S::zero(), |m, (a, b)| m.max((*a - *b).abs()));
        let knots: Vec<(S, S)> = xs.iter().copied().zip(out).collect();
        Ok((Self::new(knots, tail)?, adjust))
    }

    pub fn knots(&self) -> impl Iterator<Item = (S, S)> + '_ {
        self.xs.iter().copied().zip(self.vs.iter().copied())
    }

    pub fn knot_xs(&self) -> &[S] {
        &self.xs
    }

    pub fn knot_values(&self) -> &[S] {
        &self.vs
    }

    pub fn terminal_slope(&self) -> S {
        self.terminal_slope
    }

    /// Right slope at `0`.
    pub fn first_slope(&self) -> S {
        self.slopes.first().copied().unwrap_or(self.terminal_slope)
    }

    pub fn last_knot(&self) -> S {
        *self.xs.last().unwrap()
    }

    fn index(&self, u: S) -> usize {
        // Number of knots <= u, minus one; clamps to the first piece for u < 0.
        self.xs.partition_point(|&x| x <= u).max(1) - 1
    }

    /// The linear piece containing `u` (right-continuous convention).
    pub fn segment_at(&self, u: S) -> Segment<S> {
        let k = self.index(u);
        let (slope, hi) = if k < self.slopes.len() {
            (self.slopes[k], Some(self.xs[k + 1]))
        } else {
            (self.terminal_slope, None)
        };
        Segment { lo: self.xs[k], hi, intercept: self.vs[k] - slope * self.xs[k], slope }
    }

    /// `omega(u)`; for `u < 0` the first piece is extended linearly.
    pub fn eval(&self, u: S) -> S {
        let s = self.segment_at(u);
        s.intercept + s.slope * u
    }

    /// `omega'_+(u)`.
    pub fn slope_right(&self, u: S) -> S {
        self.segment_at(u).slope
    }

    pub fn segments(&self) -> Vec<Segment<S>> {
        (0..self.xs.len()).map(|k| self.segment_at(self.xs[k])).collect()
    }

    /// Pointwise `sup |self - other| / (1 + |x|)` over `x >= 0`, exact for
    /// piecewise-linear functions (attained at a knot of either or at infinity).
    pub fn weighted_distance(&self, other: &Self) -> S {
        let mut pts: Vec<S> = self.xs.iter().chain(other.xs.iter()).copied().collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup();
        let mut d = pts
            .iter()
            .fold(S::zero(), |m, &x| m.max((self.eval(x) - other.eval(x)).abs() / (S::one() + x)));
        // Beyond the last knot the difference is affine; its weighted sup is
        // the larger of the value at the last knot and the slope difference.
        d = d.max((self.terminal_slope - other.terminal_slope).abs());
        d
    }
}

/// Weighted isotonic regression onto non-increasing sequences.
fn pav_non_increasing<S: Real>(y: &[S], w: &[S]) -> Vec<S> {
    let mut blocks: Vec<(S, S, usize)> = Vec::with_capacity(y.len());
    for (&yi, &wi) in y.iter().zip(w) {
        blocks.push((yi, wi, 1));
        while blocks.len() > 1 {
            let (m2, w2, c2) = blocks[blocks.len() - 1];
            let (m1, w1, c1) = blocks[blocks.len() - 2];
            if m2 <= m1 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            let wt = w1 + w2;
            blocks.push(((m1 * w1 + m2 * w2) / wt, wt, c1 + c2));
        }
    }
    blocks.into_iter().flat_map(|(m, _, c)| std::iter::repeat_n(m, c)).collect()
}
