//! Piecewise exponential-polynomial densities and their integrals against
//! piecewise-linear payoffs.

use super::payoff::PayoffFunction;
use crate::expsum::ExpPoly;
use crate::scalar::Real;

/// `y -> poly(y - origin)` restricted to `[lo, hi)`, with `hi = None` meaning `+inf`.
///
/// Keeping `poly` in local coordinates avoids the factors `e^{-zeta origin}`
/// that overflow for steep negative modes `zeta`.
#[derive(Debug, Clone)]
pub struct Piece<S> {
    pub lo: S,
    pub hi: Option<S>,
    pub origin: S,
    pub poly: ExpPoly<S>,
}

impl<S: Real> Piece<S> {
    pub fn finite(lo: S, hi: S, poly: ExpPoly<S>) -> Self {
        Self { lo, hi: Some(hi), origin: S::zero(), poly }
    }

    /// Unbounded piece; non-decaying modes are removed since they cancel analytically.
    pub fn tail(lo: S, poly: &ExpPoly<S>) -> Self {
        Self { lo, hi: None, origin: S::zero(), poly: poly.decaying_part().0 }
    }

    /// Reads `poly` as a function of `y - origin`.
    pub fn at(self, origin: S) -> Self {
        Self { origin, ..self }
    }

    /// Value of the piece's function at `y`, ignoring the support.
    pub fn eval(&self, y: S) -> S {
        self.poly.eval(y - self.origin)
    }

    fn contains(&self, y: S) -> bool {
        y >= self.lo && self.hi.is_none_or(|h| y < h)
    }

    fn integral_over(&self, lo: S, hi: Option<S>) -> S {
        let l = lo.max(self.lo);
        let h = match (hi, self.hi) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (Some(a), None) => Some(a),
            (None, b) => b,
        };
        let o = self.origin;
        match h {
            Some(h) if h <= l => S::zero(),
            Some(h) => self.poly.integral(l - o, h - o),
            None => self.poly.integral_to_inf(l - o).value,
        }
    }
}

/// What multiplies the density in [`integrate_against`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    /// `omega(offset + y)`
    Value,
    /// `omega'_+(offset + y)`
    Slope,
}

/// `\int w(offset + y) f(y) dy` over the pieces, exact on each linear piece of `omega`.
pub fn integrate_against<S: Real>(pieces: &[Piece<S>], omega: &PayoffFunction<S>, offset: S, weight: Weight) -> S {
    let mut total = S::zero();
    for p in pieces {
        // Local coordinates t = y - origin, so the payoff is read at offset + origin + t.
        let offset = offset + p.origin;
        let (lo, hi) = (p.lo - p.origin, p.hi.map(|h| h - p.origin));
        let breaks = omega.knot_xs().iter().map(|&k| k - offset);
        let mut cuts: Vec<S> = breaks.filter(|&t| t > lo && hi.is_none_or(|h| t < h)).collect();
        cuts.push(lo);
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (i, &lo) in cuts.iter().enumerate() {
            let hi = cuts.get(i + 1).copied().or(hi);
            // The midpoint picks the segment unambiguously when lo + offset rounds across a knot.
            let mid = hi.map_or(lo + S::one(), |h| lo + (h - lo) / S::lit(2.0));
            let seg = omega.segment_at(mid + offset);
            let (alpha, beta) = match weight {
                Weight::Value => (seg.intercept + seg.slope * offset, seg.slope),
                Weight::Slope => (seg.slope, S::zero()),
            };
            if alpha == S::zero() && beta == S::zero() {
                continue;
            }
            let f = p.poly.mul_linear(alpha, beta);
            total = total
                + match hi {
                    Some(h) => f.integral(lo, h),
                    None => f.integral_to_inf(lo).value,
                };
        }
    }
    total
}

/// `\int f(y) dy` over the pieces.
pub fn integrate_plain<S: Real>(pieces: &[Piece<S>]) -> S {
    pieces.iter().map(|p| p.integral_over(p.lo, p.hi)).sum()
}

/// A measure on `[0, inf)` made of an atom at `0` and a piecewise density.
#[derive(Debug, Clone)]
pub struct PotentialMeasure<S> {
    atom: S,
    pieces: Vec<Piece<S>>,
}

impl<S: Real> PotentialMeasure<S> {
    pub(crate) fn new(atom: S, pieces: Vec<Piece<S>>) -> Self {
        Self { atom, pieces }
    }

    /// Mass of the atom at `0`.
    pub fn atom(&self) -> S {
        self.atom
    }

    pub fn pieces(&self) -> &[Piece<S>] {
        &self.pieces
    }

    /// Density at `y > 0` (zero outside the support).
    pub fn density(&self, y: S) -> S {
        self.pieces.iter().find(|p| p.contains(y)).map(|p| p.eval(y)).unwrap_or(S::zero())
    }

    /// Total mass including the atom.
    pub fn mass(&self) -> S {
        self.atom + integrate_plain(&self.pieces)
    }

    /// Mass of the density on `[lo, hi)`, `hi = None` meaning `+inf`; the atom is excluded.
    pub fn density_mass(&self, lo: S, hi: Option<S>) -> S {
        self.pieces.iter().map(|p| p.integral_over(lo, hi)).sum()
    }

    /// Density mass of each bin `[edges[i], edges[i + 1])`.
    pub fn bin_masses(&self, edges: &[S]) -> Vec<S> {
        edges.windows(2).map(|w| self.density_mass(w[0], Some(w[1]))).collect()
    }

    /// `\int omega d mu`, the atom contributing `omega(0)`.
    pub fn integrate_omega(&self, omega: &PayoffFunction<S>) -> S {
        self.atom * omega.eval(S::zero()) + integrate_against(&self.pieces, omega, S::zero(), Weight::Value)
    }

    /// `\int omega'_+ d mu`, the atom contributing `omega'_+(0)`.
    pub fn integrate_slope(&self, omega: &PayoffFunction<S>) -> S {
        self.atom * omega.first_slope() + integrate_against(&self.pieces, omega, S::zero(), Weight::Slope)
    }
}
