//! Gauss-Legendre rules and a composite integrator with panel doubling.

use crate::scalar::Real;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre<S: Real>(n: usize) -> (Vec<S>, Vec<S>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0f64; n];
    let mut weights = vec![0.0f64; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (
        nodes.into_iter().map(S::lit).collect(),
        weights.into_iter().map(S::lit).collect(),
    )
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss-Legendre integrator.
///
/// Starts with one 32-node panel per unit length and doubles the panel count
/// until two successive estimates agree to `rel_tol` (relative to the larger
/// of the estimate and `abs_floor`).
#[derive(Debug, Clone)]
pub struct Integrator<S> {
    nodes: Vec<S>,
    weights: Vec<S>,
    pub rel_tol: S,
    pub abs_floor: S,
    pub max_doublings: usize,
}

impl<S: Real> Default for Integrator<S> {
    fn default() -> Self {
        Self::new(32)
    }
}

impl<S: Real> Integrator<S> {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        Self { nodes, weights, rel_tol: S::lit(1e-10), abs_floor: S::lit(1e-300), max_doublings: 12 }
    }

    /// One pass with `panels` equal panels.
    pub fn fixed<F: Fn(S) -> S>(&self, f: &F, a: S, b: S, panels: usize) -> S {
        let two = S::lit(2.0);
        let h = (b - a) / S::lit(panels as f64);
        let mut total = S::zero();
        for p in 0..panels {
            let lo = a + h * S::lit(p as f64);
            let mid = lo + h / two;
            let half = h / two;
            let mut acc = S::zero();
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                acc = acc + *w * f(mid + half * *x);
            }
            total = total + acc * half;
        }
        total
    }

    /// Integral over `[a, b]` (finite bounds).
    pub fn integrate<F: Fn(S) -> S>(&self, f: F, a: S, b: S) -> S {
        if a == b {
            return S::zero();
        }
        if b < a {
            return -self.integrate(f, b, a);
        }
        let mut panels = ((b - a).ceil().to_usize().unwrap_or(1)).max(1);
        let mut prev = self.fixed(&f, a, b, panels);
        for _ in 0..self.max_doublings {
            panels *= 2;
            let next = self.fixed(&f, a, b, panels);
            let scale = next.abs().max(self.abs_floor);
            if (next - prev).abs() <= self.rel_tol * scale {
                return next;
            }
            prev = next;
        }
        prev
    }

    /// Integral over `[a, b]` split at the given interior breakpoints.
    pub fn integrate_with_breaks<F: Fn(S) -> S>(&self, f: F, a: S, b: S, breaks: &[S]) -> S {
        let mut pts: Vec<S> = breaks.iter().copied().filter(|&t| t > a && t < b).collect();
        pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        pts.dedup();
        let mut lo = a;
        let mut total = S::zero();
        for t in pts.into_iter().chain(std::iter::once(b)) {
            total = total + self.integrate(&f, lo, t);
            lo = t;
        }
        total
    }
}
