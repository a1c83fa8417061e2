//! Spectrally positive Lévy models and their Laplace exponent.
//!
//! The surplus is `X_t = -c t + sigma B_t + S_t` where `S` is a compound
//! Poisson process of upward jumps. All supported jump families have finite
//! activity, so the small-jump compensator of the Lévy-Khintchine form is
//! folded into the drift: `drift_c` is the linear drift rate of the path and
//!
//! ```text
//! psi(theta) = c theta + sigma^2 theta^2 / 2 + \int (e^{-theta z} - 1) nu(dz).
//! ```

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use crate::scalar::Real;

/// Upward jump specification.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpSpec<S> {
    /// No jumps (Brownian motion with drift).
    None,
    /// Compound Poisson with rate `arrival_rate` and jump law `sum_k p_k Exp(eta_k)`.
    Hyperexponential { arrival_rate: S, weights: Vec<S>, rates: Vec<S> },
    /// Lévy density sampled at `z_1 < ... < z_n` on `(0, z_max]`.
    ///
    /// The density is interpolated linearly between grid points, held at
    /// `nu(z_1)` on `(0, z_1]` and vanishes beyond `z_n`.
    Tabulated { z: Vec<S>, density: Vec<S> },
}

/// A linear piece `alpha + beta z` of a tabulated density on `[lo, hi]`.
#[derive(Debug, Clone, Copy)]
struct Cell<S> {
    lo: S,
    hi: S,
    alpha: S,
    beta: S,
}

/// Spectrally positive Lévy process with finite-activity upward jumps.
#[derive(Debug, Clone)]
pub struct SpectrallyPositiveModel<S> {
    drift_c: S,
    sigma: S,
    jumps: JumpSpec<S>,
    cells: Vec<Cell<S>>,
    gl_nodes: Vec<S>,
    gl_weights: Vec<S>,
}

impl<S: Real> SpectrallyPositiveModel<S> {
    /// Validates and builds a model.
    pub fn new(drift_c: S, sigma: S, jumps: JumpSpec<S>) -> Result<Self> {
        if !drift_c.is_finite() {
            return Err(Error::config("model.drift_c", "must be finite"));
        }
        if !(sigma >= S::zero()) || !sigma.is_finite() {
            return Err(Error::config("model.sigma", "must be finite and >= 0"));
        }
        if sigma == S::zero() && drift_c <= S::zero() {
            return Err(Error::config(
                "model.drift_c",
                "must be > 0 when sigma = 0 (otherwise the process is a subordinator)",
            ));
        }
        let mut cells = Vec::new();
        match &jumps {
            JumpSpec::None => {}
            JumpSpec::Hyperexponential { arrival_rate, weights, rates } => {
                if !(*arrival_rate > S::zero()) || !arrival_rate.is_finite() {
                    return Err(Error::config("model.jumps.arrival_rate", "must be > 0"));
                }
                if weights.is_empty() || weights.len() != rates.len() {
                    return Err(Error::config(
                        "model.jumps.weights",
                        "weights and rates must be non-empty and of equal length",
                    ));
                }
                if weights.iter().any(|&p| !(p > S::zero())) {
                    return Err(Error::config("model.jumps.weights", "weights must be > 0"));
                }
                let total: S = weights.iter().copied().sum();
                if (total - S::one()).abs() > S::lit(1e-12).max(S::eps() * S::lit(8.0)) {
                    return Err(Error::config("model.jumps.weights", "weights must sum to 1"));
                }
                if rates.iter().any(|&e| !(e > S::zero()) || !e.is_finite()) {
                    return Err(Error::config("model.jumps.rates", "rates must be > 0"));
                }
                for i in 0..rates.len() {
                    for j in 0..i {
                        if rates[i] == rates[j] {
                            return Err(Error::config(
                                "model.jumps.rates",
                                "rates must be distinct; perturb repeated rates slightly",
                            ));
                        }
                    }
                }
            }
            JumpSpec::Tabulated { z, density } => {
                if z.is_empty() || z.len() != density.len() {
                    return Err(Error::config(
                        "model.jumps.z",
                        "grid and density must be non-empty and of equal length",
                    ));
                }
                if !(z[0] > S::zero()) || z.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::config("model.jumps.z", "grid must be positive and strictly increasing"));
                }
                if density.iter().any(|&v| !(v >= S::zero()) || !v.is_finite()) {
                    return Err(Error::config("model.jumps.density", "density values must be finite and >= 0"));
                }
                cells.push(Cell { lo: S::zero(), hi: z[0], alpha: density[0], beta: S::zero() });
                for k in 1..z.len() {
                    let beta = (density[k] - density[k - 1]) / (z[k] - z[k - 1]);
                    cells.push(Cell { lo: z[k - 1], hi: z[k], alpha: density[k - 1] - beta * z[k - 1], beta });
                }
            }
        }
        let (gl_nodes, gl_weights) = gauss_legendre(16);
        Ok(Self { drift_c, sigma, jumps, cells, gl_nodes, gl_weights })
    }

    /// Hyperexponential compound Poisson model without Gaussian part.
    pub fn hyperexponential(drift_c: S, arrival_rate: S, weights: Vec<S>, rates: Vec<S>) -> Result<Self> {
        Self::new(drift_c, S::zero(), JumpSpec::Hyperexponential { arrival_rate, weights, rates })
    }

    pub fn drift_c(&self) -> S {
        self.drift_c
    }

    pub fn sigma(&self) -> S {
        self.sigma
    }

    pub fn jumps(&self) -> &JumpSpec<S> {
        &self.jumps
    }

    /// Total mass of the Lévy measure.
    pub fn jump_intensity(&self) -> S {
        match &self.jumps {
            JumpSpec::None => S::zero(),
            JumpSpec::Hyperexponential { arrival_rate, .. } => *arrival_rate,
            JumpSpec::Tabulated { .. } => self.cell_moment(0),
        }
    }

    /// `\int z^k nu(dz)` for a tabulated density.
    fn cell_moment(&self, k: i32) -> S {
        self.cells.iter().map(|c| self.gl_cell(c, |z| z.powi(k))).sum()
    }

    /// Gauss-Legendre integral of `g(z) nu(z)` over one cell.
    fn gl_cell<F: Fn(S) -> S>(&self, c: &Cell<S>, g: F) -> S {
        let two = S::lit(2.0);
        let mid = (c.lo + c.hi) / two;
        let half = (c.hi - c.lo) / two;
        let mut acc = S::zero();
        for (x, w) in self.gl_nodes.iter().zip(&self.gl_weights) {
            let z = mid + half * *x;
            acc = acc + *w * g(z) * (c.alpha + c.beta * z);
        }
        acc * half
    }

    /// Lévy density `nu(z)` for `z > 0` (zero for `z <= 0`).
    pub fn levy_density(&self, z: S) -> S {
        if !(z > S::zero()) {
            return S::zero();
        }
        match &self.jumps {
            JumpSpec::None => S::zero(),
            JumpSpec::Hyperexponential { arrival_rate, weights, rates } => {
                *arrival_rate * weights.iter().zip(rates).map(|(&p, &e)| p * e * (-e * z).exp()).sum::<S>()
            }
            JumpSpec::Tabulated { .. } => self
                .cells
                .iter()
                .find(|c| z <= c.hi)
                .map(|c| c.alpha + c.beta * z)
                .unwrap_or(S::zero()),
        }
    }

    /// Linear cells `(lo, hi, alpha, beta)` of a tabulated density, `nu(z) = alpha + beta z` on `[lo, hi]`.
    pub fn tabulated_cells(&self) -> Vec<(S, S, S, S)> {
        self.cells.iter().map(|c| (c.lo, c.hi, c.alpha, c.beta)).collect()
    }

    /// Mean jump size times intensity, `\int z nu(dz)`.
    pub fn jump_first_moment(&self) -> S {
        match &self.jumps {
            JumpSpec::None => S::zero(),
            JumpSpec::Hyperexponential { arrival_rate, weights, rates } => {
                *arrival_rate * weights.iter().zip(rates).map(|(&p, &e)| p / e).sum::<S>()
            }
            JumpSpec::Tabulated { .. } => self.cell_moment(1),
        }
    }

    /// `\int z^2 nu(dz)`.
    pub fn jump_second_moment(&self) -> S {
        match &self.jumps {
            JumpSpec::None => S::zero(),
            JumpSpec::Hyperexponential { arrival_rate, weights, rates } => {
                *arrival_rate * weights.iter().zip(rates).map(|(&p, &e)| S::lit(2.0) * p / (e * e)).sum::<S>()
            }
            JumpSpec::Tabulated { .. } => self.cell_moment(2),
        }
    }

    /// `psi(theta)` for `theta >= 0`.
    pub fn laplace_exponent(&self, theta: S) -> Result<S> {
        if !(theta >= S::zero()) {
            return Err(Error::domain(format!("laplace_exponent requires theta >= 0, got {theta}")));
        }
        Ok(self.psi(theta))
    }

    /// `psi(theta)` without the domain check. For hyperexponential jumps the
    /// rational extension is valid on `theta > -min eta_k`.
    pub fn psi(&self, theta: S) -> S {
        let half = S::lit(0.5);
        let base = self.drift_c * theta + half * self.sigma * self.sigma * theta * theta;
        match &self.jumps {
            JumpSpec::None => base,
            JumpSpec::Hyperexponential { arrival_rate, weights, rates } => {
                let s: S = weights.iter().zip(rates).map(|(&p, &e)| p / (e + theta)).sum();
                base - *arrival_rate * theta * s
            }
            JumpSpec::Tabulated { .. } => {
                base + self.cells.iter().map(|c| self.gl_cell(c, |z| (-theta * z).exp_m1())).sum::<S>()
            }
        }
    }

    /// `psi'(theta)`.
    pub fn psi_prime(&self, theta: S) -> S {
        let base = self.drift_c + self.sigma * self.sigma * theta;
        match &self.jumps {
            JumpSpec::None => base,
            JumpSpec::Hyperexponential { arrival_rate, weights, rates } => {
                let s: S = weights.iter().zip(rates).map(|(&p, &e)| p * e / ((e + theta) * (e + theta))).sum();
                base - *arrival_rate * s
            }
            JumpSpec::Tabulated { .. } => {
                base - self.cells.iter().map(|c| self.gl_cell(c, |z| z * (-theta * z).exp())).sum::<S>()
            }
        }
    }

    /// `psi''(theta)`.
    pub fn psi_second(&self, theta: S) -> S {
        let base = self.sigma * self.sigma;
        match &self.jumps {
            JumpSpec::None => base,
            JumpSpec::Hyperexponential { arrival_rate, weights, rates } => {
                let two = S::lit(2.0);
                let s: S = weights.iter().zip(rates).map(|(&p, &e)| two * p * e / (e + theta).powi(3)).sum();
                base + *arrival_rate * s
            }
            JumpSpec::Tabulated { .. } => {
                base + self.cells.iter().map(|c| self.gl_cell(c, |z| z * z * (-theta * z).exp())).sum::<S>()
            }
        }
    }

    /// `psi(s)` on the complex plane (entire for tabulated densities,
    /// meromorphic with poles at `-eta_k` for hyperexponential jumps).
    pub fn psi_complex(&self, s: Complex<S>) -> Complex<S> {
        let half = S::lit(0.5);
        let base = s * self.drift_c + s * s * (half * self.sigma * self.sigma);
        match &self.jumps {
            JumpSpec::None => base,
            JumpSpec::Hyperexponential { arrival_rate, weights, rates } => {
                let mut acc = Complex::new(S::zero(), S::zero());
                for (&p, &e) in weights.iter().zip(rates) {
                    acc = acc + (s * p) / (s + e);
                }
                base - acc * *arrival_rate
            }
            JumpSpec::Tabulated { .. } => base + self.cells.iter().map(|c| cell_transform(c, s)).fold(Complex::new(S::zero(), S::zero()), |a, b| a + b),
        }
    }

    /// `psi'(0+) = -E[X_1]`.
    pub fn psi_prime_at_zero(&self) -> S {
        self.drift_c - self.jump_first_moment()
    }

    /// Linear drift magnitude `c-bar`, so that `W_q(0+) = 1 / c-bar` when `sigma = 0`.
    pub fn drift_bar(&self) -> S {
        self.drift_c
    }

    /// Bounded variation iff there is no Gaussian part (all jump families here
    /// have finite activity).
    pub fn is_bounded_variation(&self) -> bool {
        self.sigma == S::zero()
    }

    /// The largest root `Phi_q` of `psi(s) = q`.
    pub fn phi_q(&self, q: S) -> Result<S> {
        if !(q > S::zero()) {
            return Err(Error::domain(format!("phi_q requires q > 0, got {q}")));
        }
        let f = |s: S| self.psi(s) - q;
        let mut lo = S::zero();
        let mut hi = S::one();
        let mut doublings = 0;
        while f(hi) <= S::zero() {
            lo = hi;
            hi = hi + hi;
            doublings += 1;
            if doublings > 1100 || !hi.is_finite() {
                return Err(Error::Convergence("phi_q bracket expansion failed".into()));
            }
        }
        // psi is convex and psi(lo) <= q < psi(hi): safeguarded Newton.
        // Iterate to machine precision; the contract only asks for 1e-12 relative.
        let tol = S::eps() * S::lit(4.0);
        let mut x = hi;
        for _ in 0..200 {
            let fx = f(x);
            if fx == S::zero() {
                return Ok(x);
            }
            if fx > S::zero() {
                hi = x;
            } else {
                lo = x;
            }
            let d = self.psi_prime(x);
            let mut next = if d > S::zero() { x - fx / d } else { (lo + hi) / S::lit(2.0) };
            if !(next > lo && next < hi) {
                next = (lo + hi) / S::lit(2.0);
            }
            if (next - x).abs() <= tol * next.abs().max(S::lit(1e-300)) || hi - lo <= tol * hi {
                return Ok(next);
            }
            x = next;
        }
        Ok((lo + hi) / S::lit(2.0))
    }
}

/// `\int_lo^hi (e^{-s z} - 1)(alpha + beta z) dz` for complex `s`.
fn cell_transform<S: Real>(c: &Cell<S>, s: Complex<S>) -> Complex<S> {
    let zero = Complex::new(S::zero(), S::zero());
    if c.hi <= c.lo {
        return zero;
    }
    let two = S::lit(2.0);
    if s.norm() * c.hi <= S::one() {
        // Power series of e^{-sz} - 1 integrated term by term.
        let mut acc = zero;
        let mut coeff = Complex::new(S::one(), S::zero());
        for k in 1..60 {
            coeff = coeff * (-s) / S::lit(k as f64);
            let kk = k as i32;
            let m = c.alpha * (c.hi.powi(kk + 1) - c.lo.powi(kk + 1)) / S::lit((kk + 1) as f64)
                + c.beta * (c.hi.powi(kk + 2) - c.lo.powi(kk + 2)) / S::lit((kk + 2) as f64);
            let term = coeff * m;
            acc = acc + term;
            if term.norm() <= S::eps() * acc.norm() {
                break;
            }
        }
        return acc;
    }
    let prim = |z: S| {
        let e = (-s * z).exp();
        -(e * (c.alpha + c.beta * z)) / s - e * c.beta / (s * s)
    };
    let mass = c.alpha * (c.hi - c.lo) + c.beta * (c.hi * c.hi - c.lo * c.lo) / two;
    prim(c.hi) - prim(c.lo) - mass
}
