//! Scale functions `W_q`, `Z_q`, `Zbar_q` and the second scale function `Z_q(x, s)`.
//!
//! Two backends are available. The exact backend applies to hyperexponential
//! (and jump-free) models: `psi(s) - q` is rational, its roots `zeta_j` are
//! real and simple, and `W_q(x) = sum_j e^{zeta_j x} / psi'(zeta_j)`. The
//! inversion backend handles any model by inverting Laplace transforms on a
//! fixed hyperbolic-cotangent contour with 64 trapezoid nodes.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::expsum::ExpPoly;
use crate::levy_model::{JumpSpec, SpectrallyPositiveModel};
use crate::quadrature::Integrator;
use crate::scalar::Real;

/// Number of contour nodes of the inversion backend.
pub const INVERSION_NODES: usize = 64;

/// Partial-fraction representation of `W_q`.
#[derive(Debug, Clone)]
pub struct ExactScale<S> {
    q: S,
    roots: Vec<S>,
    coefs: Vec<S>,
    w: ExpPoly<S>,
    w_prime: ExpPoly<S>,
    wbar: ExpPoly<S>,
    z: ExpPoly<S>,
    zbar: ExpPoly<S>,
}

impl<S: Real> ExactScale<S> {
    fn build(model: &SpectrallyPositiveModel<S>, q: S, phi: S) -> Result<Self> {
        let f = |t: S| model.psi(t) - q;
        let mut roots = vec![phi];
        let mut etas: Vec<S> = match model.jumps() {
            JumpSpec::Hyperexponential { rates, .. } => rates.clone(),
            JumpSpec::None => Vec::new(),
            JumpSpec::Tabulated { .. } => {
                return Err(Error::Unsupported("exact backend needs hyperexponential jumps".into()))
            }
        };
        etas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // On each bracket psi - q runs from +inf (left) to a negative value (right).
        let mut brackets: Vec<(S, S)> = Vec::new();
        let mut right = S::zero();
        for &e in &etas {
            brackets.push((-e, right));
            right = -e;
        }
        if model.sigma() > S::zero() {
            let mut width = S::one();
            let mut left = right - width;
            while f(left) <= S::zero() {
                width = width + width;
                left = right - width;
                if !left.is_finite() {
                    return Err(Error::Convergence("root bracket expansion failed".into()));
                }
            }
            brackets.push((left, right));
        }
        for (lo, hi) in brackets {
            roots.push(bisect_decreasing(&f, lo, hi));
        }
        let scale = roots.iter().fold(S::one(), |m, r| m.max(r.abs()));
        for i in 0..roots.len() {
            for j in 0..i {
                if (roots[i] - roots[j]).abs() <= S::lit(1e-10) * scale {
                    return Err(Error::config(
                        "model.jumps.rates",
                        "psi(s) = q has a repeated root; perturb the jump rates",
                    ));
                }
            }
        }
        let coefs: Vec<S> = roots.iter().map(|&r| S::one() / model.psi_prime(r)).collect();
        let mut w = ExpPoly::zero();
        for (&r, &d) in roots.iter().zip(&coefs) {
            w.push(d, 0, r);
        }
        let w_prime = w.derivative();
        let wbar = w.antiderivative_from(S::zero());
        let mut z = wbar.scaled(q);
        z.push(S::one(), 0, S::zero());
        let zbar = z.antiderivative_from(S::zero());
        Ok(Self { q, roots, coefs, w, w_prime, wbar, z, zbar })
    }

    pub fn q(&self) -> S {
        self.q
    }

    /// Roots of `psi(s) = q`, the largest (`Phi_q`) first.
    pub fn roots(&self) -> &[S] {
        &self.roots
    }

    /// Partial-fraction coefficients `1 / psi'(zeta_j)`.
    pub fn coefs(&self) -> &[S] {
        &self.coefs
    }

    /// `W_q` on `[0, inf)` as an exponential sum.
    pub fn w_poly(&self) -> &ExpPoly<S> {
        &self.w
    }

    pub fn w_prime_poly(&self) -> &ExpPoly<S> {
        &self.w_prime
    }

    /// `\int_0^x W_q`.
    pub fn wbar_poly(&self) -> &ExpPoly<S> {
        &self.wbar
    }

    pub fn z_poly(&self) -> &ExpPoly<S> {
        &self.z
    }

    pub fn zbar_poly(&self) -> &ExpPoly<S> {
        &self.zbar
    }

    /// `Z_q(x, s)` on `[0, inf)` for a given `s` with `psi(s) - q = psi_s_minus_q`.
    pub fn z2_poly(&self, s: S, psi_s_minus_q: S) -> ExpPoly<S> {
        let mut p = ExpPoly::exp(S::one(), s);
        if psi_s_minus_q == S::zero() {
            return p;
        }
        for (&r, &d) in self.roots.iter().zip(&self.coefs) {
            if r == s {
                p.push(-psi_s_minus_q * d, 1, s);
            } else {
                let c = psi_s_minus_q * d / (r - s);
                p.push(-c, 0, r);
                p.push(c, 0, s);
            }
        }
        p
    }
}

/// Bisection for a function that is positive left of its root and negative right of it.
fn bisect_decreasing<S: Real, F: Fn(S) -> S>(f: &F, mut lo: S, mut hi: S) -> S {
    let two = S::lit(2.0);
    for _ in 0..400 {
        let mid = (lo + hi) / two;
        if mid <= lo || mid >= hi {
            return mid;
        }
        let v = f(mid);
        if v == S::zero() {
            return mid;
        }
        if v > S::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / two
}

/// Numerical Laplace inversion on a fixed Talbot-type contour.
///
/// Uses `z(theta) = (N / t)(0.5017 theta cot(0.6407 theta) - 0.6122 + 0.2645 i theta)`
/// with the midpoint trapezoid rule on `(-pi, pi)`, `N = 64`, and conjugate
/// symmetry, so each evaluation costs 32 transform calls. Functions growing
/// like `e^{Phi_q x}` are inverted after the shift `s -> s + Phi_q`.
#[derive(Debug, Clone)]
pub struct InversionScale<S> {
    q: S,
    phi: S,
    w0: S,
    model: SpectrallyPositiveModel<S>,
    // (zeta(theta_k), zeta'(theta_k)) for theta_k > 0, scaled by N.
    contour: Vec<(Complex<S>, Complex<S>)>,
}

impl<S: Real> InversionScale<S> {
    fn build(model: &SpectrallyPositiveModel<S>, q: S, phi: S) -> Self {
        let n = INVERSION_NODES;
        let h = 2.0 * std::f64::consts::PI / n as f64;
        let mut contour = Vec::with_capacity(n / 2);
        for k in n / 2..n {
            let th = -std::f64::consts::PI + (k as f64 + 0.5) * h;
            let a = 0.6407 * th;
            let cot = a.cos() / a.sin();
            let z = Complex::new(0.5017 * th * cot - 0.6122, 0.2645 * th);
            let dz = Complex::new(0.5017 * (cot - a / (a.sin() * a.sin())), 0.2645);
            let scale = n as f64;
            contour.push((
                Complex::new(S::lit(z.re * scale), S::lit(z.im * scale)),
                Complex::new(S::lit(dz.re * scale), S::lit(dz.im * scale)),
            ));
        }
        let w0 = if model.is_bounded_variation() { S::one() / model.drift_bar() } else { S::zero() };
        Self { q, phi, w0, model: model.clone(), contour }
    }

    /// Inverts `F(s) = L[e^{-Phi_q x} f(x)](s)` at `t > 0` and multiplies back by `e^{Phi_q t}`.
    fn invert<F: Fn(Complex<S>) -> Complex<S>>(&self, f: F, t: S) -> S {
        let h = S::lit(2.0 * std::f64::consts::PI / INVERSION_NODES as f64);
        let mut acc = S::zero();
        for (z, dz) in &self.contour {
            let s = *z / t;
            let term = (s * t).exp() * f(s) * (*dz / t);
            acc = acc + term.im;
        }
        acc * h / S::PI() * (self.phi * t).exp()
    }

    fn psi_shift(&self, s: Complex<S>) -> (Complex<S>, Complex<S>) {
        let sp = s + self.phi;
        (sp, self.model.psi_complex(sp))
    }

    pub fn w(&self, x: S) -> S {
        if x < S::zero() {
            return S::zero();
        }
        if x == S::zero() {
            return self.w0;
        }
        self.invert(|s| {
            let (_, p) = self.psi_shift(s);
            (p - self.q).inv()
        }, x)
    }

    pub fn z(&self, x: S) -> S {
        if x <= S::zero() {
            return S::one();
        }
        self.invert(|s| {
            let (sp, p) = self.psi_shift(s);
            p / (sp * (p - self.q))
        }, x)
    }

    pub fn zbar(&self, x: S) -> S {
        if x <= S::zero() {
            return x;
        }
        self.invert(|s| {
            let (sp, p) = self.psi_shift(s);
            p / (sp * sp * (p - self.q))
        }, x)
    }

    pub fn z2(&self, x: S, s0: S) -> S {
        if x <= S::zero() {
            return (s0 * x).exp();
        }
        let ps0 = self.model.psi(s0);
        self.invert(|s| {
            let (sp, p) = self.psi_shift(s);
            (p - ps0) / ((sp - s0) * (p - self.q))
        }, x)
    }
}

#[derive(Debug, Clone)]
pub enum Backend<S> {
    Exact(ExactScale<S>),
    Inversion(InversionScale<S>),
}

/// Evaluator for the scale functions of one model at one killing rate.
#[derive(Debug, Clone)]
pub struct ScaleEngine<S> {
    model: SpectrallyPositiveModel<S>,
    q: S,
    phi: S,
    backend: Backend<S>,
}

impl<S: Real> ScaleEngine<S> {
    /// Exact backend when available, inversion otherwise.
    pub fn build(model: &SpectrallyPositiveModel<S>, q: S) -> Result<Self> {
        if !(q > S::zero()) || !q.is_finite() {
            return Err(Error::domain(format!("scale engine requires q > 0, got {q}")));
        }
        let phi = model.phi_q(q)?;
        let backend = match model.jumps() {
            JumpSpec::Tabulated { .. } => Backend::Inversion(InversionScale::build(model, q, phi)),
            _ => Backend::Exact(ExactScale::build(model, q, phi)?),
        };
        Ok(Self { model: model.clone(), q, phi, backend })
    }

    /// Forces the inversion backend (any model).
    pub fn build_inversion(model: &SpectrallyPositiveModel<S>, q: S) -> Result<Self> {
        if !(q > S::zero()) || !q.is_finite() {
            return Err(Error::domain(format!("scale engine requires q > 0, got {q}")));
        }
        let phi = model.phi_q(q)?;
        Ok(Self { model: model.clone(), q, phi, backend: Backend::Inversion(InversionScale::build(model, q, phi)) })
    }

    pub fn model(&self) -> &SpectrallyPositiveModel<S> {
        &self.model
    }

    pub fn q(&self) -> S {
        self.q
    }

    /// Cached `Phi_q`.
    pub fn phi_q(&self) -> S {
        self.phi
    }

    pub fn backend(&self) -> &Backend<S> {
        &self.backend
    }

    pub fn exact(&self) -> Option<&ExactScale<S>> {
        match &self.backend {
            Backend::Exact(e) => Some(e),
            Backend::Inversion(_) => None,
        }
    }

    pub(crate) fn require_exact(&self) -> Result<&ExactScale<S>> {
        self.exact()
            .ok_or_else(|| Error::Unsupported("this operation needs the exact (hyperexponential) backend".into()))
    }

    /// `W_q(0+)`.
    pub fn w_at_zero(&self) -> S {
        if self.model.is_bounded_variation() {
            S::one() / self.model.drift_bar()
        } else {
            S::zero()
        }
    }

    /// `W_q(x)`, zero on the negative half-line and right-continuous at 0.
    pub fn w(&self, x: S) -> S {
        if x < S::zero() {
            return S::zero();
        }
        match &self.backend {
            Backend::Exact(e) => e.w.eval(x),
            Backend::Inversion(i) => i.w(x),
        }
    }

    /// Right derivative `W_q'(x+)` for `x > 0`.
    pub fn w_prime_plus(&self, x: S) -> Result<S> {
        if !(x > S::zero()) {
            return Err(Error::domain(format!("W' requires x > 0, got {x}")));
        }
        Ok(self.w_prime_unchecked(x))
    }

    /// `W_q'` without the domain check: zero for `x < 0`, right limit at 0.
    pub fn w_prime_unchecked(&self, x: S) -> S {
        if x < S::zero() {
            return S::zero();
        }
        match &self.backend {
            Backend::Exact(e) => e.w_prime.eval(x),
            Backend::Inversion(i) => {
                let h = S::lit(1e-6) * x.max(S::one());
                if x > h {
                    (i.w(x + h) - i.w(x - h)) / (h + h)
                } else {
                    (i.w(x + h + h) - i.w(x + h)) / h
                }
            }
        }
    }

    /// `\int_0^x W_q` (zero for `x <= 0`).
    pub fn wbar(&self, x: S) -> S {
        if x <= S::zero() {
            return S::zero();
        }
        match &self.backend {
            Backend::Exact(e) => e.wbar.eval(x),
            Backend::Inversion(i) => (i.z(x) - S::one()) / self.q,
        }
    }

    /// `Z_q(x) = 1 + q \int_0^x W_q`, equal to 1 for `x <= 0`.
    pub fn z(&self, x: S) -> S {
        if x <= S::zero() {
            return S::one();
        }
        match &self.backend {
            Backend::Exact(e) => e.z.eval(x),
            Backend::Inversion(i) => i.z(x),
        }
    }

    /// `Zbar_q(x) = \int_0^x Z_q`, equal to `x` for `x <= 0`.
    pub fn zbar(&self, x: S) -> S {
        if x <= S::zero() {
            return x;
        }
        match &self.backend {
            Backend::Exact(e) => e.zbar.eval(x),
            Backend::Inversion(i) => i.zbar(x),
        }
    }

    /// Second scale function `Z_q(x, s)` for `s >= 0`.
    pub fn z2(&self, x: S, s: S) -> Result<S> {
        if !(s >= S::zero()) {
            return Err(Error::domain(format!("Z_q(x, s) requires s >= 0, got {s}")));
        }
        Ok(self.z2_unchecked(x, s))
    }

    pub(crate) fn z2_unchecked(&self, x: S, s: S) -> S {
        if x <= S::zero() {
            return (s * x).exp();
        }
        match &self.backend {
            Backend::Exact(e) => e.z2_poly(s, self.model.psi(s) - self.q).eval(x),
            Backend::Inversion(i) => i.z2(x, s),
        }
    }

    /// `x`-derivative of `Z_q(x, s)`: `s Z_q(x, s) - (psi(s) - q) W_q(x)`.
    pub fn z2_prime(&self, x: S, s: S) -> S {
        s * self.z2_unchecked(x, s) - (self.model.psi(s) - self.q) * self.w(x)
    }
}

/// `\int_0^y W_p(x + y - z) W_q(z) dz` for engines of one model at rates `p` and `q`.
pub fn conv_w<S: Real>(ep: &ScaleEngine<S>, eq: &ScaleEngine<S>, x: S, y: S) -> S {
    if y <= S::zero() {
        return S::zero();
    }
    let upper = y.min(x + y);
    if upper <= S::zero() {
        return S::zero();
    }
    match (ep.exact(), eq.exact()) {
        (Some(a), Some(b)) => {
            if x >= S::zero() {
                ExpPoly::convolve(a.w_poly(), b.w_poly(), x).eval(y)
            } else {
                ExpPoly::convolve(a.w_poly(), b.w_poly(), S::zero()).eval(x + y)
            }
        }
        _ => {
            let quad = Integrator::default();
            quad.integrate(|z| ep.w(x + y - z) * eq.w(z), S::zero(), upper)
        }
    }
}
