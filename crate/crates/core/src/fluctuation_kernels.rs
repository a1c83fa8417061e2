//! Exit and first-passage transforms for the uncontrolled process, the
//! process reflected at 0, and the process observed at Poisson times.
//!
//! Notation: `W`, `Z`, `Zbar` are the `q`-scale functions, `W_g` the
//! `(q + gamma)`-scale function, `Phi = Phi_{q+gamma}`,
//! `Z2(u) = Z_q(u, Phi)` and `Z2'(u) = Phi Z2(u) - gamma W(u)`.

use crate::error::{Error, Result};
use crate::expsum::ExpPoly;
use crate::levy_model::SpectrallyPositiveModel;
use crate::quadrature::Integrator;
use crate::scalar::Real;
use crate::scale_engine::{conv_w, ScaleEngine};

/// Killing rate, observation intensity, barrier and the two scale engines.
#[derive(Debug, Clone)]
pub struct KernelParams<S> {
    q: S,
    gamma: S,
    b: S,
    engine_q: ScaleEngine<S>,
    engine_qg: ScaleEngine<S>,
    phi: S,
}

impl<S: Real> KernelParams<S> {
    pub fn new(model: &SpectrallyPositiveModel<S>, q: S, gamma: S, b: S) -> Result<Self> {
        if !(gamma > S::zero()) || !gamma.is_finite() {
            return Err(Error::config("auxiliary.gamma", "must be > 0"));
        }
        let engine_q = ScaleEngine::build(model, q)?;
        let engine_qg = ScaleEngine::build(model, q + gamma)?;
        Self::from_engines(engine_q, engine_qg, gamma, b)
    }

    /// Reuses prebuilt engines (same model, rates `q` and `q + gamma`).
    pub fn from_engines(engine_q: ScaleEngine<S>, engine_qg: ScaleEngine<S>, gamma: S, b: S) -> Result<Self> {
        if !(b > S::zero()) || !b.is_finite() {
            return Err(Error::config("auxiliary.b", "barrier must be > 0"));
        }
        let q = engine_q.q();
        let tol = S::lit(1e-12) * (q + gamma);
        if (engine_qg.q() - q - gamma).abs() > tol {
            return Err(Error::config("auxiliary.gamma", "engine rates must be q and q + gamma"));
        }
        let phi = engine_qg.phi_q();
        Ok(Self { q, gamma, b, engine_q, engine_qg, phi })
    }

    /// Same engines, different barrier.
    pub fn with_barrier(&self, b: S) -> Result<Self> {
        Self::from_engines(self.engine_q.clone(), self.engine_qg.clone(), self.gamma, b)
    }

    pub fn q(&self) -> S {
        self.q
    }

    pub fn gamma(&self) -> S {
        self.gamma
    }

    pub fn b(&self) -> S {
        self.b
    }

    pub fn engine_q(&self) -> &ScaleEngine<S> {
        &self.engine_q
    }

    pub fn engine_qg(&self) -> &ScaleEngine<S> {
        &self.engine_qg
    }

    pub fn model(&self) -> &SpectrallyPositiveModel<S> {
        self.engine_q.model()
    }

    /// `Phi_{q+gamma}`.
    pub fn phi(&self) -> S {
        self.phi
    }

    /// `Z_q(u, Phi_{q+gamma})`.
    pub fn z2(&self, u: S) -> S {
        self.engine_q.z2_unchecked(u, self.phi)
    }

    /// `Phi Z_q(u, Phi) - gamma W_q(u)`.
    pub fn z2_prime(&self, u: S) -> S {
        self.phi * self.z2(u) - self.gamma * self.engine_q.w(u)
    }

    fn check_inside(&self, x: S, what: &str) -> Result<()> {
        if !(x >= S::zero() && x <= self.b) {
            return Err(Error::domain(format!("{what} requires 0 <= x <= b, got x = {x}, b = {}", self.b)));
        }
        Ok(())
    }

    /// `E_x[e^{-q tau_0^-}; tau_0^- < tau_b^+] = W(b - x) / W(b)`.
    pub fn exit_down(&self, x: S) -> Result<S> {
        self.check_inside(x, "exit_down")?;
        let e = &self.engine_q;
        Ok(e.w(self.b - x) / e.w(self.b))
    }

    /// `E_x[e^{-q tau_b^+}; tau_b^+ < tau_0^-] = Z(b - x) - Z(b) W(b - x) / W(b)`.
    pub fn exit_up(&self, x: S) -> Result<S> {
        self.check_inside(x, "exit_up")?;
        let e = &self.engine_q;
        let u = self.b - x;
        Ok(e.z(u) - e.z(self.b) * e.w(u) / e.w(self.b))
    }

    /// `E_x[e^{-q T_b^+}]` for the first observation epoch at which the
    /// reflected process exceeds `b`.
    pub fn observed_passage_lt(&self, x: S) -> Result<S> {
        self.check_inside(x, "observed_passage_lt")?;
        Ok(self.observed_passage_unchecked(x))
    }

    fn observed_passage_unchecked(&self, x: S) -> S {
        let e = &self.engine_q;
        let (q, g, b) = (self.q, self.gamma, self.b);
        let u = b - x;
        g / (g + q) * (e.z(u) - q * e.w(b) * self.z2(u) / self.z2_prime(b))
    }

    /// `E_x[\int_0^{T_b^+} e^{-q t} dR_t] = Z2(b - x) / Z2'(b)`.
    pub fn injection_until_observed(&self, x: S) -> Result<S> {
        self.check_inside(x, "injection_until_observed")?;
        Ok(self.z2(self.b - x) / self.z2_prime(self.b))
    }

    /// `E_x[e^{-q T_b^+ + theta (b - Y(T_b^+))}]`.
    pub fn joint_observed_transform(&self, x: S, theta: S) -> Result<S> {
        self.check_inside(x, "joint_observed_transform")?;
        if !(theta >= S::zero()) {
            return Err(Error::domain(format!("theta must be >= 0, got {theta}")));
        }
        let e = &self.engine_q;
        let (q, g, b) = (self.q, self.gamma, self.b);
        let psi = self.model().psi(theta);
        let den = q + g - psi;
        if den.abs() <= S::lit(1e-10) * (q + g) {
            return Err(Error::domain(format!(
                "psi(theta) = q + gamma at theta = {theta} (pole); perturb theta"
            )));
        }
        let u = b - x;
        let num = e.z2_unchecked(u, theta)
            + self.z2(u) * (e.w(b) * (psi - q) - theta * e.z2_unchecked(b, theta)) / self.z2_prime(b);
        Ok(g * num / den)
    }

    /// `E_x[e^{-q T_b^+}(b - Y(T_b^+))]`, the theta-derivative of the joint transform at 0.
    pub fn observed_overshoot(&self, x: S) -> Result<S> {
        self.check_inside(x, "observed_overshoot")?;
        Ok(self.observed_overshoot_unchecked(x))
    }

    fn observed_overshoot_unchecked(&self, x: S) -> S {
        let e = &self.engine_q;
        let (q, g, b) = (self.q, self.gamma, self.b);
        let u = b - x;
        let dpsi = self.model().psi_prime_at_zero();
        let zp = self.z2_prime(b);
        let qg = q + g;
        let first = g * dpsi / (qg * qg) * (e.z(u) - self.z2(u) * q * e.w(b) / zp);
        let second = g / qg * (e.zbar(u) - dpsi * e.wbar(u) + self.z2(u) * (e.w(b) * dpsi - e.z(b)) / zp);
        first + second
    }

    /// `E_x[e^{-q sigma_b^+} e^{Phi (b - Y(sigma_b^+))}]` for the process reflected at 0.
    pub fn reflected_passage_exp_transform(&self, x: S) -> Result<S> {
        self.check_inside(x, "reflected_passage_exp_transform")?;
        let e = &self.engine_q;
        let u = self.b - x;
        Ok(self.z2(u) - e.w(u) / e.w_prime_unchecked(self.b) * self.z2_prime(self.b))
    }

    /// `E_x[e^{-q sigma_b^+} W_{q+gamma}(b - Y(sigma_b^+) + y)]` for the process reflected at 0.
    pub fn reflected_scale_at_passage(&self, x: S, y: S) -> Result<S> {
        if !(x > S::zero() && x < self.b) {
            return Err(Error::domain(format!("reflected_scale_at_passage requires 0 < x < b, got {x}")));
        }
        if !(y > S::zero()) {
            return Err(Error::domain(format!("reflected_scale_at_passage requires y > 0, got {y}")));
        }
        let e = &self.engine_q;
        let eg = &self.engine_qg;
        let (g, b) = (self.gamma, self.b);
        let u = b - x;
        let first = e.w(u + y) + g * conv_w(e, eg, u, y);
        let second = e.w_prime_unchecked(b + y) + g * self.conv_wprime_wg(b, y);
        Ok(first - e.w(u) / e.w_prime_unchecked(b) * second)
    }

    /// `\int_0^y W_q'(u + y - z) W_{q+gamma}(z) dz` for `u >= 0`.
    fn conv_wprime_wg(&self, u: S, y: S) -> S {
        match (self.engine_q.exact(), self.engine_qg.exact()) {
            (Some(a), Some(bq)) => ExpPoly::convolve(a.w_prime_poly(), bq.w_poly(), u).eval(y),
            _ => Integrator::default()
                .integrate(|z| self.engine_q.w_prime_unchecked(u + y - z) * self.engine_qg.w(z), S::zero(), y),
        }
    }

    /// `E_x[e^{-q kappa}]` where `kappa` is the first time the dividend-controlled
    /// process without injection goes below 0. Valid for all `x > 0`.
    pub fn killed_passage_lt(&self, x: S) -> Result<S> {
        if !(x > S::zero()) {
            return Err(Error::domain(format!("killed_passage_lt requires x > 0, got {x}")));
        }
        Ok(self.killed_passage_unchecked(x))
    }

    pub(crate) fn killed_passage_unchecked(&self, x: S) -> S {
        let c = self.killing_numerator(x);
        c / self.killing_numerator(S::zero())
    }

    /// `gamma Z(b - x) + q Z2(b - x)`.
    pub(crate) fn killing_numerator(&self, x: S) -> S {
        let u = self.b - x;
        self.gamma * self.engine_q.z(u) + self.q * self.z2(u)
    }
}
