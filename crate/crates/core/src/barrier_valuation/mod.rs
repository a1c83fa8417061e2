//! Value of the double barrier strategy: pay the excess over `b` at Poisson
//! observation times and inject capital continuously to keep the surplus at
//! or above `0`, with a terminal payoff `omega` received at an independent
//! exponential time of rate `lambda`.
//!
//! All integrals against `omega` are exact: scale functions of the
//! hyperexponential models are exponential sums, and `omega` is piecewise
//! linear. Expressions integrated up to infinity have growing modes that
//! cancel analytically; they are removed before integration.

pub mod measure;
pub mod payoff;

pub use measure::{integrate_against, integrate_plain, Piece, PotentialMeasure, Weight};
pub use payoff::{PayoffFunction, Segment};

use crate::error::{Error, Result};
use crate::expsum::ExpPoly;
use crate::fluctuation_kernels::KernelParams;
use crate::levy_model::SpectrallyPositiveModel;
use crate::quadrature::Integrator;
use crate::scalar::Real;

/// Exponential sums that do not depend on the starting point.
#[derive(Debug, Clone)]
struct Cache<S> {
    w: ExpPoly<S>,
    w_prime: ExpPoly<S>,
    z: ExpPoly<S>,
    wg: ExpPoly<S>,
    wbar_g: ExpPoly<S>,
    /// `y -> W(b + y) + gamma \int_0^y W(b + y - z) W_g(z) dz`
    a: ExpPoly<S>,
    /// `v -> \int_0^v Z(v - z) W_g(z) dz`
    conv_z_wg: ExpPoly<S>,
    /// `\int_0^b omega'_+(y) W(y) dy`
    i1: S,
    z2b: S,
    wb: S,
    /// `gamma Z(b) - phi (q + gamma)`
    kb: S,
}

/// Model, rates, injection cost, payoff and barrier of one double barrier strategy.
#[derive(Debug, Clone)]
pub struct ValuationContext<S> {
    params: KernelParams<S>,
    phi: S,
    lambda: S,
    delta: S,
    omega: PayoffFunction<S>,
    cache: Cache<S>,
}

/// Output of [`ValuationContext::hjb_residual`].
#[derive(Debug, Clone, Copy)]
pub struct HjbResidual<S> {
    /// `(A - q)V(x) + lambda omega(x) + gamma max_z (z + V(x - z) - V(x))`
    pub generator: S,
    /// `V'(x) - phi`
    pub obstacle: S,
    /// Maximizer of the observation term on the search grid.
    pub argmax: S,
    /// Maximum of the observation term.
    pub max_term: S,
}

impl<S: Real> ValuationContext<S> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: &SpectrallyPositiveModel<S>,
        delta: S,
        lambda: S,
        gamma: S,
        phi: S,
        b: S,
        omega: PayoffFunction<S>,
    ) -> Result<Self> {
        check_rates(delta, lambda, phi)?;
        let params = KernelParams::new(model, delta + lambda, gamma, b)?;
        Self::from_params(params, delta, lambda, phi, omega)
    }

    /// Uses prebuilt kernel parameters whose rate must equal `delta + lambda`.
    pub fn from_params(params: KernelParams<S>, delta: S, lambda: S, phi: S, omega: PayoffFunction<S>) -> Result<Self> {
        check_rates(delta, lambda, phi)?;
        let q = delta + lambda;
        if (params.q() - q).abs() > S::lit(1e-12) * q {
            return Err(Error::config("auxiliary.lambda", "kernel rate must equal delta + lambda"));
        }
        if omega.first_slope() > phi * (S::one() + S::lit(1e-12)) {
            return Err(Error::config("auxiliary.omega", "first slope must not exceed phi"));
        }
        params.engine_q().require_exact()?;
        params.engine_qg().require_exact()?;
        let cache = build_cache(&params, phi, &omega);
        Ok(Self { params, phi, lambda, delta, omega, cache })
    }

    /// Same problem with a different barrier.
    pub fn with_barrier(&self, b: S) -> Result<Self> {
        let params = self.params.with_barrier(b)?;
        Self::from_params(params, self.delta, self.lambda, self.phi, self.omega.clone())
    }

    /// Same problem with a different payoff.
    pub fn with_omega(&self, omega: PayoffFunction<S>) -> Result<Self> {
        Self::from_params(self.params.clone(), self.delta, self.lambda, self.phi, omega)
    }

    pub fn params(&self) -> &KernelParams<S> {
        &self.params
    }

    pub fn model(&self) -> &SpectrallyPositiveModel<S> {
        self.params.model()
    }

    pub fn phi(&self) -> S {
        self.phi
    }

    pub fn lambda(&self) -> S {
        self.lambda
    }

    pub fn delta(&self) -> S {
        self.delta
    }

    pub fn q(&self) -> S {
        self.params.q()
    }

    pub fn gamma(&self) -> S {
        self.params.gamma()
    }

    pub fn b(&self) -> S {
        self.params.b()
    }

    pub fn omega(&self) -> &PayoffFunction<S> {
        &self.omega
    }

    fn big_phi(&self) -> S {
        self.params.phi()
    }

    fn z2(&self, u: S) -> S {
        self.params.z2(u)
    }

    fn z(&self, u: S) -> S {
        self.params.engine_q().z(u)
    }

    /// `q Z2(b - x) + gamma Z(b - x)`.
    fn c_of(&self, x: S) -> S {
        self.params.killing_numerator(x)
    }

    /// Expected discounted dividends minus `phi` times injections, for `x >= 0`.
    pub fn net_dividend_value(&self, x: S) -> Result<S> {
        if !(x >= S::zero()) {
            return Err(Error::domain(format!("net_dividend_value requires x >= 0, got {x}")));
        }
        Ok(self.net_dividend_unchecked(x))
    }

    fn net_dividend_unchecked(&self, x: S) -> S {
        let (q, g) = (self.q(), self.gamma());
        let u = self.b() - x;
        let e = self.params.engine_q();
        let dpsi = self.model().psi_prime_at_zero();
        let c = &self.cache;
        -g / (q + g) * (e.zbar(u) + dpsi / q)
            + c.kb * (self.z2(u) + g / q * e.z(u)) / ((q + g) * self.big_phi() * c.z2b)
    }

    /// `f(b)` in closed form.
    pub fn net_dividend_at_barrier(&self) -> S {
        let (q, g) = (self.q(), self.gamma());
        let dpsi = self.model().psi_prime_at_zero();
        self.cache.kb / (q * self.big_phi() * self.cache.z2b) - g * dpsi / (q * (q + g))
    }

    /// `f(x)` through the strong Markov property: at the first observation or
    /// passage below `b` for `x > b`, and through the observed passage kernels
    /// for `x <= b`.
    pub fn net_dividend_by_branch(&self, x: S) -> Result<S> {
        if !(x >= S::zero()) {
            return Err(Error::domain(format!("net_dividend_by_branch requires x >= 0, got {x}")));
        }
        let (q, g, b) = (self.q(), self.gamma(), self.b());
        let fb = self.net_dividend_at_barrier();
        if x > b {
            let d = x - b;
            let dpsi = self.model().psi_prime_at_zero();
            let e = (-self.big_phi() * d).exp();
            let qg = q + g;
            Ok(g / qg * (d - dpsi / qg * (S::one() - e)) + (g / qg + q / qg * e) * fb)
        } else {
            let p = &self.params;
            Ok(-self.phi * p.injection_until_observed(x)? + p.observed_passage_lt(x)? * fb - p.observed_overshoot(x)?)
        }
    }

    /// Value of the strategy at any real `x`; `phi x + V(0)` for `x < 0`.
    pub fn value_double_barrier(&self, x: S) -> S {
        if x < S::zero() {
            return self.phi * x + self.value_formula(S::zero());
        }
        if x <= self.b() {
            self.value_formula(x)
        } else {
            self.value_above_barrier(x)
        }
    }

    /// Closed-form value for `x >= 0` as a single expression in the scale
    /// functions. Above the barrier it involves modes of size
    /// `e^{Phi (x - b)}` that cancel, so [`Self::value_double_barrier`] uses it
    /// on `[0, b]` only.
    pub fn value_formula(&self, x: S) -> S {
        let (q, g, b, lam) = (self.q(), self.gamma(), self.b(), self.lambda);
        let c = &self.cache;
        let u = b - x;
        let cx = self.c_of(x);
        let scale = self.big_phi() * c.z2b;
        let t1 = self.net_dividend_unchecked(x);
        let t2 = lam * self.omega.eval(b) / q * self.z(u);
        let t3 = if x < b {
            -lam * integrate_against(&[Piece::finite(x, b, c.w.clone()).at(x)], &self.omega, S::zero(), Weight::Value)
        } else {
            S::zero()
        };
        let t4 = -lam * cx / (q * scale) * c.i1;
        let a_c = c.a.scaled(cx);
        let pieces = if u >= S::zero() {
            let gq = c.z.shift(u).plus(&ExpPoly::convolve(&c.z, &c.wg, u).scaled(g));
            vec![Piece::tail(S::zero(), &a_c.minus(&gq.scaled(scale)))]
        } else {
            let mut near = c.wbar_g.scaled(g);
            near.push(S::one(), 0, S::zero());
            let conv = c.conv_z_wg.shift(u).plus(&c.wbar_g).minus(&c.wbar_g.shift(u));
            let far = c.z.shift(u).plus(&conv.scaled(g));
            vec![
                Piece::finite(S::zero(), -u, a_c.minus(&near.scaled(scale))),
                Piece::tail(-u, &a_c.minus(&far.scaled(scale))),
            ]
        };
        let t5 = -lam / (q * scale) * integrate_against(&pieces, &self.omega, b, Weight::Slope);
        t1 + t2 + t3 + t4 + t5
    }

    /// Value for `x > b` from the first observation or passage below `b`:
    /// `V(x) = \int_b^inf k(x, y) (gamma (y - b + V(b)) + lambda omega(y)) dy + e^{-Phi (x - b)} V(b)`
    /// with `k(x, y) = e^{-Phi (x - b)} W_g(y - b) - W_g(y - x)`.
    fn value_above_barrier(&self, x: S) -> S {
        let (g, b, lam) = (self.gamma(), self.b(), self.lambda);
        let c = &self.cache;
        let vb = self.value_formula(b);
        let e = (-self.big_phi() * (x - b)).exp();
        let near = c.wg.scaled(e);
        let far = near.shift(x - b).minus(&c.wg);
        let pieces = vec![Piece::finite(b, x, near).at(b), Piece::tail(x, &far).at(x)];
        let lin: Vec<Piece<S>> = pieces
            .iter()
            .map(|p| Piece { poly: p.poly.mul_linear(vb - b + p.origin, S::one()), ..p.clone() })
            .collect();
        lam * integrate_against(&pieces, &self.omega, S::zero(), Weight::Value) + g * integrate_plain(&lin) + e * vb
    }

    /// `f(x) + (lambda / q) \int omega d mu_x` with `mu_x` the potential measure.
    pub fn value_via_potential(&self, x: S) -> Result<S> {
        let m = self.double_barrier_measure(x)?;
        Ok(self.net_dividend_unchecked(x) + self.lambda / self.q() * m.integrate_omega(&self.omega))
    }

    /// `V'(x)`; equals `phi` for `x < 0` and is the right limit at `0`.
    pub fn value_derivative(&self, x: S) -> S {
        if x < S::zero() {
            self.phi
        } else if x <= self.b() {
            self.derivative_inner(x)
        } else {
            self.derivative_outer(x)
        }
    }

    /// Derivative formula for `x` in `[0, b]`.
    pub fn derivative_inner(&self, x: S) -> S {
        let (q, g, b, lam) = (self.q(), self.gamma(), self.b(), self.lambda);
        let c = &self.cache;
        let u = b - x;
        let z2u = self.z2(u);
        let d1 = g / (q + g) * self.z(u) - c.kb / ((q + g) * c.z2b) * z2u;
        let d2 = if x < b {
            -lam * integrate_against(&[Piece::finite(x, b, c.w.clone()).at(x)], &self.omega, S::zero(), Weight::Slope)
        } else {
            S::zero()
        };
        let d3 = z2u / c.z2b * lam * c.i1;
        let hw = c.w.shift(u).plus(&ExpPoly::convolve(&c.w, &c.wg, u).scaled(g));
        let f = c.a.scaled(z2u).minus(&hw.scaled(c.z2b));
        let d4 = lam / c.z2b * integrate_against(&[Piece::tail(S::zero(), &f)], &self.omega, b, Weight::Slope);
        d1 + d2 + d3 + d4
    }

    /// Derivative formula for `x >= b`.
    pub fn derivative_outer(&self, x: S) -> S {
        let (q, g, b, lam) = (self.q(), self.gamma(), self.b(), self.lambda);
        let c = &self.cache;
        let d = x - b;
        let e = (-self.big_phi() * d).exp();
        let d1 = g / (q + g) - c.kb * e / ((q + g) * c.z2b);
        let d3 = e / c.z2b * lam * c.i1;
        let ae = c.a.scaled(e);
        let mut pieces = Vec::with_capacity(2);
        if d > S::zero() {
            pieces.push(Piece::finite(S::zero(), d, ae.clone()));
        }
        pieces.push(Piece::tail(d, &ae.shift(d).minus(&c.wg.scaled(c.z2b))).at(d));
        let d4 = lam / c.z2b * integrate_against(&pieces, &self.omega, b, Weight::Slope);
        d1 + d3 + d4
    }

    /// Law of the controlled surplus at an independent exponential time of rate `q`.
    pub fn double_barrier_measure(&self, x: S) -> Result<PotentialMeasure<S>> {
        if !(x >= S::zero()) {
            return Err(Error::domain(format!("potential measure requires x >= 0, got {x}")));
        }
        let (q, g, b) = (self.q(), self.gamma(), self.b());
        let c = &self.cache;
        let u = b - x;
        let k = self.c_of(x) / (self.big_phi() * c.z2b);
        let atom = k * self.params.engine_q().w_at_zero();
        let mut pieces = Vec::with_capacity(4);
        let inner = c.w_prime.scaled(k);
        if x < b {
            if x > S::zero() {
                pieces.push(Piece::finite(S::zero(), x, inner.clone()));
            }
            pieces.push(Piece::finite(x, b, inner.shift(x).minus(&c.w.scaled(q))).at(x));
        } else {
            pieces.push(Piece::finite(S::zero(), b, inner));
        }
        // Beyond `b` the density is kept in coordinates relative to `b`, and
        // beyond `x > b` relative to `x`.
        let bracket =
            c.wg.scaled(g * c.wb).plus(&c.w_prime.shift(b)).plus(&ExpPoly::convolve(&c.w_prime, &c.wg, b).scaled(g));
        let base = bracket.scaled(k).minus(&c.wg.scaled(g * self.z(u)));
        // `\int_0^{y-b} W(y - x - z) W_g(z) dz`: for x > b the integrand vanishes beyond y - x.
        if x <= b {
            let sub = c.w.shift(u).plus(&ExpPoly::convolve(&c.w, &c.wg, u).scaled(g)).scaled(q);
            pieces.push(Piece::tail(b, &base.minus(&sub)).at(b));
        } else {
            let sub = c.w.plus(&ExpPoly::convolve(&c.w, &c.wg, S::zero()).scaled(g)).scaled(q);
            let tail = Piece::tail(x, &base.shift(x - b).minus(&sub)).at(x);
            pieces.push(Piece::finite(b, x, base).at(b));
            pieces.push(tail);
        }
        Ok(PotentialMeasure::new(atom, pieces))
    }

    /// Atom at `0` and density at `y` of the double barrier potential measure.
    pub fn potential_density_double(&self, x: S, y: S) -> Result<(S, S)> {
        if !(y >= S::zero()) || y == self.b() {
            return Err(Error::domain(format!("density requires y >= 0 and y != b, got {y}")));
        }
        let m = self.double_barrier_measure(x)?;
        Ok((m.atom(), m.density(y)))
    }

    /// Law of the single barrier (dividends only) process at an exponential
    /// time of rate `q`, on the event that it has not gone below `0`.
    pub fn single_barrier_measure(&self, x: S) -> Result<PotentialMeasure<S>> {
        if !(x > S::zero()) {
            return Err(Error::domain(format!("single barrier measure requires x > 0, got {x}")));
        }
        let (q, b) = (self.q(), self.b());
        let g = self.gamma();
        let c = &self.cache;
        let u = b - x;
        let lt = self.params.killed_passage_unchecked(x);
        let mut pieces = Vec::with_capacity(4);
        let inner = c.w.scaled(lt * q);
        if x < b {
            pieces.push(Piece::finite(S::zero(), x, inner.clone()));
            pieces.push(Piece::finite(x, b, inner.shift(x).minus(&c.w.scaled(q))).at(x));
        } else {
            pieces.push(Piece::finite(S::zero(), b, inner));
        }
        let term_x = c.wg.scaled(self.z2(u)).plus(&ExpPoly::cross(&c.w, &c.wg, u).scaled(g));
        let term_b = c.wg.shift(b).minus(&c.wg.scaled(c.z2b)).minus(&ExpPoly::cross(&c.w, &c.wg, b).scaled(g));
        let base = term_x.plus(&term_b.scaled(lt)).scaled(q);
        if x <= b {
            pieces.push(Piece::tail(b, &base.minus(&c.wg.shift(u).scaled(q))).at(b));
        } else {
            let tail = Piece::tail(x, &base.shift(x - b).minus(&c.wg.scaled(q))).at(x);
            pieces.push(Piece::finite(b, x, base).at(b));
            pieces.push(tail);
        }
        Ok(PotentialMeasure::new(S::zero(), pieces))
    }

    /// Density at `y` of the single barrier potential measure.
    pub fn single_barrier_potential(&self, x: S, y: S) -> Result<S> {
        if !(y > S::zero()) || y == self.b() {
            return Err(Error::domain(format!("density requires y > 0 and y != b, got {y}")));
        }
        Ok(self.single_barrier_measure(x)?.density(y))
    }

    /// `E_x[e^{-q kappa}]` for the first passage below `0` of the single barrier process.
    pub fn killed_passage_lt(&self, x: S) -> Result<S> {
        self.params.killed_passage_lt(x)
    }

    /// `phi - 1 - E_b[\int_0^kappa e^{-q t}(q phi - lambda omega'_+(U_t)) dt]`.
    pub fn barrier_root_value(&self) -> S {
        let lt = self.params.killed_passage_unchecked(self.b());
        let m = self.single_barrier_measure(self.b()).expect("b > 0");
        self.phi * lt - S::one() + self.lambda / self.q() * m.integrate_slope(&self.omega)
    }

    /// `V'(b)` from the single barrier quantities.
    pub fn derivative_at_barrier(&self) -> S {
        let lt = self.params.killed_passage_unchecked(self.b());
        self.barrier_root_value() / (lt * self.cache.z2b) + S::one()
    }

    /// Residuals of the variational inequality at `x > 0`, `x != b`.
    ///
    /// Derivatives of `V` use five-point stencils with step `1e-4 max(1, x)`;
    /// the jump integral uses adaptive Gauss-Legendre quadrature split at `b - x`.
    pub fn hjb_residual(&self, x: S) -> Result<HjbResidual<S>> {
        if !(x > S::zero()) || x == self.b() {
            return Err(Error::domain(format!("hjb_residual requires x > 0 and x != b, got {x}")));
        }
        let m = self.model();
        let (q, g) = (self.q(), self.gamma());
        let h = S::lit(1e-4) * x.max(S::one());
        let v = |t: S| self.value_double_barrier(t);
        let (vm2, vm1, v0, vp1, vp2) = (v(x - h - h), v(x - h), v(x), v(x + h), v(x + h + h));
        let twelve = S::lit(12.0);
        let d1 = (vm2 - vp2 + S::lit(8.0) * (vp1 - vm1)) / (twelve * h);
        let d2 = (-vp2 + S::lit(16.0) * (vp1 + vm1) - S::lit(30.0) * v0 - vm2) / (twelve * h * h);
        let sig = m.sigma();
        let jumps = self.jump_integral(x, v0);
        let generator_part = sig * sig / S::lit(2.0) * d2 - m.drift_c() * d1 + jumps - q * v0;
        let (argmax, max_term) = self.observation_max(x, v0);
        let generator = generator_part + self.lambda * self.omega.eval(x) + g * max_term;
        Ok(HjbResidual { generator, obstacle: self.value_derivative(x) - self.phi, argmax, max_term })
    }

    fn jump_integral(&self, x: S, vx: S) -> S {
        let m = self.model();
        if m.jump_intensity() == S::zero() {
            return S::zero();
        }
        let zmax = match m.jumps() {
            crate::levy_model::JumpSpec::Hyperexponential { rates, .. } => {
                S::lit(60.0) / rates.iter().fold(S::infinity(), |a, &r| a.min(r))
            }
            crate::levy_model::JumpSpec::Tabulated { z, .. } => *z.last().unwrap(),
            crate::levy_model::JumpSpec::None => S::zero(),
        };
        let mut breaks = vec![self.b() - x];
        if let crate::levy_model::JumpSpec::Tabulated { z, .. } = m.jumps() {
            breaks.extend(z.iter().copied());
        }
        Integrator::default().integrate_with_breaks(
            |z| (self.value_double_barrier(x + z) - vx) * m.levy_density(z),
            S::zero(),
            zmax,
            &breaks,
        )
    }

    /// `max_{0 <= z <= x} (z + V(x - z) - V(x))` on a grid containing `0`, `x` and `x - b`.
    fn observation_max(&self, x: S, vx: S) -> (S, S) {
        let n = 400;
        // The candidate (x - b)^+ goes first so that grid points equal to it
        // up to rounding do not displace it.
        let head = if x > self.b() { x - self.b() } else { S::zero() };
        let grid = (1..=n).map(|i| x * S::lit(i as f64 / n as f64));
        let mut best = (head, head + self.value_double_barrier(x - head) - vx);
        for z in grid {
            let val = z + self.value_double_barrier(x - z) - vx;
            if val > best.1 {
                best = (z, val);
            }
        }
        best
    }
}

fn check_rates<S: Real>(delta: S, lambda: S, phi: S) -> Result<()> {
    if !(delta >= S::zero()) || !delta.is_finite() {
        return Err(Error::config("auxiliary.delta", "must be finite and >= 0"));
    }
    if !(lambda > S::zero()) || !lambda.is_finite() {
        return Err(Error::config("auxiliary.lambda", "must be finite and > 0"));
    }
    if !(phi > S::one()) || !phi.is_finite() {
        return Err(Error::config("auxiliary.phi", "injection cost must be finite and > 1"));
    }
    Ok(())
}

fn build_cache<S: Real>(params: &KernelParams<S>, phi: S, omega: &PayoffFunction<S>) -> Cache<S> {
    let eq = params.engine_q().exact().expect("exact backend checked");
    let eg = params.engine_qg().exact().expect("exact backend checked");
    let (q, g, b) = (params.q(), params.gamma(), params.b());
    let w = eq.w_poly().clone();
    let wg = eg.w_poly().clone();
    let a = w.shift(b).plus(&ExpPoly::convolve(&w, &wg, b).scaled(g));
    let conv_z_wg = ExpPoly::convolve(eq.z_poly(), &wg, S::zero());
    let i1 = integrate_against(&[Piece::finite(S::zero(), b, w.clone())], omega, S::zero(), Weight::Slope);
    let zb = params.engine_q().z(b);
    Cache {
        w_prime: eq.w_prime_poly().clone(),
        z: eq.z_poly().clone(),
        wbar_g: eg.wbar_poly().clone(),
        a,
        conv_z_wg,
        i1,
        z2b: params.z2(b),
        wb: params.engine_q().w(b),
        kb: g * zb - phi * (q + g),
        w,
        wg,
    }
}
