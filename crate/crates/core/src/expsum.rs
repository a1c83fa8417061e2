//! Exponential polynomials `sum_i c_i y^{k_i} e^{r_i y}`.
//!
//! With hyperexponential jumps every scale function is an exponential sum,
//! and so is every quantity built from them by shifting, convolving and
//! multiplying by piecewise-linear payoffs. Terms with bitwise-equal
//! `(k, r)` are merged, which lets the growing modes of long expressions
//! cancel exactly before an integral to infinity is taken.

use crate::scalar::{expm1_over, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term<S> {
    pub coef: S,
    pub pow: u32,
    pub rate: S,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExpPoly<S> {
    terms: Vec<Term<S>>,
}

/// Result of an integral to `+inf`: the convergent part and the largest
/// magnitude of a dropped non-decaying term (zero when the integrand decays).
#[derive(Debug, Clone, Copy)]
pub struct TailIntegral<S> {
    pub value: S,
    pub dropped: S,
}

fn binomial(n: u32, k: u32) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

impl<S: Real> ExpPoly<S> {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn constant(c: S) -> Self {
        let mut p = Self::zero();
        p.push(c, 0, S::zero());
        p
    }

    /// `c e^{r y}`.
    pub fn exp(c: S, r: S) -> Self {
        let mut p = Self::zero();
        p.push(c, 0, r);
        p
    }

    pub fn terms(&self) -> &[Term<S>] {
        &self.terms
    }

    pub fn push(&mut self, coef: S, pow: u32, rate: S) {
        if coef == S::zero() {
            return;
        }
        if let Some(t) = self.terms.iter_mut().find(|t| t.pow == pow && t.rate == rate) {
            t.coef = t.coef + coef;
        } else {
            self.terms.push(Term { coef, pow, rate });
        }
    }

    pub fn eval(&self, y: S) -> S {
        self.terms.iter().map(|t| t.coef * y.powi(t.pow as i32) * (t.rate * y).exp()).sum()
    }

    pub fn scaled(&self, a: S) -> Self {
        Self { terms: self.terms.iter().map(|t| Term { coef: t.coef * a, ..*t }).collect() }
    }

    pub fn add_scaled(&mut self, other: &Self, a: S) {
        for t in &other.terms {
            self.push(t.coef * a, t.pow, t.rate);
        }
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut r = self.clone();
        r.add_scaled(other, S::one());
        r
    }

    pub fn minus(&self, other: &Self) -> Self {
        let mut r = self.clone();
        r.add_scaled(other, -S::one());
        r
    }

    pub fn derivative(&self) -> Self {
        let mut r = Self::zero();
        for t in &self.terms {
            if t.pow > 0 {
                r.push(t.coef * S::lit(t.pow as f64), t.pow - 1, t.rate);
            }
            r.push(t.coef * t.rate, t.pow, t.rate);
        }
        r
    }

    /// `y -> f(y + u)`.
    pub fn shift(&self, u: S) -> Self {
        let mut r = Self::zero();
        for t in &self.terms {
            let base = t.coef * (t.rate * u).exp();
            for i in 0..=t.pow {
                let c = base * S::lit(binomial(t.pow, i)) * u.powi((t.pow - i) as i32);
                r.push(c, i, t.rate);
            }
        }
        r
    }

    /// `y -> (alpha + beta y) f(y)`.
    pub fn mul_linear(&self, alpha: S, beta: S) -> Self {
        let mut r = Self::zero();
        for t in &self.terms {
            r.push(t.coef * alpha, t.pow, t.rate);
            r.push(t.coef * beta, t.pow + 1, t.rate);
        }
        r
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Self) -> Self {
        let mut r = Self::zero();
        for a in &self.terms {
            for b in &other.terms {
                r.push(a.coef * b.coef, a.pow + b.pow, a.rate + b.rate);
            }
        }
        r
    }

    /// `y -> \int_a^y f(t) dt`.
    pub fn antiderivative_from(&self, a: S) -> Self {
        let mut r = Self::zero();
        for t in &self.terms {
            let prim = primitive_terms(t);
            let mut at_a = S::zero();
            for p in &prim {
                r.push(p.coef, p.pow, p.rate);
                at_a = at_a + p.coef * a.powi(p.pow as i32) * (p.rate * a).exp();
            }
            r.push(-at_a, 0, S::zero());
        }
        r
    }

    /// `\int_l^u f(y) dy` for finite `l <= u`.
    pub fn integral(&self, l: S, u: S) -> S {
        if u == l {
            return S::zero();
        }
        let mut total = S::zero();
        for t in &self.terms {
            total = total + term_integral(t, l, u);
        }
        total
    }

    /// `\int_l^inf f(y) dy`, keeping decaying terms only.
    pub fn integral_to_inf(&self, l: S) -> TailIntegral<S> {
        let mut value = S::zero();
        let mut dropped = S::zero();
        for t in &self.terms {
            if t.rate < S::zero() {
                let prim = primitive_terms(t);
                let at_l: S = prim.iter().map(|p| p.coef * l.powi(p.pow as i32) * (p.rate * l).exp()).sum();
                value = value - at_l;
            } else {
                let mag = (t.coef * l.abs().max(S::one()).powi(t.pow as i32) * (t.rate * l).exp()).abs();
                dropped = dropped.max(mag);
            }
        }
        TailIntegral { value, dropped }
    }

    /// Keeps the terms with negative rate and returns them together with the
    /// largest magnitude of a removed coefficient. Use on expressions whose
    /// non-decaying modes cancel analytically.
    pub fn decaying_part(&self) -> (Self, S) {
        let mut kept = Self::zero();
        let mut dropped = S::zero();
        for t in &self.terms {
            if t.rate < S::zero() {
                kept.terms.push(*t);
            } else {
                dropped = dropped.max(t.coef.abs());
            }
        }
        (kept, dropped)
    }

    /// `t -> \int_0^u f(u - z) g(t + z) dz` for pure exponential sums, zero when `u <= 0`.
    pub fn cross(f: &Self, g: &Self, u: S) -> Self {
        let mut r = Self::zero();
        if u <= S::zero() {
            return r;
        }
        for a in &f.terms {
            debug_assert_eq!(a.pow, 0);
            for b in &g.terms {
                debug_assert_eq!(b.pow, 0);
                // `e^{a u} (e^{(b - a) u} - 1) / (b - a)`; the difference form avoids
                // multiplying an underflowed factor by an overflowed one.
                let d = b.rate - a.rate;
                let w = if (d * u).abs() <= S::one() {
                    (a.rate * u).exp() * expm1_over(d, u)
                } else {
                    ((b.rate * u).exp() - (a.rate * u).exp()) / d
                };
                let c = a.coef * b.coef * w;
                r.push(c, 0, b.rate);
            }
        }
        r
    }

    /// `y -> \int_0^y f(u + y - z) g(z) dz` for pure exponential sums
    /// (`pow = 0` in both factors).
    pub fn convolve(f: &Self, g: &Self, u: S) -> Self {
        let mut r = Self::zero();
        for a in &f.terms {
            debug_assert_eq!(a.pow, 0);
            let base = a.coef * (a.rate * u).exp();
            for b in &g.terms {
                debug_assert_eq!(b.pow, 0);
                let c = base * b.coef;
                if a.rate == b.rate {
                    r.push(c, 1, a.rate);
                } else {
                    let d = b.rate - a.rate;
                    r.push(c / d, 0, b.rate);
                    r.push(-c / d, 0, a.rate);
                }
            }
        }
        r
    }
}

/// Antiderivative of `c y^k e^{r y}` as a list of terms.
fn primitive_terms<S: Real>(t: &Term<S>) -> Vec<Term<S>> {
    if t.rate == S::zero() {
        return vec![Term { coef: t.coef / S::lit((t.pow + 1) as f64), pow: t.pow + 1, rate: S::zero() }];
    }
    // e^{ry} sum_i (-1)^i k!/(k-i)! y^{k-i} / r^{i+1}
    let k = t.pow;
    let mut out = Vec::with_capacity(k as usize + 1);
    let mut fall = 1.0;
    for i in 0..=k {
        if i > 0 {
            fall *= (k - i + 1) as f64;
        }
        let sign = if i % 2 == 0 { S::one() } else { -S::one() };
        out.push(Term { coef: t.coef * sign * S::lit(fall) / t.rate.powi(i as i32 + 1), pow: k - i, rate: t.rate });
    }
    out
}

fn term_integral<S: Real>(t: &Term<S>, l: S, u: S) -> S {
    if t.pow == 0 {
        return t.coef * (t.rate * l).exp() * expm1_over(t.rate, u - l);
    }
    if t.rate == S::zero() {
        let n = (t.pow + 1) as i32;
        return t.coef * (u.powi(n) - l.powi(n)) / S::lit(n as f64);
    }
    // Small |r| (u - l) loses accuracy in the closed form; use quadrature there.
    if (t.rate * (u - l)).abs() < S::lit(1e-3) {
        let (x, w) = crate::quadrature::gauss_legendre::<S>(12);
        let mid = (u + l) / S::lit(2.0);
        let half = (u - l) / S::lit(2.0);
        let mut acc = S::zero();
        for (xi, wi) in x.iter().zip(&w) {
            let y = mid + half * *xi;
            acc = acc + *wi * y.powi(t.pow as i32) * (t.rate * y).exp();
        }
        return t.coef * acc * half;
    }
    let prim = primitive_terms(t);
    let at = |y: S| prim.iter().map(|p| p.coef * y.powi(p.pow as i32) * (p.rate * y).exp()).sum::<S>();
    at(u) - at(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::Integrator;

    fn sample() -> ExpPoly<f64> {
        let mut p = ExpPoly::zero();
        p.push(1.5, 0, -0.7);
        p.push(-0.25, 1, 0.3);
        p.push(2.0, 2, -1.1);
        p.push(0.5, 0, 0.0);
        p
    }

    #[test]
    fn integral_matches_quadrature() {
        let p = sample();
        let q = Integrator::<f64>::default();
        let num = q.integrate(|y| p.eval(y), 0.3, 4.2);
        assert!((p.integral(0.3, 4.2) - num).abs() < 1e-12);
        let anti = p.antiderivative_from(0.3);
        assert!((anti.eval(4.2) - num).abs() < 1e-11);
    }

    #[test]
    fn derivative_shift_and_linear() {
        let p = sample();
        let d = p.derivative();
        let h = 1e-5;
        let fd = (p.eval(1.3 + h) - p.eval(1.3 - h)) / (2.0 * h);
        assert!((d.eval(1.3) - fd).abs() < 1e-8);
        assert!((p.shift(0.8).eval(1.1) - p.eval(1.9)).abs() < 1e-13);
        assert!((p.mul_linear(2.0, -0.5).eval(1.7) - (2.0 - 0.85) * p.eval(1.7)).abs() < 1e-13);
    }

    #[test]
    fn convolution_matches_quadrature() {
        let mut f = ExpPoly::<f64>::zero();
        f.push(0.8, 0, 0.9);
        f.push(0.2, 0, -1.3);
        let mut g = ExpPoly::<f64>::zero();
        g.push(0.5, 0, 1.4);
        g.push(-0.1, 0, -1.3);
        let c = ExpPoly::convolve(&f, &g, 0.4);
        let q = Integrator::<f64>::default();
        let y = 1.6;
        let num = q.integrate(|z| f.eval(0.4 + y - z) * g.eval(z), 0.0, y);
        assert!((c.eval(y) - num).abs() < 1e-12);
    }

    #[test]
    fn cross_matches_quadrature() {
        let mut f = ExpPoly::<f64>::zero();
        f.push(0.8, 0, 0.9);
        f.push(0.2, 0, -1.3);
        let mut g = ExpPoly::<f64>::zero();
        g.push(0.5, 0, 1.4);
        g.push(-0.1, 0, 0.9);
        let c = ExpPoly::cross(&f, &g, 0.7);
        let q = Integrator::<f64>::default();
        let t = 1.2;
        let num = q.integrate(|z| f.eval(0.7 - z) * g.eval(t + z), 0.0, 0.7);
        assert!((c.eval(t) - num).abs() < 1e-12);
        assert!(ExpPoly::cross(&f, &g, -0.5).terms().is_empty());
    }

    #[test]
    fn tail_integral_drops_growing_terms() {
        let mut p = ExpPoly::<f64>::zero();
        p.push(2.0, 1, -0.5);
        let t = p.integral_to_inf(1.0);
        assert!((t.value - 2.0 * (-0.5f64).exp() * (1.0 / 0.5 + 1.0 / 0.25)).abs() < 1e-13);
        assert_eq!(t.dropped, 0.0);
    }
}
