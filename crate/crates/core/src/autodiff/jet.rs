use std::ops::{Add, Mul, Neg, Sub};

use super::Real;
use crate::error::{Error, Result};

/// Truncated second-order Taylor expansion in one scalar seed variable.
///
/// `d1` and `d2` are the first and second derivatives (not Taylor
/// coefficients) of the represented quantity with respect to the seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2<T = f64> {
    pub value: T,
    pub d1: T,
    pub d2: T,
}

/// Seeds a jet at `rho`: value `rho`, unit first derivative.
pub fn jet_lift(rho: f64) -> Jet2<f64> {
    Jet2::new(rho, 1.0, 0.0)
}

impl<T: Real> Jet2<T> {
    pub fn new(value: T, d1: T, d2: T) -> Self {
        Jet2 { value, d1, d2 }
    }

    pub fn constant(value: T) -> Self {
        Jet2 {
            value,
            d1: T::zero(),
            d2: T::zero(),
        }
    }

    pub fn scale(self, c: f64) -> Self {
        Jet2::new(self.value * c, self.d1 * c, self.d2 * c)
    }

    /// Product with a jet of plain numbers (for known radial factors).
    pub fn mul_f64(self, b: Jet2<f64>) -> Self {
        Jet2::new(
            self.value * b.value,
            self.d1 * b.value + self.value * b.d1,
            self.d2 * b.value + self.d1 * (2.0 * b.d1) + self.value * b.d2,
        )
    }

    pub fn add_f64(self, c: f64) -> Self {
        Jet2::new(self.value + c, self.d1, self.d2)
    }

    pub fn tanh(self) -> Self {
        let t = self.value.tanh();
        let u = -(t * t) + 1.0;
        Jet2::new(t, u * self.d1, u * self.d2 - t * u * self.d1.square() * 2.0)
    }

    pub fn sqrt(self) -> Self {
        let r = self.value.sqrt();
        let r1 = self.d1 / (r * 2.0);
        let r2 = (self.d2 - r1.square() * 2.0) / (r * 2.0);
        Jet2::new(r, r1, r2)
    }

    pub fn powi(self, n: u32) -> Self {
        match n {
            0 => Jet2::constant(T::constant(1.0)),
            1 => self,
            _ => {
                let nf = n as f64;
                let pm2 = pow_u(self.value, n - 2);
                let pm1 = pm2 * self.value;
                Jet2::new(
                    pm1 * self.value,
                    pm1 * self.d1 * nf,
                    pm1 * self.d2 * nf + pm2 * self.d1.square() * (nf * (nf - 1.0)),
                )
            }
        }
    }

    pub fn try_div(self, b: Self) -> Result<Self> {
        if b.value.value() == 0.0 {
            return Err(Error::ZeroDivision);
        }
        let q0 = self.value / b.value;
        let q1 = (self.d1 - q0 * b.d1) / b.value;
        let q2 = (self.d2 - q1 * b.d1 * 2.0 - q0 * b.d2) / b.value;
        Ok(Jet2::new(q0, q1, q2))
    }
}

fn pow_u<T: Real>(x: T, n: u32) -> T {
    let mut acc = T::constant(1.0);
    for _ in 0..n {
        acc = acc * x;
    }
    acc
}

impl<T: Real> Add for Jet2<T> {
    type Output = Self;
    fn add(self, b: Self) -> Self {
        Jet2::new(self.value + b.value, self.d1 + b.d1, self.d2 + b.d2)
    }
}

impl<T: Real> Sub for Jet2<T> {
    type Output = Self;
    fn sub(self, b: Self) -> Self {
        Jet2::new(self.value - b.value, self.d1 - b.d1, self.d2 - b.d2)
    }
}

impl<T: Real> Mul for Jet2<T> {
    type Output = Self;
    fn mul(self, b: Self) -> Self {
        Jet2::new(
            self.value * b.value,
            self.d1 * b.value + self.value * b.d1,
            self.d2 * b.value + self.d1 * b.d1 * 2.0 + self.value * b.d2,
        )
    }
}

impl<T: Real> Neg for Jet2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Jet2::new(-self.value, -self.d1, -self.d2)
    }
}

impl<T: Real> Mul<f64> for Jet2<T> {
    type Output = Self;
    fn mul(self, c: f64) -> Self {
        self.scale(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn tanh_at_zero() {
        assert_eq!(jet_lift(0.0).tanh(), Jet2::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn input_map_jet() {
        let r = jet_lift(0.5);
        let f = (r * r).scale(2.0).add_f64(-1.0);
        assert_eq!(f, Jet2::new(-0.5, 2.0, 4.0));
    }

    #[test]
    fn cube() {
        let r = jet_lift(2.0);
        assert_eq!(r.powi(3), Jet2::new(8.0, 12.0, 12.0));
        assert_eq!(r * r * r, Jet2::new(8.0, 12.0, 12.0));
    }

    #[test]
    fn division_by_zero_jet() {
        let one = Jet2::constant(1.0);
        assert!(matches!(
            one.try_div(Jet2::constant(0.0)),
            Err(Error::ZeroDivision)
        ));
    }

    proptest! {
        // g(h(x)) with h(x) = sqrt(1 + x^2) and g(u) = tanh(u) * u^3 / (2 + u)
        #[test]
        fn chain_rule_matches_symbolic(x in -2.0f64..2.0) {
            let j = jet_lift(x);
            let h = (j * j).add_f64(1.0).sqrt();
            let g = h.tanh() * h.powi(3);
            let g = g.try_div(h.add_f64(2.0)).unwrap();

            let hv = (1.0 + x * x).sqrt();
            let h1 = x / hv;
            let h2 = 1.0 / (hv * hv * hv);
            let t = hv.tanh();
            let gf = |u: f64| u.tanh() * u.powi(3) / (2.0 + u);
            let dgf = |u: f64| {
                let t = u.tanh();
                let num = ((1.0 - t * t) * u.powi(3) + 3.0 * t * u * u) * (2.0 + u) - t * u.powi(3);
                num / ((2.0 + u) * (2.0 + u))
            };
            // second derivative of g by differentiating dgf symbolically via product structure
            let ddgf = |u: f64| {
                let t = u.tanh();
                let s = 1.0 - t * t;
                let p = s * u.powi(3) + 3.0 * t * u * u;
                let dp = -2.0 * t * s * u.powi(3) + 3.0 * s * u * u + 3.0 * s * u * u + 6.0 * t * u;
                let q = 2.0 + u;
                let num = p * q - t * u.powi(3);
                let dnum = dp * q + p - (s * u.powi(3) + 3.0 * t * u * u);
                (dnum * q * q - num * 2.0 * q) / q.powi(4)
            };
            let _ = t;
            let v = gf(hv);
            let d1 = dgf(hv) * h1;
            let d2 = ddgf(hv) * h1 * h1 + dgf(hv) * h2;
            prop_assert!(close(g.value, v, 1e-12));
            prop_assert!(close(g.d1, d1, 1e-12));
            prop_assert!(close(g.d2, d2, 1e-12));
        }

        #[test]
        fn leibniz_rule(a in -3.0f64..3.0, b in 0.1f64..3.0) {
            // (sin-free) f = (x + a)^2, g = sqrt(x + b): (fg)'' = f''g + 2f'g' + fg''
            let x = jet_lift(0.4);
            let f = x.add_f64(a).powi(2);
            let g = x.add_f64(b).sqrt();
            let p = f * g;
            let expect = f.d2 * g.value + 2.0 * f.d1 * g.d1 + f.value * g.d2;
            prop_assert!(close(p.d2, expect, 1e-13));
        }
    }
}
