use std::ops::{Add, Div, Mul, Neg, Sub};

use super::Real;

/// A value together with its partial derivatives in the three flux
/// coordinates `(rho, theta, zeta)`.
#[derive(Clone, Copy, Debug)]
pub struct Dual3<T> {
    pub value: T,
    pub grad: [T; 3],
}

impl<T: Real> Dual3<T> {
    pub fn new(value: T, d_rho: T, d_theta: T, d_zeta: T) -> Self {
        Dual3 {
            value,
            grad: [d_rho, d_theta, d_zeta],
        }
    }

    pub fn constant(value: T) -> Self {
        Dual3 {
            value,
            grad: [T::zero(); 3],
        }
    }

    #[inline]
    pub fn d_rho(&self) -> T {
        self.grad[0]
    }

    #[inline]
    pub fn d_theta(&self) -> T {
        self.grad[1]
    }

    #[inline]
    pub fn d_zeta(&self) -> T {
        self.grad[2]
    }

    pub fn scale(self, c: f64) -> Self {
        Dual3 {
            value: self.value * c,
            grad: self.grad.map(|g| g * c),
        }
    }

    pub fn recip(self) -> Self {
        let r = self.value.recip();
        let dr = -(r * r);
        Dual3 {
            value: r,
            grad: self.grad.map(|g| g * dr),
        }
    }
}

impl<T: Real> Add for Dual3<T> {
    type Output = Self;
    #[inline]
    fn add(self, b: Self) -> Self {
        Dual3 {
            value: self.value + b.value,
            grad: [
                self.grad[0] + b.grad[0],
                self.grad[1] + b.grad[1],
                self.grad[2] + b.grad[2],
            ],
        }
    }
}

impl<T: Real> Sub for Dual3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, b: Self) -> Self {
        Dual3 {
            value: self.value - b.value,
            grad: [
                self.grad[0] - b.grad[0],
                self.grad[1] - b.grad[1],
                self.grad[2] - b.grad[2],
            ],
        }
    }
}

impl<T: Real> Mul for Dual3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, b: Self) -> Self {
        Dual3 {
            value: self.value * b.value,
            grad: [
                self.grad[0] * b.value + self.value * b.grad[0],
                self.grad[1] * b.value + self.value * b.grad[1],
                self.grad[2] * b.value + self.value * b.grad[2],
            ],
        }
    }
}

impl<T: Real> Div for Dual3<T> {
    type Output = Self;
    #[inline]
    fn div(self, b: Self) -> Self {
        let inv = b.value.recip();
        let q = self.value * inv;
        Dual3 {
            value: q,
            grad: [
                (self.grad[0] - q * b.grad[0]) * inv,
                (self.grad[1] - q * b.grad[1]) * inv,
                (self.grad[2] - q * b.grad[2]) * inv,
            ],
        }
    }
}

impl<T: Real> Neg for Dual3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual3 {
            value: -self.value,
            grad: self.grad.map(|g| -g),
        }
    }
}

impl<T: Real> Add<f64> for Dual3<T> {
    type Output = Self;
    #[inline]
    fn add(self, c: f64) -> Self {
        Dual3 {
            value: self.value + c,
            grad: self.grad,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_quotient_rules() {
        // f = x*y, g = x/y at (x, y) = (2, 5) with x varying in rho and y in theta
        let x = Dual3::new(2.0, 1.0, 0.0, 0.0);
        let y = Dual3::new(5.0, 0.0, 1.0, 0.0);
        let p = x * y;
        assert_eq!(p.grad, [5.0, 2.0, 0.0]);
        let q = x / y;
        assert!((q.grad[0] - 0.2).abs() < 1e-15);
        assert!((q.grad[1] + 2.0 / 25.0).abs() < 1e-15);
        let r = y.recip();
        assert!((r.grad[1] + 1.0 / 25.0).abs() < 1e-15);
    }
}
