use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64 as C64;

use super::jet::TaylorJet;
use crate::error::{Error, Result};

/// Scalar-like values that closed-form potentials and exact solutions are
/// written against: plain complex numbers for point values, Taylor jets for
/// derivatives.
pub trait Field:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Add<C64, Output = Self>
    + Mul<C64, Output = Self>
{
    /// A constant of the same shape as `self`.
    fn constant_like(&self, c: C64) -> Self;
    /// Constant term (the value itself for a scalar).
    fn value(&self) -> C64;
    fn exp(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn sinh(&self) -> Self;
    fn cosh(&self) -> Self;
    fn tanh(&self) -> Self;
    fn sech(&self) -> Self;
    fn recip(&self) -> Result<Self>;
    fn powf(&self, exponent: f64) -> Result<Self>;

    fn powi(&self, n: u32) -> Self {
        let mut acc = self.constant_like(C64::new(1.0, 0.0));
        for _ in 0..n {
            acc = acc * self.clone();
        }
        acc
    }

    fn scale(&self, r: f64) -> Self {
        self.clone() * C64::new(r, 0.0)
    }

    fn shift(&self, r: f64) -> Self {
        self.clone() + C64::new(r, 0.0)
    }
}

impl Field for C64 {
    fn constant_like(&self, c: C64) -> Self {
        c
    }
    fn value(&self) -> C64 {
        *self
    }
    fn exp(&self) -> Self {
        C64::exp(*self)
    }
    fn sin(&self) -> Self {
        C64::sin(*self)
    }
    fn cos(&self) -> Self {
        C64::cos(*self)
    }
    fn sinh(&self) -> Self {
        C64::sinh(*self)
    }
    fn cosh(&self) -> Self {
        C64::cosh(*self)
    }
    fn tanh(&self) -> Self {
        C64::tanh(*self)
    }
    fn sech(&self) -> Self {
        1.0 / C64::cosh(*self)
    }
    fn recip(&self) -> Result<Self> {
        if self.norm() == 0.0 {
            return Err(Error::Singularity("reciprocal of zero".into()));
        }
        Ok(1.0 / *self)
    }
    fn powf(&self, exponent: f64) -> Result<Self> {
        if self.norm() == 0.0 {
            return if exponent > 0.0 {
                Ok(C64::new(0.0, 0.0))
            } else if exponent == 0.0 {
                Ok(C64::new(1.0, 0.0))
            } else {
                Err(Error::Singularity(format!("zero raised to power {exponent}")))
            };
        }
        if self.im == 0.0 && self.re > 0.0 {
            return Ok(C64::new(self.re.powf(exponent), 0.0));
        }
        Ok(C64::powf(*self, exponent))
    }
    fn powi(&self, n: u32) -> Self {
        C64::powi(self, n as i32)
    }
}

impl Field for TaylorJet {
    fn constant_like(&self, c: C64) -> Self {
        TaylorJet::constant(self.center(), self.order(), c)
    }
    fn value(&self) -> C64 {
        TaylorJet::value(self)
    }
    fn exp(&self) -> Self {
        TaylorJet::exp(self)
    }
    fn sin(&self) -> Self {
        TaylorJet::sin(self)
    }
    fn cos(&self) -> Self {
        TaylorJet::cos(self)
    }
    fn sinh(&self) -> Self {
        TaylorJet::sinh(self)
    }
    fn cosh(&self) -> Self {
        TaylorJet::cosh(self)
    }
    fn tanh(&self) -> Self {
        TaylorJet::tanh(self)
    }
    fn sech(&self) -> Self {
        TaylorJet::sech(self)
    }
    fn recip(&self) -> Result<Self> {
        TaylorJet::recip(self)
    }
    fn powf(&self, exponent: f64) -> Result<Self> {
        TaylorJet::powf(self, exponent)
    }
}
