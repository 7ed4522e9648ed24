//! Fixed-width forward-mode dual numbers.
//!
//! A `Dual<N>` carries a primal value plus `N` partial derivatives. Jacobians
//! of functions with more than `N` inputs are computed in chunks of `N` seed
//! directions at a time (see [`crate::solver::nlsq`]), which keeps memory flat
//! regardless of the problem dimension.

use crate::math::Real;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Dual number with `N` simultaneous derivative channels.
#[derive(Clone, Copy, Debug)]
pub struct Dual<const N: usize> {
    pub re: f64,
    pub eps: [f64; N],
}

/// Chunk width used throughout the crate.
pub const DUAL_WIDTH: usize = 16;
pub type Dual16 = Dual<DUAL_WIDTH>;

impl<const N: usize> Dual<N> {
    #[inline]
    pub fn constant(v: f64) -> Self {
        Dual {
            re: v,
            eps: [0.0; N],
        }
    }

    /// Variable seeded with derivative 1 in channel `k`.
    #[inline]
    pub fn variable(v: f64, k: usize) -> Self {
        let mut eps = [0.0; N];
        eps[k] = 1.0;
        Dual { re: v, eps }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        let mut eps = self.eps;
        for (e, oe) in eps.iter_mut().zip(o.eps.iter()) {
            *e += oe;
        }
        Dual {
            re: self.re + o.re,
            eps,
        }
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        let mut eps = self.eps;
        for (e, oe) in eps.iter_mut().zip(o.eps.iter()) {
            *e -= oe;
        }
        Dual {
            re: self.re - o.re,
            eps,
        }
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut eps = [0.0; N];
        for i in 0..N {
            eps[i] = self.eps[i] * o.re + self.re * o.eps[i];
        }
        Dual {
            re: self.re * o.re,
            eps,
        }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.re;
        let re = self.re * inv;
        let mut eps = [0.0; N];
        for i in 0..N {
            eps[i] = (self.eps[i] - re * o.eps[i]) * inv;
        }
        Dual { re, eps }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e = -*e;
        }
        Dual { re: -self.re, eps }
    }
}

impl<const N: usize> AddAssign for Dual<N> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<const N: usize> SubAssign for Dual<N> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<const N: usize> MulAssign for Dual<N> {
    #[inline]
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<const N: usize> Real for Dual<N> {
    #[inline]
    fn from_f64(v: f64) -> Self {
        Dual::constant(v)
    }

    #[inline]
    fn value(self) -> f64 {
        self.re
    }

    #[inline]
    fn sin(self) -> Self {
        let (s, c) = self.re.sin_cos();
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e *= c;
        }
        Dual { re: s, eps }
    }

    #[inline]
    fn cos(self) -> Self {
        let (s, c) = self.re.sin_cos();
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e *= -s;
        }
        Dual { re: c, eps }
    }

    #[inline]
    fn sqrt(self) -> Self {
        let re = self.re.sqrt();
        let d = 0.5 / re;
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e *= d;
        }
        Dual { re, eps }
    }
}
