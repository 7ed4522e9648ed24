//! Small fixed-size vector/matrix algebra, generic over the scalar type.
//!
//! Forward kinematics and every residual in this crate are written once
//! against the [`Real`] trait and evaluated either with `f64` or with dual
//! numbers (see [`crate::solver::dual`]) to obtain exact Jacobians. nalgebra
//! is used at the API boundary and in the linear solver; the generic inner
//! loops use the plain arrays below.

use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Scalar abstraction shared by `f64` and dual numbers.
///
/// Only the operations the kinematic chain actually needs are required.
/// Branch decisions (e.g. the small-angle fallback in Rodrigues' formula)
/// are taken on the primal `value()`, which is the standard convention for
/// forward-mode AD.
pub trait Real:
    Copy
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn from_f64(v: f64) -> Self;
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

/// 3-vector over any [`Real`] scalar.
#[derive(Clone, Copy, Debug)]
pub struct V3<T>(pub [T; 3]);

/// Row-major 3x3 matrix over any [`Real`] scalar.
#[derive(Clone, Copy, Debug)]
pub struct M3<T>(pub [[T; 3]; 3]);

impl<T: Real> V3<T> {
    #[inline]
    pub fn zero() -> Self {
        V3([T::zero(); 3])
    }

    #[inline]
    pub fn from_f64(v: [f64; 3]) -> Self {
        V3([T::from_f64(v[0]), T::from_f64(v[1]), T::from_f64(v[2])])
    }

    #[inline]
    pub fn dot(self, o: V3<T>) -> T {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    #[inline]
    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn scale(self, s: T) -> Self {
        V3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl<T: Real> Add for V3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        V3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl<T: Real> Sub for V3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        V3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl<T: Real> M3<T> {
    #[inline]
    pub fn identity() -> Self {
        let z = T::zero();
        let o = T::one();
        M3([[o, z, z], [z, o, z], [z, z, o]])
    }

    #[inline]
    pub fn from_f64(m: [[f64; 3]; 3]) -> Self {
        let mut out = [[T::zero(); 3]; 3];
        for (ro, ri) in out.iter_mut().zip(m.iter()) {
            for (co, ci) in ro.iter_mut().zip(ri.iter()) {
                *co = T::from_f64(*ci);
            }
        }
        M3(out)
    }

    #[inline]
    pub fn mul_mat(self, o: M3<T>) -> M3<T> {
        let mut out = [[T::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] =
                    self.0[i][0] * o.0[0][j] + self.0[i][1] * o.0[1][j] + self.0[i][2] * o.0[2][j];
            }
        }
        M3(out)
    }

    #[inline]
    pub fn mul_vec(self, v: V3<T>) -> V3<T> {
        V3([
            self.0[0][0] * v.0[0] + self.0[0][1] * v.0[1] + self.0[0][2] * v.0[2],
            self.0[1][0] * v.0[0] + self.0[1][1] * v.0[1] + self.0[1][2] * v.0[2],
            self.0[2][0] * v.0[0] + self.0[2][1] * v.0[1] + self.0[2][2] * v.0[2],
        ])
    }

    #[inline]
    pub fn transpose(self) -> M3<T> {
        let m = self.0;
        M3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }
}

/// Threshold below which Rodrigues' formula switches to its Taylor series.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Rotation matrix from an axis-angle vector (exponential map).
///
/// For squared angles below [`SMALL_ANGLE`]² the sinc-like coefficients are
/// evaluated as series in the squared angle, which avoids the 0/0 at the
/// identity and keeps the expression differentiable there (no `sqrt` of a
/// vanishing argument on that branch).
pub fn rotation_from_axis_angle<T: Real>(aa: V3<T>) -> M3<T> {
    let t2 = aa.norm_squared();
    let (a, b) = if t2.value() < SMALL_ANGLE * SMALL_ANGLE {
        // sin(t)/t and (1-cos(t))/t^2 as series in t^2
        let one = T::one();
        let a = one - t2 * T::from_f64(1.0 / 6.0) + t2 * t2 * T::from_f64(1.0 / 120.0);
        let b =
            T::from_f64(0.5) - t2 * T::from_f64(1.0 / 24.0) + t2 * t2 * T::from_f64(1.0 / 720.0);
        (a, b)
    } else {
        let theta = t2.sqrt();
        let a = theta.sin() / theta;
        let b = (T::one() - theta.cos()) / t2;
        (a, b)
    };

    let [x, y, z] = aa.0;
    // I + a*K + b*K^2 with K = skew(aa)
    let mut m = [[T::zero(); 3]; 3];
    m[0][0] = T::one() + b * (-(y * y) - z * z);
    m[0][1] = -(a * z) + b * (x * y);
    m[0][2] = a * y + b * (x * z);
    m[1][0] = a * z + b * (x * y);
    m[1][1] = T::one() + b * (-(x * x) - z * z);
    m[1][2] = -(a * x) + b * (y * z);
    m[2][0] = -(a * y) + b * (x * z);
    m[2][1] = a * x + b * (y * z);
    m[2][2] = T::one() + b * (-(x * x) - y * y);
    M3(m)
}

/// Axis-angle vector from a rotation matrix (logarithm map), `f64` only.
///
/// Returns the representative with angle in `[0, pi]`.
pub fn axis_angle_from_matrix(m: &M3<f64>) -> V3<f64> {
    let r = &m.0;
    let trace = r[0][0] + r[1][1] + r[2][2];
    let cos_t = ((trace - 1.0) / 2.0).clamp(-1.0, 1.0);
    let theta = cos_t.acos();

    if theta < 1e-10 {
        return V3([0.0; 3]);
    }
    if theta < std::f64::consts::PI - 1e-6 {
        let k = theta / (2.0 * theta.sin());
        return V3([
            k * (r[2][1] - r[1][2]),
            k * (r[0][2] - r[2][0]),
            k * (r[1][0] - r[0][1]),
        ]);
    }
    // Near pi the skew part degenerates; recover the axis from the symmetric part.
    let xx = ((r[0][0] + 1.0) / 2.0).max(0.0).sqrt();
    let yy = ((r[1][1] + 1.0) / 2.0).max(0.0).sqrt();
    let zz = ((r[2][2] + 1.0) / 2.0).max(0.0).sqrt();
    let mut axis = [xx, yy, zz];
    // Fix signs using the off-diagonal sums.
    if axis[0] >= axis[1] && axis[0] >= axis[2] {
        axis[1] = (r[0][1] + r[1][0]) / (4.0 * axis[0]);
        axis[2] = (r[0][2] + r[2][0]) / (4.0 * axis[0]);
    } else if axis[1] >= axis[2] {
        axis[0] = (r[0][1] + r[1][0]) / (4.0 * axis[1]);
        axis[2] = (r[1][2] + r[2][1]) / (4.0 * axis[1]);
    } else {
        axis[0] = (r[0][2] + r[2][0]) / (4.0 * axis[2]);
        axis[1] = (r[1][2] + r[2][1]) / (4.0 * axis[2]);
    }
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    V3([
        axis[0] / n * theta,
        axis[1] / n * theta,
        axis[2] / n * theta,
    ])
}
