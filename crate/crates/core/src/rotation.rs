//! Closed-form solution of the implicit midpoint update for `d_t = d × w`.
//!
//! For a frozen angular momentum `w`, the midpoint relation
//! `d⁺ − d = (Δt/2) (d + d⁺) × w` is linear in `d⁺` and is solved exactly by
//! the Cayley-type matrix
//!
//! ```text
//! V(w) = [(1 − Δt²|w|²/4) I + (Δt²/2) w⊗w + Δt Q(w)] / (1 + Δt²|w|²/4)
//! ```
//!
//! where `Q(w) v = v × w`. `V` is orthogonal: a rotation about `w` by
//! `2·atan(Δt|w|/2)`. The rational form stays well conditioned for every
//! finite `w`, so no large-`|w|` branch exists.

use std::ops::Mul;

use crate::error::{Error, Result};
use crate::grid::VectorField;
use crate::par;
use crate::scalar::{Scalar, Vec3};

/// Row-major 3×3 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3<T>(pub [[T; 3]; 3]);

impl<T: Scalar> Mat3<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Mat3([[o, z, z], [z, o, z], [z, z, o]])
    }

    pub fn transpose(&self) -> Self {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    #[inline]
    pub fn mul_vec(&self, v: Vec3<T>) -> Vec3<T> {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        )
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        let mut worst = T::zero();
        for r in 0..3 {
            for c in 0..3 {
                worst = worst.max((self.0[r][c] - other.0[r][c]).abs());
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }
}

impl<T: Scalar> Mul for Mat3<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut out = [[T::zero(); 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, slot) in row.iter_mut().enumerate() {
                *slot = self.0[r][0] * rhs.0[0][c] + self.0[r][1] * rhs.0[1][c] + self.0[r][2] * rhs.0[2][c];
            }
        }
        Mat3(out)
    }
}

impl<T: Scalar> std::ops::Neg for Mat3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Mat3(self.0.map(|r| r.map(|x| -x)))
    }
}

/// Time step and frozen angular-momentum midpoint defining `V(w)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationParams<T> {
    pub dt: T,
    pub w_mid: Vec3<T>,
}

impl<T: Scalar> RotationParams<T> {
    pub fn new(dt: T, w_mid: Vec3<T>) -> Result<Self> {
        if !(dt > T::zero() && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        if !w_mid.is_finite() {
            return Err(Error::InvalidArgument("angular momentum must be finite".into()));
        }
        Ok(RotationParams { dt, w_mid })
    }
}

/// The skew matrix with `Q(w) v = v × w`.
pub fn q_matrix<T: Scalar>(w: Vec3<T>) -> Mat3<T> {
    let z = T::zero();
    Mat3([[z, w[2], -w[1]], [-w[2], z, w[0]], [w[1], -w[0], z]])
}

pub fn v_matrix<T: Scalar>(p: &RotationParams<T>) -> Mat3<T> {
    cayley(p.dt, p.w_mid)
}

/// `V(w)` for an arbitrary signed step; `cayley(-dt, w)` is the inverse of
/// `cayley(dt, w)`.
pub fn cayley<T: Scalar>(dt: T, w: Vec3<T>) -> Mat3<T> {
    let quarter = T::lit(0.25);
    let a = dt * dt * quarter * w.norm_sq();
    let inv = (T::one() + a).recip();
    let diag = (T::one() - a) * inv;
    let outer = dt * dt * T::half() * inv;
    let skew = dt * inv;
    let q = q_matrix(w);
    let mut m = [[T::zero(); 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            m[r][c] = outer * w[r] * w[c] + skew * q.0[r][c];
        }
        m[r][r] += diag;
    }
    Mat3(m)
}

/// `V(w) d` without forming the matrix.
#[inline]
pub fn rotate<T: Scalar>(dt: T, w: Vec3<T>, d: Vec3<T>) -> Vec3<T> {
    let a = dt * dt * T::lit(0.25) * w.norm_sq();
    let inv = (T::one() + a).recip();
    let along = dt * dt * T::half() * w.dot(d);
    (d * (T::one() - a) + w * along + d.cross(w) * dt) * inv
}

/// Per-node `V(w_mid(p)) d(p)`.
pub fn apply_rotation<T: Scalar>(w_mid: &VectorField<T>, d: &VectorField<T>, dt: T) -> Result<VectorField<T>> {
    w_mid.check_same_grid(d)?;
    let mut out = d.clone();
    rotate_slice(dt, w_mid.values(), d.values(), out.values_mut());
    Ok(out)
}

pub(crate) fn rotate_slice<T: Scalar>(dt: T, w: &[Vec3<T>], d: &[Vec3<T>], out: &mut [Vec3<T>]) {
    par::fill_nodes(out, |p| rotate(dt, w[p], d[p]));
}
