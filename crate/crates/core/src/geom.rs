//! Exact 3-D geometry: elementary rotations, the z-axis reflection, Householder
//! mirrors, plane reflections, the x-y-z Euler factorization of SO(3) and
//! spherical direction conversions.
//!
//! All angles are radians. Returned angles are wrapped to (-π, π], elevations
//! lie in [-π/2, π/2].

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Unit-norm tolerance for inputs that must be directions.
pub const UNIT_TOL: f64 = 1e-9;

/// Below this |cos θ| the Euler factorization is treated as gimbal-locked.
const GIMBAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Binary reflection term, the diagonal entry of `Q_z(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    /// Nearest sign to a determinant-like value.
    pub fn from_det(det: f64) -> Sign {
        if det >= 0.0 {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

impl TryFrom<i64> for Sign {
    type Error = Error;

    fn try_from(v: i64) -> Result<Self> {
        match v {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            other => Err(Error::InvalidSign(other)),
        }
    }
}

impl From<Sign> for i64 {
    fn from(s: Sign) -> i64 {
        match s {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

/// A plane `{x : uᵀx = b}` with unit normal `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    normal: Vec3,
    intercept: f64,
}

impl Plane {
    pub fn new(normal: Vec3, intercept: f64) -> Result<Self> {
        check_unit(&normal)?;
        Ok(Self { normal, intercept })
    }

    /// Plane through `point` with the given unit normal.
    pub fn through(point: &Vec3, normal: Vec3) -> Result<Self> {
        check_unit(&normal)?;
        Ok(Self {
            intercept: normal.dot(point),
            normal,
        })
    }

    pub fn normal(&self) -> &Vec3 {
        &self.normal
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    /// Signed distance from the plane, positive on the normal side.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.intercept
    }

    /// The mirror `(V, c)` with `reflect(p) = V p + c`.
    pub fn mirror(&self) -> (Mat3, Vec3) {
        (
            householder_unchecked(&self.normal),
            2.0 * self.intercept * self.normal,
        )
    }
}

fn check_unit(u: &Vec3) -> Result<()> {
    let n = u.norm();
    if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::NotUnit(n));
    }
    Ok(())
}

/// Wraps an angle to (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    // rem_euclid maps -π to π already; guard against rounding just above π
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Elementary rotation about a coordinate axis.
pub fn rotation_matrix(axis: Axis, angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    match axis {
        Axis::X => Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
        Axis::Y => Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
        Axis::Z => Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
    }
}

pub fn rot_x(gamma: f64) -> Mat3 {
    rotation_matrix(Axis::X, gamma)
}

pub fn rot_y(theta: f64) -> Mat3 {
    rotation_matrix(Axis::Y, theta)
}

pub fn rot_z(phi: f64) -> Mat3 {
    rotation_matrix(Axis::Z, phi)
}

/// `Q_z(s) = diag(1, 1, s)` from an integer sign; anything but ±1 is rejected.
pub fn z_reflection(s: i64) -> Result<Mat3> {
    Ok(q_z(Sign::try_from(s)?))
}

pub fn q_z(s: Sign) -> Mat3 {
    Mat3::from_diagonal(&Vec3::new(1.0, 1.0, s.value()))
}

/// Householder mirror `I - 2uuᵀ`.
pub fn householder(u: &Vec3) -> Result<Mat3> {
    check_unit(u)?;
    Ok(householder_unchecked(u))
}

fn householder_unchecked(u: &Vec3) -> Mat3 {
    Mat3::identity() - 2.0 * u * u.transpose()
}

pub fn reflect_point(p: &Vec3, plane: &Plane) -> Vec3 {
    p - 2.0 * plane.signed_distance(p) * plane.normal
}

/// Rotation taking the direction `(φ, θ)` onto `e_x`: `R_y(θ) R_z(-φ)`.
pub fn align_to_x(phi: f64, theta: f64) -> Mat3 {
    rot_y(theta) * rot_z(-phi)
}

/// Euler angles `(γ, θ, φ)` with `M = R_x(γ) R_y(θ) R_z(-φ)`.
///
/// θ is taken in [-π/2, π/2]. At gimbal lock the roll γ is fixed to zero and
/// the remaining in-plane rotation is carried by φ.
pub fn euler_factor_so3(m: &Mat3) -> Result<(f64, f64, f64)> {
    let ortho = (m.transpose() * m - Mat3::identity()).abs().max();
    if !(ortho <= UNIT_TOL) {
        return Err(Error::NotOrthogonal(ortho));
    }
    let det = m.determinant();
    if (det - 1.0).abs() > UNIT_TOL {
        return Err(Error::NotRotation(det));
    }

    // first row of M is the first row of R_y(θ)R_z(-φ): (cosθ cosφ, cosθ sinφ, sinθ)
    let horiz = m[(0, 0)].hypot(m[(0, 1)]);
    let theta = m[(0, 2)].atan2(horiz);
    if theta.cos() < GIMBAL_TOL {
        let theta = if theta > 0.0 { PI / 2.0 } else { -PI / 2.0 };
        let rz = rot_y(theta).transpose() * m;
        let phi = wrap_angle(rz[(0, 1)].atan2(rz[(0, 0)]));
        return Ok((0.0, theta, phi));
    }
    let phi = m[(0, 1)].atan2(m[(0, 0)]);
    let rx = m * align_to_x(phi, theta).transpose();
    let gamma = rx[(2, 1)].atan2(rx[(1, 1)]);
    Ok((wrap_angle(gamma), theta, wrap_angle(phi)))
}

/// Unit vector `(cos φ cos θ, sin φ cos θ, sin θ)`.
pub fn spherical_dir(phi: f64, theta: f64) -> Vec3 {
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    Vec3::new(cp * ct, sp * ct, st)
}

/// Inverse of [`spherical_dir`]. At the poles the azimuth is reported as 0.
pub fn dir_to_angles(u: &Vec3) -> Result<(f64, f64)> {
    let n = u.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroVector);
    }
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::NotUnit(n));
    }
    let horiz = u.x.hypot(u.y);
    let theta = u.z.atan2(horiz);
    let phi = if horiz <= 1e-12 { 0.0 } else { wrap_angle(u.y.atan2(u.x)) };
    Ok((phi, theta))
}
