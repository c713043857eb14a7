//! Body/inertial frame handling.
//!
//! The estimation pipeline works entirely in the inertial frame `{I}`. Body-frame
//! relative velocities (as a DVL would report them) are mapped through a known
//! attitude `R` from `{B}` to `{I}` before any integration happens.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Position [m], velocity [m/s] or integral-of-velocity [m], depending on context.
pub type Vec3 = Vector3<f64>;

/// Orthonormality and determinant tolerance for [`Rotation3`].
pub const ROTATION_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("rotation matrix is not orthonormal: max |R^T R - I| = {0:e}")]
    NotOrthonormal(f64),
    #[error("rotation matrix has determinant {0}, expected +1")]
    NotProper(f64),
    #[error("rotation matrix has non-finite entries")]
    NonFinite,
}

/// An SO(3) matrix mapping body-frame components to inertial-frame components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 9]", into = "[f64; 9]")]
pub struct Rotation3 {
    m: Matrix3<f64>,
}

impl Rotation3 {
    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    /// Validates `m` against the SO(3) invariants.
    pub fn new(m: Matrix3<f64>) -> Result<Self, FrameError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(FrameError::NonFinite);
        }
        let dev = (m.transpose() * m - Matrix3::identity()).amax();
        if dev > ROTATION_TOLERANCE {
            return Err(FrameError::NotOrthonormal(dev));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(FrameError::NotProper(det));
        }
        Ok(Self { m })
    }

    /// Row-major, as rotations are written in scenario files.
    pub fn from_row_major(rows: [f64; 9]) -> Result<Self, FrameError> {
        Self::new(Matrix3::from_row_slice(&rows))
    }

    /// Right-handed rotation of `angle` radians about `axis` (Rodrigues).
    pub fn about_axis(axis: &Vec3, angle: f64) -> Self {
        let n = axis.normalize();
        let k = skew(&n);
        let m = Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos());
        Self { m }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[3 * r + c] = self.m[(r, c)];
            }
        }
        out
    }
}

impl Default for Rotation3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl TryFrom<[f64; 9]> for Rotation3 {
    type Error = FrameError;

    fn try_from(rows: [f64; 9]) -> Result<Self, Self::Error> {
        Self::from_row_major(rows)
    }
}

impl From<Rotation3> for [f64; 9] {
    fn from(r: Rotation3) -> Self {
        r.to_row_major()
    }
}

/// Cross-product matrix: `skew(a) * b == a.cross(&b)`.
pub fn skew(a: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Maps body-frame components into the inertial frame.
pub fn to_inertial(rotation: &Rotation3, v_body: &Vec3) -> Vec3 {
    rotation.m * v_body
}

/// Validating variant of [`to_inertial`] for raw matrices.
pub fn to_inertial_checked(m: &Matrix3<f64>, v_body: &Vec3) -> Result<Vec3, FrameError> {
    Rotation3::new(*m).map(|r| to_inertial(&r, v_body))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn skew_of_zero_is_zero() {
        assert_eq!(skew(&Vec3::zeros()), Matrix3::zeros());
    }

    #[test]
    fn skew_of_unit_x() {
        let expected = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert_eq!(skew(&Vec3::x()), expected);
    }

    #[test]
    fn skew_matches_cross_product() {
        let a = Vec3::new(1.0, 2.0, 3.0);
        let b = Vec3::new(4.0, 5.0, 6.0);
        assert_eq!(skew(&a) * b, Vec3::new(-3.0, 6.0, -3.0));
        assert_eq!(skew(&a).transpose(), -skew(&a));
    }

    #[test]
    fn identity_rotation_is_noop() {
        let v = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(to_inertial(&Rotation3::identity(), &v), v);
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = Rotation3::about_axis(&Vec3::z(), FRAC_PI_2);
        let v = to_inertial(&r, &Vec3::x());
        assert!((v - Vec3::y()).norm() < 1e-15);
    }

    #[test]
    fn rejects_bad_matrices() {
        let scaled = Matrix3::identity() * 2.0;
        assert!(matches!(
            to_inertial_checked(&scaled, &Vec3::x()),
            Err(FrameError::NotOrthonormal(_))
        ));
        let reflection = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(matches!(
            Rotation3::new(reflection),
            Err(FrameError::NotProper(_))
        ));
        let mut nan = Matrix3::identity();
        nan[(0, 1)] = f64::NAN;
        assert_eq!(Rotation3::new(nan), Err(FrameError::NonFinite));
    }

    #[test]
    fn row_major_round_trip() {
        let r = Rotation3::about_axis(&Vec3::new(1.0, -2.0, 0.5), 0.7);
        let back = Rotation3::from_row_major(r.to_row_major()).unwrap();
        assert_eq!(back, r);
    }

    fn vec3() -> impl Strategy<Value = Vec3> {
        (-1e3..1e3f64, -1e3..1e3f64, -1e3..1e3f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn rotation_preserves_norm(axis in vec3(), angle in -10.0..10.0f64, v in vec3()) {
            prop_assume!(axis.norm() > 1e-6);
            let r = Rotation3::about_axis(&axis, angle);
            prop_assert!(Rotation3::new(*r.matrix()).is_ok());
            let w = to_inertial(&r, &v);
            prop_assert!((w.norm() - v.norm()).abs() <= 1e-10 * v.norm().max(1e-300));
        }

        #[test]
        fn skew_annihilates_own_vector(a in vec3()) {
            prop_assert!((skew(&a) * a).norm() <= 1e-12 * a.norm_squared().max(1e-300));
        }
    }
}
