use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Pinhole intrinsics. Camera looks along +z, image origin is the top-left
/// pixel, pixel `(u, v)` sits at integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: usize,
    pub height: usize,
}

impl<T: Real> CameraIntrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, width: usize, height: usize) -> Result<Self> {
        let intr = Self { fx, fy, cx, cy, width, height };
        intr.validate()?;
        Ok(intr)
    }

    /// Principal point at the image center.
    pub fn centered(focal: T, width: usize, height: usize) -> Result<Self> {
        Self::new(focal, focal, T::of_usize(width) * T::HALF, T::of_usize(height) * T::HALF, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > T::ZERO) {
            return Err(Error::invalid("fx", self.fx.as_f64(), "must be > 0"));
        }
        if !(self.fy > T::ZERO) {
            return Err(Error::invalid("fy", self.fy.as_f64(), "must be > 0"));
        }
        if !(self.cx > T::ZERO && self.cx < T::of_usize(self.width)) {
            return Err(Error::invalid("cx", self.cx.as_f64(), "must lie inside the image"));
        }
        if !(self.cy > T::ZERO && self.cy < T::of_usize(self.height)) {
            return Err(Error::invalid("cy", self.cy.as_f64(), "must lie inside the image"));
        }
        Ok(())
    }

    /// Camera-frame ray through pixel `(u, v)` scaled to unit z.
    pub fn ray(&self, u: usize, v: usize) -> Vector3<T> {
        Vector3::new(
            (T::of_usize(u) - self.cx) / self.fx,
            (T::of_usize(v) - self.cy) / self.fy,
            T::ONE,
        )
    }

    /// Camera-frame point at depth `z` along pixel `(u, v)`.
    pub fn backproject(&self, u: usize, v: usize, z: T) -> Vector3<T> {
        self.ray(u, v) * z
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Camera-to-world rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T: Real> {
    rotation: Matrix3<T>,
    translation: Vector3<T>,
}

fn orthonormality_error<T: Real>(r: &Matrix3<T>) -> T {
    let e = r.transpose() * r - Matrix3::identity();
    e.iter().fold(T::ZERO, |m, &x| if x.abs() > m { x.abs() } else { m })
}

impl<T: Real> Pose<T> {
    pub const ORTHO_TOL: f64 = 1e-9;

    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Result<Self> {
        Self::with_tolerance(rotation, translation, T::lit(Self::ORTHO_TOL).max(T::EPSILON * T::lit(16.0)))
    }

    fn with_tolerance(rotation: Matrix3<T>, translation: Vector3<T>, tol: T) -> Result<Self> {
        if rotation.iter().chain(translation.iter()).any(|x| !x.finite()) {
            return Err(Error::NonFinite("pose"));
        }
        if orthonormality_error(&rotation) > tol {
            return Err(Error::DegeneratePose("rotation is not orthonormal"));
        }
        if rotation.determinant() <= T::ZERO {
            return Err(Error::DegeneratePose("rotation has negative determinant"));
        }
        Ok(Self { rotation, translation })
    }

    /// Re-orthonormalizes a rotation read from reduced-precision storage.
    pub fn from_approximate(rotation: Matrix3<T>, translation: Vector3<T>) -> Result<Self> {
        if orthonormality_error(&rotation) > T::lit(1e-4) {
            return Err(Error::DegeneratePose("rotation is not orthonormal"));
        }
        if rotation.determinant() <= T::ZERO {
            return Err(Error::DegeneratePose("rotation has negative determinant"));
        }
        let x = rotation.column(0).normalize();
        let y = rotation.column(1) - x * x.dot(&rotation.column(1));
        let y = y.normalize();
        let z = x.cross(&y);
        Self::new(Matrix3::from_columns(&[x, y, z]), translation)
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Camera at `eye` looking at `target` with world +z up; image +x is
    /// right and image +y is down.
    pub fn look_at(eye: Vector3<T>, target: Vector3<T>) -> Result<Self> {
        let forward = target - eye;
        let norm = forward.norm();
        if !(norm > T::lit(1e-9)) {
            return Err(Error::DegeneratePose("eye and target coincide"));
        }
        let forward = forward / norm;
        let right = forward.cross(&Vector3::z());
        let rn = right.norm();
        if !(rn > T::lit(1e-6)) {
            return Err(Error::DegeneratePose("view direction is parallel to up"));
        }
        let right = right / rn;
        let down = forward.cross(&right);
        Self::new(Matrix3::from_columns(&[right, down, forward]), eye)
    }

    pub fn rotation(&self) -> &Matrix3<T> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<T> {
        &self.translation
    }

    /// Camera center in world coordinates.
    pub fn origin(&self) -> Vector3<T> {
        self.translation
    }

    /// Optical axis in world coordinates.
    pub fn forward(&self) -> Vector3<T> {
        self.rotation.column(2).into_owned()
    }

    pub fn transform_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<T>) -> Vector3<T> {
        self.rotation * v
    }

    /// World point into the camera frame.
    pub fn inverse_transform_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation.transpose() * (p - self.translation)
    }

    /// `[R | t]` row-major, 12 numbers.
    pub fn to_row_major(&self) -> [T; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t[0],
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t[1],
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t[2],
        ]
    }

    pub fn from_row_major(m: &[T; 12]) -> (Matrix3<T>, Vector3<T>) {
        (
            Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]),
            Vector3::new(m[3], m[7], m[11]),
        )
    }
}
