use nalgebra::Vector3;

use crate::cloudgen::camera::{CameraIntrinsics, Pose};
use crate::error::{Error, Result};
use crate::evidmodel::{DirichletEvidence, NigParams};
use crate::image::Image;
use crate::scalar::Real;

/// One back-projected pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidPoint<T: Real> {
    /// World coordinates in meters.
    pub x: Vector3<T>,
    pub rgb: [u8; 3],
    /// Depth epistemic variance (m²).
    pub u_ep: T,
    /// Depth aleatoric variance (m²).
    pub u_al: T,
    /// Pixel Dirichlet over the `K` classes.
    pub c: DirichletEvidence<T>,
}

impl<T: Real> EvidPoint<T> {
    pub fn validate(&self) -> Result<()> {
        if self.x.iter().any(|v| !v.finite()) {
            return Err(Error::NonFinite("point coordinates"));
        }
        if !(self.u_ep >= T::ZERO) || !self.u_ep.finite() {
            return Err(Error::invalid("u_ep", self.u_ep.as_f64(), "must be finite and >= 0"));
        }
        if !(self.u_al >= T::ZERO) || !self.u_al.finite() {
            return Err(Error::invalid("u_al", self.u_al.as_f64(), "must be finite and >= 0"));
        }
        DirichletEvidence::new(self.c.concentrations().to_vec()).map(|_| ())
    }

    pub fn total_variance(&self) -> T {
        self.u_ep + self.u_al
    }
}

/// Evidential semantic point cloud of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidCloud<T: Real> {
    points: Vec<EvidPoint<T>>,
    view_dirs: Vec<Vector3<T>>,
    pose: Pose<T>,
    frame_id: u64,
}

impl<T: Real> EvidCloud<T> {
    /// Validates the points and caches unit camera-to-point directions.
    pub fn new(points: Vec<EvidPoint<T>>, pose: Pose<T>, frame_id: u64) -> Result<Self> {
        let origin = pose.origin();
        let classes = points.first().map(|p| p.c.len());
        let mut view_dirs = Vec::with_capacity(points.len());
        for p in &points {
            p.validate()?;
            if Some(p.c.len()) != classes {
                return Err(Error::DimensionMismatch {
                    expected: classes.unwrap_or(0),
                    actual: p.c.len(),
                });
            }
            let ray = p.x - origin;
            let n = ray.norm();
            if !(n > T::ZERO) {
                return Err(Error::DegeneratePose("point coincides with the camera center"));
            }
            view_dirs.push(ray / n);
        }
        Ok(Self { points, view_dirs, pose, frame_id })
    }

    pub fn empty(pose: Pose<T>, frame_id: u64) -> Self {
        Self { points: Vec::new(), view_dirs: Vec::new(), pose, frame_id }
    }

    pub fn points(&self) -> &[EvidPoint<T>] {
        &self.points
    }

    pub fn view_dirs(&self) -> &[Vector3<T>] {
        &self.view_dirs
    }

    pub fn pose(&self) -> &Pose<T> {
        &self.pose
    }

    pub fn frame_id(&self) -> u64 {
        self.frame_id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of classes, `None` for an empty cloud.
    pub fn classes(&self) -> Option<usize> {
        self.points.first().map(|p| p.c.len())
    }
}

/// Lifts evidential depth and semantic images into a world-frame cloud.
/// Pixels whose mean depth falls outside `(0, max_depth]` are dropped.
pub fn backproject<T: Real>(
    depth: &Image<NigParams<T>>,
    sem: &Image<DirichletEvidence<T>>,
    rgb: &Image<[u8; 3]>,
    intr: &CameraIntrinsics<T>,
    pose: &Pose<T>,
    max_depth: T,
    frame_id: u64,
) -> Result<EvidCloud<T>> {
    let expected = intr.pixel_count();
    for actual in [depth.len(), sem.len(), rgb.len()] {
        if actual != expected {
            return Err(Error::DimensionMismatch { expected, actual });
        }
    }
    if depth.width() != intr.width || !depth.same_shape(sem) || !depth.same_shape(rgb) {
        return Err(Error::DimensionMismatch { expected: intr.width, actual: depth.width() });
    }
    if !(max_depth > T::ZERO) {
        return Err(Error::invalid("max_depth", max_depth.as_f64(), "must be > 0"));
    }
    let mut points = Vec::new();
    for v in 0..intr.height {
        for u in 0..intr.width {
            let nig = depth.get(u, v);
            if !(nig.mu > T::ZERO && nig.mu <= max_depth) {
                continue;
            }
            let m = nig.moments()?;
            points.push(EvidPoint {
                x: pose.transform_point(&intr.backproject(u, v, nig.mu)),
                rgb: *rgb.get(u, v),
                u_ep: m.epistemic,
                u_al: m.aleatoric,
                c: sem.get(u, v).clone(),
            });
        }
    }
    EvidCloud::new(points, *pose, frame_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloudgen::noise::{corrupt_frame, NoiseModel};
    use crate::cloudgen::render::render_frame;
    use crate::cloudgen::scene::SceneSpec;

    fn flat(intr: &CameraIntrinsics<f64>, mu: f64) -> (Image<NigParams<f64>>, Image<DirichletEvidence<f64>>, Image<[u8; 3]>) {
        let (w, h) = (intr.width, intr.height);
        (
            Image::filled(w, h, NigParams::new(mu, 1.0, 2.0, 0.01)),
            Image::filled(w, h, DirichletEvidence::uniform(3)),
            Image::filled(w, h, [1, 2, 3]),
        )
    }

    #[test]
    fn principal_point_identity_pose() {
        let intr = CameraIntrinsics::new(10.0, 10.0, 2.0, 2.0, 4, 4).unwrap();
        let (d, s, c) = flat(&intr, 2.0);
        let cloud = backproject(&d, &s, &c, &intr, &Pose::identity(), 10.0, 0).unwrap();
        assert_eq!(cloud.len(), 16);
        let centre = &cloud.points()[2 * 4 + 2];
        assert_eq!(centre.x, Vector3::new(0.0, 0.0, 2.0));
        assert_eq!(centre.u_al, 0.01);
        assert_eq!(centre.u_ep, 0.01);
        let first = &cloud.points()[0];
        assert_eq!(first.x, Vector3::new(-0.4, -0.4, 2.0));
        for v in cloud.view_dirs() {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_depths_dropped() {
        let intr = CameraIntrinsics::new(10.0, 10.0, 2.0, 2.0, 4, 4).unwrap();
        let (d, s, c) = flat(&intr, 12.0);
        assert!(backproject(&d, &s, &c, &intr, &Pose::identity(), 10.0, 0).unwrap().is_empty());
        let (d, s, c) = flat(&intr, 0.0);
        assert!(backproject(&d, &s, &c, &intr, &Pose::identity(), 10.0, 0).unwrap().is_empty());
    }

    #[test]
    fn dimension_mismatch() {
        let intr = CameraIntrinsics::new(10.0, 10.0, 2.0, 2.0, 4, 4).unwrap();
        let (d, s, _) = flat(&intr, 1.0);
        let c = Image::filled(4, 3, [0u8; 3]);
        assert!(matches!(
            backproject(&d, &s, &c, &intr, &Pose::identity(), 10.0, 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn synthetic_frame_lands_on_the_wall() {
        let scene = SceneSpec::<f64>::single_wall();
        let intr = CameraIntrinsics::new(3.0, 3.0, 2.0, 2.0, 4, 4).unwrap();
        let pose = Pose::look_at(Vector3::new(0.3, 0.0, 1.2), Vector3::new(0.5, 2.0, 1.0)).unwrap();
        let frame = render_frame(&scene, &intr, &pose).unwrap();
        let noise = NoiseModel { outlier_prob: 0.0, ..NoiseModel::default() };
        let (d, s) = corrupt_frame(&frame.depth, &frame.label, &noise, 1, 9).unwrap();
        let cloud = backproject(&d, &s, &frame.color, &intr, &pose, 10.0, 0).unwrap();
        assert_eq!(cloud.len(), 16);
        for (p, nig) in cloud.points().iter().zip(d.pixels()) {
            // Depth error of 5 σ along a ray no steeper than the image corner.
            let sigma = noise.sigma(nig.mu);
            let stretch = intr.ray(0, 0).norm();
            assert!((p.x[1] - 2.0).abs() < 5.0 * sigma * stretch, "{p:?}");
        }
    }
}
