use crate::cloudgen::camera::{CameraIntrinsics, Pose};
use crate::cloudgen::scene::SceneSpec;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Real;

/// Ground-truth images. Depth is z-depth in meters with 0 marking pixels
/// whose ray hits nothing; those pixels have no label.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame<T> {
    pub depth: Image<T>,
    pub label: Image<Option<usize>>,
    pub color: Image<[u8; 3]>,
}

impl<T: Real> RenderedFrame<T> {
    pub fn valid_pixels(&self) -> usize {
        self.depth.pixels().iter().filter(|&&d| d > T::ZERO).count()
    }
}

/// Ray-casts every pixel against every scene object.
pub fn render_frame<T: Real>(scene: &SceneSpec<T>, intr: &CameraIntrinsics<T>, pose: &Pose<T>) -> Result<RenderedFrame<T>> {
    intr.validate()?;
    let origin = pose.origin();
    if !scene.contains_camera(&origin) {
        return Err(Error::DegeneratePose("camera is outside the room or inside an obstacle"));
    }
    let (w, h) = (intr.width, intr.height);
    let mut depth = Vec::with_capacity(w * h);
    let mut label = Vec::with_capacity(w * h);
    let mut color = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            // Camera ray has unit z, so the hit parameter is the z-depth.
            let dir = pose.transform_vector(&intr.ray(u, v));
            match scene.intersect(&origin, &dir) {
                Some(hit) => {
                    let obj = &scene.objects()[hit.object];
                    depth.push(hit.t);
                    label.push(Some(obj.label));
                    color.push(obj.color);
                }
                None => {
                    depth.push(T::ZERO);
                    label.push(None);
                    color.push([0; 3]);
                }
            }
        }
    }
    Ok(RenderedFrame {
        depth: Image::from_vec(w, h, depth)?,
        label: Image::from_vec(w, h, label)?,
        color: Image::from_vec(w, h, color)?,
    })
}
