use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb<T: Real> {
    pub min: Vector3<T>,
    pub max: Vector3<T>,
}

impl<T: Real> Aabb<T> {
    pub fn new(min: Vector3<T>, max: Vector3<T>) -> Result<Self> {
        if min.iter().chain(max.iter()).any(|x| !x.finite()) {
            return Err(Error::NonFinite("box corner"));
        }
        if (0..3).any(|i| !(max[i] > min[i])) {
            return Err(Error::InvalidScene("box max must exceed min on every axis"));
        }
        Ok(Self { min, max })
    }

    pub fn extent(&self) -> Vector3<T> {
        self.max - self.min
    }

    pub fn center(&self) -> Vector3<T> {
        (self.min + self.max) * T::HALF
    }

    pub fn contains(&self, p: &Vector3<T>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    fn contains_slack(&self, p: &Vector3<T>, slack: T) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] - slack && p[i] <= self.max[i] + slack)
    }

    /// Entry and exit parameters of the ray against the slabs.
    fn slab(&self, origin: &Vector3<T>, dir: &Vector3<T>) -> Option<(T, T)> {
        let mut t0 = -T::INFINITY;
        let mut t1 = T::INFINITY;
        for i in 0..3 {
            if dir[i] == T::ZERO {
                if origin[i] < self.min[i] || origin[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let inv = T::ONE / dir[i];
            let mut a = (self.min[i] - origin[i]) * inv;
            let mut b = (self.max[i] - origin[i]) * inv;
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
        }
        (t0 <= t1).then_some((t0, t1))
    }

    /// Unsigned distance from `p` to the box boundary.
    pub fn surface_distance(&self, p: &Vector3<T>) -> T {
        let mut outside = Vector3::zeros();
        let mut inside = T::INFINITY;
        for i in 0..3 {
            let below = self.min[i] - p[i];
            let above = p[i] - self.max[i];
            outside[i] = below.max(above).max(T::ZERO);
            inside = inside.min((-below).min(-above));
        }
        if outside == Vector3::zeros() {
            inside.max(T::ZERO)
        } else {
            outside.norm()
        }
    }
}

/// Scene geometry primitive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape<T: Real> {
    /// Plane `x[axis] = position`, clipped to the room bounds.
    Plane { axis: usize, position: T },
    /// Solid axis-aligned box.
    Cuboid(Aabb<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject<T: Real> {
    pub shape: Shape<T>,
    pub label: usize,
    pub color: [u8; 3],
}

/// Synthetic world: labeled planes and boxes inside room bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec<T: Real> {
    objects: Vec<SceneObject<T>>,
    room: Aabb<T>,
    classes: usize,
}

/// Nearest hit along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit<T> {
    pub t: T,
    pub object: usize,
}

impl<T: Real> SceneSpec<T> {
    pub fn new(objects: Vec<SceneObject<T>>, room: Aabb<T>, classes: usize) -> Result<Self> {
        if objects.is_empty() {
            return Err(Error::InvalidScene("scene has no surfaces"));
        }
        if classes == 0 {
            return Err(Error::InvalidScene("scene needs at least one class"));
        }
        for obj in &objects {
            if obj.label >= classes {
                return Err(Error::LabelOutOfRange { label: obj.label, classes });
            }
            match obj.shape {
                Shape::Plane { axis, position } => {
                    if axis > 2 {
                        return Err(Error::InvalidScene("plane axis must be 0, 1 or 2"));
                    }
                    if !position.finite() {
                        return Err(Error::NonFinite("plane position"));
                    }
                }
                Shape::Cuboid(b) => {
                    Aabb::new(b.min, b.max)?;
                }
            }
        }
        Ok(Self { objects, room, classes })
    }

    /// Furnished 4 × 4 × 2.5 m room with four classes: wall, floor and two
    /// kinds of furniture.
    pub fn default_room() -> Self {
        let l = T::lit;
        let room = Aabb::new(Vector3::new(l(-2.0), l(-2.0), l(0.0)), Vector3::new(l(2.0), l(2.0), l(2.5))).unwrap();
        let wall = [180, 180, 170];
        let mut objects = vec![
            SceneObject { shape: Shape::Plane { axis: 2, position: l(0.0) }, label: 1, color: [120, 90, 60] },
            SceneObject { shape: Shape::Plane { axis: 2, position: l(2.5) }, label: 0, color: wall },
        ];
        for axis in 0..2 {
            for position in [l(-2.0), l(2.0)] {
                objects.push(SceneObject { shape: Shape::Plane { axis, position }, label: 0, color: wall });
            }
        }
        let table = Aabb::new(Vector3::new(l(0.4), l(-1.3), l(0.0)), Vector3::new(l(1.3), l(-0.5), l(0.75))).unwrap();
        let cabinet = Aabb::new(Vector3::new(l(-1.6), l(0.5), l(0.0)), Vector3::new(l(-0.9), l(1.6), l(1.2))).unwrap();
        objects.push(SceneObject { shape: Shape::Cuboid(table), label: 2, color: [200, 60, 40] });
        objects.push(SceneObject { shape: Shape::Cuboid(cabinet), label: 3, color: [40, 90, 200] });
        Self::new(objects, room, 4).unwrap()
    }

    /// A single wall at `y = 2` spanning the room, one class.
    pub fn single_wall() -> Self {
        let l = T::lit;
        let room = Aabb::new(Vector3::new(l(-2.0), l(-2.0), l(0.0)), Vector3::new(l(2.0), l(2.0), l(2.5))).unwrap();
        let objects = vec![SceneObject { shape: Shape::Plane { axis: 1, position: l(2.0) }, label: 0, color: [180, 180, 170] }];
        Self::new(objects, room, 1).unwrap()
    }

    pub fn objects(&self) -> &[SceneObject<T>] {
        &self.objects
    }

    pub fn room(&self) -> &Aabb<T> {
        &self.room
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    fn slack(&self) -> T {
        T::lit(1e-9).max(T::EPSILON * T::lit(64.0)) * (T::ONE + self.room.extent().amax())
    }

    /// Nearest intersection with `t > 0`. Ties go to the lower object index.
    pub fn intersect(&self, origin: &Vector3<T>, dir: &Vector3<T>) -> Option<Hit<T>> {
        let slack = self.slack();
        let mut best: Option<Hit<T>> = None;
        for (i, obj) in self.objects.iter().enumerate() {
            let t = match obj.shape {
                Shape::Plane { axis, position } => {
                    if dir[axis].abs() < T::lit(1e-12) {
                        continue;
                    }
                    let t = (position - origin[axis]) / dir[axis];
                    if !(t > T::ZERO) {
                        continue;
                    }
                    let p = origin + dir * t;
                    let within = (0..3)
                        .filter(|&k| k != axis)
                        .all(|k| p[k] >= self.room.min[k] - slack && p[k] <= self.room.max[k] + slack);
                    if !within {
                        continue;
                    }
                    t
                }
                Shape::Cuboid(b) => match b.slab(origin, dir) {
                    Some((t0, _)) if t0 > T::ZERO => t0,
                    _ => continue,
                },
            };
            if best.is_none_or(|h| t < h.t) {
                best = Some(Hit { t, object: i });
            }
        }
        best
    }

    /// Unsigned distance from `p` to the surface of object `index`.
    pub fn object_distance(&self, index: usize, p: &Vector3<T>) -> T {
        match self.objects[index].shape {
            Shape::Plane { axis, position } => {
                let mut d2 = (p[axis] - position) * (p[axis] - position);
                for k in (0..3).filter(|&k| k != axis) {
                    let out = (self.room.min[k] - p[k]).max(p[k] - self.room.max[k]).max(T::ZERO);
                    d2 += out * out;
                }
                d2.sqrt()
            }
            Shape::Cuboid(b) => b.surface_distance(p),
        }
    }

    /// Labels of all surfaces within `radius` of `p`, with the nearest
    /// surface's label first. Empty when no surface is that close.
    pub fn labels_near(&self, p: &Vector3<T>, radius: T) -> Vec<usize> {
        let mut near: Vec<(T, usize)> = (0..self.objects.len())
            .map(|i| (self.object_distance(i, p), self.objects[i].label))
            .filter(|&(d, _)| d <= radius)
            .collect();
        near.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let mut labels = Vec::with_capacity(near.len());
        for (_, l) in near {
            if !labels.contains(&l) {
                labels.push(l);
            }
        }
        labels
    }

    /// Whether the surface of object `index` meets the closed cube of
    /// half width `half` centred at `c`.
    pub fn surface_meets_cube(&self, index: usize, c: &Vector3<T>, half: T) -> bool {
        let slack = self.slack();
        let lo = c.map(|x| x - half);
        let hi = c.map(|x| x + half);
        match self.objects[index].shape {
            Shape::Plane { axis, position } => {
                position >= lo[axis] - slack
                    && position <= hi[axis] + slack
                    && (0..3)
                        .filter(|&k| k != axis)
                        .all(|k| hi[k] >= self.room.min[k] - slack && lo[k] <= self.room.max[k] + slack)
            }
            Shape::Cuboid(b) => {
                let overlaps = (0..3).all(|k| hi[k] >= b.min[k] - slack && lo[k] <= b.max[k] + slack);
                let interior = (0..3).all(|k| lo[k] > b.min[k] + slack && hi[k] < b.max[k] - slack);
                overlaps && !interior
            }
        }
    }

    /// Labels of surfaces crossing the voxel at `center` or one of its six
    /// face neighbours, nearest surface first.
    pub fn voxel_labels(&self, center: &Vector3<T>, voxel_size: T) -> Vec<usize> {
        let half = voxel_size * T::HALF;
        let mut cubes = vec![*center];
        for k in 0..3 {
            for s in [-voxel_size, voxel_size] {
                let mut c = *center;
                c[k] += s;
                cubes.push(c);
            }
        }
        let mut hits: Vec<(T, usize)> = (0..self.objects.len())
            .filter(|&i| cubes.iter().any(|c| self.surface_meets_cube(i, c, half)))
            .map(|i| (self.object_distance(i, center), self.objects[i].label))
            .collect();
        hits.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let mut labels = Vec::with_capacity(hits.len());
        for (_, l) in hits {
            if !labels.contains(&l) {
                labels.push(l);
            }
        }
        labels
    }

    pub(crate) fn contains_camera(&self, p: &Vector3<T>) -> bool {
        self.room.contains_slack(p, self.slack())
            && !self.objects.iter().any(|o| matches!(o.shape, Shape::Cuboid(b) if b.contains(p)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn plane_hit_and_parallel_miss() {
        let s = SceneSpec::<f64>::single_wall();
        let hit = s.intersect(&v(0.0, 0.0, 1.0), &v(0.0, 1.0, 0.0)).unwrap();
        assert_eq!(hit.t, 2.0);
        assert!(s.intersect(&v(0.0, 0.0, 1.0), &v(1.0, 0.0, 0.0)).is_none());
        assert!(s.intersect(&v(0.0, 0.0, 1.0), &v(0.0, -1.0, 0.0)).is_none());
    }

    #[test]
    fn box_occludes_wall() {
        let s = SceneSpec::<f64>::default_room();
        // Looking along -y from above the table centre line at table height.
        let hit = s.intersect(&v(0.85, 1.0, 0.4), &v(0.0, -1.0, 0.0)).unwrap();
        assert!((hit.t - 1.5).abs() < 1e-12);
        assert_eq!(s.objects()[hit.object].label, 2);
    }

    #[test]
    fn rejects_bad_scenes() {
        let room = Aabb::new(v(0.0, 0.0, 0.0), v(1.0, 1.0, 1.0)).unwrap();
        assert!(SceneSpec::new(vec![], room, 2).is_err());
        let o = SceneObject { shape: Shape::Plane { axis: 0, position: 0.5 }, label: 3, color: [0; 3] };
        assert!(matches!(SceneSpec::new(vec![o], room, 2), Err(Error::LabelOutOfRange { .. })));
        assert!(Aabb::new(v(0.0, 0.0, 0.0), v(1.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn distances() {
        let b = Aabb::new(v(0.0, 0.0, 0.0), v(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(b.surface_distance(&v(0.5, 1.0, 1.5)), 0.5);
        assert_eq!(b.surface_distance(&v(2.0, 1.0, 1.5)), 1.0);
        assert!((b.surface_distance(&v(2.0, 3.0, 1.5)) - 2f64.sqrt()).abs() < 1e-15);
        let s = SceneSpec::<f64>::default_room();
        assert_eq!(s.labels_near(&v(0.0, 0.0, 1.0), 0.05), Vec::<usize>::new());
        assert_eq!(s.labels_near(&v(0.0, 0.0, 0.02), 0.05), vec![1]);
        // Corner of the table where it meets the floor: table first.
        assert_eq!(s.labels_near(&v(1.31, -0.9, 0.03), 0.05), vec![2, 1]);
    }

    #[test]
    fn voxel_labels_cover_neighbours() {
        let s = SceneSpec::<f64>::default_room();
        assert_eq!(s.voxel_labels(&v(0.025, 0.025, 1.025), 0.05), Vec::<usize>::new());
        assert_eq!(s.voxel_labels(&v(0.025, 0.025, 0.025), 0.05), vec![1]);
        // One voxel above the floor still sees it through the lower neighbour.
        assert_eq!(s.voxel_labels(&v(0.025, 0.025, 0.075), 0.05), vec![1]);
        assert_eq!(s.voxel_labels(&v(0.025, 0.025, 0.125), 0.05), Vec::<usize>::new());
        // Floor voxel in front of the table face at y = -1.3.
        assert_eq!(s.voxel_labels(&v(0.475, -1.375, 0.025), 0.05), vec![1, 2]);
        // Deep inside the table nothing is near.
        assert_eq!(s.voxel_labels(&v(0.825, -0.925, 0.375), 0.05), Vec::<usize>::new());
    }

    #[test]
    fn cube_on_face_boundary_meets_it() {
        let s = SceneSpec::<f64>::default_room();
        let table = 6;
        assert!(s.surface_meets_cube(table, &v(0.475, -1.325, 0.025), 0.025));
        assert!(s.surface_meets_cube(table, &v(0.475, -1.275, 0.025), 0.025));
        assert!(!s.surface_meets_cube(table, &v(0.475, -1.225, 0.125), 0.025));
    }
}
