use nalgebra::Vector3;

use crate::scalar::Real;

/// Integer voxel index of a world point: `floor(coordinate / voxel_size)`.
pub fn voxel_index<T: Real>(p: &Vector3<T>, voxel_size: T) -> [i64; 3] {
    [0, 1, 2].map(|i| (p[i] / voxel_size).floor().as_f64() as i64)
}

pub fn voxel_center<T: Real>(idx: [i64; 3], voxel_size: T) -> Vector3<T> {
    Vector3::from_fn(|i, _| (T::lit(idx[i] as f64) + T::HALF) * voxel_size)
}

/// Voxels pierced by the segment `start → end`, in traversal order.
pub fn traverse<T: Real>(start: &Vector3<T>, end: &Vector3<T>, voxel_size: T) -> Vec<[i64; 3]> {
    let delta = end - start;
    let length = delta.norm();
    let mut idx = voxel_index(start, voxel_size);
    let last = voxel_index(end, voxel_size);
    if !(length > T::ZERO) {
        return vec![idx];
    }
    let dir = delta / length;
    let mut step = [0i64; 3];
    let mut t_max = [T::INFINITY; 3];
    let mut t_delta = [T::INFINITY; 3];
    for i in 0..3 {
        if dir[i] > T::ZERO {
            step[i] = 1;
            let boundary = T::lit((idx[i] + 1) as f64) * voxel_size;
            t_max[i] = (boundary - start[i]) / dir[i];
            t_delta[i] = voxel_size / dir[i];
        } else if dir[i] < T::ZERO {
            step[i] = -1;
            let boundary = T::lit(idx[i] as f64) * voxel_size;
            t_max[i] = (boundary - start[i]) / dir[i];
            t_delta[i] = -voxel_size / dir[i];
        }
    }
    let budget: i64 = (0..3).map(|i| (last[i] - idx[i]).abs()).sum::<i64>() + 1;
    let mut out = Vec::with_capacity(budget as usize);
    out.push(idx);
    for _ in 0..budget + 2 {
        if idx == last {
            break;
        }
        let axis = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
            0
        } else if t_max[1] <= t_max[2] {
            1
        } else {
            2
        };
        if t_max[axis] > length {
            break;
        }
        idx[axis] += step[axis];
        t_max[axis] += t_delta[axis];
        out.push(idx);
    }
    out
}
