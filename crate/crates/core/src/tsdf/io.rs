//! EVVX map files and PLY export of surface voxels.
//!
//! EVVX layout, little-endian: `b"EVVX"`, version `u32`, voxel size `f64`,
//! truncation `f64`, class count `u32`, weight mode `u8`, max weight `f64`,
//! epsilon `f64`, block count `u64`. Blocks follow in ascending key order:
//! key `3 × i64`, observed-voxel count `u16`, then per observed voxel its
//! offset `u16`, distance, weight, the two-term reciprocal sum of epistemic
//! variance, mean view `3 × f64`, observation count `u64` and the `K + 2`
//! concentrations as `f64`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::evidmodel::{DirichletEvidence, VoxelState};
use crate::scalar::Real;
use crate::tsdf::grid::{Block, GridConfig, ReciprocalSum, TsdfVoxel, VoxelGrid, WeightMode, BLOCK_VOXELS};

pub const EVVX_MAGIC: &[u8; 4] = b"EVVX";
pub const EVVX_VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

fn put<W: Write, T: Real>(w: &mut W, x: T) -> io::Result<()> {
    w.write_all(&x.as_f64().to_le_bytes())
}

fn get<const N: usize, R: Read>(r: &mut R) -> io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn get_f<R: Read, T: Real>(r: &mut R) -> io::Result<T> {
    let v = f64::from_le_bytes(get(r)?);
    if v.is_nan() {
        return Err(bad("NaN in map record"));
    }
    Ok(T::lit(v))
}

pub fn write_evvx<T: Real, W: Write>(grid: &VoxelGrid<T>, w: &mut W) -> io::Result<()> {
    let cfg = grid.config();
    w.write_all(EVVX_MAGIC)?;
    w.write_all(&EVVX_VERSION.to_le_bytes())?;
    put(w, cfg.voxel_size)?;
    put(w, cfg.truncation)?;
    w.write_all(&(grid.label_space().classes() as u32).to_le_bytes())?;
    w.write_all(&[match cfg.weight_mode {
        WeightMode::InverseDepthSquared => 0u8,
        WeightMode::InverseTotalUncertainty => 1u8,
    }])?;
    put(w, cfg.max_weight)?;
    put(w, cfg.epsilon)?;
    let keys = grid.block_keys();
    w.write_all(&(keys.len() as u64).to_le_bytes())?;
    for key in keys {
        for k in key {
            w.write_all(&k.to_le_bytes())?;
        }
        let voxels = &grid.blocks[&key].voxels;
        let observed: Vec<usize> = (0..voxels.len()).filter(|&i| voxels[i].is_observed()).collect();
        w.write_all(&(observed.len() as u16).to_le_bytes())?;
        for off in observed {
            let v = &voxels[off];
            w.write_all(&(off as u16).to_le_bytes())?;
            put(w, v.distance)?;
            put(w, v.weight)?;
            put(w, v.inv_u_ep.hi)?;
            put(w, v.inv_u_ep.lo)?;
            for &m in v.mean_view.iter() {
                put(w, m)?;
            }
            w.write_all(&v.obs_count.to_le_bytes())?;
            for &c in v.sem.concentrations() {
                put(w, c)?;
            }
        }
    }
    Ok(())
}

pub fn read_evvx<T: Real, R: Read>(r: &mut R) -> io::Result<VoxelGrid<T>> {
    let magic: [u8; 4] = get(r)?;
    if &magic != EVVX_MAGIC {
        return Err(bad("bad magic, not an EVVX file"));
    }
    let version = u32::from_le_bytes(get(r)?);
    if version != EVVX_VERSION {
        return Err(bad(format!("unsupported EVVX version {version}")));
    }
    let voxel_size = get_f(r)?;
    let truncation = get_f(r)?;
    let classes = u32::from_le_bytes(get(r)?) as usize;
    let weight_mode = match get::<1, _>(r)?[0] {
        0 => WeightMode::InverseDepthSquared,
        1 => WeightMode::InverseTotalUncertainty,
        m => return Err(bad(format!("unknown weight mode tag {m}"))),
    };
    let max_weight = get_f(r)?;
    let epsilon = get_f(r)?;
    let config = GridConfig { voxel_size, truncation, weight_mode, max_weight, epsilon };
    let mut grid = VoxelGrid::new(config, classes).map_err(|e| bad(e.to_string()))?;
    let states = grid.label_space().states();
    let blocks = u64::from_le_bytes(get(r)?);
    let mut map = HashMap::new();
    for _ in 0..blocks {
        let mut key = [0i64; 3];
        for k in key.iter_mut() {
            *k = i64::from_le_bytes(get(r)?);
        }
        let mut block = Block { voxels: vec![TsdfVoxel::empty(states); BLOCK_VOXELS] };
        let count = u16::from_le_bytes(get(r)?) as usize;
        for _ in 0..count {
            let off = u16::from_le_bytes(get(r)?) as usize;
            if off >= BLOCK_VOXELS {
                return Err(bad(format!("voxel offset {off} out of range")));
            }
            let distance = get_f(r)?;
            let weight = get_f(r)?;
            let inv_u_ep = ReciprocalSum { hi: get_f(r)?, lo: get_f(r)? };
            let mean_view = Vector3::new(get_f(r)?, get_f(r)?, get_f(r)?);
            let obs_count = u64::from_le_bytes(get(r)?);
            let c = (0..states).map(|_| get_f(r)).collect::<io::Result<Vec<T>>>()?;
            let sem = DirichletEvidence::new(c).map_err(|e| bad(e.to_string()))?;
            block.voxels[off] = TsdfVoxel { distance, weight, inv_u_ep, sem, mean_view, obs_count };
        }
        if map.insert(key, block).is_some() {
            return Err(bad(format!("duplicate block {key:?}")));
        }
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(bad("trailing bytes after last block"));
    }
    grid.blocks = map;
    Ok(grid)
}

fn wrap(path: &Path, e: io::Error) -> Error {
    match e.kind() {
        io::ErrorKind::InvalidData => Error::format(path, e.to_string()),
        io::ErrorKind::UnexpectedEof => Error::format(path, "truncated file"),
        _ => Error::io(path, e),
    }
}

pub fn save_evvx<T: Real>(path: &Path, grid: &VoxelGrid<T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_evvx(grid, &mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn load_evvx<T: Real>(path: &Path) -> Result<VoxelGrid<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_evvx(&mut BufReader::new(file)).map_err(|e| wrap(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyColoring {
    /// Palette color of the thresholded voxel label.
    #[default]
    Label,
    /// Blue (confident) to red (uncertain) on log fused depth variance.
    Uncertainty,
}

const PALETTE: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
];

fn label_color(state: VoxelState) -> [u8; 3] {
    match state {
        VoxelState::Class(k) => PALETTE[k % PALETTE.len()],
        VoxelState::Free => [200, 230, 255],
        VoxelState::Unknown => [128, 128, 128],
    }
}

/// ASCII PLY of semantic surface voxel centers with color, fused variance
/// and label, `-1` for unknown.
pub fn write_ply<T: Real, W: Write>(grid: &VoxelGrid<T>, w: &mut W, coloring: PlyColoring, tau: T) -> io::Result<()> {
    let surface = grid.semantic_surface_voxels(tau);
    let logs: Vec<f64> = surface.iter().map(|(_, v, _)| v.u_ep().as_f64().max(1e-300).log10()).collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", surface.len())?;
    for p in ["x", "y", "z"] {
        writeln!(w, "property float {p}")?;
    }
    for p in ["red", "green", "blue"] {
        writeln!(w, "property uchar {p}")?;
    }
    writeln!(w, "property float u_ep")?;
    writeln!(w, "property int label")?;
    writeln!(w, "end_header")?;
    for ((idx, v, state), log_u) in surface.iter().zip(&logs) {
        let c = grid.voxel_center(*idx);
        let state = *state;
        let rgb = match coloring {
            PlyColoring::Label => label_color(state),
            PlyColoring::Uncertainty => {
                let t = if hi > lo { (log_u - lo) / (hi - lo) } else { 0.0 };
                [(255.0 * t).round() as u8, 0, (255.0 * (1.0 - t)).round() as u8]
            }
        };
        let label: i64 = match state {
            VoxelState::Class(k) => k as i64,
            VoxelState::Free | VoxelState::Unknown => -1,
        };
        writeln!(w, "{} {} {} {} {} {} {} {label}", c[0], c[1], c[2], rgb[0], rgb[1], rgb[2], v.u_ep())?;
    }
    Ok(())
}

pub fn save_ply<T: Real>(path: &Path, grid: &VoxelGrid<T>, coloring: PlyColoring, tau: T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_ply(grid, &mut w, coloring, tau).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloudgen::{EvidCloud, EvidPoint, Pose};
    use crate::semfuse::FusionConfig;

    fn sample_grid() -> VoxelGrid<f64> {
        let mut g = VoxelGrid::new(GridConfig::default(), 2).unwrap();
        let f = FusionConfig::default();
        let origin = Vector3::new(0.012, -0.31, 0.2);
        let points = (0..20)
            .map(|k| EvidPoint {
                x: Vector3::new(-0.3 + 0.03 * k as f64, -0.2, 1.4),
                rgb: [1, 2, 3],
                u_ep: 0.01,
                u_al: 0.02,
                c: DirichletEvidence::new(vec![6.0, 1.0]).unwrap(),
            })
            .collect();
        let pose = Pose::look_at(origin, Vector3::new(0.0, -0.2, 1.4)).unwrap();
        g.integrate_cloud(&EvidCloud::new(points, pose, 0).unwrap(), Some(&f)).unwrap();
        g
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let g = sample_grid();
        let mut buf = Vec::new();
        write_evvx(&g, &mut buf).unwrap();
        let back: VoxelGrid<f64> = read_evvx(&mut buf.as_slice()).unwrap();
        assert_eq!(back, g);
        let mut again = Vec::new();
        write_evvx(&back, &mut again).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn corrupted_maps_rejected() {
        let mut buf = Vec::new();
        write_evvx(&sample_grid(), &mut buf).unwrap();
        let mut bad_magic = buf.clone();
        bad_magic[3] = b'Y';
        assert!(read_evvx::<f64, _>(&mut bad_magic.as_slice()).is_err());
        let mut bad_version = buf.clone();
        bad_version[4] = 9;
        assert!(read_evvx::<f64, _>(&mut bad_version.as_slice()).is_err());
        assert!(read_evvx::<f64, _>(&mut &buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn ply_lists_surface_voxels() {
        let g = sample_grid();
        let mut buf = Vec::new();
        write_ply(&g, &mut buf, PlyColoring::Label, 0.5).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let n = g.semantic_surface_voxels(0.5).len();
        assert!(n > 0);
        assert!(text.contains(&format!("element vertex {n}")));
        let body = text.split("end_header\n").nth(1).unwrap();
        assert_eq!(body.lines().count(), n);
        let mut buf = Vec::new();
        write_ply(&g, &mut buf, PlyColoring::Uncertainty, 0.5).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), text.lines().count());
    }
}
