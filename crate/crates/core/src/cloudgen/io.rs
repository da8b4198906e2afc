//! EVCL point-cloud files: a little-endian binary form and a lossless text
//! dump.
//!
//! Binary layout: `b"EVCL"`, version `u32`, class count `u32`, point count
//! `u64`, then the camera pose as 12 `f32` (`[R | t]` row-major). Each point
//! follows as 3 `f32` coordinates, 3 color bytes, `f32` epistemic and
//! aleatoric variance and `K` `f32` concentrations.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::cloudgen::camera::Pose;
use crate::cloudgen::cloud::{EvidCloud, EvidPoint};
use crate::error::{Error, Result};
use crate::evidmodel::DirichletEvidence;
use crate::scalar::Real;

pub const EVCL_MAGIC: &[u8; 4] = b"EVCL";
pub const EVCL_VERSION: u32 = 1;
const TEXT_HEADER: &str = "EVCL-TEXT";

fn bad(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

fn put_f32<W: Write, T: Real>(w: &mut W, x: T) -> io::Result<()> {
    w.write_all(&(x.as_f64() as f32).to_le_bytes())
}

fn get<const N: usize, R: Read>(r: &mut R) -> io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn get_f32<R: Read, T: Real>(r: &mut R) -> io::Result<T> {
    let v = f32::from_le_bytes(get(r)?);
    if !v.is_finite() {
        return Err(bad("non-finite value"));
    }
    Ok(T::lit(v as f64))
}

/// Writes the binary form. An empty cloud is written with zero classes.
pub fn write_evcl<T: Real, W: Write>(cloud: &EvidCloud<T>, w: &mut W) -> io::Result<()> {
    let classes = cloud.classes().unwrap_or(0);
    w.write_all(EVCL_MAGIC)?;
    w.write_all(&EVCL_VERSION.to_le_bytes())?;
    w.write_all(&(classes as u32).to_le_bytes())?;
    w.write_all(&(cloud.len() as u64).to_le_bytes())?;
    for x in cloud.pose().to_row_major() {
        put_f32(w, x)?;
    }
    for p in cloud.points() {
        for &x in p.x.iter() {
            put_f32(w, x)?;
        }
        w.write_all(&p.rgb)?;
        put_f32(w, p.u_ep)?;
        put_f32(w, p.u_al)?;
        for &c in p.c.concentrations() {
            put_f32(w, c)?;
        }
    }
    Ok(())
}

/// Reads the binary form. Format problems surface as
/// [`io::ErrorKind::InvalidData`].
pub fn read_evcl<T: Real, R: Read>(r: &mut R, frame_id: u64) -> io::Result<EvidCloud<T>> {
    let magic: [u8; 4] = get(r)?;
    if &magic != EVCL_MAGIC {
        return Err(bad("bad magic, not an EVCL file"));
    }
    let version = u32::from_le_bytes(get(r)?);
    if version != EVCL_VERSION {
        return Err(bad(format!("unsupported EVCL version {version}")));
    }
    let classes = u32::from_le_bytes(get(r)?) as usize;
    let count = u64::from_le_bytes(get(r)?);
    if count > 0 && classes == 0 {
        return Err(bad("points present but class count is zero"));
    }
    let mut pose = [T::ZERO; 12];
    for x in pose.iter_mut() {
        *x = get_f32(r)?;
    }
    let (rot, t) = Pose::from_row_major(&pose);
    let pose = Pose::from_approximate(rot, t).map_err(|e| bad(e.to_string()))?;
    let mut points = Vec::with_capacity(count.min(1 << 20) as usize);
    for _ in 0..count {
        let x = Vector3::new(get_f32(r)?, get_f32(r)?, get_f32(r)?);
        let rgb: [u8; 3] = get(r)?;
        let u_ep = get_f32(r)?;
        let u_al = get_f32(r)?;
        let c = (0..classes).map(|_| get_f32(r)).collect::<io::Result<Vec<T>>>()?;
        let c = DirichletEvidence::new(c).map_err(|e| bad(e.to_string()))?;
        points.push(EvidPoint { x, rgb, u_ep, u_al, c });
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(bad("trailing bytes after last point"));
    }
    EvidCloud::new(points, pose, frame_id).map_err(|e| bad(e.to_string()))
}

fn wrap(path: &Path, e: io::Error) -> Error {
    match e.kind() {
        io::ErrorKind::InvalidData => Error::format(path, e.to_string()),
        io::ErrorKind::UnexpectedEof => Error::format(path, "truncated file"),
        _ => Error::io(path, e),
    }
}

pub fn save_evcl<T: Real>(path: &Path, cloud: &EvidCloud<T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_evcl(cloud, &mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn load_evcl<T: Real>(path: &Path, frame_id: u64) -> Result<EvidCloud<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_evcl(&mut BufReader::new(file), frame_id).map_err(|e| wrap(path, e))
}

/// One header block then one point per line:
/// `x y z r g b u_ep u_al c_1 … c_K`. Floats use shortest round-trip
/// formatting, so reading the dump back restores the cloud exactly.
pub fn write_evcl_text<T: Real, W: Write>(cloud: &EvidCloud<T>, w: &mut W) -> io::Result<()> {
    writeln!(w, "{TEXT_HEADER} {EVCL_VERSION}")?;
    writeln!(w, "classes {}", cloud.classes().unwrap_or(0))?;
    writeln!(w, "frame {}", cloud.frame_id())?;
    let pose: Vec<String> = cloud.pose().to_row_major().iter().map(|x| x.to_string()).collect();
    writeln!(w, "pose {}", pose.join(" "))?;
    writeln!(w, "points {}", cloud.len())?;
    for p in cloud.points() {
        let mut line = format!("{} {} {} {} {} {} {} {}", p.x[0], p.x[1], p.x[2], p.rgb[0], p.rgb[1], p.rgb[2], p.u_ep, p.u_al);
        for c in p.c.concentrations() {
            line.push(' ');
            line.push_str(&c.to_string());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

fn parse<F: std::str::FromStr>(tok: Option<&str>, what: &str, line: usize) -> io::Result<F> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| bad(format!("line {line}: expected {what}")))
}

fn keyed<'a>(lines: &mut impl Iterator<Item = (usize, io::Result<String>)>, key: &str, buf: &'a mut String) -> io::Result<(usize, Vec<&'a str>)> {
    let (n, line) = lines.next().ok_or_else(|| bad(format!("missing `{key}` line")))?;
    *buf = line?;
    let mut toks = buf.split_whitespace();
    if toks.next() != Some(key) {
        return Err(bad(format!("line {}: expected `{key}`", n + 1)));
    }
    Ok((n + 1, toks.collect()))
}

pub fn read_evcl_text<T: Real, R: BufRead>(r: R) -> io::Result<EvidCloud<T>> {
    let mut lines = r.lines().enumerate();
    let mut buf = String::new();
    let (n, v) = keyed(&mut lines, TEXT_HEADER, &mut buf)?;
    let version: u32 = parse(v.first().copied(), "version", n)?;
    if version != EVCL_VERSION {
        return Err(bad(format!("unsupported EVCL version {version}")));
    }
    let (n, v) = keyed(&mut lines, "classes", &mut buf)?;
    let classes: usize = parse(v.first().copied(), "class count", n)?;
    let (n, v) = keyed(&mut lines, "frame", &mut buf)?;
    let frame_id: u64 = parse(v.first().copied(), "frame id", n)?;
    let (n, v) = keyed(&mut lines, "pose", &mut buf)?;
    if v.len() != 12 {
        return Err(bad(format!("line {n}: pose needs 12 numbers")));
    }
    let mut pose = [T::ZERO; 12];
    for (x, tok) in pose.iter_mut().zip(&v) {
        *x = parse(Some(tok), "pose entry", n)?;
    }
    let (n, v) = keyed(&mut lines, "points", &mut buf)?;
    let count: usize = parse(v.first().copied(), "point count", n)?;
    let (rot, t) = Pose::from_row_major(&pose);
    let pose = Pose::new(rot, t).map_err(|e| bad(e.to_string()))?;
    let mut points = Vec::with_capacity(count.min(1 << 20));
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 8 + classes {
            return Err(bad(format!("line {n}: expected {} fields, found {}", 8 + classes, toks.len())));
        }
        let f = |k: usize| parse::<T>(Some(toks[k]), "number", n);
        let b = |k: usize| parse::<u8>(Some(toks[k]), "color byte", n);
        let c = (8..8 + classes).map(f).collect::<io::Result<Vec<T>>>()?;
        points.push(EvidPoint {
            x: Vector3::new(f(0)?, f(1)?, f(2)?),
            rgb: [b(3)?, b(4)?, b(5)?],
            u_ep: f(6)?,
            u_al: f(7)?,
            c: DirichletEvidence::new(c).map_err(|e| bad(format!("line {n}: {e}")))?,
        });
    }
    if points.len() != count {
        return Err(bad(format!("header declares {count} points, found {}", points.len())));
    }
    EvidCloud::new(points, pose, frame_id).map_err(|e| bad(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EvidCloud<f64> {
        let pose = Pose::look_at(Vector3::new(0.1, -0.3, 1.2), Vector3::new(1.0, 1.0, 0.7)).unwrap();
        let points = (0..5)
            .map(|i| {
                let f = i as f64;
                EvidPoint {
                    x: Vector3::new(0.5 + 0.1 * f, 1.0 / 3.0, 0.7 - f * 0.01),
                    rgb: [i as u8, 20, 255],
                    u_ep: 0.001 * (f + 1.0),
                    u_al: 1e-4 / (f + 1.0),
                    c: DirichletEvidence::new(vec![1.0, 1.0 + f, 11.0 / 7.0]).unwrap(),
                }
            })
            .collect();
        EvidCloud::new(points, pose, 7).unwrap()
    }

    #[test]
    fn binary_round_trip_at_f32_precision() {
        let cloud = sample();
        let mut buf = Vec::new();
        write_evcl(&cloud, &mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 4 + 8 + 48 + 5 * (12 + 3 + 8 + 12));
        let back: EvidCloud<f64> = read_evcl(&mut buf.as_slice(), 7).unwrap();
        assert_eq!(back.len(), cloud.len());
        for (a, b) in back.points().iter().zip(cloud.points()) {
            assert!((a.x - b.x).norm() < 1e-6);
            assert_eq!(a.rgb, b.rgb);
            assert_eq!(a.u_ep, b.u_ep as f32 as f64);
            for (x, y) in a.c.concentrations().iter().zip(b.c.concentrations()) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
        assert!((back.pose().rotation() - cloud.pose().rotation()).amax() < 1e-6);
    }

    #[test]
    fn rejects_corruption() {
        let mut buf = Vec::new();
        write_evcl(&sample(), &mut buf).unwrap();
        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        let err = read_evcl::<f64, _>(&mut bad_magic.as_slice(), 0).unwrap_err();
        assert_eq!(err.kind(), io::ErrorKind::InvalidData);
        let truncated = &buf[..buf.len() - 3];
        assert_eq!(read_evcl::<f64, _>(&mut &truncated[..], 0).unwrap_err().kind(), io::ErrorKind::UnexpectedEof);
        let mut trailing = buf.clone();
        trailing.push(0);
        assert!(read_evcl::<f64, _>(&mut trailing.as_slice(), 0).is_err());
    }

    #[test]
    fn text_dump_is_lossless() {
        let cloud = sample();
        let mut buf = Vec::new();
        write_evcl_text(&cloud, &mut buf).unwrap();
        let back: EvidCloud<f64> = read_evcl_text(buf.as_slice()).unwrap();
        assert_eq!(back, cloud);
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5 + cloud.len());
    }

    #[test]
    fn empty_cloud() {
        let cloud = EvidCloud::<f64>::empty(Pose::identity(), 3);
        let mut buf = Vec::new();
        write_evcl(&cloud, &mut buf).unwrap();
        let back: EvidCloud<f64> = read_evcl(&mut buf.as_slice(), 3).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn file_errors_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame.evcl");
        std::fs::write(&path, b"NOPE").unwrap();
        let err = load_evcl::<f64>(&path, 0).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        assert!(err.to_string().contains("frame.evcl"));
        save_evcl(&path, &sample()).unwrap();
        assert_eq!(load_evcl::<f64>(&path, 7).unwrap().len(), 5);
    }
}
