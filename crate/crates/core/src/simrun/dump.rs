//! Plain-text per-frame dumps of ground truth and network-style predictions.
//!
//! Ground truth (`EVGT 1`): `size W H`, then one `depth label` line per
//! pixel in row-major order, label `-1` for none and depth 0 for no return.
//! Predictions (`EVPRED 1`): `size W H`, `classes K`, then one
//! `mu nu alpha beta c_1 … c_K` line per pixel.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::evidmodel::{DirichletEvidence, NigParams};
use crate::image::Image;
use crate::scalar::Real;

const GT_HEADER: &str = "EVGT";
const PRED_HEADER: &str = "EVPRED";
const DUMP_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthDump<T> {
    pub depth: Image<T>,
    pub label: Image<Option<usize>>,
}

impl<T: Real> GroundTruthDump<T> {
    /// Pixels with a surface return and a label.
    pub fn mask(&self) -> Image<bool> {
        let flags = self
            .depth
            .pixels()
            .iter()
            .zip(self.label.pixels())
            .map(|(&d, l)| d > T::ZERO && l.is_some())
            .collect();
        Image::from_vec(self.depth.width(), self.depth.height(), flags).expect("same shape")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionDump<T> {
    pub depth: Image<NigParams<T>>,
    pub sem: Image<DirichletEvidence<T>>,
}

fn bad(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

fn num<F: std::str::FromStr>(tok: &str, line: usize) -> io::Result<F> {
    tok.parse().map_err(|_| bad(format!("line {line}: bad number `{tok}`")))
}

struct Lines<R> {
    inner: io::Lines<R>,
    n: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> io::Result<Option<(usize, String)>> {
        for line in self.inner.by_ref() {
            self.n += 1;
            let line = line?;
            if !line.trim().is_empty() {
                return Ok(Some((self.n, line)));
            }
        }
        Ok(None)
    }

    fn expect(&mut self, key: &str) -> io::Result<(usize, Vec<String>)> {
        let (n, line) = self.next_line()?.ok_or_else(|| bad(format!("missing `{key}` line")))?;
        let mut toks = line.split_whitespace();
        if toks.next() != Some(key) {
            return Err(bad(format!("line {n}: expected `{key}`")));
        }
        Ok((n, toks.map(str::to_string).collect()))
    }
}

fn header<R: BufRead>(r: R, magic: &str) -> io::Result<(Lines<R>, usize, usize)> {
    let mut lines = Lines { inner: r.lines(), n: 0 };
    let (n, v) = lines.expect(magic)?;
    let version: u32 = num(v.first().map_or("", String::as_str), n)?;
    if version != DUMP_VERSION {
        return Err(bad(format!("unsupported {magic} version {version}")));
    }
    let (n, v) = lines.expect("size")?;
    if v.len() != 2 {
        return Err(bad(format!("line {n}: size needs width and height")));
    }
    Ok((lines, num(&v[0], n)?, num(&v[1], n)?))
}

fn image<P>(w: usize, h: usize, data: Vec<P>) -> io::Result<Image<P>> {
    Image::from_vec(w, h, data).map_err(|e| bad(e.to_string()))
}

pub fn write_gt_dump<T: Real, W: Write>(depth: &Image<T>, label: &Image<Option<usize>>, w: &mut W) -> io::Result<()> {
    if !depth.same_shape(label) {
        return Err(bad("depth and label images differ in shape"));
    }
    writeln!(w, "{GT_HEADER} {DUMP_VERSION}")?;
    writeln!(w, "size {} {}", depth.width(), depth.height())?;
    for (d, l) in depth.pixels().iter().zip(label.pixels()) {
        match l {
            Some(k) => writeln!(w, "{d} {k}")?,
            None => writeln!(w, "{d} -1")?,
        }
    }
    Ok(())
}

pub fn read_gt_dump<T: Real, R: BufRead>(r: R) -> io::Result<GroundTruthDump<T>> {
    let (mut lines, w, h) = header(r, GT_HEADER)?;
    let mut depth = Vec::with_capacity(w * h);
    let mut label = Vec::with_capacity(w * h);
    while let Some((n, line)) = lines.next_line()? {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(bad(format!("line {n}: expected `depth label`")));
        }
        depth.push(num::<T>(toks[0], n)?);
        let l: i64 = num(toks[1], n)?;
        label.push(match l {
            -1 => None,
            l if l >= 0 => Some(l as usize),
            _ => return Err(bad(format!("line {n}: label must be >= -1"))),
        });
    }
    Ok(GroundTruthDump { depth: image(w, h, depth)?, label: image(w, h, label)? })
}

pub fn write_pred_dump<T: Real, W: Write>(
    depth: &Image<NigParams<T>>,
    sem: &Image<DirichletEvidence<T>>,
    w: &mut W,
) -> io::Result<()> {
    if !depth.same_shape(sem) {
        return Err(bad("depth and semantic images differ in shape"));
    }
    let classes = sem.pixels().first().map_or(0, |s| s.len());
    writeln!(w, "{PRED_HEADER} {DUMP_VERSION}")?;
    writeln!(w, "size {} {}", depth.width(), depth.height())?;
    writeln!(w, "classes {classes}")?;
    for (p, s) in depth.pixels().iter().zip(sem.pixels()) {
        let mut line = format!("{} {} {} {}", p.mu, p.nu, p.alpha, p.beta);
        for c in s.concentrations() {
            line.push(' ');
            line.push_str(&c.to_string());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_pred_dump<T: Real, R: BufRead>(r: R) -> io::Result<PredictionDump<T>> {
    let (mut lines, w, h) = header(r, PRED_HEADER)?;
    let (n, v) = lines.expect("classes")?;
    let classes: usize = num(v.first().map_or("", String::as_str), n)?;
    let mut depth = Vec::with_capacity(w * h);
    let mut sem = Vec::with_capacity(w * h);
    while let Some((n, line)) = lines.next_line()? {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 4 + classes {
            return Err(bad(format!("line {n}: expected {} fields, found {}", 4 + classes, toks.len())));
        }
        let vals = toks.iter().map(|t| num::<T>(t, n)).collect::<io::Result<Vec<T>>>()?;
        depth.push(NigParams::new(vals[0], vals[1], vals[2], vals[3]));
        sem.push(DirichletEvidence::new(vals[4..].to_vec()).map_err(|e| bad(format!("line {n}: {e}")))?);
    }
    Ok(PredictionDump { depth: image(w, h, depth)?, sem: image(w, h, sem)? })
}

fn wrap(path: &Path, e: io::Error) -> Error {
    match e.kind() {
        io::ErrorKind::InvalidData => Error::format(path, e.to_string()),
        _ => Error::io(path, e),
    }
}

pub fn save_gt_dump<T: Real>(path: &Path, depth: &Image<T>, label: &Image<Option<usize>>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_gt_dump(depth, label, &mut w).and_then(|_| w.flush()).map_err(|e| wrap(path, e))
}

pub fn load_gt_dump<T: Real>(path: &Path) -> Result<GroundTruthDump<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_gt_dump(BufReader::new(file)).map_err(|e| wrap(path, e))
}

pub fn save_pred_dump<T: Real>(path: &Path, depth: &Image<NigParams<T>>, sem: &Image<DirichletEvidence<T>>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_pred_dump(depth, sem, &mut w).and_then(|_| w.flush()).map_err(|e| wrap(path, e))
}

pub fn load_pred_dump<T: Real>(path: &Path) -> Result<PredictionDump<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_pred_dump(BufReader::new(file)).map_err(|e| wrap(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gt_round_trip() {
        let depth = Image::from_vec(3, 1, vec![0.0, 1.25, 0.1 + 0.2]).unwrap();
        let label = Image::from_vec(3, 1, vec![None, Some(2), Some(0)]).unwrap();
        let mut buf = Vec::new();
        write_gt_dump(&depth, &label, &mut buf).unwrap();
        let back = read_gt_dump::<f64, _>(buf.as_slice()).unwrap();
        assert_eq!(back.depth, depth);
        assert_eq!(back.label, label);
        assert_eq!(back.mask().pixels(), &[false, true, true]);
    }

    #[test]
    fn pred_round_trip() {
        let depth = Image::from_vec(2, 1, vec![NigParams::new(1.5, 1.0, 2.0, 1e-3), NigParams::new(0.3, 0.7, 1.1, 2.0 / 3.0)]).unwrap();
        let sem = Image::from_vec(
            2,
            1,
            vec![DirichletEvidence::new(vec![1.0, 11.0]).unwrap(), DirichletEvidence::new(vec![1.0 / 3.0 + 1.0, 2.0]).unwrap()],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_pred_dump(&depth, &sem, &mut buf).unwrap();
        let back = read_pred_dump::<f64, _>(buf.as_slice()).unwrap();
        assert_eq!(back, PredictionDump { depth, sem });
    }

    #[test]
    fn rejects_wrong_pixel_count() {
        let text = "EVGT 1\nsize 2 2\n1.0 0\n1.0 0\n1.0 0\n";
        assert!(read_gt_dump::<f64, _>(text.as_bytes()).is_err());
        let text = "EVPRED 1\nsize 1 1\nclasses 2\n1 1 2 0.1 1\n";
        let err = read_pred_dump::<f64, _>(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
    }
}
