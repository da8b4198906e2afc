//! Evaluation metrics for 2-D predictions and 3-D maps.

use std::io::{self, Write};

use crate::cloudgen::SceneSpec;
use crate::error::{Error, Result};
use crate::evidmodel::{DirichletEvidence, NigParams, VoxelState};
use crate::image::Image;
use crate::scalar::Real;
use crate::tsdf::VoxelGrid;

pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_MAX_DEPTH: f64 = 10.0;
/// Upper edge of the predicted-deviation bins for depth calibration (m).
pub const DEFAULT_DEPTH_SIGMA_RANGE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationKind {
    Segmentation,
    Depth,
    Voxel,
}

impl CalibrationKind {
    pub fn name(self) -> &'static str {
        match self {
            CalibrationKind::Segmentation => "segmentation",
            CalibrationKind::Depth => "depth",
            CalibrationKind::Voxel => "voxel",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CalibrationBin<T> {
    pub count: u64,
    /// Sum of the stated quantity (confidence or predicted error).
    pub predicted: T,
    /// Sum of the realized quantity (correctness or absolute error).
    pub observed: T,
}

/// Equal-width binned calibration statistics. Bins are keyed on a value in
/// `[lo, hi]`; keys outside clamp to the end bins.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport<T> {
    pub kind: CalibrationKind,
    pub lo: T,
    pub hi: T,
    /// Gaps are divided by this before weighting.
    pub scale: T,
    pub bins: Vec<CalibrationBin<T>>,
}

/// One row of a reliability curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint<T> {
    pub bin: usize,
    pub confidence: T,
    pub accuracy: T,
    pub count: u64,
}

impl<T: Real> CalibrationReport<T> {
    pub fn new(kind: CalibrationKind, bins: usize, lo: T, hi: T, scale: T) -> Result<Self> {
        if bins == 0 {
            return Err(Error::invalid("bins", 0.0, "need at least one bin"));
        }
        if !(hi > lo) {
            return Err(Error::invalid("bin range", (hi - lo).as_f64(), "upper edge must exceed lower"));
        }
        if !(scale > T::ZERO) {
            return Err(Error::invalid("scale", scale.as_f64(), "must be > 0"));
        }
        Ok(Self { kind, lo, hi, scale, bins: vec![CalibrationBin::default(); bins] })
    }

    /// Confidence-vs-accuracy report over `[0, 1]`.
    pub fn confidence(kind: CalibrationKind, bins: usize) -> Result<Self> {
        Self::new(kind, bins, T::ZERO, T::ONE, T::ONE)
    }

    pub fn bin_of(&self, key: T) -> usize {
        let n = self.bins.len();
        let f = ((key - self.lo) / (self.hi - self.lo) * T::of_usize(n)).floor();
        if !(f > T::ZERO) {
            0
        } else {
            (f.as_f64() as usize).min(n - 1)
        }
    }

    pub fn add(&mut self, key: T, predicted: T, observed: T) {
        let b = self.bin_of(key);
        let bin = &mut self.bins[b];
        bin.count += 1;
        bin.predicted += predicted;
        bin.observed += observed;
    }

    pub fn count(&self) -> u64 {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// Count-weighted mean of per-bin `|mean predicted - mean observed| / scale`.
    pub fn ece(&self) -> T {
        let total = self.count();
        if total == 0 {
            return T::ZERO;
        }
        let mut acc = T::ZERO;
        for b in self.bins.iter().filter(|b| b.count > 0) {
            let n = T::lit(b.count as f64);
            acc += ((b.predicted - b.observed) / n).abs() / self.scale * n;
        }
        acc / T::lit(total as f64)
    }

    /// Share of samples in each bin; sums to 1 when non-empty.
    pub fn weights(&self) -> Vec<T> {
        let total = T::lit(self.count().max(1) as f64);
        self.bins.iter().map(|b| T::lit(b.count as f64) / total).collect()
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.kind != other.kind
            || self.bins.len() != other.bins.len()
            || self.lo != other.lo
            || self.hi != other.hi
            || self.scale != other.scale
        {
            return Err(Error::Config("cannot merge calibration reports with different binning".into()));
        }
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            a.count += b.count;
            a.predicted += b.predicted;
            a.observed += b.observed;
        }
        Ok(())
    }

    pub fn curve(&self) -> Vec<CurvePoint<T>> {
        self.bins
            .iter()
            .enumerate()
            .map(|(bin, b)| {
                let n = T::lit(b.count.max(1) as f64);
                CurvePoint { bin, confidence: b.predicted / n, accuracy: b.observed / n, count: b.count }
            })
            .collect()
    }

    pub fn write_curve_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "bin,confidence,accuracy,count")?;
        for p in self.curve() {
            writeln!(w, "{},{},{},{}", p.bin, p.confidence, p.accuracy, p.count)?;
        }
        Ok(())
    }
}

/// `metric,value` rows.
pub fn write_metrics_csv<T: Real, W: Write>(rows: &[(&str, T)], w: &mut W) -> io::Result<()> {
    writeln!(w, "metric,value")?;
    for (name, value) in rows {
        writeln!(w, "{name},{value}")?;
    }
    Ok(())
}

fn check_shapes<A, B>(a: &Image<A>, b: &Image<B>) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: a.len(), actual: b.len() })
    }
}

/// Mean IoU over classes with at least one ground-truth or predicted
/// member counted in `tp + fn_`.
fn mean_iou(tp: &[u64], fp: &[u64], fn_: &[u64]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for k in 0..tp.len() {
        if tp[k] + fn_[k] == 0 {
            continue;
        }
        sum += tp[k] as f64 / (tp[k] + fp[k] + fn_[k]) as f64;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegMetrics<T> {
    pub miou: T,
    pub pixel_acc: T,
    pub ece: T,
    pub calibration: CalibrationReport<T>,
}

/// Segmentation quality. The predicted class is the Dirichlet arg-max and
/// confidence is `1 - u_ep`.
pub fn seg_metrics<T: Real>(
    pred: &Image<DirichletEvidence<T>>,
    gt: &Image<usize>,
    mask: &Image<bool>,
) -> Result<SegMetrics<T>> {
    check_shapes(pred, gt)?;
    check_shapes(pred, mask)?;
    let classes = pred.pixels().first().map_or(0, |p| p.len());
    let mut tp = vec![0u64; classes];
    let mut fp = vec![0u64; classes];
    let mut fn_ = vec![0u64; classes];
    let mut correct = 0u64;
    let mut total = 0u64;
    let mut cal = CalibrationReport::confidence(CalibrationKind::Segmentation, DEFAULT_BINS)?;
    for ((p, &g), &m) in pred.pixels().iter().zip(gt.pixels()).zip(mask.pixels()) {
        if !m {
            continue;
        }
        if p.len() != classes {
            return Err(Error::DimensionMismatch { expected: classes, actual: p.len() });
        }
        if g >= classes {
            return Err(Error::LabelOutOfRange { label: g, classes });
        }
        let k = p.argmax();
        let hit = k == g;
        total += 1;
        if hit {
            correct += 1;
            tp[k] += 1;
        } else {
            fp[k] += 1;
            fn_[g] += 1;
        }
        let conf = T::ONE - p.u_ep();
        cal.add(conf, conf, if hit { T::ONE } else { T::ZERO });
    }
    if total == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(SegMetrics {
        miou: T::lit(mean_iou(&tp, &fp, &fn_)),
        pixel_acc: T::lit(correct as f64 / total as f64),
        ece: cal.ece(),
        calibration: cal,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMetrics<T> {
    pub rmse: T,
    pub nll: T,
    pub ece: T,
    pub calibration: CalibrationReport<T>,
}

/// Depth quality against ground truth. Calibration bins pixels by predicted
/// total deviation `σ_t` over `[0, sigma_range]` and compares the expected
/// absolute error of a Gaussian, `√(2/π)·σ_t`, with the realized one, both
/// divided by `max_depth`.
pub fn depth_metrics<T: Real>(
    pred: &Image<NigParams<T>>,
    gt: &Image<T>,
    mask: &Image<bool>,
    max_depth: T,
    sigma_range: T,
) -> Result<DepthMetrics<T>> {
    check_shapes(pred, gt)?;
    check_shapes(pred, mask)?;
    let mut cal = CalibrationReport::new(CalibrationKind::Depth, DEFAULT_BINS, T::ZERO, sigma_range, max_depth)?;
    let mean_abs = (T::TWO / T::pi()).sqrt();
    let half_ln_two_pi = T::HALF * (T::TWO * T::pi()).ln();
    let mut sq = Vec::new();
    let mut nll = Vec::new();
    for (i, ((p, &g), &m)) in pred.pixels().iter().zip(gt.pixels()).zip(mask.pixels()).enumerate() {
        if !m {
            continue;
        }
        if !(g > T::ZERO) {
            return Err(Error::NonPositiveDepth { index: i, value: g.as_f64() });
        }
        let var = p.moments()?.total_variance;
        let r = g - p.mu;
        sq.push(r * r);
        nll.push(half_ln_two_pi + T::HALF * var.ln() + r * r / (T::TWO * var));
        let sigma = var.sqrt();
        cal.add(sigma, mean_abs * sigma, r.abs());
    }
    let n = sq.len();
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let mse = crate::scalar::pairwise_sum(&sq) / T::of_usize(n);
    Ok(DepthMetrics {
        rmse: mse.sqrt(),
        nll: crate::scalar::pairwise_sum(&nll) / T::of_usize(n),
        ece: cal.ece(),
        calibration: cal,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapMetrics<T> {
    pub miou: T,
    pub voxel_acc: T,
    pub ece: T,
    /// Share of evaluated voxels labeled unknown.
    pub abstention_rate: T,
    /// Surface voxels with a ground-truth surface in them or a face neighbour.
    pub evaluated: usize,
    /// Surface voxels with no ground truth nearby.
    pub unmatched: usize,
    pub calibration: CalibrationReport<T>,
}

impl<T: Real> MapMetrics<T> {
    pub fn rows(&self) -> Vec<(&'static str, T)> {
        vec![
            ("miou_3d", self.miou),
            ("voxel_acc", self.voxel_acc),
            ("voxel_ece", self.ece),
            ("abstention_rate", self.abstention_rate),
            ("evaluated_voxels", T::of_usize(self.evaluated)),
            ("unmatched_voxels", T::of_usize(self.unmatched)),
        ]
    }
}

/// Voxel-level quality of the map's semantic surface (`|d| < voxel_size`,
/// weight above the grid's epsilon, label not free). Ground truth is the
/// voxelized scene surface: a voxel is correct when its thresholded label is
/// the class of a surface crossing it or one of its face neighbours. Unknown
/// labels are incorrect. A miss counts as a false negative for the nearest
/// surface's class.
pub fn map_metrics<T: Real>(grid: &VoxelGrid<T>, scene: &SceneSpec<T>, tau: T) -> Result<MapMetrics<T>> {
    let classes = grid.label_space().classes();
    if scene.classes() != classes {
        return Err(Error::DimensionMismatch { expected: classes, actual: scene.classes() });
    }
    let voxel_size = grid.config().voxel_size;
    let mut tp = vec![0u64; classes];
    let mut fp = vec![0u64; classes];
    let mut fn_ = vec![0u64; classes];
    let mut correct = 0usize;
    let mut abstained = 0usize;
    let mut evaluated = 0usize;
    let mut unmatched = 0usize;
    let mut cal = CalibrationReport::confidence(CalibrationKind::Voxel, DEFAULT_BINS)?;
    for (idx, v, state) in grid.semantic_surface_voxels(tau) {
        let labels = scene.voxel_labels(&grid.voxel_center(idx), voxel_size);
        let Some(&nearest) = labels.first() else {
            unmatched += 1;
            continue;
        };
        evaluated += 1;
        let hit = match state {
            VoxelState::Class(k) if labels.contains(&k) => {
                tp[k] += 1;
                true
            }
            VoxelState::Class(k) => {
                fp[k] += 1;
                fn_[nearest] += 1;
                false
            }
            VoxelState::Unknown => {
                abstained += 1;
                fn_[nearest] += 1;
                false
            }
            VoxelState::Free => {
                fn_[nearest] += 1;
                false
            }
        };
        if hit {
            correct += 1;
        }
        let conf = T::ONE - v.sem.u_ep();
        cal.add(conf, conf, if hit { T::ONE } else { T::ZERO });
    }
    if evaluated == 0 {
        return Err(Error::EmptyMap);
    }
    let n = evaluated as f64;
    Ok(MapMetrics {
        miou: T::lit(mean_iou(&tp, &fp, &fn_)),
        voxel_acc: T::lit(correct as f64 / n),
        ece: cal.ece(),
        abstention_rate: T::lit(abstained as f64 / n),
        evaluated,
        unmatched,
        calibration: cal,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn dir(c: &[f64]) -> DirichletEvidence<f64> {
        DirichletEvidence::new(c.to_vec()).unwrap()
    }

    #[test]
    fn perfect_segmentation() {
        let gt = Image::from_fn(4, 4, |u, v| (u + v) % 3);
        let pred = gt.map(|&g| {
            let mut c = vec![1.0; 3];
            c[g] = 1e6;
            dir(&c)
        });
        let mask = Image::filled(4, 4, true);
        let m = seg_metrics(&pred, &gt, &mask).unwrap();
        assert_eq!(m.miou, 1.0);
        assert_eq!(m.pixel_acc, 1.0);
        let conf = 1.0 - 3.0 / (1e6 + 2.0);
        assert!((m.ece - (1.0 - conf)).abs() < 1e-12);
    }

    #[test]
    fn inverted_checkerboard() {
        let gt = Image::from_fn(4, 4, |u, v| (u + v) % 2);
        let pred = gt.map(|&g| if g == 0 { dir(&[1.0, 5.0]) } else { dir(&[5.0, 1.0]) });
        let m = seg_metrics(&pred, &gt, &Image::filled(4, 4, true)).unwrap();
        assert_eq!(m.miou, 0.0);
        assert_eq!(m.pixel_acc, 0.0);
    }

    #[test]
    fn empty_mask_rejected() {
        let gt = Image::filled(2, 2, 0usize);
        let pred = Image::filled(2, 2, dir(&[2.0, 1.0]));
        assert!(matches!(seg_metrics(&pred, &gt, &Image::filled(2, 2, false)), Err(Error::EmptyMask)));
        let nig = Image::filled(2, 2, NigParams::new(1.0, 1.0, 2.0, 0.1));
        let gtd = Image::filled(2, 2, 1.0);
        assert!(matches!(depth_metrics(&nig, &gtd, &Image::filled(2, 2, false), 10.0, 0.25), Err(Error::EmptyMask)));
    }

    #[test]
    fn exact_depth() {
        let nig = NigParams::new(2.0, 1.0, 2.0, 0.02);
        let var = nig.moments().unwrap().total_variance;
        let pred = Image::filled(3, 3, nig);
        let gt = Image::filled(3, 3, 2.0);
        let m = depth_metrics(&pred, &gt, &Image::filled(3, 3, true), 10.0, 0.25).unwrap();
        assert_eq!(m.rmse, 0.0);
        let expected = 0.5 * (2.0 * std::f64::consts::PI * var).ln();
        assert!((m.nll - expected).abs() < 1e-12);
    }

    #[test]
    fn one_sigma_residual() {
        let nig = NigParams::new(2.0, 1.0, 2.0, 0.02);
        let var: f64 = nig.moments().unwrap().total_variance;
        let pred = Image::filled(2, 2, nig);
        let gt = Image::filled(2, 2, 2.0 + var.sqrt());
        let m = depth_metrics(&pred, &gt, &Image::filled(2, 2, true), 10.0, 0.25).unwrap();
        let expected = 0.5 * (2.0 * std::f64::consts::PI * var).ln() + 0.5;
        assert!((m.nll - expected).abs() < 1e-12);
    }

    #[test]
    fn nll_minimized_at_residual_variance() {
        let r = 0.3f64;
        let nll = |var: f64| {
            let pred = Image::filled(1, 1, NigParams::new(1.0, 1.0, 2.0, var / 2.0));
            let gt = Image::filled(1, 1, 1.0 + r);
            depth_metrics(&pred, &gt, &Image::filled(1, 1, true), 10.0, 0.25).unwrap().nll
        };
        let best = (1..400)
            .map(|i| i as f64 * 0.0005)
            .min_by(|a, b| nll(*a).partial_cmp(&nll(*b)).unwrap())
            .unwrap();
        assert!((best - r * r).abs() < 1e-12);
    }

    #[test]
    fn merge_combines_counts() {
        let mut a = CalibrationReport::<f64>::confidence(CalibrationKind::Segmentation, 10).unwrap();
        let mut b = a.clone();
        let mut all = a.clone();
        for (i, c) in [0.05, 0.5, 0.95, 0.51, 1.0].iter().enumerate() {
            let obs = (i % 2) as f64;
            if i < 2 { a.add(*c, *c, obs) } else { b.add(*c, *c, obs) }
            all.add(*c, *c, obs);
        }
        a.merge(&b).unwrap();
        assert_eq!(a, all);
        let w: f64 = a.weights().iter().sum();
        assert!((w - 1.0).abs() < 1e-15);
        let depth = CalibrationReport::<f64>::new(CalibrationKind::Depth, 10, 0.0, 0.25, 10.0).unwrap();
        assert!(a.merge(&depth).is_err());
    }

    #[test]
    fn csv_shapes() {
        let mut buf = Vec::new();
        write_metrics_csv(&[("a", 1.0f64), ("b", 0.5)], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "metric,value\na,1\nb,0.5\n");
        let cal = CalibrationReport::<f64>::confidence(CalibrationKind::Voxel, 10).unwrap();
        let mut buf = Vec::new();
        cal.write_curve_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 11);
    }

    proptest! {
        #[test]
        fn ece_bounded_and_permutation_invariant(
            samples in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 1..200),
            seed in any::<u64>(),
        ) {
            let mut a = CalibrationReport::<f64>::confidence(CalibrationKind::Segmentation, 10).unwrap();
            for &(c, hit) in &samples {
                a.add(c, c, if hit { 1.0 } else { 0.0 });
            }
            let e = a.ece();
            prop_assert!((0.0..=1.0).contains(&e));
            let mut shuffled = samples.clone();
            let n = shuffled.len();
            for i in (1..n).rev() {
                let j = (seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) % (i as u64 + 1)) as usize;
                shuffled.swap(i, j);
            }
            let mut b = CalibrationReport::<f64>::confidence(CalibrationKind::Segmentation, 10).unwrap();
            for &(c, hit) in &shuffled {
                b.add(c, c, if hit { 1.0 } else { 0.0 });
            }
            prop_assert!((b.ece() - e).abs() < 1e-12);
        }
    }
}
