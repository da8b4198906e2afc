//! End-to-end simulated runs: scene, trajectory, synthetic evidential frames,
//! map integration and evaluation, plus variant comparisons.

mod ablation;
mod dump;
mod losseval;
mod spec;

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub use ablation::{ablation_table, AblationRow, AblationTable, Variant};
pub use dump::{
    load_gt_dump, load_pred_dump, read_gt_dump, read_pred_dump, save_gt_dump, save_pred_dump, write_gt_dump,
    write_pred_dump, GroundTruthDump, PredictionDump,
};
pub use losseval::{evaluate_losses, GradCheckRow, LossReport};
pub use spec::{
    load_toml, BoxSpec, GradCheckConfig, LossEvalConfig, CameraConfig, ExperimentSpec, PlaneSpec, RunConfig, SceneConfig, ScenePreset, TrajectoryConfig,
};

use crate::cloudgen::{backproject, corrupt_frame, make_trajectory, render_frame, save_evcl, EvidCloud, Pose, RenderedFrame};
use crate::error::{Error, Result};
use crate::evidmodel::{DirichletEvidence, NigParams};
use crate::image::Image;
use crate::metrics::{
    depth_metrics, map_metrics, write_metrics_csv, CalibrationKind, CalibrationReport, MapMetrics, DEFAULT_BINS,
    DEFAULT_DEPTH_SIGMA_RANGE,
};
use crate::rng::derive_seed;
use crate::scalar::Real;
use crate::tsdf::{save_evvx, VoxelGrid, WeightMode};

/// One synthetic frame: ground truth, corrupted predictions and the cloud
/// lifted from them.
#[derive(Debug, Clone)]
pub struct SimFrame<T: Real> {
    /// Position along the trajectory.
    pub index: usize,
    pub seed: u64,
    pub pose: Pose<T>,
    pub truth: RenderedFrame<T>,
    pub depth: Image<NigParams<T>>,
    pub sem: Image<DirichletEvidence<T>>,
    pub cloud: EvidCloud<T>,
}

/// Produces the frames of `spec` in integration order and hands each to
/// `visit`. Frame `i` always uses the noise seed derived from `(seed, i)`,
/// whatever the order.
pub fn generate_frames<T: Real, F>(spec: &ExperimentSpec<T>, mut visit: F) -> Result<()>
where
    F: FnMut(SimFrame<T>) -> Result<()>,
{
    spec.validate()?;
    let scene = spec.scene_spec()?;
    let intr = spec.camera.intrinsics()?;
    let poses = make_trajectory(&scene, spec.trajectory.frames, spec.trajectory.style)?;
    let mut order: Vec<usize> = (0..poses.len()).collect();
    if spec.run.reverse_frames {
        order.reverse();
    }
    for index in order {
        let pose = poses[index].clone();
        let seed = derive_seed(spec.run.seed, index as u64);
        let truth = render_frame(&scene, &intr, &pose)?;
        let (depth, sem) = corrupt_frame(&truth.depth, &truth.label, &spec.noise, scene.classes(), seed)?;
        let cloud = backproject(&depth, &sem, &truth.color, &intr, &pose, spec.camera.max_depth, index as u64)?;
        visit(SimFrame { index, seed, pose, truth, depth, sem, cloud })?;
    }
    Ok(())
}

/// Per-frame integration record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameLog {
    pub frame: usize,
    pub points: usize,
    pub voxel_updates: usize,
    pub semantic_updates: usize,
    pub new_blocks: usize,
    /// Blocks allocated after this frame.
    pub blocks: usize,
    pub wall_ms: f64,
}

impl fmt::Display for FrameLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "frame={} points={} voxel_updates={} semantic_updates={} new_blocks={} blocks={} wall_ms={:.3}",
            self.frame, self.points, self.voxel_updates, self.semantic_updates, self.new_blocks, self.blocks, self.wall_ms
        )
    }
}

/// 2-D depth quality pooled over every valid pixel of every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthSummary<T> {
    pub pixels: u64,
    pub rmse: T,
    pub ece: T,
    pub calibration: CalibrationReport<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport<T> {
    pub map: MapMetrics<T>,
    pub depth: DepthSummary<T>,
    /// Both weighting modes side by side when the spec asks for it.
    pub ablation: Option<AblationTable<T>>,
}

impl<T: Real> ExperimentReport<T> {
    pub fn rows(&self) -> Vec<(&'static str, T)> {
        let mut rows = self.map.rows();
        rows.push(("depth_rmse", self.depth.rmse));
        rows.push(("depth_ece", self.depth.ece));
        rows.push(("depth_pixels", T::lit(self.depth.pixels as f64)));
        rows
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput<T: Real> {
    pub grid: VoxelGrid<T>,
    pub report: ExperimentReport<T>,
    pub logs: Vec<FrameLog>,
}

/// Integrates every frame of `spec` into a fresh map and evaluates it.
/// Nothing is written to disk.
pub fn build_map<T: Real>(spec: &ExperimentSpec<T>) -> Result<ExperimentOutput<T>> {
    run_with_log(spec, &mut |_| Ok(()), &mut |_| {})
}

fn run_with_log<T: Real>(
    spec: &ExperimentSpec<T>,
    log: &mut dyn FnMut(&FrameLog) -> Result<()>,
    partial: &mut dyn FnMut(&VoxelGrid<T>),
) -> Result<ExperimentOutput<T>> {
    spec.validate()?;
    let scene = spec.scene_spec()?;
    let mut grid = VoxelGrid::new(spec.grid, scene.classes())?;
    let mut logs = Vec::with_capacity(spec.trajectory.frames);
    let mut depth_cal = CalibrationReport::new(
        CalibrationKind::Depth,
        DEFAULT_BINS,
        T::ZERO,
        T::lit(DEFAULT_DEPTH_SIGMA_RANGE),
        spec.camera.max_depth,
    )?;
    let mut sq_sum = T::ZERO;
    let result = generate_frames(spec, |frame| {
        let start = Instant::now();
        let summary = grid.integrate_cloud(&frame.cloud, Some(&spec.fusion))?;
        let entry = FrameLog {
            frame: frame.index,
            points: summary.points,
            voxel_updates: summary.voxel_updates,
            semantic_updates: summary.semantic_updates,
            new_blocks: summary.new_blocks,
            blocks: grid.block_count(),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        let mask = frame.truth.depth.map(|&d| d > T::ZERO);
        match depth_metrics(&frame.depth, &frame.truth.depth, &mask, spec.camera.max_depth, T::lit(DEFAULT_DEPTH_SIGMA_RANGE)) {
            Ok(m) => {
                let n = m.calibration.count();
                sq_sum += m.rmse * m.rmse * T::lit(n as f64);
                depth_cal.merge(&m.calibration)?;
            }
            Err(Error::EmptyMask) => {}
            Err(e) => return Err(e),
        }
        log(&entry)?;
        logs.push(entry);
        Ok(())
    });
    if let Err(e) = result {
        partial(&grid);
        return Err(e);
    }
    let map = map_metrics(&grid, &scene, spec.fusion.tau)?;
    let pixels = depth_cal.count();
    let rmse = if pixels > 0 { (sq_sum / T::lit(pixels as f64)).sqrt() } else { T::ZERO };
    let depth = DepthSummary { pixels, rmse, ece: depth_cal.ece(), calibration: depth_cal };
    Ok(ExperimentOutput { grid, report: ExperimentReport { map, depth, ablation: None }, logs })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Runs `spec` end to end. With `run.output` set, writes `frames.log`
/// (flushed after every frame), `map.evvx`, `metrics.csv`,
/// `calibration.csv`, `depth_calibration.csv` and the resolved `spec.toml`;
/// with `run.ablation`, also `ablation.csv`. A failed run leaves the log
/// and a `map.partial.evvx` of whatever was integrated.
pub fn run_experiment<T: Real>(spec: &ExperimentSpec<T>) -> Result<ExperimentOutput<T>> {
    spec.validate()?;
    let Some(out) = spec.run.output.clone() else {
        let mut output = build_map(spec)?;
        if spec.run.ablation {
            output.report.ablation = Some(weighting_ablation(spec)?);
        }
        return Ok(output);
    };
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write_with(&out.join("spec.toml"), |w| w.write_all(spec.to_toml().unwrap_or_default().as_bytes()))?;
    let log_path = out.join("frames.log");
    let mut log_file = create(&log_path)?;
    let partial_path = out.join("map.partial.evvx");
    let mut output = run_with_log(
        spec,
        &mut |entry| {
            writeln!(log_file, "{entry}").and_then(|_| log_file.flush()).map_err(|e| Error::io(&log_path, e))
        },
        &mut |grid| {
            let _ = save_evvx(&partial_path, grid);
        },
    )?;
    save_evvx(&out.join("map.evvx"), &output.grid)?;
    let rows = output.report.rows();
    write_with(&out.join("metrics.csv"), |w| write_metrics_csv(&rows, w))?;
    write_with(&out.join("calibration.csv"), |w| output.report.map.calibration.write_curve_csv(w))?;
    write_with(&out.join("depth_calibration.csv"), |w| output.report.depth.calibration.write_curve_csv(w))?;
    if spec.run.ablation {
        let table = weighting_ablation(spec)?;
        write_with(&out.join("ablation.csv"), |w| table.write_csv(w))?;
        output.report.ablation = Some(table);
    }
    Ok(output)
}

fn weighting_ablation<T: Real>(spec: &ExperimentSpec<T>) -> Result<AblationTable<T>> {
    let variants = [WeightMode::InverseDepthSquared, WeightMode::InverseTotalUncertainty]
        .map(|mode| Variant { weight_mode: Some(mode), ..Variant::named(mode.name()) });
    ablation_table(spec, &variants)
}

/// Files written for one simulated frame, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub frame: usize,
    pub cloud: PathBuf,
    pub ground_truth: PathBuf,
    pub prediction: PathBuf,
    pub points: usize,
}

pub const MANIFEST_FILE: &str = "manifest.txt";

/// Writes each frame's cloud (`frame_NNNN.evcl`), ground-truth dump
/// (`.gt`) and prediction dump (`.pred`), the resolved `spec.toml` and a
/// manifest listing them in frame order.
pub fn simulate_to_dir<T: Real>(spec: &ExperimentSpec<T>, out: &Path) -> Result<Vec<ManifestEntry>> {
    spec.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_with(&out.join("spec.toml"), |w| w.write_all(spec.to_toml().unwrap_or_default().as_bytes()))?;
    let mut entries = Vec::with_capacity(spec.trajectory.frames);
    generate_frames(spec, |frame| {
        let stem = format!("frame_{:04}", frame.index);
        let entry = ManifestEntry {
            frame: frame.index,
            cloud: PathBuf::from(format!("{stem}.evcl")),
            ground_truth: PathBuf::from(format!("{stem}.gt")),
            prediction: PathBuf::from(format!("{stem}.pred")),
            points: frame.cloud.len(),
        };
        save_evcl(&out.join(&entry.cloud), &frame.cloud)?;
        save_gt_dump(&out.join(&entry.ground_truth), &frame.truth.depth, &frame.truth.label)?;
        save_pred_dump(&out.join(&entry.prediction), &frame.depth, &frame.sem)?;
        entries.push(entry);
        Ok(())
    })?;
    entries.sort_by_key(|e| e.frame);
    write_with(&out.join(MANIFEST_FILE), |w| {
        writeln!(w, "# frame cloud ground_truth prediction points")?;
        for e in &entries {
            writeln!(
                w,
                "{} {} {} {} {}",
                e.frame,
                e.cloud.display(),
                e.ground_truth.display(),
                e.prediction.display(),
                e.points
            )?;
        }
        Ok(())
    })?;
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloudgen::NoiseModel;

    fn small(frames: usize) -> ExperimentSpec<f64> {
        let mut spec = ExperimentSpec::default();
        spec.trajectory.frames = frames;
        spec.camera.width = 32;
        spec.camera.height = 24;
        spec.camera.focal = 25.0;
        spec
    }

    #[test]
    fn frames_follow_seed_not_order() {
        let spec = small(3);
        let mut forward = Vec::new();
        generate_frames(&spec, |f| {
            forward.push((f.index, f.depth));
            Ok(())
        })
        .unwrap();
        let mut rev = spec.clone();
        rev.run.reverse_frames = true;
        let mut backward = Vec::new();
        generate_frames(&rev, |f| {
            backward.push((f.index, f.depth));
            Ok(())
        })
        .unwrap();
        backward.reverse();
        assert_eq!(forward, backward);
    }

    #[test]
    fn zero_noise_small_run_is_exact() {
        let mut spec = small(12);
        spec.noise = NoiseModel::zero();
        let out = build_map(&spec).unwrap();
        assert_eq!(out.logs.len(), 12);
        assert!(out.report.map.evaluated > 0);
        assert!(out.report.depth.rmse < 1e-9);
    }

    #[test]
    fn log_line_format() {
        let log = FrameLog { frame: 2, points: 10, voxel_updates: 50, semantic_updates: 5, new_blocks: 1, blocks: 3, wall_ms: 0.5 };
        assert_eq!(
            log.to_string(),
            "frame=2 points=10 voxel_updates=50 semantic_updates=5 new_blocks=1 blocks=3 wall_ms=0.500"
        );
    }

    #[test]
    fn writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = small(2);
        spec.run.output = Some(dir.path().to_path_buf());
        run_experiment(&spec).unwrap();
        for f in ["frames.log", "map.evvx", "metrics.csv", "calibration.csv", "depth_calibration.csv", "spec.toml"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let log = fs::read_to_string(dir.path().join("frames.log")).unwrap();
        assert_eq!(log.lines().count(), 2);
        let resolved = ExperimentSpec::<f64>::load(&dir.path().join("spec.toml")).unwrap();
        assert_eq!(resolved, spec);
    }

    #[test]
    fn simulate_writes_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let entries = simulate_to_dir(&small(3), dir.path()).unwrap();
        assert_eq!(entries.len(), 3);
        let manifest = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(manifest.lines().count(), 4);
        for e in &entries {
            let cloud: EvidCloud<f64> = crate::cloudgen::load_evcl(&dir.path().join(&e.cloud), e.frame as u64).unwrap();
            assert_eq!(cloud.len(), e.points);
            let gt = load_gt_dump::<f64>(&dir.path().join(&e.ground_truth)).unwrap();
            let pred = load_pred_dump::<f64>(&dir.path().join(&e.prediction)).unwrap();
            assert!(gt.depth.same_shape(&pred.depth));
        }
    }
}
