use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cloudgen::{Aabb, CameraIntrinsics, NoiseModel, SceneObject, SceneSpec, Shape, TrajectoryStyle};
use crate::error::{Error, Result};
use crate::losses::gradcheck::{REL_STEP, REL_TOL};
use crate::losses::{DepthLossConfig, SegLossConfig};
use crate::scalar::Real;
use crate::semfuse::FusionConfig;
use crate::tsdf::GridConfig;

/// Built-in scenes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenePreset {
    /// Furnished 4 × 4 × 2.5 m room with four classes.
    #[default]
    Room,
    /// Empty room whose only surface is one wall.
    SingleWall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Real")]
pub struct PlaneSpec<T> {
    pub axis: usize,
    pub position: T,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Real")]
pub struct BoxSpec<T> {
    pub min: [T; 3],
    pub max: [T; 3],
    pub label: usize,
}

/// Scene section: a preset, or custom room bounds with planes and boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real")]
pub struct SceneConfig<T> {
    pub preset: ScenePreset,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub room_min: Option<[T; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub room_max: Option<[T; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub planes: Vec<PlaneSpec<T>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub boxes: Vec<BoxSpec<T>>,
}

impl<T> Default for SceneConfig<T> {
    fn default() -> Self {
        Self {
            preset: ScenePreset::Room,
            room_min: None,
            room_max: None,
            classes: None,
            planes: Vec::new(),
            boxes: Vec::new(),
        }
    }
}

const PALETTE: [[u8; 3]; 8] = [
    [200, 200, 200],
    [140, 100, 60],
    [60, 120, 200],
    [200, 80, 60],
    [80, 180, 90],
    [220, 200, 60],
    [150, 80, 180],
    [60, 190, 190],
];

fn vec3<T: Real>(a: [T; 3]) -> Vector3<T> {
    Vector3::new(a[0], a[1], a[2])
}

impl<T: Real> SceneConfig<T> {
    fn is_custom(&self) -> bool {
        self.room_min.is_some() || self.room_max.is_some() || !self.planes.is_empty() || !self.boxes.is_empty()
    }

    pub fn build(&self) -> Result<SceneSpec<T>> {
        if !self.is_custom() {
            let scene = match self.preset {
                ScenePreset::Room => SceneSpec::default_room(),
                ScenePreset::SingleWall => SceneSpec::single_wall(),
            };
            return match self.classes {
                Some(k) if k != scene.classes() => SceneSpec::new(scene.objects().to_vec(), *scene.room(), k),
                _ => Ok(scene),
            };
        }
        let (Some(lo), Some(hi)) = (self.room_min, self.room_max) else {
            return Err(Error::Config("custom scene needs both room_min and room_max".into()));
        };
        let room = Aabb::new(vec3(lo), vec3(hi))?;
        let color = |label: usize| PALETTE[label % PALETTE.len()];
        let mut objects = Vec::new();
        for p in &self.planes {
            objects.push(SceneObject {
                shape: Shape::Plane { axis: p.axis, position: p.position },
                label: p.label,
                color: color(p.label),
            });
        }
        for b in &self.boxes {
            objects.push(SceneObject {
                shape: Shape::Cuboid(Aabb::new(vec3(b.min), vec3(b.max))?),
                label: b.label,
                color: color(b.label),
            });
        }
        let classes = self
            .classes
            .unwrap_or_else(|| objects.iter().map(|o| o.label + 1).max().unwrap_or(1));
        SceneSpec::new(objects, room, classes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub style: TrajectoryStyle,
    pub frames: usize,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self { style: TrajectoryStyle::Orbit, frames: 60 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real")]
pub struct CameraConfig<T> {
    pub width: usize,
    pub height: usize,
    /// Focal length in pixels; the principal point is the image center.
    pub focal: T,
    /// Points with mean depth beyond this are dropped (m).
    pub max_depth: T,
}

impl<T: Real> Default for CameraConfig<T> {
    fn default() -> Self {
        Self { width: 64, height: 48, focal: T::lit(50.0), max_depth: T::lit(10.0) }
    }
}

impl<T: Real> CameraConfig<T> {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics<T>> {
        CameraIntrinsics::centered(self.focal, self.width, self.height)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Where `run_experiment` writes its artifacts; nothing is written when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Also run the map with the other weighting mode and report both.
    pub ablation: bool,
    /// Integrate frames last to first.
    pub reverse_frames: bool,
}

/// Everything needed to reproduce one simulated mapping run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real")]
pub struct ExperimentSpec<T> {
    pub scene: SceneConfig<T>,
    pub trajectory: TrajectoryConfig,
    pub camera: CameraConfig<T>,
    pub noise: NoiseModel<T>,
    pub grid: GridConfig<T>,
    pub fusion: FusionConfig<T>,
    pub run: RunConfig,
}

impl<T: Real> Default for ExperimentSpec<T> {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            trajectory: TrajectoryConfig::default(),
            camera: CameraConfig::default(),
            noise: NoiseModel::default(),
            grid: GridConfig::default(),
            fusion: FusionConfig::default(),
            run: RunConfig::default(),
        }
    }
}

impl<T: Real> ExperimentSpec<T> {
    /// Checks every section, naming the section and key on failure.
    pub fn validate(&self) -> Result<()> {
        self.check(None)
    }

    fn check(&self, source: Option<&str>) -> Result<()> {
        let wrap = |section: &str, e: Error| locate_error(source, section, e);
        self.scene.build().map_err(|e| wrap("scene", e))?;
        if self.trajectory.frames == 0 {
            return Err(wrap("trajectory", Error::invalid("frames", 0.0, "must be >= 1")));
        }
        self.camera.intrinsics().map_err(|e| wrap("camera", e))?;
        if !(self.camera.max_depth > T::ZERO) || !self.camera.max_depth.finite() {
            return Err(wrap("camera", Error::invalid("max_depth", self.camera.max_depth.as_f64(), "must be > 0")));
        }
        self.noise.validate().map_err(|e| wrap("noise", e))?;
        self.grid.validate().map_err(|e| wrap("grid", e))?;
        self.fusion.validate().map_err(|e| wrap("fusion", e))?;
        Ok(())
    }

    pub fn scene_spec(&self) -> Result<SceneSpec<T>> {
        self.scene.build()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses and validates a spec. Errors name `section.key` and its line.
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
        spec.check(Some(text))?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

/// Finite-difference settings for gradient checks on dumped predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real")]
pub struct GradCheckConfig<T> {
    pub rel_step: T,
    pub tol: T,
    /// Pixels sampled per operation, evenly spaced over the mask.
    pub max_pixels: usize,
}

impl<T: Real> Default for GradCheckConfig<T> {
    fn default() -> Self {
        Self { rel_step: T::lit(REL_STEP), tol: T::lit(REL_TOL), max_pixels: 64 }
    }
}

impl<T: Real> GradCheckConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_step > T::ZERO && self.rel_step < T::ONE) {
            return Err(Error::invalid("rel_step", self.rel_step.as_f64(), "must lie in (0, 1)"));
        }
        if !(self.tol > T::ZERO) {
            return Err(Error::invalid("tol", self.tol.as_f64(), "must be > 0"));
        }
        if self.max_pixels == 0 {
            return Err(Error::invalid("max_pixels", 0.0, "must be >= 1"));
        }
        Ok(())
    }
}

/// Loss settings for evaluating dumped predictions: `[depth]`, `[seg]` and
/// `[gradcheck]` sections, all optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real")]
pub struct LossEvalConfig<T> {
    pub depth: DepthLossConfig<T>,
    pub seg: SegLossConfig<T>,
    pub gradcheck: GradCheckConfig<T>,
}

impl<T: Real> Default for LossEvalConfig<T> {
    fn default() -> Self {
        Self { depth: DepthLossConfig::default(), seg: SegLossConfig::default(), gradcheck: GradCheckConfig::default() }
    }
}

impl<T: Real> LossEvalConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.check(None)
    }

    fn check(&self, source: Option<&str>) -> Result<()> {
        let wrap = |section: &str, e: Error| locate_error(source, section, e);
        self.depth.validate().map_err(|e| wrap("depth", e))?;
        self.seg.validate().map_err(|e| wrap("seg", e))?;
        self.gradcheck.validate().map_err(|e| wrap("gradcheck", e))?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
        cfg.check(Some(text))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

/// Loads a TOML file of any deserializable config type, with the same
/// diagnostics as [`ExperimentSpec::load`].
pub fn load_toml<C: DeserializeOwned>(path: &Path) -> Result<C> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| match parse_error(&text, &e) {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn parse_error(text: &str, e: &toml::de::Error) -> Error {
    let message = e.message().trim().to_string();
    match e.span() {
        Some(span) => {
            let line = line_of(text, span.start);
            match key_at(text, span.start) {
                Some(key) => Error::Config(format!("{key} (line {line}): {message}")),
                None => Error::Config(format!("line {line}: {message}")),
            }
        }
        None => Error::Config(message),
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// `section.key` for the assignment on the line containing `offset`.
fn key_at(text: &str, offset: usize) -> Option<String> {
    let offset = offset.min(text.len());
    let start = text[..offset].rfind('\n').map_or(0, |i| i + 1);
    let line = text[start..].lines().next().unwrap_or("");
    let section = current_section(&text[..start]);
    let trimmed = line.trim();
    if trimmed.starts_with('[') {
        return Some(trimmed.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    }
    let key = trimmed.split('=').next()?.trim();
    if key.is_empty() {
        return None;
    }
    Some(match section {
        Some(s) => format!("{s}.{key}"),
        None => key.to_string(),
    })
}

fn current_section(before: &str) -> Option<String> {
    before.lines().rev().map(str::trim).find(|l| l.starts_with('[')).map(|l| {
        l.trim_matches(|c| c == '[' || c == ']').trim().to_string()
    })
}

/// Line of `key = ...` inside `[section]`.
fn find_key_line(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            current = Some(t.trim_matches(|c| c == '[' || c == ']').trim().to_string());
            continue;
        }
        if current.as_deref() == Some(section) {
            if let Some(k) = t.split('=').next() {
                if k.trim() == key && t.contains('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn offending_key(e: &Error) -> Option<&str> {
    match e {
        Error::InvalidParameter { name, .. } => Some(name),
        Error::InvalidNoise(msg) => msg.split_whitespace().next(),
        _ => None,
    }
}

fn locate_error(source: Option<&str>, section: &str, e: Error) -> Error {
    let key = offending_key(&e);
    let line = match (source, key) {
        (Some(text), Some(k)) => find_key_line(text, section, k),
        _ => None,
    };
    match (key, line) {
        (Some(k), Some(l)) => Error::Config(format!("{section}.{k} (line {l}): {e}")),
        (Some(k), None) => Error::Config(format!("{section}.{k}: {e}")),
        (None, _) => Error::Config(format!("{section}: {e}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tsdf::WeightMode;

    #[test]
    fn empty_spec_is_default() {
        let spec = ExperimentSpec::<f64>::from_toml("").unwrap();
        assert_eq!(spec, ExperimentSpec::default());
        assert_eq!(spec.camera.width, 64);
        assert_eq!(spec.trajectory.frames, 60);
        assert_eq!(spec.scene_spec().unwrap().classes(), 4);
    }

    #[test]
    fn loss_eval_config() {
        let cfg = LossEvalConfig::<f64>::from_toml("[depth]\nprior_kind = \"reg\"\n[seg]\nlambda3 = 0.5\n").unwrap();
        assert_eq!(cfg.depth.prior_kind, crate::losses::PriorKind::Reg);
        assert_eq!(cfg.seg.lambda3, 0.5);
        assert_eq!(cfg.gradcheck, GradCheckConfig::default());
        let err = LossEvalConfig::<f64>::from_toml("[seg]\n\nk_anneal = 2.0\n").unwrap_err();
        assert!(err.to_string().contains("seg.k_anneal (line 3)"), "{err}");
    }

    #[test]
    fn sections_parse() {
        let text = "[scene]\npreset = \"single_wall\"\n[grid]\nweight_mode = \"distance\"\nvoxel_size = 0.1\ntruncation = 0.3\n[run]\nseed = 9\n";
        let spec = ExperimentSpec::<f64>::from_toml(text).unwrap();
        assert_eq!(spec.scene.preset, ScenePreset::SingleWall);
        assert_eq!(spec.grid.weight_mode, WeightMode::InverseDepthSquared);
        assert_eq!(spec.run.seed, 9);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut spec = ExperimentSpec::<f64>::default();
        spec.run.seed = 42;
        spec.noise.q = 0.25;
        spec.scene.room_min = Some([-2.0, -2.0, 0.0]);
        spec.scene.room_max = Some([2.0, 2.0, 2.5]);
        spec.scene.planes.push(PlaneSpec { axis: 2, position: 0.0, label: 0 });
        spec.scene.boxes.push(BoxSpec { min: [0.0, 0.0, 0.0], max: [0.5, 0.5, 0.5], label: 1 });
        let back = ExperimentSpec::<f64>::from_toml(&spec.to_toml().unwrap()).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.scene_spec().unwrap().classes(), 2);
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        let text = "[noise]\na = 0.01\nbogus = 3\n";
        let msg = ExperimentSpec::<f64>::from_toml(text).unwrap_err().to_string();
        assert!(msg.contains("noise.bogus") && msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn wrong_type_names_key_and_line() {
        let text = "[camera]\nwidth = 64\n\nfocal = \"wide\"\n";
        let msg = ExperimentSpec::<f64>::from_toml(text).unwrap_err().to_string();
        assert!(msg.contains("camera.focal") && msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn invalid_value_names_key_and_line() {
        let text = "[run]\nseed = 1\n[noise]\nb = 0.002\na = -1.0\n";
        let msg = ExperimentSpec::<f64>::from_toml(text).unwrap_err().to_string();
        assert!(msg.contains("noise.a") && msg.contains("line 5"), "{msg}");
        let text = "[fusion]\ntau = 2.0\n";
        let msg = ExperimentSpec::<f64>::from_toml(text).unwrap_err().to_string();
        assert!(msg.contains("fusion.tau") && msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn custom_scene_needs_bounds() {
        let text = "[[scene.planes]]\naxis = 2\nposition = 0.0\nlabel = 0\n";
        assert!(matches!(ExperimentSpec::<f64>::from_toml(text), Err(Error::Config(_))));
    }
}
