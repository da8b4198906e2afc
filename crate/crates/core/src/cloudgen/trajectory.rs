use std::str::FromStr;

use nalgebra::Vector3;

use crate::cloudgen::camera::Pose;
use crate::cloudgen::scene::SceneSpec;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[derive(serde::Serialize, serde::Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TrajectoryStyle {
    /// Evenly spaced yaw around the room center, looking inward.
    #[default]
    Orbit,
    /// Serpentine sweep with a fixed viewing direction.
    Lawnmower,
}

impl TrajectoryStyle {
    pub fn name(self) -> &'static str {
        match self {
            TrajectoryStyle::Orbit => "orbit",
            TrajectoryStyle::Lawnmower => "lawnmower",
        }
    }
}

impl FromStr for TrajectoryStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "orbit" => Ok(TrajectoryStyle::Orbit),
            "lawnmower" => Ok(TrajectoryStyle::Lawnmower),
            other => Err(Error::Config(format!("unknown trajectory style `{other}`"))),
        }
    }
}

const MIN_HORIZONTAL_EXTENT: f64 = 1.0;
const MIN_VERTICAL_EXTENT: f64 = 1.0;

/// Camera poses inside `scene`'s room.
pub fn make_trajectory<T: Real>(scene: &SceneSpec<T>, n_frames: usize, style: TrajectoryStyle) -> Result<Vec<Pose<T>>> {
    if n_frames == 0 {
        return Err(Error::invalid("n_frames", 0.0, "must be >= 1"));
    }
    let room = scene.room();
    let ext = room.extent();
    if ext[0] < T::lit(MIN_HORIZONTAL_EXTENT) || ext[1] < T::lit(MIN_HORIZONTAL_EXTENT) {
        return Err(Error::SceneTooSmall("room must be at least 1 m across"));
    }
    if ext[2] < T::lit(MIN_VERTICAL_EXTENT) {
        return Err(Error::SceneTooSmall("room must be at least 1 m tall"));
    }
    let poses = match style {
        TrajectoryStyle::Orbit => orbit(scene, n_frames)?,
        TrajectoryStyle::Lawnmower => lawnmower(scene, n_frames)?,
    };
    for p in &poses {
        if !scene.contains_camera(&p.origin()) {
            return Err(Error::InvalidScene("trajectory passes through an obstacle"));
        }
    }
    Ok(poses)
}

fn orbit<T: Real>(scene: &SceneSpec<T>, n: usize) -> Result<Vec<Pose<T>>> {
    let room = scene.room();
    let ext = room.extent();
    let c = room.center();
    let radius = T::lit(0.35) * ext[0].min(ext[1]);
    let height = room.min[2] + T::lit(0.6) * ext[2];
    let target = Vector3::new(c[0], c[1], room.min[2] + T::lit(0.2) * ext[2]);
    (0..n)
        .map(|i| {
            let angle = T::two_pi() * T::of_usize(i) / T::of_usize(n);
            let eye = Vector3::new(c[0] + radius * angle.cos(), c[1] + radius * angle.sin(), height);
            Pose::look_at(eye, target)
        })
        .collect()
}

fn lawnmower<T: Real>(scene: &SceneSpec<T>, n: usize) -> Result<Vec<Pose<T>>> {
    let room = scene.room();
    let ext = room.extent();
    let rows = ((n as f64).sqrt() / 2.0).ceil().max(1.0) as usize;
    let cols = n.div_ceil(rows);
    let x0 = room.min[0] + T::lit(0.15) * ext[0];
    let x1 = room.max[0] - T::lit(0.15) * ext[0];
    let y0 = room.min[1] + T::lit(0.125) * ext[1];
    let row_step = T::lit(0.1) * ext[1];
    let height = room.min[2] + T::lit(0.56) * ext[2];
    let forward = Vector3::new(T::ZERO, T::ONE, T::lit(-0.35));
    let mut poses = Vec::with_capacity(n);
    for i in 0..n {
        let row = i / cols;
        let mut col = i % cols;
        if row % 2 == 1 {
            col = cols - 1 - col;
        }
        let s = if cols > 1 { T::of_usize(col) / T::of_usize(cols - 1) } else { T::HALF };
        let eye = Vector3::new(x0 + (x1 - x0) * s, y0 + row_step * T::of_usize(row), height);
        poses.push(Pose::look_at(eye, eye + forward)?);
    }
    Ok(poses)
}

impl TryFrom<String> for TrajectoryStyle {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TrajectoryStyle> for String {
    fn from(v: TrajectoryStyle) -> String {
        v.name().to_string()
    }
}
