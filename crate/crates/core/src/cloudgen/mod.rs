//! Camera geometry, back-projection into evidential point clouds and the
//! synthetic scene simulator that produces calibrated measurements with
//! ground truth.

mod camera;
mod cloud;
mod io;
mod noise;
mod render;
mod scene;
mod trajectory;

pub use camera::{CameraIntrinsics, Pose};
pub use cloud::{backproject, EvidCloud, EvidPoint};
pub use io::{load_evcl, read_evcl, read_evcl_text, save_evcl, write_evcl, write_evcl_text, EVCL_MAGIC, EVCL_VERSION};
pub use noise::{corrupt_frame, NoiseModel};
pub use render::{render_frame, RenderedFrame};
pub use scene::{Aabb, Hit, SceneObject, SceneSpec, Shape};
pub use trajectory::{make_trajectory, TrajectoryStyle};
