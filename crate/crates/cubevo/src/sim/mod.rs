//! Synthetic world: deterministic scene generation, plane renderers, the
//! batch visual odometry driver, and the pose-metric benchmark.

mod render;
mod scene;
mod vo;

pub use render::{render_face_plane, render_fisheye_plane, smooth_checker};
pub use scene::{
    gen_scene, trajectory_poses, FrameObs, PointDistribution, SceneConfig, SceneError,
    SyntheticScene, TrajectoryKind,
};
pub use vo::{bench_metrics, run_vo, BenchRecord, VoConfig, VoError, VoResult};
