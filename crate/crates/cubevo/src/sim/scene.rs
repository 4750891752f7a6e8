//! Deterministic synthetic scenes: a parametric vehicle trajectory, a cloud
//! of world points visible from it, and per-frame cubemap observations with
//! optional pixel noise and outlier contamination.

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::calib::{Bearing, CubemapCamera, FaceId, FacePoint};
use crate::optim::Se3Pose;

/// Points closer than this to any camera center are resampled.
const MIN_CAMERA_CLEARANCE: f64 = 0.5;
/// Placement attempts per point before giving up.
const MAX_PLACEMENT_ATTEMPTS: usize = 100;
/// Inter-frame spacing of the synthetic timestamps, in seconds.
const FRAME_DT: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    BadLine { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("{what} must be {bound}, got {got}")]
    OutOfRange {
        what: &'static str,
        bound: &'static str,
        got: f64,
    },
    #[error(transparent)]
    Calib(#[from] crate::calib::CalibError),
    #[error(
        "point {index} saw fewer than two frames after {attempts} placement attempts; \
         enlarge the extent or shorten the trajectory"
    )]
    PointPlacement { index: usize, attempts: usize },
}

/// Spatial layout of the synthetic points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointDistribution {
    /// Uniform over a box surrounding the whole trajectory.
    Box,
    /// Two lateral walls flanking the trajectory (near-field side points).
    Corridor,
}

/// Shape of the vehicle path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryKind {
    /// Constant heading along +z, total length `length`.
    Straight,
    /// One full circle of radius `radius` in the y=0 plane.
    Circle,
    /// Straight out, a half-circle turn, straight back; total length
    /// `length`.
    UTurn,
}

/// Full description of a synthetic scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub points: usize,
    pub distribution: PointDistribution,
    /// Characteristic size of the point cloud, world units.
    pub extent: f64,
    pub trajectory: TrajectoryKind,
    /// Path length for straight and u-turn trajectories, world units.
    pub length: f64,
    /// Circle radius, world units.
    pub radius: f64,
    pub frames: usize,
    /// Camera mounting yaw about the vehicle's vertical axis, degrees;
    /// 0 faces forward, 90 faces the right side.
    pub yaw_deg: f64,
    /// Isotropic Gaussian noise added in face-pixel coordinates.
    pub sigma_px: f64,
    /// Fraction of observations replaced by uniform random directions.
    pub outlier_frac: f64,
    pub seed: u64,
    pub face_size: u32,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            points: 300,
            distribution: PointDistribution::Box,
            extent: 20.0,
            trajectory: TrajectoryKind::Straight,
            length: 20.0,
            radius: 10.0,
            frames: 30,
            yaw_deg: 0.0,
            sigma_px: 0.0,
            outlier_frac: 0.0,
            seed: 0,
            face_size: 650,
        }
    }
}

impl SceneConfig {
    /// Parses a flat `key = value` config. Blank lines and `#` comments are
    /// skipped; unknown and duplicate keys are errors; absent keys keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<Self, SceneError> {
        let mut cfg = Self::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(SceneError::BadLine {
                    line,
                    text: trimmed.to_string(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|k| k == key) {
                return Err(SceneError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
            seen.push(key.to_string());
            let bad = || SceneError::BadValue {
                line,
                key: key.to_string(),
                value: value.to_string(),
            };
            match key {
                "points" => cfg.points = value.parse().map_err(|_| bad())?,
                "distribution" => {
                    cfg.distribution = match value {
                        "box" => PointDistribution::Box,
                        "corridor" => PointDistribution::Corridor,
                        _ => return Err(bad()),
                    }
                }
                "extent" => cfg.extent = value.parse().map_err(|_| bad())?,
                "trajectory" => {
                    cfg.trajectory = match value {
                        "straight" => TrajectoryKind::Straight,
                        "circle" => TrajectoryKind::Circle,
                        "uturn" | "u-turn" => TrajectoryKind::UTurn,
                        _ => return Err(bad()),
                    }
                }
                "length" => cfg.length = value.parse().map_err(|_| bad())?,
                "radius" => cfg.radius = value.parse().map_err(|_| bad())?,
                "frames" => cfg.frames = value.parse().map_err(|_| bad())?,
                "yaw_deg" => cfg.yaw_deg = value.parse().map_err(|_| bad())?,
                "sigma_px" => cfg.sigma_px = value.parse().map_err(|_| bad())?,
                "outlier_frac" => cfg.outlier_frac = value.parse().map_err(|_| bad())?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad())?,
                "face_size" => cfg.face_size = value.parse().map_err(|_| bad())?,
                _ => {
                    return Err(SceneError::UnknownKey {
                        line,
                        key: key.to_string(),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.frames < 2 {
            return Err(SceneError::OutOfRange {
                what: "frames",
                bound: "at least 2",
                got: self.frames as f64,
            });
        }
        if self.points == 0 {
            return Err(SceneError::OutOfRange {
                what: "points",
                bound: "at least 1",
                got: 0.0,
            });
        }
        if !(self.sigma_px >= 0.0 && self.sigma_px.is_finite()) {
            return Err(SceneError::OutOfRange {
                what: "sigma_px",
                bound: "finite and non-negative",
                got: self.sigma_px,
            });
        }
        if !(0.0..0.5).contains(&self.outlier_frac) {
            return Err(SceneError::OutOfRange {
                what: "outlier_frac",
                bound: "in [0, 0.5)",
                got: self.outlier_frac,
            });
        }
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(SceneError::OutOfRange {
                what: "extent",
                bound: "positive",
                got: self.extent,
            });
        }
        match self.trajectory {
            TrajectoryKind::Circle => {
                if !(self.radius > 0.0 && self.radius.is_finite()) {
                    return Err(SceneError::OutOfRange {
                        what: "radius",
                        bound: "positive",
                        got: self.radius,
                    });
                }
            }
            TrajectoryKind::Straight | TrajectoryKind::UTurn => {
                if !(self.length > 0.0 && self.length.is_finite()) {
                    return Err(SceneError::OutOfRange {
                        what: "length",
                        bound: "positive",
                        got: self.length,
                    });
                }
            }
        }
        if !self.yaw_deg.is_finite() {
            return Err(SceneError::OutOfRange {
                what: "yaw_deg",
                bound: "finite",
                got: self.yaw_deg,
            });
        }
        Ok(())
    }
}

/// One recorded observation: the scene point's identity, its (possibly
/// noisy or outlier-replaced) face pixel, and the lifted bearing.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameObs {
    pub point_id: usize,
    pub fp: FacePoint,
    pub bearing: Bearing,
    pub is_outlier: bool,
}

/// A generated scene: ground truth plus per-frame observations.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub config: SceneConfig,
    /// World-to-body pose per frame.
    pub gt_poses: Vec<Se3Pose>,
    pub gt_points: Vec<Vector3<f64>>,
    /// Per frame, sorted by `point_id`.
    pub frames: Vec<Vec<FrameObs>>,
    pub timestamps: Vec<f64>,
}

impl SyntheticScene {
    /// Polyline length of the ground-truth camera centers.
    pub fn path_length(&self) -> f64 {
        self.gt_poses
            .windows(2)
            .map(|w| (w[1].center() - w[0].center()).norm())
            .sum()
    }
}

/// Vehicle position and vehicle-to-world rotation at frame `i`.
fn vehicle_frame(cfg: &SceneConfig, i: usize) -> (Vector3<f64>, Rotation3<f64>) {
    let frame_from_forward = |c: Vector3<f64>, fwd: Vector3<f64>| {
        let z = fwd.normalize();
        let y = Vector3::y();
        let x = y.cross(&z);
        (c, Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z])))
    };
    match cfg.trajectory {
        TrajectoryKind::Straight => {
            let s = cfg.length * i as f64 / (cfg.frames - 1) as f64;
            frame_from_forward(Vector3::new(0.0, 0.0, s), Vector3::z())
        }
        TrajectoryKind::Circle => {
            let alpha = std::f64::consts::TAU * i as f64 / cfg.frames as f64;
            let c = cfg.radius * Vector3::new(alpha.cos(), 0.0, alpha.sin());
            frame_from_forward(c, Vector3::new(-alpha.sin(), 0.0, alpha.cos()))
        }
        TrajectoryKind::UTurn => {
            // Out along +z, half-circle to the left, back along -z; the
            // three arc lengths sum to `length`.
            let l = cfg.length;
            let leg = 0.4 * l;
            let r = 0.2 * l / std::f64::consts::PI;
            let s = l * i as f64 / (cfg.frames - 1) as f64;
            if s < leg {
                frame_from_forward(Vector3::new(0.0, 0.0, s), Vector3::z())
            } else if s < l - leg {
                let phi = (s - leg) / r;
                let c = Vector3::new(-r + r * phi.cos(), 0.0, leg + r * phi.sin());
                frame_from_forward(c, Vector3::new(-phi.sin(), 0.0, phi.cos()))
            } else {
                let d = s - (l - leg);
                frame_from_forward(Vector3::new(-2.0 * r, 0.0, leg - d), -Vector3::z())
            }
        }
    }
}

/// Ground-truth world-to-body poses for the configured trajectory and
/// mounting yaw.
pub fn trajectory_poses(cfg: &SceneConfig) -> Vec<Se3Pose> {
    let yaw = Rotation3::from_axis_angle(&Vector3::y_axis(), cfg.yaw_deg.to_radians());
    (0..cfg.frames)
        .map(|i| {
            let (c, r_wv) = vehicle_frame(cfg, i);
            let r_bw = (r_wv * yaw).inverse();
            Se3Pose::new(r_bw, -(r_bw * c))
        })
        .collect()
}

struct Bounds {
    min: Vector3<f64>,
    max: Vector3<f64>,
}

fn center_bounds(poses: &[Se3Pose]) -> Bounds {
    let mut min = Vector3::repeat(f64::INFINITY);
    let mut max = Vector3::repeat(f64::NEG_INFINITY);
    for p in poses {
        let c = p.center();
        min = min.inf(&c);
        max = max.sup(&c);
    }
    Bounds { min, max }
}

fn sample_point(cfg: &SceneConfig, b: &Bounds, rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let e = cfg.extent;
    match cfg.distribution {
        PointDistribution::Box => Vector3::new(
            rng.random_range((b.min.x - e / 2.0)..(b.max.x + e / 2.0)),
            rng.random_range((-e / 4.0)..(e / 4.0)),
            rng.random_range((b.min.z - e / 2.0)..(b.max.z + e / 2.0)),
        ),
        PointDistribution::Corridor => {
            let mid_x = 0.5 * (b.min.x + b.max.x);
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let offset = rng.random_range((e / 8.0)..(e / 4.0));
            Vector3::new(
                mid_x + side * offset,
                rng.random_range((-e / 4.0)..(e / 4.0)),
                rng.random_range((b.min.z - e / 4.0)..(b.max.z + e / 4.0)),
            )
        }
    }
}

/// Generates a deterministic synthetic scene from the config. Every point
/// is guaranteed visible from at least two frames (with bounded
/// resampling), noise is Gaussian in face pixels re-lifted to bearings on
/// the same face, and outliers replace the bearing with a uniform random
/// direction in the active-face union.
pub fn gen_scene(cfg: &SceneConfig) -> Result<SyntheticScene, SceneError> {
    cfg.validate()?;
    let cam = CubemapCamera::with_default_faces(cfg.face_size)?;
    let gt_poses = trajectory_poses(cfg);
    let bounds = center_bounds(&gt_poses);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut gt_points = Vec::with_capacity(cfg.points);
    for index in 0..cfg.points {
        let mut placed = false;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let p = sample_point(cfg, &bounds, &mut rng);
            let clear = gt_poses
                .iter()
                .all(|t| (p - t.center()).norm() >= MIN_CAMERA_CLEARANCE);
            if !clear {
                continue;
            }
            let visible = gt_poses
                .iter()
                .filter(|t| cam.project(&t.transform(&p)).is_ok())
                .count();
            if visible >= 2 {
                gt_points.push(p);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(SceneError::PointPlacement {
                index,
                attempts: MAX_PLACEMENT_ATTEMPTS,
            });
        }
    }

    let noise = if cfg.sigma_px > 0.0 {
        Some(Normal::new(0.0, cfg.sigma_px).expect("validated sigma"))
    } else {
        None
    };
    let active = cam.active_faces().to_vec();
    let pix_max = f64::from(cam.face_size()) - 0.5;
    let mut frames = Vec::with_capacity(cfg.frames);
    for pose in &gt_poses {
        let mut obs = Vec::new();
        for (point_id, p) in gt_points.iter().enumerate() {
            let Ok(true_fp) = cam.project(&pose.transform(p)) else {
                continue;
            };
            let is_outlier = cfg.outlier_frac > 0.0 && rng.random_bool(cfg.outlier_frac);
            let fp = if is_outlier {
                let face: FaceId = active[rng.random_range(0..active.len())];
                FacePoint::new(
                    face,
                    rng.random_range(-0.5..pix_max),
                    rng.random_range(-0.5..pix_max),
                )
            } else if let Some(n) = &noise {
                FacePoint::new(
                    true_fp.face,
                    true_fp.u + n.sample(&mut rng),
                    true_fp.v + n.sample(&mut rng),
                )
            } else {
                true_fp
            };
            obs.push(FrameObs {
                point_id,
                fp,
                bearing: cam.unproject(&fp),
                is_outlier,
            });
        }
        frames.push(obs);
    }

    let timestamps = (0..cfg.frames).map(|i| FRAME_DT * i as f64).collect();
    Ok(SyntheticScene {
        config: cfg.clone(),
        gt_poses,
        gt_points,
        frames,
        timestamps,
    })
}
