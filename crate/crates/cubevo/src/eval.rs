//! Trajectory evaluation: timestamped trajectories, plain-text I/O in the
//! `timestamp tx ty tz qx qy qz qw` line format, similarity alignment of
//! point sets, and absolute trajectory error (ATE).

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::optim::Se3Pose;

/// Default association window in seconds.
pub const DEFAULT_ASSOC_WINDOW: f64 = 0.02;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("trajectory is empty")]
    Empty,
    #[error("timestamps must increase strictly: entry {index} has t={t} after t={prev}")]
    NonIncreasingTime { index: usize, t: f64, prev: f64 },
    #[error("non-finite value in trajectory entry {index}")]
    NonFinite { index: usize },
    #[error("line {line}: expected 8 fields `timestamp tx ty tz qx qy qz qw`, got {got}")]
    FieldCount { line: usize, got: usize },
    #[error("line {line}: could not parse `{text}` as a number")]
    BadNumber { line: usize, text: String },
    #[error("line {line}: quaternion norm {norm} deviates from 1 by more than 1e-3")]
    BadQuaternion { line: usize, norm: f64 },
    #[error("point sets differ in length: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("need at least {need} point pairs, got {got}")]
    TooFewPairs { got: usize, need: usize },
    #[error("point set has zero spread; similarity alignment is undefined")]
    DegenerateSpread,
    #[error("no pose pairs associate within {window} s")]
    NoAssociations { window: f64 },
}

/// One trajectory sample: body position in the world and body-to-world
/// orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryEntry {
    pub timestamp: f64,
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

/// A non-empty trajectory with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    entries: Vec<TrajectoryEntry>,
}

impl Trajectory {
    pub fn new(entries: Vec<TrajectoryEntry>) -> Result<Self, EvalError> {
        if entries.is_empty() {
            return Err(EvalError::Empty);
        }
        for (i, e) in entries.iter().enumerate() {
            let finite = e.timestamp.is_finite()
                && e.position.iter().all(|v| v.is_finite())
                && e.orientation.coords.iter().all(|v| v.is_finite());
            if !finite {
                return Err(EvalError::NonFinite { index: i });
            }
            if i > 0 && e.timestamp <= entries[i - 1].timestamp {
                return Err(EvalError::NonIncreasingTime {
                    index: i,
                    t: e.timestamp,
                    prev: entries[i - 1].timestamp,
                });
            }
        }
        Ok(Self { entries })
    }

    /// Builds a trajectory from world-to-body poses: the stored position is
    /// each camera center and the orientation is body-to-world.
    pub fn from_poses(timestamps: &[f64], poses: &[Se3Pose]) -> Result<Self, EvalError> {
        if timestamps.len() != poses.len() {
            return Err(EvalError::LengthMismatch {
                a: timestamps.len(),
                b: poses.len(),
            });
        }
        let entries = timestamps
            .iter()
            .zip(poses)
            .map(|(&t, p)| TrajectoryEntry {
                timestamp: t,
                position: p.center(),
                orientation: UnitQuaternion::from_rotation_matrix(&p.rotation.inverse()),
            })
            .collect();
        Self::new(entries)
    }

    pub fn entries(&self) -> &[TrajectoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.timestamp).collect()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.entries.iter().map(|e| e.position).collect()
    }
}

/// Parses the `timestamp tx ty tz qx qy qz qw` line format. Blank lines and
/// lines starting with `#` are skipped; quaternions must be unit length
/// within 1e-3 and are renormalized.
pub fn parse_tum(text: &str) -> Result<Trajectory, EvalError> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(EvalError::FieldCount {
                line,
                got: fields.len(),
            });
        }
        let mut nums = [0.0f64; 8];
        for (slot, field) in nums.iter_mut().zip(&fields) {
            *slot = field.parse().map_err(|_| EvalError::BadNumber {
                line,
                text: field.to_string(),
            })?;
            if !slot.is_finite() {
                return Err(EvalError::BadNumber {
                    line,
                    text: field.to_string(),
                });
            }
        }
        let q = Quaternion::new(nums[7], nums[4], nums[5], nums[6]);
        let norm = q.norm();
        if (norm - 1.0).abs() > 1e-3 {
            return Err(EvalError::BadQuaternion { line, norm });
        }
        entries.push(TrajectoryEntry {
            timestamp: nums[0],
            position: Vector3::new(nums[1], nums[2], nums[3]),
            orientation: UnitQuaternion::from_quaternion(q),
        });
    }
    Trajectory::new(entries)
}

/// Formats a trajectory in the `timestamp tx ty tz qx qy qz qw` line format
/// with nine decimal places.
pub fn format_tum(traj: &Trajectory) -> String {
    let mut out = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for e in traj.entries() {
        let q = e.orientation.quaternion();
        out.push_str(&format!(
            "{:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}\n",
            e.timestamp, e.position.x, e.position.y, e.position.z, q.i, q.j, q.k, q.w
        ));
    }
    out
}

/// A similarity transform `p -> scale * rotation * p + translation`.
#[derive(Debug, Clone, Copy)]
pub struct Sim3Transform {
    pub scale: f64,
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl Sim3Transform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rotation = self.rotation.inverse();
        let scale = 1.0 / self.scale;
        Self {
            scale,
            rotation,
            translation: -(scale * (rotation * self.translation)),
        }
    }
}

/// Least-squares similarity transform mapping `from` onto `to` (closed
/// form on the point-set means, spreads, and cross-covariance SVD, with the
/// determinant correction on the smallest singular value). Collinear point
/// sets are supported: the component of rotation about the common line is
/// arbitrary but the returned transform still minimizes the residual.
pub fn align_sim3(from: &[Vector3<f64>], to: &[Vector3<f64>]) -> Result<Sim3Transform, EvalError> {
    if from.len() != to.len() {
        return Err(EvalError::LengthMismatch {
            a: from.len(),
            b: to.len(),
        });
    }
    let n = from.len();
    if n < 3 {
        return Err(EvalError::TooFewPairs { got: n, need: 3 });
    }
    let nf = n as f64;
    let mu_x: Vector3<f64> = from.iter().sum::<Vector3<f64>>() / nf;
    let mu_y: Vector3<f64> = to.iter().sum::<Vector3<f64>>() / nf;
    let mut sigma_x = 0.0;
    let mut sigma_y = 0.0;
    let mut cov = Matrix3::zeros();
    for (x, y) in from.iter().zip(to) {
        let dx = x - mu_x;
        let dy = y - mu_y;
        sigma_x += dx.norm_squared();
        sigma_y += dy.norm_squared();
        cov += dy * dx.transpose();
    }
    sigma_x /= nf;
    sigma_y /= nf;
    cov /= nf;
    if sigma_x < 1e-24 || sigma_y < 1e-24 {
        return Err(EvalError::DegenerateSpread);
    }
    let svd = cov.svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let d = svd.singular_values;
    let s3 = if u.determinant() * v_t.determinant() < 0.0 {
        -1.0
    } else {
        1.0
    };
    let mut mid = Matrix3::identity();
    mid[(2, 2)] = s3;
    let rotation = Rotation3::from_matrix_unchecked(u * mid * v_t);
    let scale = (d[0] + d[1] + s3 * d[2]) / sigma_x;
    let translation = mu_y - scale * (rotation * mu_x);
    Ok(Sim3Transform {
        scale,
        rotation,
        translation,
    })
}

/// Greedy one-to-one association of two sorted timestamp lists: candidate
/// pairs within `window` seconds are taken in order of increasing |dt|.
/// Returned pairs `(i, j)` index into `a` and `b` and are sorted by `i`.
pub fn associate(a: &[f64], b: &[f64], window: f64) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, &ta) in a.iter().enumerate() {
        for (j, &tb) in b.iter().enumerate() {
            let dt = (ta - tb).abs();
            if dt <= window {
                candidates.push((dt, i, j));
            }
        }
    }
    candidates.sort_by(|x, y| {
        x.0.partial_cmp(&y.0)
            .expect("finite timestamps")
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
    });
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Absolute trajectory error between an estimated and a reference
/// trajectory.
#[derive(Debug, Clone)]
pub struct AteReport {
    /// Root-mean-square position error after similarity alignment, in the
    /// reference trajectory's units.
    pub rmse: f64,
    /// Number of associated pose pairs the statistic is computed over.
    pub n_pairs: usize,
    /// The similarity transform that maps estimated positions onto the
    /// reference.
    pub alignment: Sim3Transform,
}

/// Associates the two trajectories by timestamp (window in seconds),
/// aligns the estimated positions onto the reference with a similarity
/// transform, and reports the position RMSE. Orientations are ignored.
pub fn ate_rmse(est: &Trajectory, reference: &Trajectory, window: f64) -> Result<AteReport, EvalError> {
    let pairs = associate(&est.timestamps(), &reference.timestamps(), window);
    if pairs.is_empty() {
        return Err(EvalError::NoAssociations { window });
    }
    let from: Vec<Vector3<f64>> = pairs.iter().map(|&(i, _)| est.entries[i].position).collect();
    let to: Vec<Vector3<f64>> = pairs
        .iter()
        .map(|&(_, j)| reference.entries[j].position)
        .collect();
    let alignment = align_sim3(&from, &to)?;
    let sse: f64 = from
        .iter()
        .zip(&to)
        .map(|(x, y)| (alignment.apply(x) - y).norm_squared())
        .sum();
    Ok(AteReport {
        rmse: (sse / pairs.len() as f64).sqrt(),
        n_pairs: pairs.len(),
        alignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                )
            })
            .collect()
    }

    fn random_sim3(rng: &mut ChaCha8Rng) -> Sim3Transform {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        Sim3Transform {
            scale: rng.random_range(0.3..3.0),
            rotation: Rotation3::new(axis),
            translation: Vector3::new(
                rng.random_range(-4.0..4.0),
                rng.random_range(-4.0..4.0),
                rng.random_range(-4.0..4.0),
            ),
        }
    }

    fn trajectory_of(positions: &[Vector3<f64>]) -> Trajectory {
        let entries = positions
            .iter()
            .enumerate()
            .map(|(i, p)| TrajectoryEntry {
                timestamp: 0.1 * i as f64,
                position: *p,
                orientation: UnitQuaternion::identity(),
            })
            .collect();
        Trajectory::new(entries).unwrap()
    }

    #[test]
    fn aligning_a_set_to_itself_is_the_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        let pts = random_points(20, &mut rng);
        let t = align_sim3(&pts, &pts).unwrap();
        assert_relative_eq!(t.scale, 1.0, epsilon = 1e-12);
        assert!((t.rotation.matrix() - Matrix3::identity()).norm() < 1e-12);
        assert!(t.translation.norm() < 1e-12);
    }

    #[test]
    fn halved_input_aligns_with_scale_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(82);
        let to = random_points(15, &mut rng);
        let from: Vec<_> = to.iter().map(|p| 0.5 * p).collect();
        let t = align_sim3(&from, &to).unwrap();
        assert_relative_eq!(t.scale, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn random_similarity_transforms_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        for _ in 0..50 {
            let from = random_points(30, &mut rng);
            let g = random_sim3(&mut rng);
            let to: Vec<_> = from.iter().map(|p| g.apply(p)).collect();
            let t = align_sim3(&from, &to).unwrap();
            for p in &from {
                assert!((t.apply(p) - g.apply(p)).norm() < 1e-9);
            }
            assert_relative_eq!(t.scale, g.scale, epsilon = 1e-9);
        }
    }

    #[test]
    fn inverse_composes_to_the_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(84);
        let g = random_sim3(&mut rng);
        let gi = g.inverse();
        for p in random_points(10, &mut rng) {
            assert!((gi.apply(&g.apply(&p)) - p).norm() < 1e-12);
        }
    }

    #[test]
    fn collinear_point_sets_are_aligned() {
        let from: Vec<_> = (0..10)
            .map(|i| Vector3::new(i as f64, 0.0, 0.0))
            .collect();
        let dir = Vector3::new(1.0, 2.0, 2.0) / 3.0;
        let to: Vec<_> = (0..10)
            .map(|i| Vector3::new(0.5, -1.0, 2.0) + 3.0 * i as f64 * dir)
            .collect();
        let t = align_sim3(&from, &to).unwrap();
        assert_relative_eq!(t.scale, 3.0, epsilon = 1e-9);
        for (x, y) in from.iter().zip(&to) {
            assert!((t.apply(x) - y).norm() < 1e-9);
        }
    }

    #[test]
    fn alignment_rejects_degenerate_input() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        let repeated = vec![p; 5];
        let spread: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(
            align_sim3(&repeated, &spread),
            Err(EvalError::DegenerateSpread)
        ));
        assert!(matches!(
            align_sim3(&spread, &repeated),
            Err(EvalError::DegenerateSpread)
        ));
        assert!(matches!(
            align_sim3(&spread[..2], &spread[..2]),
            Err(EvalError::TooFewPairs { got: 2, need: 3 })
        ));
        assert!(matches!(
            align_sim3(&spread[..3], &spread[..4]),
            Err(EvalError::LengthMismatch { a: 3, b: 4 })
        ));
    }

    #[test]
    fn ate_of_a_trajectory_against_itself_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(85);
        let traj = trajectory_of(&random_points(25, &mut rng));
        let report = ate_rmse(&traj, &traj, DEFAULT_ASSOC_WINDOW).unwrap();
        assert!(report.rmse < 1e-12, "rmse {}", report.rmse);
        assert_eq!(report.n_pairs, 25);
    }

    #[test]
    fn ate_is_invariant_to_a_similarity_transform_of_the_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(86);
        let gt_pts = random_points(25, &mut rng);
        let est_pts: Vec<_> = gt_pts
            .iter()
            .map(|p| p + Vector3::new(rng.random_range(-0.1..0.1), 0.0, 0.0))
            .collect();
        let gt = trajectory_of(&gt_pts);
        let base = ate_rmse(&trajectory_of(&est_pts), &gt, DEFAULT_ASSOC_WINDOW).unwrap();
        let g = random_sim3(&mut rng);
        let moved: Vec<_> = est_pts.iter().map(|p| g.apply(p)).collect();
        let transformed = ate_rmse(&trajectory_of(&moved), &gt, DEFAULT_ASSOC_WINDOW).unwrap();
        assert!((base.rmse - transformed.rmse).abs() < 1e-9);
    }

    #[test]
    fn reported_rmse_matches_a_direct_recomputation_and_is_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(87);
        let gt_pts = random_points(30, &mut rng);
        let est_pts: Vec<_> = gt_pts
            .iter()
            .map(|p| {
                p + Vector3::new(
                    rng.random_range(-0.2..0.2),
                    rng.random_range(-0.2..0.2),
                    rng.random_range(-0.2..0.2),
                )
            })
            .collect();
        let est = trajectory_of(&est_pts);
        let gt = trajectory_of(&gt_pts);
        let report = ate_rmse(&est, &gt, DEFAULT_ASSOC_WINDOW).unwrap();
        let rmse_of = |t: &Sim3Transform| {
            let sse: f64 = est_pts
                .iter()
                .zip(&gt_pts)
                .map(|(x, y)| (t.apply(x) - y).norm_squared())
                .sum();
            (sse / est_pts.len() as f64).sqrt()
        };
        assert_relative_eq!(report.rmse, rmse_of(&report.alignment), epsilon = 1e-12);
        for _ in 0..20 {
            let mut tweak = report.alignment;
            tweak.scale *= 1.0 + rng.random_range(-0.01..0.01);
            tweak.rotation = Rotation3::new(Vector3::new(
                rng.random_range(-0.01..0.01),
                rng.random_range(-0.01..0.01),
                rng.random_range(-0.01..0.01),
            )) * tweak.rotation;
            tweak.translation += Vector3::new(
                rng.random_range(-0.01..0.01),
                rng.random_range(-0.01..0.01),
                rng.random_range(-0.01..0.01),
            );
            assert!(rmse_of(&tweak) >= report.rmse - 1e-12);
        }
    }

    #[test]
    fn association_is_greedy_one_to_one_within_the_window() {
        let a = [0.0, 0.1, 0.2];
        let b = [0.004, 0.11, 5.0];
        assert_eq!(associate(&a, &b, 0.02), vec![(0, 0), (1, 1)]);
        // Nearest wins when two candidates compete for one target.
        let a = [0.0, 0.008];
        let b = [0.01];
        assert_eq!(associate(&a, &b, 0.02), vec![(1, 0)]);
        // Exact ties break toward the earlier index.
        let a = [0.0, 0.02];
        let b = [0.01];
        assert_eq!(associate(&a, &b, 0.02), vec![(0, 0)]);
        assert!(associate(&[0.0], &[1.0], 0.02).is_empty());
    }

    #[test]
    fn ate_with_disjoint_timestamps_is_an_error() {
        let a = trajectory_of(&[Vector3::zeros(), Vector3::x(), Vector3::y()]);
        let entries: Vec<_> = a
            .entries()
            .iter()
            .map(|e| TrajectoryEntry {
                timestamp: e.timestamp + 100.0,
                ..*e
            })
            .collect();
        let b = Trajectory::new(entries).unwrap();
        assert!(matches!(
            ate_rmse(&a, &b, DEFAULT_ASSOC_WINDOW),
            Err(EvalError::NoAssociations { .. })
        ));
    }

    #[test]
    fn text_round_trip_preserves_the_trajectory() {
        let mut rng = ChaCha8Rng::seed_from_u64(88);
        let entries: Vec<_> = (0..20)
            .map(|i| TrajectoryEntry {
                timestamp: 0.1 * i as f64,
                position: Vector3::new(
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                ),
                orientation: UnitQuaternion::new(Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )),
            })
            .collect();
        let traj = Trajectory::new(entries).unwrap();
        let parsed = parse_tum(&format_tum(&traj)).unwrap();
        assert_eq!(parsed.len(), traj.len());
        for (a, b) in traj.entries().iter().zip(parsed.entries()) {
            assert!((a.timestamp - b.timestamp).abs() < 1e-9);
            assert!((a.position - b.position).norm() < 1e-9);
            // Coefficient distance up to the double-cover sign; angle_to is
            // acos-based and cannot resolve differences this small.
            let qa = a.orientation.coords;
            let qb = b.orientation.coords;
            assert!((qa - qb).norm().min((qa + qb).norm()) < 1e-9);
        }
    }

    #[test]
    fn parser_reports_malformed_lines_by_number() {
        let ok = "# comment\n0.0 0 0 0 0 0 0 1\n\n0.1 1 0 0 0 0 0 1\n";
        assert_eq!(parse_tum(ok).unwrap().len(), 2);
        assert!(matches!(
            parse_tum("0.0 0 0 0 0 0 0 1\n0.1 1 0 0\n"),
            Err(EvalError::FieldCount { line: 2, got: 4 })
        ));
        assert!(matches!(
            parse_tum("0.0 0 zero 0 0 0 0 1\n"),
            Err(EvalError::BadNumber { line: 1, .. })
        ));
        assert!(matches!(
            parse_tum("0.0 0 0 0 0.5 0 0 0.5\n"),
            Err(EvalError::BadQuaternion { line: 1, .. })
        ));
        assert!(matches!(
            parse_tum("0.0 0 0 0 0 0 0 inf\n"),
            Err(EvalError::BadNumber { line: 1, .. })
        ));
        assert!(matches!(
            parse_tum("0.2 0 0 0 0 0 0 1\n0.1 0 0 0 0 0 0 1\n"),
            Err(EvalError::NonIncreasingTime { index: 1, .. })
        ));
        assert!(matches!(parse_tum("# only comments\n"), Err(EvalError::Empty)));
    }

    #[test]
    fn from_poses_stores_camera_centers_and_body_to_world_rotations() {
        let rot = Rotation3::from_euler_angles(0.2, -0.3, 0.4);
        let t = Vector3::new(1.0, -2.0, 3.0);
        let pose = Se3Pose::new(rot, t);
        let traj = Trajectory::from_poses(&[0.0], &[pose]).unwrap();
        let e = &traj.entries()[0];
        assert!((e.position - pose.center()).norm() < 1e-15);
        let back = e.orientation.to_rotation_matrix();
        assert!((back.matrix() - rot.inverse().matrix()).norm() < 1e-12);
    }
}
