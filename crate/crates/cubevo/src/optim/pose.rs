//! Levenberg–Marquardt refinement of a single world→body pose against
//! fixed landmarks.

use nalgebra::{DMatrix, DVector, Vector3, Vector6};

use super::reproj::{jac_pose_from_terms, residual_metric, ru_terms};
use super::{huber, MetricKind, OptimError, Se3Pose};
use crate::calib::{Bearing, CubemapCamera, FacePoint};

/// A fixed landmark paired with its pixel measurement for pose refinement.
#[derive(Debug, Clone, Copy)]
pub struct PoseObservation {
    pub point: Vector3<f64>,
    pub fp: FacePoint,
}

/// Configuration of [`optimize_pose`].
#[derive(Debug, Clone)]
pub struct PoseOptConfig {
    pub metric: MetricKind,
    /// Huber kernel width in residual units (pixels for the pixel metric),
    /// or `None` for plain least squares.
    pub huber_delta: Option<f64>,
    pub max_iterations: usize,
    /// Convergence: update norm below this value.
    pub step_tol: f64,
    /// Convergence: relative cost decrease below this value.
    pub cost_tol: f64,
    pub lambda_init: f64,
}

impl Default for PoseOptConfig {
    fn default() -> Self {
        Self {
            metric: MetricKind::Ru,
            huber_delta: None,
            max_iterations: 100,
            step_tol: 1e-10,
            cost_tol: 1e-12,
            lambda_init: 1e-3,
        }
    }
}

impl PoseOptConfig {
    pub fn with_metric(metric: MetricKind) -> Self {
        Self {
            metric,
            ..Self::default()
        }
    }
}

/// Result of [`optimize_pose`].
#[derive(Debug, Clone)]
pub struct PoseOptResult {
    pub pose: Se3Pose,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// LM iterations executed (accepted and rejected).
    pub iterations: usize,
    pub accepted_steps: usize,
    /// False when the iteration budget or damping limit was hit first; the
    /// returned pose is still the best iterate found.
    pub converged: bool,
    /// Observations usable at the final pose.
    pub n_active: usize,
    /// Robust cost after each accepted step (non-increasing).
    pub cost_history: Vec<f64>,
}

/// Residual of one observation at a pose, or `None` when it is unusable
/// there (degenerate face-camera depth, or zero direction).
fn eval_residual(
    cam: &CubemapCamera,
    pose: &Se3Pose,
    obs: &PoseObservation,
    b_m: &Bearing,
    metric: MetricKind,
) -> Option<DVector<f64>> {
    match metric {
        MetricKind::Ru => {
            let t = ru_terms(cam, pose, &obs.point, &obs.fp).ok()?;
            Some(DVector::from_vec(vec![t.residual.x, t.residual.y]))
        }
        _ => {
            let b_p = super::reproj::predicted_bearing(pose, &obs.point)?;
            Some(residual_metric(metric, &b_p, b_m))
        }
    }
}

/// Robust total cost at `pose` over `active`; `None` when some active
/// observation became unusable (the candidate must then be rejected).
fn cost_on(
    cam: &CubemapCamera,
    pose: &Se3Pose,
    obs: &[PoseObservation],
    bearings: &[Bearing],
    active: &[usize],
    cfg: &PoseOptConfig,
) -> Option<f64> {
    let mut cost = 0.0;
    for &i in active {
        let r = eval_residual(cam, pose, &obs[i], &bearings[i], cfg.metric)?;
        cost += huber(r.norm(), cfg.huber_delta).1;
    }
    Some(cost)
}

/// Refines a world→body pose by Levenberg–Marquardt on the chosen residual
/// metric. The pixel metric uses analytic Jacobians; bearing metrics use
/// central finite differences on the pose tangent. Observations that are
/// unusable at the current pose are dropped for that iteration, and a step
/// that would invalidate one is rejected, keeping accepted costs
/// comparable and non-increasing.
pub fn optimize_pose(
    cam: &CubemapCamera,
    init: &Se3Pose,
    obs: &[PoseObservation],
    cfg: &PoseOptConfig,
) -> Result<PoseOptResult, OptimError> {
    let bearings: Vec<Bearing> = obs.iter().map(|o| cam.unproject(&o.fp)).collect();
    let active_at = |pose: &Se3Pose| -> Vec<usize> {
        (0..obs.len())
            .filter(|&i| eval_residual(cam, pose, &obs[i], &bearings[i], cfg.metric).is_some())
            .collect()
    };

    let mut pose = *init;
    let mut active = active_at(&pose);
    if active.len() < 3 {
        return Err(OptimError::TooFewObservations {
            got: active.len(),
            need: 3,
        });
    }
    let mut cost = cost_on(cam, &pose, obs, &bearings, &active, cfg)
        .expect("active set evaluated at its own pose");
    let initial_cost = cost;
    let mut lambda = cfg.lambda_init;
    let mut iterations = 0;
    let mut accepted_steps = 0;
    let mut converged = false;
    let mut cost_history = Vec::new();
    let fd_step = 1e-7;

    'outer: while iterations < cfg.max_iterations && !converged {
        iterations += 1;
        active = active_at(&pose);
        if active.len() < 3 {
            break;
        }
        // Assemble the damped normal equations H delta = -g.
        let mut h = DMatrix::<f64>::zeros(6, 6);
        let mut g = DVector::<f64>::zeros(6);
        for &i in &active {
            let r = eval_residual(cam, &pose, &obs[i], &bearings[i], cfg.metric)
                .expect("observation in the active set");
            let j: DMatrix<f64> = match cfg.metric {
                MetricKind::Ru => {
                    let t = ru_terms(cam, &pose, &obs[i].point, &obs[i].fp)
                        .expect("observation in the active set");
                    let a = jac_pose_from_terms(&t);
                    DMatrix::from_fn(2, 6, |r, c| a[(r, c)])
                }
                _ => {
                    let dim = cfg.metric.dim();
                    let mut j = DMatrix::zeros(dim, 6);
                    let mut ok = true;
                    for k in 0..6 {
                        let mut step = Vector6::zeros();
                        step[k] = fd_step;
                        let rp =
                            eval_residual(cam, &pose.retract(&step), &obs[i], &bearings[i], cfg.metric);
                        step[k] = -fd_step;
                        let rm =
                            eval_residual(cam, &pose.retract(&step), &obs[i], &bearings[i], cfg.metric);
                        match (rp, rm) {
                            (Some(rp), Some(rm)) => {
                                j.set_column(k, &((rp - rm) / (2.0 * fd_step)));
                            }
                            _ => {
                                ok = false;
                                break;
                            }
                        }
                    }
                    if !ok {
                        continue;
                    }
                    j
                }
            };
            let (w, _) = huber(r.norm(), cfg.huber_delta);
            let jw = j * w;
            let rw = r * w;
            h += jw.transpose() * &jw;
            g += jw.transpose() * rw;
        }
        if g.amax() < 1e-14 {
            converged = true;
            break;
        }
        // Inner damping loop: escalate lambda until a step is accepted.
        loop {
            let mut hd = h.clone();
            for k in 0..6 {
                hd[(k, k)] += lambda;
            }
            let Some(chol) = hd.cholesky() else {
                lambda *= 10.0;
                if lambda > 1e8 {
                    break 'outer;
                }
                continue;
            };
            let delta = chol.solve(&(-&g));
            if delta.norm() < cfg.step_tol {
                converged = true;
                break 'outer;
            }
            let xi = Vector6::from_iterator(delta.iter().copied());
            let candidate = pose.retract(&xi);
            match cost_on(cam, &candidate, obs, &bearings, &active, cfg) {
                Some(c) if c < cost => {
                    let decrease = cost - c;
                    pose = candidate;
                    cost = c;
                    accepted_steps += 1;
                    cost_history.push(c);
                    lambda = (lambda / 3.0).max(1e-12);
                    if decrease < cfg.cost_tol * (1.0 + cost) {
                        converged = true;
                    }
                    break;
                }
                _ => {
                    lambda *= 10.0;
                    if lambda > 1e8 {
                        break 'outer;
                    }
                }
            }
        }
    }

    let final_active = active_at(&pose);
    let final_cost = cost_on(cam, &pose, obs, &bearings, &final_active, cfg).unwrap_or(cost);
    Ok(PoseOptResult {
        pose,
        initial_cost,
        final_cost,
        iterations,
        accepted_steps,
        converged,
        n_active: final_active.len(),
        cost_history,
    })
}
