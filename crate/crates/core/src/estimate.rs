//! Camera-consistent pose lifting.
//!
//! Per-frame bounding-box pose estimates arrive as 2D joint observations plus
//! initial angles and shape. This module freezes a single averaged shape for
//! the whole clip and refines each frame's 75 pose parameters so that the
//! projected joints stay at their observed pixel locations while the angles
//! stay close to the initial estimate.

use crate::error::{Error, Result};
use crate::kinematics::{
    fk_generic, BoneOffsets, JointPoseSet, Motion, PoseParams, ShapeParams, Skeleton, JOINT_COUNT,
    POSE_DOF, SHAPE_DIM,
};
use crate::math::Real;
use crate::solver::{solve_nlsq, ResidualProblem, SolveReport};
use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;

/// Pinhole intrinsics (zero skew).
#[derive(Clone, Copy, Debug)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Minimum joint depth in front of the camera, meters.
pub const EPS_DEPTH: f64 = 1e-6;

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::validation(format!(
                "focal lengths must be positive (fx = {fx}, fy = {fy})"
            )));
        }
        Ok(CameraIntrinsics { fx, fy, cx, cy })
    }

    /// Default when no calibration is provided: fx = fy = 1.1 * width,
    /// principal point at the image center.
    pub fn default_for_image(width: usize, height: usize) -> Self {
        CameraIntrinsics {
            fx: 1.1 * width as f64,
            fy: 1.1 * width as f64,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
        }
    }
}

/// One frame of upstream estimates: observed 2D joints with confidences plus
/// the initial pose and shape from the bounding-box estimator.
#[derive(Clone, Debug)]
pub struct ObservationFrame {
    pub joints_2d: Vec<Vector2<f64>>,
    pub confidence: Vec<f64>,
    pub theta_init: PoseParams,
    pub beta_init: ShapeParams,
}

impl ObservationFrame {
    pub fn validate(&self) -> Result<()> {
        if self.joints_2d.len() != JOINT_COUNT || self.confidence.len() != JOINT_COUNT {
            return Err(Error::validation(format!(
                "observation frame must carry {JOINT_COUNT} joints"
            )));
        }
        for (i, c) in self.confidence.iter().enumerate() {
            if !(0.0..=1.0).contains(c) {
                return Err(Error::validation(format!(
                    "confidence[{i}] = {c} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EstimationConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            lambda1: 1e-6,
            lambda2: 1e-2,
            max_iters: 100,
            tol: 1e-12,
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(Error::validation("lambda weights must be nonnegative"));
        }
        if self.max_iters < 1 {
            return Err(Error::validation("max_iters must be >= 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::validation("tol must be positive"));
        }
        Ok(())
    }
}

/// Component-wise mean of the per-frame initial shape coefficients.
pub fn average_shape(frames: &[ObservationFrame]) -> Result<ShapeParams> {
    if frames.is_empty() {
        return Err(Error::validation("cannot average shape over zero frames"));
    }
    let mut beta = [0.0; SHAPE_DIM];
    for f in frames {
        for (acc, b) in beta.iter_mut().zip(f.beta_init.beta.iter()) {
            *acc += b;
        }
    }
    let n = frames.len() as f64;
    for b in beta.iter_mut() {
        *b /= n;
    }
    ShapeParams::new(beta)
}

/// Pinhole projection of all joint positions.
///
/// Fails if any joint sits at or behind the camera plane.
pub fn project_joints(k: &CameraIntrinsics, poses: &JointPoseSet) -> Result<Vec<Vector2<f64>>> {
    poses
        .poses
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let t = p.translation;
            if t.z <= EPS_DEPTH {
                return Err(Error::BehindCamera { joint: i, z: t.z });
            }
            Ok(Vector2::new(
                k.fx * t.x / t.z + k.cx,
                k.fy * t.y / t.z + k.cy,
            ))
        })
        .collect()
}

/// Residuals of the per-frame energy: confidence-weighted pixel reprojection
/// errors plus angle deviation from the initial estimate.
struct RefineProblem<'a> {
    skeleton: &'a Skeleton,
    offsets: &'a BoneOffsets,
    obs: &'a ObservationFrame,
    k: CameraIntrinsics,
    /// sqrt(lambda1 * confidence) per joint
    w_pix: [f64; JOINT_COUNT],
    sqrt_lambda2: f64,
    theta_init: [f64; POSE_DOF],
}

impl ResidualProblem for RefineProblem<'_> {
    fn dimension(&self) -> usize {
        POSE_DOF
    }

    fn residual_count(&self) -> usize {
        2 * JOINT_COUNT + 72
    }

    fn eval<T: Real>(&self, x: &[T], out: &mut Vec<T>) {
        let poses = fk_generic(
            &self.skeleton.topology,
            self.offsets,
            &x[..72],
            [x[72], x[73], x[74]],
        );
        for (j, (_, pos)) in poses.iter().enumerate() {
            let w = T::from_f64(self.w_pix[j]);
            let [px, py, pz] = pos.0;
            if pz.value() <= EPS_DEPTH {
                // behind the camera: large smooth penalty growing as z decreases,
                // so the line search backs off rather than crashing
                let pen = T::from_f64(1e3) * (T::from_f64(EPS_DEPTH + 1.0) - pz);
                out.push(pen);
                out.push(pen);
                continue;
            }
            let u = T::from_f64(self.k.fx) * px / pz + T::from_f64(self.k.cx);
            let v = T::from_f64(self.k.fy) * py / pz + T::from_f64(self.k.cy);
            out.push(w * (u - T::from_f64(self.obs.joints_2d[j].x)));
            out.push(w * (v - T::from_f64(self.obs.joints_2d[j].y)));
        }
        let sl2 = T::from_f64(self.sqrt_lambda2);
        for i in 0..72 {
            out.push(sl2 * (x[i] - T::from_f64(self.theta_init[i])));
        }
    }
}

/// Refined pose for one frame plus the solver diagnostics.
#[derive(Clone, Debug)]
pub struct RefinedFrame {
    pub pose: PoseParams,
    pub report: SolveReport,
}

/// Minimizes the two-term energy for one frame with the shared shape.
pub fn refine_frame(
    obs: &ObservationFrame,
    beta_s: &ShapeParams,
    skeleton: &Skeleton,
    k: &CameraIntrinsics,
    cfg: &EstimationConfig,
) -> Result<RefinedFrame> {
    obs.validate()?;
    cfg.validate()?;
    let offsets = skeleton.offsets(beta_s)?;
    let mut w_pix = [0.0; JOINT_COUNT];
    for (w, c) in w_pix.iter_mut().zip(obs.confidence.iter()) {
        *w = (cfg.lambda1 * c).sqrt();
    }
    let problem = RefineProblem {
        skeleton,
        offsets: &offsets,
        obs,
        k: *k,
        w_pix,
        sqrt_lambda2: cfg.lambda2.sqrt(),
        theta_init: obs.theta_init.to_flat(),
    };
    let x0 = obs.theta_init.to_flat();
    let (x, report) = solve_nlsq(&problem, &x0, cfg.max_iters, cfg.tol)?;
    Ok(RefinedFrame {
        pose: PoseParams::from_flat(&x)?,
        report,
    })
}

/// A lifted clip: refined motion, the frozen shape, per-frame diagnostics.
#[derive(Clone, Debug)]
pub struct EstimatedMotion {
    pub motion: Motion,
    pub beta: ShapeParams,
    pub reports: Vec<SolveReport>,
}

/// Lifts a whole clip into the common camera frame.
///
/// Frames are independent and refined in parallel; results keep frame order.
pub fn estimate_motion(
    frames: &[ObservationFrame],
    skeleton: &Skeleton,
    k: &CameraIntrinsics,
    cfg: &EstimationConfig,
    fps: f64,
) -> Result<EstimatedMotion> {
    if frames.is_empty() {
        return Err(Error::validation("cannot estimate motion from zero frames"));
    }
    let beta = average_shape(frames)?;
    let refined: Vec<Result<RefinedFrame>> = frames
        .par_iter()
        .enumerate()
        .map(|(i, obs)| {
            refine_frame(obs, &beta, skeleton, k, cfg).map_err(|e| Error::SolveFailed {
                unit: "frame",
                index: i,
                detail: e.to_string(),
            })
        })
        .collect();
    let mut poses = Vec::with_capacity(frames.len());
    let mut reports = Vec::with_capacity(frames.len());
    for r in refined {
        let r = r?;
        poses.push(r.pose);
        reports.push(r.report);
    }
    Ok(EstimatedMotion {
        motion: Motion { frames: poses, fps },
        beta,
        reports,
    })
}

/// Back-projects a pixel to the ray point at the given depth. Used to seed
/// the root translation when the upstream estimator provides none.
pub fn backproject(k: &CameraIntrinsics, pixel: Vector2<f64>, depth: f64) -> Vector3<f64> {
    Vector3::new(
        (pixel.x - k.cx) * depth / k.fx,
        (pixel.y - k.cy) * depth / k.fy,
        depth,
    )
}
