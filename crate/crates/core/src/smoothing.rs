//! Motion regularization.
//!
//! Frame-by-frame lifting leaves high-frequency jitter. We build per-frame
//! targets by moving-averaging the FK joint positions over a small window
//! (end-effector orientations are kept from the original frame, not
//! averaged), then refit joint angles to those targets with an IK solve.
//!
//! The IK cost sums *squared* position and orientation residuals; the
//! reference formulation sums plain norms, but the minimizers coincide at
//! zero residual and the squared form keeps the gradients smooth.

use crate::error::{Error, Result};
use crate::kinematics::{
    end_effector_frames, fk, fk_generic, BoneOffsets, Motion, PoseParams, ShapeParams, Skeleton,
    END_EFFECTOR_COUNT, JOINT_COUNT, POSE_DOF,
};
use crate::math::Real;
use crate::solver::{solve_nlsq, ResidualProblem, SolveReport};
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

#[derive(Clone, Copy, Debug)]
pub struct SmoothingConfig {
    /// Weight of the end-effector orientation term relative to positions.
    pub gamma: f64,
    /// Half-width of the centered moving-average window, frames.
    pub filter_radius: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            gamma: 10.0,
            filter_radius: 2,
            max_iters: 60,
            tol: 1e-12,
        }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma < 0.0 {
            return Err(Error::validation("gamma must be nonnegative"));
        }
        if self.max_iters < 1 || !(self.tol > 0.0) {
            return Err(Error::validation("invalid solver settings"));
        }
        Ok(())
    }
}

/// Per-frame fit targets: positions for every joint, orientations for the
/// five end-effectors.
#[derive(Clone, Debug)]
pub struct FrameTargets {
    pub positions: Vec<Vector3<f64>>,
    pub ee_orientations: [Matrix3<f64>; END_EFFECTOR_COUNT],
}

/// Builds smoothing targets: centered moving average (window `2*radius + 1`,
/// truncated at the sequence ends) of the motion's FK joint positions;
/// end-effector orientations are anchored to the input frame.
pub fn build_targets(
    motion: &Motion,
    skeleton: &Skeleton,
    offsets: &BoneOffsets,
    radius: usize,
) -> Vec<FrameTargets> {
    let n = motion.frames.len();
    let fk_frames: Vec<_> = motion
        .frames
        .iter()
        .map(|p| fk(&skeleton.topology, offsets, p))
        .collect();

    (0..n)
        .map(|k| {
            let lo = k.saturating_sub(radius);
            let hi = (k + radius).min(n - 1);
            let count = (hi - lo + 1) as f64;
            let mut positions = vec![Vector3::zeros(); JOINT_COUNT];
            for f in &fk_frames[lo..=hi] {
                for (acc, p) in positions.iter_mut().zip(f.poses.iter()) {
                    *acc += p.translation;
                }
            }
            for p in positions.iter_mut() {
                *p /= count;
            }
            let ee = end_effector_frames(&fk_frames[k], &skeleton.topology);
            let mut ee_orientations = [Matrix3::identity(); END_EFFECTOR_COUNT];
            for (o, e) in ee_orientations.iter_mut().zip(ee.iter()) {
                *o = e.rotation;
            }
            FrameTargets {
                positions,
                ee_orientations,
            }
        })
        .collect()
}

/// IK residuals: all joint positions against targets, plus the weighted
/// orientation error `R_hat R^T - I` for the end-effectors.
struct IkProblem<'a> {
    skeleton: &'a Skeleton,
    offsets: &'a BoneOffsets,
    targets: &'a FrameTargets,
    sqrt_gamma: f64,
}

impl ResidualProblem for IkProblem<'_> {
    fn dimension(&self) -> usize {
        POSE_DOF
    }

    fn residual_count(&self) -> usize {
        3 * JOINT_COUNT + 9 * END_EFFECTOR_COUNT
    }

    fn eval<T: Real>(&self, x: &[T], out: &mut Vec<T>) {
        let poses = fk_generic(
            &self.skeleton.topology,
            self.offsets,
            &x[..72],
            [x[72], x[73], x[74]],
        );
        for (j, (_, pos)) in poses.iter().enumerate() {
            let t = self.targets.positions[j];
            out.push(pos.0[0] - T::from_f64(t.x));
            out.push(pos.0[1] - T::from_f64(t.y));
            out.push(pos.0[2] - T::from_f64(t.z));
        }
        let sg = T::from_f64(self.sqrt_gamma);
        for (e, &joint) in self.skeleton.topology.end_effectors.iter().enumerate() {
            let (rot, _) = &poses[joint];
            let target_t =
                crate::kinematics::na_to_mat3(&self.targets.ee_orientations[e]).transpose();
            let err = rot.mul_mat(crate::math::M3::from_f64(target_t.0));
            for i in 0..3 {
                for j in 0..3 {
                    let ident = if i == j { T::one() } else { T::zero() };
                    out.push(sg * (err.0[i][j] - ident));
                }
            }
        }
    }
}

/// Fits one frame's pose to its targets, warm-started at `theta_init`.
pub fn ik_fit_frame(
    targets: &FrameTargets,
    skeleton: &Skeleton,
    offsets: &BoneOffsets,
    theta_init: &PoseParams,
    cfg: &SmoothingConfig,
) -> Result<(PoseParams, SolveReport)> {
    cfg.validate()?;
    let problem = IkProblem {
        skeleton,
        offsets,
        targets,
        sqrt_gamma: cfg.gamma.sqrt(),
    };
    let x0 = theta_init.to_flat();
    let (x, report) = solve_nlsq(&problem, &x0, cfg.max_iters, cfg.tol)?;
    Ok((PoseParams::from_flat(&x)?, report))
}

/// Smoothed motion plus per-frame solver diagnostics.
#[derive(Clone, Debug)]
pub struct SmoothedMotion {
    pub motion: Motion,
    pub reports: Vec<SolveReport>,
}

/// Regularizes a whole motion: build targets once, refit every frame.
pub fn smooth_motion(
    motion: &Motion,
    skeleton: &Skeleton,
    beta: &ShapeParams,
    cfg: &SmoothingConfig,
) -> Result<SmoothedMotion> {
    motion.validate()?;
    cfg.validate()?;
    let offsets = skeleton.offsets(beta)?;
    let targets = build_targets(motion, skeleton, &offsets, cfg.filter_radius);

    let fitted: Vec<Result<(PoseParams, SolveReport)>> = motion
        .frames
        .par_iter()
        .zip(targets.par_iter())
        .enumerate()
        .map(|(i, (frame, target))| {
            ik_fit_frame(target, skeleton, &offsets, frame, cfg).map_err(|e| Error::SolveFailed {
                unit: "frame",
                index: i,
                detail: e.to_string(),
            })
        })
        .collect();

    let mut frames = Vec::with_capacity(motion.frames.len());
    let mut reports = Vec::with_capacity(motion.frames.len());
    for r in fitted {
        let (pose, report) = r?;
        frames.push(pose);
        reports.push(report);
    }
    Ok(SmoothedMotion {
        motion: Motion {
            frames,
            fps: motion.fps,
        },
        reports,
    })
}
