//! Space-time motion retargeting.
//!
//! Adapts a source motion to a target skeleton with different bone lengths.
//! The unknowns are per-frame pose corrections `e = theta_target - theta_source`
//! (including the root translation), solved over sliding temporal windows with
//! three residual families:
//!
//! * prediction: frame-to-frame joint displacement of the target should match
//!   the source's, preserving the motion style;
//! * constraints: selected joints must reach given world positions (and
//!   optionally orientations) at given frames;
//! * regularization: `e` itself stays small.
//!
//! Per-joint weights decay geometrically with tree depth so errors near the
//! root are penalized hardest. Windows are solved sequentially; each window is
//! warm-started from the previous solution on the overlapped frames and
//! anchored to the last already-solved frame through an extra displacement
//! residual, which keeps the stitched motion continuous.

use crate::error::{Error, Result};
use crate::kinematics::{
    fk, fk_generic, BoneOffsets, Motion, PoseParams, ShapeParams, Skeleton, SkeletonTopology,
    JOINT_COUNT, POSE_DOF,
};
use crate::math::{Real, M3, V3};
use crate::solver::{solve_blocked, BlockedProblem, SolveReport};
use nalgebra::{Matrix3, Vector3};

/// Spatial restriction: a joint must be at a position (and optionally hold an
/// orientation) at one frame.
#[derive(Clone, Debug)]
pub struct Constraint {
    pub frame: usize,
    pub joint: usize,
    pub target_position: Vector3<f64>,
    pub target_orientation: Option<Matrix3<f64>>,
    /// Acceptable position error, meters.
    pub tolerance: f64,
    /// Weight multiplier for this constraint's residuals.
    pub weight: f64,
}

impl Constraint {
    pub fn validate(&self, motion_len: usize) -> Result<()> {
        if self.frame >= motion_len {
            return Err(Error::validation(format!(
                "constraint frame {} outside motion of {} frames",
                self.frame, motion_len
            )));
        }
        if self.joint >= JOINT_COUNT {
            return Err(Error::validation(format!(
                "constraint joint {} out of range",
                self.joint
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::validation("constraint tolerance must be positive"));
        }
        if !(self.weight > 0.0) {
            return Err(Error::validation("constraint weight must be positive"));
        }
        Ok(())
    }
}

/// Diagonal weights of the three residual families.
#[derive(Clone, Debug)]
pub struct WeightConfig {
    /// Per-joint prediction weights (replicated over the 3 axes).
    pub w_pred: [f64; JOINT_COUNT],
    /// Per-constraint weights; empty means all ones.
    pub w_constr: Vec<f64>,
    /// Per-joint regularization weights (replicated over each angle triple;
    /// the root entry also covers the translation correction).
    pub w_reg: [f64; JOINT_COUNT],
    pub decay_rho: f64,
}

impl WeightConfig {
    pub fn validate(&self, topology: &SkeletonTopology) -> Result<()> {
        for (name, w) in [("w_pred", &self.w_pred), ("w_reg", &self.w_reg)] {
            if w.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::validation(format!(
                    "{name} must be strictly positive"
                )));
            }
            for i in 0..JOINT_COUNT {
                for j in 0..JOINT_COUNT {
                    if topology.depth[i] < topology.depth[j] && w[i] < w[j] {
                        return Err(Error::validation(format!(
                            "{name} violates root-proximal ordering between joints {i} and {j}"
                        )));
                    }
                }
            }
        }
        if self.w_constr.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::validation("w_constr must be strictly positive"));
        }
        Ok(())
    }
}

/// Root-proximal defaults: `w[i] = rho^depth(i)` for prediction and
/// regularization, unit weights for constraints.
pub fn default_weights(topology: &SkeletonTopology, rho: f64) -> Result<WeightConfig> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::validation(format!("rho = {rho} outside (0, 1]")));
    }
    let mut w = [1.0; JOINT_COUNT];
    for (wi, &d) in w.iter_mut().zip(topology.depth.iter()) {
        *wi = rho.powi(d as i32);
    }
    Ok(WeightConfig {
        w_pred: w,
        w_constr: Vec::new(),
        w_reg: w,
        decay_rho: rho,
    })
}

#[derive(Clone, Debug)]
pub struct RetargetConfig {
    /// Temporal window length, seconds of video.
    pub window_seconds: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    /// Frames shared between consecutive windows; `None` means `n / 4`.
    pub overlap_frames: Option<usize>,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for RetargetConfig {
    fn default() -> Self {
        RetargetConfig {
            window_seconds: 2.0,
            alpha1: 10.0,
            alpha2: 5.0,
            alpha3: 1.0,
            overlap_frames: None,
            max_iters: 60,
            tol: 1e-10,
        }
    }
}

impl RetargetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_seconds > 0.0) {
            return Err(Error::validation("window_seconds must be positive"));
        }
        if self.alpha1 < 0.0 || self.alpha2 < 0.0 || self.alpha3 < 0.0 {
            return Err(Error::validation("alpha weights must be nonnegative"));
        }
        if self.max_iters < 1 || !(self.tol > 0.0) {
            return Err(Error::validation("invalid solver settings"));
        }
        Ok(())
    }
}

/// Achieved error of one constraint in the final motion.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ConstraintReport {
    pub constraint_index: usize,
    pub frame: usize,
    pub joint: usize,
    /// Position error, meters.
    pub error: f64,
    pub within_tolerance: bool,
}

#[derive(Clone, Debug)]
pub struct RetargetResult {
    pub motion: Motion,
    pub per_window_cost: Vec<f64>,
    pub constraint_report: Vec<ConstraintReport>,
    pub reports: Vec<SolveReport>,
}

/// Unweighted prediction residual over a window: stacked per-joint 3D
/// differences between target and source frame-to-frame displacements.
/// Length `3 * 24 * (n - 1)`.
pub fn prediction_residual(
    theta_t: &[PoseParams],
    source: &[PoseParams],
    beta_t: &ShapeParams,
    beta_s: &ShapeParams,
    skeleton: &Skeleton,
) -> Result<Vec<f64>> {
    if theta_t.len() < 2 || theta_t.len() != source.len() {
        return Err(Error::validation(
            "prediction residual needs matching windows of at least 2 frames",
        ));
    }
    let off_t = skeleton.offsets(beta_t)?;
    let off_s = skeleton.offsets(beta_s)?;
    let pos_t: Vec<Vec<Vector3<f64>>> = theta_t
        .iter()
        .map(|p| fk(&skeleton.topology, &off_t, p).positions())
        .collect();
    let pos_s: Vec<Vec<Vector3<f64>>> = source
        .iter()
        .map(|p| fk(&skeleton.topology, &off_s, p).positions())
        .collect();
    let mut out = Vec::with_capacity(3 * JOINT_COUNT * (theta_t.len() - 1));
    for k in 0..theta_t.len() - 1 {
        for j in 0..JOINT_COUNT {
            let d = (pos_t[k + 1][j] - pos_t[k][j]) - (pos_s[k + 1][j] - pos_s[k][j]);
            out.extend_from_slice(&[d.x, d.y, d.z]);
        }
    }
    Ok(out)
}

/// Unweighted constraint residual at one frame: stacked position errors plus
/// flattened `R_hat R^T - I` terms where an orientation is present.
pub fn constraint_residual(
    theta_t_k: &PoseParams,
    beta_t: &ShapeParams,
    skeleton: &Skeleton,
    constraints: &[Constraint],
) -> Result<Vec<f64>> {
    let off_t = skeleton.offsets(beta_t)?;
    let poses = fk(&skeleton.topology, &off_t, theta_t_k);
    let mut out = Vec::new();
    for c in constraints {
        if c.joint >= JOINT_COUNT {
            return Err(Error::validation(format!(
                "constraint joint {} out of range",
                c.joint
            )));
        }
        let d = poses.poses[c.joint].translation - c.target_position;
        out.extend_from_slice(&[d.x, d.y, d.z]);
        if let Some(target_rot) = &c.target_orientation {
            let err = poses.poses[c.joint].rotation * target_rot.transpose() - Matrix3::identity();
            for i in 0..3 {
                for j in 0..3 {
                    out.push(err[(i, j)]);
                }
            }
        }
    }
    Ok(out)
}

struct WindowConstraint {
    local_frame: usize,
    joint: usize,
    target: V3<f64>,
    /// Transposed target orientation, premultiplied for the residual.
    orientation_t: Option<M3<f64>>,
    sqrt_w: f64,
}

/// One window of the space-time problem as residual blocks over `e`.
struct WindowProblem<'a> {
    skeleton: &'a Skeleton,
    offsets_t: &'a BoneOffsets,
    /// Flattened source poses of the window frames.
    source_flat: Vec<[f64; POSE_DOF]>,
    /// Source FK displacement per step and joint, at the source shape.
    src_disp: Vec<[V3<f64>; JOINT_COUNT]>,
    /// Continuity anchor: target FK positions of the frame just before the
    /// window, plus the source displacement into the first window frame.
    anchor: Option<([V3<f64>; JOINT_COUNT], [V3<f64>; JOINT_COUNT])>,
    constraints: Vec<WindowConstraint>,
    /// `alpha1 * sqrt(w_pred[j])` per joint.
    pred_w: [f64; JOINT_COUNT],
    /// `alpha3 * sqrt(w_reg)` per pose dof.
    reg_w: [f64; POSE_DOF],
}

impl WindowProblem<'_> {
    fn n_frames(&self) -> usize {
        self.source_flat.len()
    }

    fn n_pred_blocks(&self) -> usize {
        self.n_frames() - 1 + usize::from(self.anchor.is_some())
    }

    /// Target FK of window frame `f` with corrections taken from `x_local`
    /// starting at `offset`.
    fn fk_frame<T: Real>(&self, f: usize, x_local: &[T], offset: usize) -> Vec<(M3<T>, V3<T>)> {
        let src = &self.source_flat[f];
        let mut theta = [T::zero(); 72];
        for (i, t) in theta.iter_mut().enumerate() {
            *t = T::from_f64(src[i]) + x_local[offset + i];
        }
        let root = [
            T::from_f64(src[72]) + x_local[offset + 72],
            T::from_f64(src[73]) + x_local[offset + 73],
            T::from_f64(src[74]) + x_local[offset + 74],
        ];
        fk_generic(&self.skeleton.topology, self.offsets_t, &theta, root)
    }
}

impl BlockedProblem for WindowProblem<'_> {
    fn dimension(&self) -> usize {
        self.n_frames() * POSE_DOF
    }

    fn block_count(&self) -> usize {
        self.n_pred_blocks() + self.n_frames() + self.constraints.len()
    }

    fn block_vars(&self, b: usize) -> Vec<usize> {
        let has_anchor = self.anchor.is_some();
        let np = self.n_pred_blocks();
        if b < np {
            if has_anchor && b == 0 {
                return (0..POSE_DOF).collect();
            }
            let step = if has_anchor { b - 1 } else { b };
            return (step * POSE_DOF..(step + 2) * POSE_DOF).collect();
        }
        let b = b - np;
        if b < self.n_frames() {
            return (b * POSE_DOF..(b + 1) * POSE_DOF).collect();
        }
        let c = &self.constraints[b - self.n_frames()];
        (c.local_frame * POSE_DOF..(c.local_frame + 1) * POSE_DOF).collect()
    }

    fn block_rows(&self, b: usize) -> usize {
        let np = self.n_pred_blocks();
        if b < np {
            return 3 * JOINT_COUNT;
        }
        let b = b - np;
        if b < self.n_frames() {
            return POSE_DOF;
        }
        let c = &self.constraints[b - self.n_frames()];
        if c.orientation_t.is_some() {
            12
        } else {
            3
        }
    }

    fn eval_block<T: Real>(&self, b: usize, x_local: &[T], out: &mut Vec<T>) {
        let has_anchor = self.anchor.is_some();
        let np = self.n_pred_blocks();
        if b < np {
            // prediction block: displacement mismatch between two frames
            let (prev_pos, disp, cur): (Vec<V3<T>>, &[V3<f64>; JOINT_COUNT], _) =
                if has_anchor && b == 0 {
                    let (anchor_pos, anchor_disp) = self.anchor.as_ref().unwrap();
                    let cur = self.fk_frame(0, x_local, 0);
                    (
                        anchor_pos
                            .iter()
                            .map(|p| V3::<T>::from_f64([p.0[0], p.0[1], p.0[2]]))
                            .collect(),
                        anchor_disp,
                        cur,
                    )
                } else {
                    let step = if has_anchor { b - 1 } else { b };
                    let prev = self.fk_frame(step, x_local, 0);
                    let cur = self.fk_frame(step + 1, x_local, POSE_DOF);
                    (
                        prev.into_iter().map(|(_, p)| p).collect(),
                        &self.src_disp[step],
                        cur,
                    )
                };
            for j in 0..JOINT_COUNT {
                let w = T::from_f64(self.pred_w[j]);
                let target_disp = cur[j].1 - prev_pos[j];
                let sd = V3::<T>::from_f64(disp[j].0);
                let r = target_disp - sd;
                out.push(w * r.0[0]);
                out.push(w * r.0[1]);
                out.push(w * r.0[2]);
            }
            return;
        }
        let b = b - np;
        if b < self.n_frames() {
            // regularization block: e itself
            for d in 0..POSE_DOF {
                out.push(T::from_f64(self.reg_w[d]) * x_local[d]);
            }
            return;
        }
        // constraint block
        let c = &self.constraints[b - self.n_frames()];
        let poses = self.fk_frame(c.local_frame, x_local, 0);
        let (rot, pos) = &poses[c.joint];
        let w = T::from_f64(c.sqrt_w);
        let target = V3::<T>::from_f64(c.target.0);
        let d = *pos - target;
        out.push(w * d.0[0]);
        out.push(w * d.0[1]);
        out.push(w * d.0[2]);
        if let Some(rt) = &c.orientation_t {
            let err = rot.mul_mat(M3::from_f64(rt.0));
            for i in 0..3 {
                for j in 0..3 {
                    let ident = if i == j { T::one() } else { T::zero() };
                    out.push(w * (err.0[i][j] - ident));
                }
            }
        }
    }
}

/// Solves one temporal window for the pose corrections.
///
/// `constraints` carry window-local frame indices. `anchor_prev` is the
/// already-solved frame just before the window as a `(target, source)` pose
/// pair; it anchors the window's first displacement for continuity.
#[allow(clippy::too_many_arguments)]
pub fn solve_window(
    source_window: &[PoseParams],
    beta_t: &ShapeParams,
    beta_s: &ShapeParams,
    skeleton: &Skeleton,
    constraints: &[Constraint],
    weights: &WeightConfig,
    cfg: &RetargetConfig,
    e_init: &[f64],
    anchor_prev: Option<(&PoseParams, &PoseParams)>,
) -> Result<(Vec<PoseParams>, SolveReport)> {
    if source_window.is_empty() {
        return Err(Error::validation("empty window"));
    }
    cfg.validate()?;
    weights.validate(&skeleton.topology)?;
    let n = source_window.len();
    if e_init.len() != n * POSE_DOF {
        return Err(Error::validation("e_init length mismatch"));
    }

    let offsets_t = skeleton.offsets(beta_t)?;
    let offsets_s = skeleton.offsets(beta_s)?;

    let src_pos: Vec<Vec<Vector3<f64>>> = source_window
        .iter()
        .map(|p| fk(&skeleton.topology, &offsets_s, p).positions())
        .collect();
    let mut src_disp = Vec::with_capacity(n.saturating_sub(1));
    for k in 0..n.saturating_sub(1) {
        let mut d = [V3([0.0; 3]); JOINT_COUNT];
        for j in 0..JOINT_COUNT {
            let v = src_pos[k + 1][j] - src_pos[k][j];
            d[j] = V3([v.x, v.y, v.z]);
        }
        src_disp.push(d);
    }

    // Continuity anchor: previous solved target frame and the source
    // displacement leading into this window. The caller passes the previous
    // frame both in source terms (for the displacement) and target terms.
    let anchor = match anchor_prev {
        Some((prev_target, prev_source)) => {
            let prev_t = fk(&skeleton.topology, &offsets_t, prev_target).positions();
            let prev_s = fk(&skeleton.topology, &offsets_s, prev_source).positions();
            let mut pos = [V3([0.0; 3]); JOINT_COUNT];
            let mut disp = [V3([0.0; 3]); JOINT_COUNT];
            for j in 0..JOINT_COUNT {
                pos[j] = V3([prev_t[j].x, prev_t[j].y, prev_t[j].z]);
                let v = src_pos[0][j] - prev_s[j];
                disp[j] = V3([v.x, v.y, v.z]);
            }
            Some((pos, disp))
        }
        None => None,
    };

    let mut pred_w = [0.0; JOINT_COUNT];
    for (w, p) in pred_w.iter_mut().zip(weights.w_pred.iter()) {
        *w = cfg.alpha1 * p.sqrt();
    }
    let mut reg_w = [0.0; POSE_DOF];
    for j in 0..JOINT_COUNT {
        let w = cfg.alpha3 * weights.w_reg[j].sqrt();
        reg_w[3 * j] = w;
        reg_w[3 * j + 1] = w;
        reg_w[3 * j + 2] = w;
    }
    let w_root = cfg.alpha3 * weights.w_reg[0].sqrt();
    reg_w[72] = w_root;
    reg_w[73] = w_root;
    reg_w[74] = w_root;

    let window_constraints: Vec<WindowConstraint> = constraints
        .iter()
        .enumerate()
        .map(|(i, c)| WindowConstraint {
            local_frame: c.frame,
            joint: c.joint,
            target: V3([
                c.target_position.x,
                c.target_position.y,
                c.target_position.z,
            ]),
            orientation_t: c
                .target_orientation
                .as_ref()
                .map(|m| crate::kinematics::na_to_mat3(&m.transpose())),
            sqrt_w: cfg.alpha2
                * (weights.w_constr.get(i).copied().unwrap_or(1.0) * c.weight).sqrt(),
        })
        .collect();

    let problem = WindowProblem {
        skeleton,
        offsets_t: &offsets_t,
        source_flat: source_window.iter().map(|p| p.to_flat()).collect(),
        src_disp,
        anchor,
        constraints: window_constraints,
        pred_w,
        reg_w,
    };

    let (e, report) = solve_blocked(&problem, e_init, cfg.max_iters, cfg.tol)?;
    let mut frames = Vec::with_capacity(n);
    for (f, src) in source_window.iter().enumerate() {
        let flat = src.to_flat();
        let mut out = [0.0; POSE_DOF];
        for d in 0..POSE_DOF {
            out[d] = flat[d] + e[f * POSE_DOF + d];
        }
        frames.push(PoseParams::from_flat(&out)?);
    }
    Ok((frames, report))
}

/// Consecutive window spans `(start, end)` covering `len` frames.
fn plan_windows(len: usize, n: usize, overlap: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let step = n.saturating_sub(overlap).max(1);
    let mut s = 0;
    loop {
        if s + n >= len {
            out.push((len.saturating_sub(n), len));
            break;
        }
        out.push((s, s + n));
        s += step;
    }
    out
}

/// Retargets a full motion window by window.
pub fn retarget_motion(
    source: &Motion,
    beta_t: &ShapeParams,
    beta_s: &ShapeParams,
    skeleton: &Skeleton,
    constraints: &[Constraint],
    weights: &WeightConfig,
    cfg: &RetargetConfig,
) -> Result<RetargetResult> {
    source.validate()?;
    cfg.validate()?;
    for c in constraints {
        c.validate(source.frames.len())?;
    }
    let len = source.frames.len();
    let n = ((cfg.window_seconds * source.fps).round() as usize)
        .clamp(2, len.max(2))
        .min(len.max(2));
    if len < 2 {
        // a single frame has no displacement structure; constraints and
        // regularization still apply
        let e0 = vec![0.0; POSE_DOF];
        let window_constraints: Vec<Constraint> = constraints
            .iter()
            .map(|c| Constraint {
                frame: 0,
                ..c.clone()
            })
            .collect();
        let (frames, report) = solve_window(
            &source.frames,
            beta_t,
            beta_s,
            skeleton,
            &window_constraints,
            weights,
            cfg,
            &e0,
            None,
        )?;
        let motion = Motion {
            frames,
            fps: source.fps,
        };
        let constraint_report = build_constraint_report(&motion, beta_t, skeleton, constraints)?;
        return Ok(RetargetResult {
            per_window_cost: vec![report.final_cost],
            reports: vec![report],
            motion,
            constraint_report,
        });
    }

    let overlap = cfg.overlap_frames.unwrap_or(n / 4).min(n - 1);
    let windows = plan_windows(len, n, overlap);

    let mut target_frames: Vec<Option<PoseParams>> = vec![None; len];
    let mut per_window_cost = Vec::with_capacity(windows.len());
    let mut reports = Vec::with_capacity(windows.len());

    for &(start, end) in &windows {
        let wlen = end - start;
        let source_window = &source.frames[start..end];

        // warm start from already-solved overlapped frames
        let mut e_init = vec![0.0; wlen * POSE_DOF];
        for f in 0..wlen {
            if let Some(prev) = &target_frames[start + f] {
                let pf = prev.to_flat();
                let sf = source.frames[start + f].to_flat();
                for d in 0..POSE_DOF {
                    e_init[f * POSE_DOF + d] = pf[d] - sf[d];
                }
            }
        }

        let window_constraints: Vec<Constraint> = constraints
            .iter()
            .filter(|c| c.frame >= start && c.frame < end)
            .map(|c| Constraint {
                frame: c.frame - start,
                ..c.clone()
            })
            .collect();

        let anchor_target = if start > 0 {
            target_frames[start - 1].clone()
        } else {
            None
        };
        let anchor = anchor_target
            .as_ref()
            .map(|t| (t, &source.frames[start - 1]));

        let (frames, report) = solve_window(
            source_window,
            beta_t,
            beta_s,
            skeleton,
            &window_constraints,
            weights,
            cfg,
            &e_init,
            anchor,
        )?;
        per_window_cost.push(report.final_cost);
        reports.push(report);
        for (f, pose) in frames.into_iter().enumerate() {
            // later windows overwrite overlapped frames
            target_frames[start + f] = Some(pose);
        }
    }

    let motion = Motion {
        frames: target_frames.into_iter().map(|p| p.unwrap()).collect(),
        fps: source.fps,
    };
    let constraint_report = build_constraint_report(&motion, beta_t, skeleton, constraints)?;
    Ok(RetargetResult {
        motion,
        per_window_cost,
        constraint_report,
        reports,
    })
}

pub(crate) fn build_constraint_report(
    motion: &Motion,
    beta_t: &ShapeParams,
    skeleton: &Skeleton,
    constraints: &[Constraint],
) -> Result<Vec<ConstraintReport>> {
    let offsets = skeleton.offsets(beta_t)?;
    constraints
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let poses = fk(&skeleton.topology, &offsets, &motion.frames[c.frame]);
            let error = (poses.poses[c.joint].translation - c.target_position).norm();
            Ok(ConstraintReport {
                constraint_index: i,
                frame: c.frame,
                joint: c.joint,
                error,
                within_tolerance: error <= c.tolerance,
            })
        })
        .collect()
}
