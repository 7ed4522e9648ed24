//! Parametric 24-joint skeleton, rotation algebra and forward kinematics.
//!
//! The skeleton is a pure joint tree: a template of rest-pose bone offsets
//! plus a per-bone linear response to the 10 shape coefficients. Joint
//! rotations are axis-angle vectors (72 scalars per frame) and the root
//! carries the global translation, so a full pose is 75 scalars.

use crate::error::{Error, Result};
use crate::math::{self, Real, M3, V3};
use nalgebra::{Matrix3, Vector3};

pub const JOINT_COUNT: usize = 24;
pub const SHAPE_DIM: usize = 10;
pub const END_EFFECTOR_COUNT: usize = 5;
/// Degrees of freedom of one pose: 24 axis-angle triples + root translation.
pub const POSE_DOF: usize = JOINT_COUNT * 3 + 3;

/// Canonical joint names, in tree (topological) order. Root is the pelvis.
pub const JOINT_NAMES: [&str; JOINT_COUNT] = [
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hand",
    "right_hand",
];

/// Axis-angle rotation: direction is the axis, magnitude the angle in radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation3(pub Vector3<f64>);

impl Rotation3 {
    pub fn identity() -> Self {
        Rotation3(Vector3::zeros())
    }

    /// Wraps the magnitude into `[0, 2*pi)`. Only applied at I/O boundaries;
    /// the optimizers work on the unwrapped parameters.
    pub fn canonicalized(self) -> Self {
        let angle = self.0.norm();
        if angle < 2.0 * std::f64::consts::PI || angle == 0.0 {
            return self;
        }
        let wrapped = angle % (2.0 * std::f64::consts::PI);
        Rotation3(self.0 * (wrapped / angle))
    }

    pub fn to_matrix(self) -> Matrix3<f64> {
        let m = math::rotation_from_axis_angle::<f64>(V3(self.0.into()));
        mat3_to_na(&m)
    }

    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let aa = math::axis_angle_from_matrix(&na_to_mat3(m));
        Rotation3(Vector3::new(aa.0[0], aa.0[1], aa.0[2]))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.0.iter().all(|c| c.is_finite()) {
            return Err(Error::validation("rotation has non-finite components"));
        }
        Ok(())
    }
}

/// Rigid transform (SE(3)): world rotation and translation of one joint.
#[derive(Clone, Copy, Debug)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }
}

/// The 24-joint tree: parents, names, end-effectors and depths.
#[derive(Clone, Debug)]
pub struct SkeletonTopology {
    pub parent: [Option<usize>; JOINT_COUNT],
    pub names: Vec<String>,
    pub end_effectors: [usize; END_EFFECTOR_COUNT],
    pub depth: [usize; JOINT_COUNT],
}

impl SkeletonTopology {
    pub fn new(
        parent: [Option<usize>; JOINT_COUNT],
        names: Vec<String>,
        end_effectors: [usize; END_EFFECTOR_COUNT],
    ) -> Result<Self> {
        if names.len() != JOINT_COUNT {
            return Err(Error::validation(format!(
                "expected {JOINT_COUNT} joint names, got {}",
                names.len()
            )));
        }
        if parent[0].is_some() {
            return Err(Error::validation("joint 0 must be the root (no parent)"));
        }
        let mut depth = [0usize; JOINT_COUNT];
        for i in 1..JOINT_COUNT {
            match parent[i] {
                None => {
                    return Err(Error::validation(format!(
                        "joint {i} has no parent; only the root may be parentless"
                    )))
                }
                Some(p) if p >= i => {
                    return Err(Error::validation(format!(
                        "parent[{i}] = {p} violates topological order"
                    )))
                }
                Some(p) => depth[i] = depth[p] + 1,
            }
        }
        let mut has_child = [false; JOINT_COUNT];
        for p in parent.iter().flatten() {
            has_child[*p] = true;
        }
        for &e in &end_effectors {
            if e >= JOINT_COUNT {
                return Err(Error::validation(format!(
                    "end-effector index {e} out of range"
                )));
            }
            if has_child[e] {
                return Err(Error::validation(format!(
                    "end-effector {} is not a leaf",
                    names[e]
                )));
            }
        }
        Ok(SkeletonTopology {
            parent,
            names,
            end_effectors,
            depth,
        })
    }

    pub fn joint_count(&self) -> usize {
        JOINT_COUNT
    }

    pub fn joint_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownJoint(name.to_string()))
    }
}

/// 10 dimensionless shape coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeParams {
    pub beta: [f64; SHAPE_DIM],
}

/// Validation bound on each shape coefficient.
pub const SHAPE_BOUND: f64 = 5.0;

impl ShapeParams {
    pub fn zeros() -> Self {
        ShapeParams {
            beta: [0.0; SHAPE_DIM],
        }
    }

    pub fn new(beta: [f64; SHAPE_DIM]) -> Result<Self> {
        let s = ShapeParams { beta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, b) in self.beta.iter().enumerate() {
            if !b.is_finite() || b.abs() > SHAPE_BOUND {
                return Err(Error::validation(format!(
                    "shape coefficient {i} = {b} outside [-{SHAPE_BOUND}, {SHAPE_BOUND}]"
                )));
            }
        }
        Ok(())
    }
}

/// Rest-pose offset of every joint in its parent's frame, meters.
#[derive(Clone, Debug)]
pub struct BoneOffsets {
    pub offsets: [Vector3<f64>; JOINT_COUNT],
}

impl BoneOffsets {
    pub fn validate(&self) -> Result<()> {
        if self.offsets[0] != Vector3::zeros() {
            return Err(Error::validation("root offset must be zero"));
        }
        for (i, o) in self.offsets.iter().enumerate().skip(1) {
            if o.norm() == 0.0 {
                return Err(Error::validation(format!(
                    "bone offset {i} has zero length"
                )));
            }
        }
        Ok(())
    }
}

/// Full skeleton definition: topology plus the shape-dependent template.
#[derive(Clone, Debug)]
pub struct Skeleton {
    pub name: String,
    /// Hex sha-256 of the defining file, referenced by motion files.
    pub hash: String,
    pub topology: SkeletonTopology,
    pub template: BoneOffsets,
    /// Per-bone linear response of the bone length to each shape coefficient.
    pub shape_basis: [[f64; SHAPE_DIM]; JOINT_COUNT],
}

impl Skeleton {
    /// Bone offsets for a given shape: `template[i] * (1 + beta . basis[i])`.
    pub fn offsets(&self, beta: &ShapeParams) -> Result<BoneOffsets> {
        shape_to_offsets(&self.template, &self.shape_basis, beta)
    }
}

/// Applies the per-bone affine shape response to the template offsets.
pub fn shape_to_offsets(
    template: &BoneOffsets,
    basis: &[[f64; SHAPE_DIM]; JOINT_COUNT],
    beta: &ShapeParams,
) -> Result<BoneOffsets> {
    beta.validate()?;
    let mut offsets = template.offsets;
    for i in 1..JOINT_COUNT {
        let scale: f64 = 1.0
            + beta
                .beta
                .iter()
                .zip(basis[i].iter())
                .map(|(b, r)| b * r)
                .sum::<f64>();
        offsets[i] = template.offsets[i] * scale;
    }
    let out = BoneOffsets { offsets };
    out.validate()?;
    Ok(out)
}

/// Joint angles plus root translation for one frame.
#[derive(Clone, Debug)]
pub struct PoseParams {
    pub theta: [Rotation3; JOINT_COUNT],
    pub root_translation: Vector3<f64>,
}

impl PoseParams {
    pub fn rest() -> Self {
        PoseParams {
            theta: [Rotation3::identity(); JOINT_COUNT],
            root_translation: Vector3::zeros(),
        }
    }

    /// Flattens to 75 scalars: 72 angles then the root translation.
    pub fn to_flat(&self) -> [f64; POSE_DOF] {
        let mut out = [0.0; POSE_DOF];
        for (i, r) in self.theta.iter().enumerate() {
            out[3 * i] = r.0.x;
            out[3 * i + 1] = r.0.y;
            out[3 * i + 2] = r.0.z;
        }
        out[72] = self.root_translation.x;
        out[73] = self.root_translation.y;
        out[74] = self.root_translation.z;
        out
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() != POSE_DOF {
            return Err(Error::validation(format!(
                "pose must have {POSE_DOF} scalars, got {}",
                flat.len()
            )));
        }
        if !flat.iter().all(|v| v.is_finite()) {
            return Err(Error::validation("pose contains non-finite values"));
        }
        let mut theta = [Rotation3::identity(); JOINT_COUNT];
        for (i, t) in theta.iter_mut().enumerate() {
            *t = Rotation3(Vector3::new(flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]));
        }
        Ok(PoseParams {
            theta,
            root_translation: Vector3::new(flat[72], flat[73], flat[74]),
        })
    }
}

/// World pose of all 24 joints (the FK output).
#[derive(Clone, Debug)]
pub struct JointPoseSet {
    pub poses: Vec<RigidTransform>,
}

impl JointPoseSet {
    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.poses.iter().map(|p| p.translation).collect()
    }
}

/// A sequence of poses at a fixed frame rate.
#[derive(Clone, Debug)]
pub struct Motion {
    pub frames: Vec<PoseParams>,
    pub fps: f64,
}

impl Motion {
    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::validation("motion has no frames"));
        }
        if !(self.fps > 0.0) {
            return Err(Error::validation(format!(
                "fps must be positive, got {}",
                self.fps
            )));
        }
        Ok(())
    }
}

/// Forward kinematics over any scalar type.
///
/// `theta` is the flattened 72-vector of axis-angle components and `root` the
/// global translation. Returns world rotation and position per joint in tree
/// order. This is the differentiable core; [`fk`] wraps it for `f64`.
pub fn fk_generic<T: Real>(
    topology: &SkeletonTopology,
    offsets: &BoneOffsets,
    theta: &[T],
    root: [T; 3],
) -> Vec<(M3<T>, V3<T>)> {
    debug_assert_eq!(theta.len(), JOINT_COUNT * 3);
    let mut out: Vec<(M3<T>, V3<T>)> = Vec::with_capacity(JOINT_COUNT);
    for i in 0..JOINT_COUNT {
        let aa = V3([theta[3 * i], theta[3 * i + 1], theta[3 * i + 2]]);
        let local_rot = math::rotation_from_axis_angle(aa);
        match topology.parent[i] {
            None => out.push((local_rot, V3(root))),
            Some(p) => {
                let (pr, pt) = out[p];
                let off = V3::<T>::from_f64(offsets.offsets[i].into());
                let pos = pt + pr.mul_vec(off);
                out.push((pr.mul_mat(local_rot), pos));
            }
        }
    }
    out
}

/// Forward kinematics: world poses of all joints for one frame.
pub fn fk(topology: &SkeletonTopology, offsets: &BoneOffsets, pose: &PoseParams) -> JointPoseSet {
    let flat = pose.to_flat();
    let raw = fk_generic::<f64>(
        topology,
        offsets,
        &flat[..72],
        [flat[72], flat[73], flat[74]],
    );
    JointPoseSet {
        poses: raw
            .into_iter()
            .map(|(r, t)| RigidTransform {
                rotation: mat3_to_na(&r),
                translation: Vector3::new(t.0[0], t.0[1], t.0[2]),
            })
            .collect(),
    }
}

/// World poses of the five end-effectors, in the topology's fixed order.
pub fn end_effector_frames(
    poses: &JointPoseSet,
    topology: &SkeletonTopology,
) -> [RigidTransform; END_EFFECTOR_COUNT] {
    let mut out = [RigidTransform::identity(); END_EFFECTOR_COUNT];
    for (o, &e) in out.iter_mut().zip(topology.end_effectors.iter()) {
        *o = poses.poses[e];
    }
    out
}

pub(crate) fn mat3_to_na(m: &M3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        m.0[0][0], m.0[0][1], m.0[0][2], m.0[1][0], m.0[1][1], m.0[1][2], m.0[2][0], m.0[2][1],
        m.0[2][2],
    )
}

pub(crate) fn na_to_mat3(m: &Matrix3<f64>) -> M3<f64> {
    M3([
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ])
}
