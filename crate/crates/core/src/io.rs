//! File formats: skeleton definitions, motions, observations, constraints
//! and CSV trajectory export.
//!
//! Everything structured is JSON; numbers are serialized at full round-trip
//! precision so save/load is bit-exact on the numeric payload. Writes go
//! through a temp-file-then-rename so a crash never leaves a half-written
//! output behind.

use crate::error::{Error, Result};
use crate::estimate::{CameraIntrinsics, ObservationFrame};
use crate::kinematics::{
    fk, BoneOffsets, Motion, PoseParams, Rotation3, ShapeParams, Skeleton, SkeletonTopology,
    END_EFFECTOR_COUNT, JOINT_COUNT, JOINT_NAMES, POSE_DOF, SHAPE_DIM,
};
use crate::retarget::Constraint;
use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

/// The default skeleton definition shipped with the crate.
pub const DEFAULT_SKELETON_JSON: &str = include_str!("../data/skeleton24.json");

pub const MOTION_FORMAT_VERSION: &str = "1";

// ---------------------------------------------------------------------------
// skeleton file

#[derive(Serialize, Deserialize)]
struct JointSpec {
    name: String,
    parent: Option<usize>,
    offset: [f64; 3],
    shape_basis: [f64; SHAPE_DIM],
}

#[derive(Serialize, Deserialize)]
struct SkeletonFile {
    name: String,
    joints: Vec<JointSpec>,
    end_effectors: Vec<String>,
}

fn schema_err(path: &str, detail: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_string(),
        detail: detail.into(),
    }
}

fn skeleton_from_str(text: &str, origin: &str) -> Result<Skeleton> {
    let file: SkeletonFile =
        serde_json::from_str(text).map_err(|e| schema_err(origin, e.to_string()))?;
    if file.joints.len() != JOINT_COUNT {
        return Err(schema_err(
            origin,
            format!("expected {JOINT_COUNT} joints, got {}", file.joints.len()),
        ));
    }
    // joint order and names must follow the canonical 24-joint convention
    for (i, j) in file.joints.iter().enumerate() {
        if j.name != JOINT_NAMES[i] {
            return Err(schema_err(
                origin,
                format!(
                    "joint {i} must be named '{}', got '{}'",
                    JOINT_NAMES[i], j.name
                ),
            ));
        }
    }
    if file.end_effectors.len() != END_EFFECTOR_COUNT {
        return Err(schema_err(
            origin,
            format!("expected {END_EFFECTOR_COUNT} end-effectors"),
        ));
    }
    let names: Vec<String> = file.joints.iter().map(|j| j.name.clone()).collect();
    let mut parent = [None; JOINT_COUNT];
    for (i, j) in file.joints.iter().enumerate() {
        parent[i] = j.parent;
    }
    let mut ee = [0usize; END_EFFECTOR_COUNT];
    for (slot, name) in ee.iter_mut().zip(file.end_effectors.iter()) {
        *slot = names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownJoint(name.clone()))?;
    }
    let topology = SkeletonTopology::new(parent, names, ee)?;
    let mut offsets = [Vector3::zeros(); JOINT_COUNT];
    let mut shape_basis = [[0.0; SHAPE_DIM]; JOINT_COUNT];
    for (i, j) in file.joints.iter().enumerate() {
        offsets[i] = Vector3::new(j.offset[0], j.offset[1], j.offset[2]);
        shape_basis[i] = j.shape_basis;
    }
    let template = BoneOffsets { offsets };
    template.validate()?;
    Ok(Skeleton {
        name: file.name,
        hash: hex_sha256(text.as_bytes()),
        topology,
        template,
        shape_basis,
    })
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))
}

pub fn load_skeleton(path: &Path) -> Result<Skeleton> {
    let text = read_text(path)?;
    skeleton_from_str(&text, &path.display().to_string())
}

/// The built-in default skeleton.
pub fn default_skeleton() -> Skeleton {
    skeleton_from_str(DEFAULT_SKELETON_JSON, "<builtin skeleton24.json>")
        .expect("embedded skeleton is valid")
}

fn hex_sha256(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// motion file

#[derive(Serialize, Deserialize)]
struct SkeletonRef {
    name: String,
    hash: String,
}

#[derive(Serialize, Deserialize)]
struct MotionFile {
    version: String,
    fps: f64,
    skeleton: SkeletonRef,
    beta: Vec<f64>,
    /// 75 scalars per frame: 72 axis-angle components then the root translation.
    frames: Vec<Vec<f64>>,
}

pub fn save_motion(
    path: &Path,
    motion: &Motion,
    beta: &ShapeParams,
    skeleton: &Skeleton,
) -> Result<()> {
    motion.validate()?;
    let file = MotionFile {
        version: MOTION_FORMAT_VERSION.to_string(),
        fps: motion.fps,
        skeleton: SkeletonRef {
            name: skeleton.name.clone(),
            hash: skeleton.hash.clone(),
        },
        beta: beta.beta.to_vec(),
        frames: motion.frames.iter().map(canonical_frame).collect(),
    };
    write_json_atomic(path, &file)
}

/// Canonical on-disk form: angles wrapped into `[0, 2*pi)`.
fn canonical_frame(p: &PoseParams) -> Vec<f64> {
    let mut canonical = p.clone();
    for r in canonical.theta.iter_mut() {
        *r = r.canonicalized();
    }
    canonical.to_flat().to_vec()
}

pub fn load_motion(path: &Path, skeleton: &Skeleton) -> Result<(Motion, ShapeParams)> {
    let origin = path.display().to_string();
    let text = read_text(path)?;
    let file: MotionFile =
        serde_json::from_str(&text).map_err(|e| schema_err(&origin, e.to_string()))?;
    if file.version != MOTION_FORMAT_VERSION {
        return Err(schema_err(
            &origin,
            format!("unsupported motion format version '{}'", file.version),
        ));
    }
    if file.skeleton.hash != skeleton.hash {
        return Err(Error::SkeletonHashMismatch {
            expected: file.skeleton.hash,
            actual: skeleton.hash.clone(),
        });
    }
    if file.beta.len() != SHAPE_DIM {
        return Err(schema_err(
            &origin,
            format!("beta must have {SHAPE_DIM} coefficients"),
        ));
    }
    let mut beta_arr = [0.0; SHAPE_DIM];
    beta_arr.copy_from_slice(&file.beta);
    let beta = ShapeParams::new(beta_arr)?;
    let mut frames = Vec::with_capacity(file.frames.len());
    for (i, f) in file.frames.iter().enumerate() {
        if f.len() != POSE_DOF {
            return Err(schema_err(
                &origin,
                format!("frame {i} has {} scalars, expected {POSE_DOF}", f.len()),
            ));
        }
        frames.push(
            PoseParams::from_flat(f).map_err(|e| schema_err(&origin, format!("frame {i}: {e}")))?,
        );
    }
    let motion = Motion {
        frames,
        fps: file.fps,
    };
    motion.validate()?;
    Ok((motion, beta))
}

// ---------------------------------------------------------------------------
// shape file

#[derive(Serialize, Deserialize)]
struct BetaFile {
    beta: Vec<f64>,
}

pub fn save_shape(path: &Path, beta: &ShapeParams) -> Result<()> {
    write_json_atomic(
        path,
        &BetaFile {
            beta: beta.beta.to_vec(),
        },
    )
}

pub fn load_shape(path: &Path) -> Result<ShapeParams> {
    let origin = path.display().to_string();
    let text = read_text(path)?;
    let file: BetaFile =
        serde_json::from_str(&text).map_err(|e| schema_err(&origin, e.to_string()))?;
    if file.beta.len() != SHAPE_DIM {
        return Err(schema_err(
            &origin,
            format!("beta must have {SHAPE_DIM} coefficients"),
        ));
    }
    let mut arr = [0.0; SHAPE_DIM];
    arr.copy_from_slice(&file.beta);
    ShapeParams::new(arr)
}

// ---------------------------------------------------------------------------
// constraint file

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum JointRef {
    Name(String),
    Index(usize),
}

#[derive(Serialize, Deserialize)]
struct ConstraintSpec {
    frame: usize,
    joint: JointRef,
    position: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    orientation: Option<[[f64; 3]; 3]>,
    #[serde(default = "default_tolerance")]
    tolerance: f64,
    #[serde(default = "default_weight")]
    weight: f64,
}

fn default_tolerance() -> f64 {
    0.01
}

fn default_weight() -> f64 {
    1.0
}

pub fn load_constraints(path: &Path, skeleton: &Skeleton) -> Result<Vec<Constraint>> {
    let origin = path.display().to_string();
    let text = read_text(path)?;
    let specs: Vec<ConstraintSpec> =
        serde_json::from_str(&text).map_err(|e| schema_err(&origin, e.to_string()))?;
    specs
        .iter()
        .map(|s| {
            let joint = match &s.joint {
                JointRef::Name(n) => skeleton.topology.joint_index(n)?,
                JointRef::Index(i) => {
                    if *i >= JOINT_COUNT {
                        return Err(Error::UnknownJoint(i.to_string()));
                    }
                    *i
                }
            };
            Ok(Constraint {
                frame: s.frame,
                joint,
                target_position: Vector3::new(s.position[0], s.position[1], s.position[2]),
                target_orientation: s.orientation.map(|m| {
                    Matrix3::new(
                        m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1],
                        m[2][2],
                    )
                }),
                tolerance: s.tolerance,
                weight: s.weight,
            })
        })
        .collect()
}

pub fn save_constraints(
    path: &Path,
    constraints: &[Constraint],
    skeleton: &Skeleton,
) -> Result<()> {
    let specs: Vec<ConstraintSpec> = constraints
        .iter()
        .map(|c| ConstraintSpec {
            frame: c.frame,
            joint: JointRef::Name(skeleton.topology.names[c.joint].clone()),
            position: [
                c.target_position.x,
                c.target_position.y,
                c.target_position.z,
            ],
            orientation: c.target_orientation.map(|m| {
                [
                    [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                    [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                    [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
                ]
            }),
            tolerance: c.tolerance,
            weight: c.weight,
        })
        .collect();
    write_json_atomic(path, &specs)
}

// ---------------------------------------------------------------------------
// observation file

#[derive(Serialize, Deserialize)]
struct IntrinsicsSpec {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
}

#[derive(Serialize, Deserialize)]
struct ObsFrameSpec {
    /// 24 entries of (u, v, confidence).
    joints: Vec<[f64; 3]>,
    theta: Vec<f64>,
    beta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    translation: Option<[f64; 3]>,
}

#[derive(Serialize, Deserialize)]
struct ObservationFileSpec {
    image_size: [usize; 2],
    fps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    intrinsics: Option<IntrinsicsSpec>,
    frames: Vec<ObsFrameSpec>,
}

/// A loaded observation clip ready for estimation.
pub struct ObservationClip {
    pub frames: Vec<ObservationFrame>,
    pub intrinsics: CameraIntrinsics,
    /// True when no calibration was present and the default was substituted.
    pub intrinsics_defaulted: bool,
    pub fps: f64,
}

/// Nominal subject depth used to seed the root translation when the upstream
/// estimator ships no translation (matches a ~3 m capture distance).
pub const DEFAULT_ROOT_DEPTH: f64 = 3.0;

pub fn load_observations(path: &Path) -> Result<ObservationClip> {
    let origin = path.display().to_string();
    let text = read_text(path)?;
    let file: ObservationFileSpec =
        serde_json::from_str(&text).map_err(|e| schema_err(&origin, e.to_string()))?;
    let (intrinsics, intrinsics_defaulted) = match &file.intrinsics {
        Some(k) => (CameraIntrinsics::new(k.fx, k.fy, k.cx, k.cy)?, false),
        None => (
            CameraIntrinsics::default_for_image(file.image_size[0], file.image_size[1]),
            true,
        ),
    };
    let mut frames = Vec::with_capacity(file.frames.len());
    for (i, f) in file.frames.iter().enumerate() {
        if f.joints.len() != JOINT_COUNT {
            return Err(schema_err(
                &origin,
                format!(
                    "frame {i}: expected {JOINT_COUNT} joints, got {}",
                    f.joints.len()
                ),
            ));
        }
        if f.theta.len() != 72 {
            return Err(schema_err(
                &origin,
                format!(
                    "frame {i}: theta must have 72 scalars, got {}",
                    f.theta.len()
                ),
            ));
        }
        if f.beta.len() != SHAPE_DIM {
            return Err(schema_err(
                &origin,
                format!("frame {i}: beta must have {SHAPE_DIM} coefficients"),
            ));
        }
        let joints_2d: Vec<Vector2<f64>> =
            f.joints.iter().map(|j| Vector2::new(j[0], j[1])).collect();
        let confidence: Vec<f64> = f.joints.iter().map(|j| j[2]).collect();
        let root_translation = match f.translation {
            Some(t) => Vector3::new(t[0], t[1], t[2]),
            // seed on the root joint's viewing ray at the nominal depth
            None => crate::estimate::backproject(&intrinsics, joints_2d[0], DEFAULT_ROOT_DEPTH),
        };
        let mut theta = [Rotation3::identity(); JOINT_COUNT];
        for (j, t) in theta.iter_mut().enumerate() {
            *t = Rotation3(Vector3::new(
                f.theta[3 * j],
                f.theta[3 * j + 1],
                f.theta[3 * j + 2],
            ));
        }
        let mut beta_arr = [0.0; SHAPE_DIM];
        beta_arr.copy_from_slice(&f.beta);
        let frame = ObservationFrame {
            joints_2d,
            confidence,
            theta_init: PoseParams {
                theta,
                root_translation,
            },
            beta_init: ShapeParams::new(beta_arr)
                .map_err(|e| schema_err(&origin, format!("frame {i}: {e}")))?,
        };
        frame
            .validate()
            .map_err(|e| schema_err(&origin, format!("frame {i}: {e}")))?;
        frames.push(frame);
    }
    if frames.is_empty() {
        return Err(schema_err(&origin, "observation file has no frames"));
    }
    Ok(ObservationClip {
        frames,
        intrinsics,
        intrinsics_defaulted,
        fps: file.fps,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn save_observations(
    path: &Path,
    frames: &[ObservationFrame],
    image_size: [usize; 2],
    intrinsics: Option<&CameraIntrinsics>,
    fps: f64,
) -> Result<()> {
    let file = ObservationFileSpec {
        image_size,
        fps,
        intrinsics: intrinsics.map(|k| IntrinsicsSpec {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
        }),
        frames: frames
            .iter()
            .map(|f| {
                let flat = f.theta_init.to_flat();
                ObsFrameSpec {
                    joints: f
                        .joints_2d
                        .iter()
                        .zip(f.confidence.iter())
                        .map(|(j, c)| [j.x, j.y, *c])
                        .collect(),
                    theta: flat[..72].to_vec(),
                    beta: f.beta_init.beta.to_vec(),
                    translation: Some([
                        f.theta_init.root_translation.x,
                        f.theta_init.root_translation.y,
                        f.theta_init.root_translation.z,
                    ]),
                }
            })
            .collect(),
    };
    write_json_atomic(path, &file)
}

// ---------------------------------------------------------------------------
// CSV trajectory export

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(Error::validation(format!(
                "axis must be x, y or z, got '{other}'"
            ))),
        }
    }
}

/// Writes `frame,value` rows with the world coordinate of one joint per frame.
pub fn export_trajectory_csv(
    motion: &Motion,
    skeleton: &Skeleton,
    beta: &ShapeParams,
    joint: &str,
    axis: Axis,
    path: &Path,
) -> Result<()> {
    let joint_idx = skeleton.topology.joint_index(joint)?;
    let offsets = skeleton.offsets(beta)?;
    let mut csv = String::from("frame,value\n");
    for (k, pose) in motion.frames.iter().enumerate() {
        let poses = fk(&skeleton.topology, &offsets, pose);
        let p = poses.poses[joint_idx].translation;
        let v = match axis {
            Axis::X => p.x,
            Axis::Y => p.y,
            Axis::Z => p.z,
        };
        csv.push_str(&format!("{k},{v}\n"));
    }
    write_atomic(path, csv.as_bytes())
}

// ---------------------------------------------------------------------------
// atomic write helpers

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|n| n.to_string_lossy())
            .unwrap_or_default()
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub(crate) fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
