//! Synthetic motion and scenario generators.
//!
//! Everything here is seeded and deterministic. The generators back the
//! `demo` CLI subcommand and the test suites, so no external capture data is
//! needed anywhere in the repo.

use crate::error::Result;
use crate::estimate::{CameraIntrinsics, ObservationFrame};
use crate::kinematics::{
    fk, Motion, PoseParams, Rotation3, ShapeParams, Skeleton, JOINT_COUNT, SHAPE_DIM,
};
use crate::retarget::Constraint;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smooth pseudo-random motion: per-joint sinusoids with seeded amplitudes
/// and phases plus a drifting root. Amplitudes stay small enough that every
/// joint remains well in front of a camera at the origin when the root is
/// placed at positive depth.
pub fn sway_motion(frames: usize, fps: f64, seed: u64) -> Motion {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut amp = [[0.0; 3]; JOINT_COUNT];
    let mut phase = [[0.0; 3]; JOINT_COUNT];
    let mut freq = [[0.0; 3]; JOINT_COUNT];
    for j in 0..JOINT_COUNT {
        for a in 0..3 {
            amp[j][a] = rng.gen_range(-0.15..0.15);
            phase[j][a] = rng.gen_range(0.0..std::f64::consts::TAU);
            freq[j][a] = rng.gen_range(0.3..1.2);
        }
    }
    let mut out = Vec::with_capacity(frames);
    for k in 0..frames {
        let t = k as f64 / fps;
        let mut theta = [Rotation3::identity(); JOINT_COUNT];
        for (j, th) in theta.iter_mut().enumerate() {
            *th = Rotation3(Vector3::new(
                amp[j][0] * (std::f64::consts::TAU * freq[j][0] * t + phase[j][0]).sin(),
                amp[j][1] * (std::f64::consts::TAU * freq[j][1] * t + phase[j][1]).sin(),
                amp[j][2] * (std::f64::consts::TAU * freq[j][2] * t + phase[j][2]).sin(),
            ));
        }
        out.push(PoseParams {
            theta,
            root_translation: Vector3::new(0.05 * (0.7 * t).sin(), 0.02 * (1.1 * t).sin(), 0.0),
        });
    }
    Motion { frames: out, fps }
}

/// Adds Gaussian noise to every joint angle component.
pub fn perturb_angles(motion: &Motion, sigma: f64, seed: u64) -> Motion {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = motion
        .frames
        .iter()
        .map(|p| {
            let mut out = p.clone();
            for r in out.theta.iter_mut() {
                r.0 += Vector3::new(
                    gaussian(&mut rng, sigma),
                    gaussian(&mut rng, sigma),
                    gaussian(&mut rng, sigma),
                );
            }
            out
        })
        .collect();
    Motion {
        frames,
        fps: motion.fps,
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    // Box-Muller; two uniforms in (0, 1]
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    sigma * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Projects a ground-truth motion into per-frame observations with full
/// confidence. `theta_init` carries the ground truth; perturb it afterwards
/// when an imperfect initialization is wanted.
pub fn observations_from_motion(
    motion: &Motion,
    beta: &ShapeParams,
    skeleton: &Skeleton,
    k: &CameraIntrinsics,
) -> Result<Vec<ObservationFrame>> {
    let offsets = skeleton.offsets(beta)?;
    motion
        .frames
        .iter()
        .map(|pose| {
            let poses = fk(&skeleton.topology, &offsets, pose);
            let joints_2d = crate::estimate::project_joints(k, &poses)?;
            Ok(ObservationFrame {
                joints_2d,
                confidence: vec![1.0; JOINT_COUNT],
                theta_init: pose.clone(),
                beta_init: beta.clone(),
            })
        })
        .collect()
}

/// The synthetic "pick up a box" scenario.
#[derive(Clone, Debug)]
pub struct DemoScenario {
    pub source: Motion,
    pub beta_source: ShapeParams,
    pub beta_target: ShapeParams,
    pub constraints: Vec<Constraint>,
}

pub const DEMO_FRAMES: usize = 180;
pub const DEMO_FPS: f64 = 30.0;
/// Frames at which the hand touches the box.
pub const DEMO_CONSTRAINT_FRAMES: [usize; 2] = [47, 138];

/// Smooth bump in [0, 1]: cos^2 window of half-width `w` around `center`.
fn bump(f: f64, center: f64, w: f64) -> f64 {
    let d = (f - center).abs();
    if d >= w {
        return 0.0;
    }
    let c = (std::f64::consts::FRAC_PI_2 * d / w).cos();
    c * c
}

/// Builds the demo: a character reaches its left hand down to a box twice,
/// at frames 47 and 138. The target character has 10% shorter arms and must
/// still touch the box, so the constraints pin the target hand to the
/// source hand's world position at those frames.
pub fn pickup_box_scenario(skeleton: &Skeleton, seed: u64) -> Result<DemoScenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idle_phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);

    let beta_source = ShapeParams::zeros();
    // component 1 drives the arm bones with response 0.10 per unit
    let mut bt = [0.0; SHAPE_DIM];
    bt[1] = -1.0;
    let beta_target = ShapeParams::new(bt)?;

    let sh = skeleton.topology.joint_index("left_shoulder")?;
    let el = skeleton.topology.joint_index("left_elbow")?;
    let hand = skeleton.topology.joint_index("left_hand")?;
    let spine = skeleton.topology.joint_index("spine1")?;

    let mut frames = Vec::with_capacity(DEMO_FRAMES);
    for k in 0..DEMO_FRAMES {
        let f = k as f64;
        let t = f / DEMO_FPS;
        let reach = bump(f, DEMO_CONSTRAINT_FRAMES[0] as f64, 26.0)
            + bump(f, DEMO_CONSTRAINT_FRAMES[1] as f64, 26.0);

        let mut theta = [Rotation3::identity(); JOINT_COUNT];
        // idle sway so the clip has some style to preserve
        theta[spine] = Rotation3(Vector3::new(0.0, 0.0, 0.04 * (0.8 * t + idle_phase).sin()));
        // arm swings from a slightly bent rest down-forward towards the box
        theta[sh] = Rotation3(Vector3::new(0.0, -0.35 * reach, -1.25 * reach));
        theta[el] = Rotation3(Vector3::new(0.0, 0.0, 0.55 * (1.0 - reach) + 0.03));
        frames.push(PoseParams {
            theta,
            root_translation: Vector3::new(0.0, 0.01 * (1.3 * t).sin(), 0.0),
        });
    }
    let source = Motion {
        frames,
        fps: DEMO_FPS,
    };

    // the box sits exactly where the source hand lands
    let offsets = skeleton.offsets(&beta_source)?;
    let constraints = DEMO_CONSTRAINT_FRAMES
        .iter()
        .map(|&frame| {
            let poses = fk(&skeleton.topology, &offsets, &source.frames[frame]);
            Constraint {
                frame,
                joint: hand,
                target_position: poses.poses[hand].translation,
                target_orientation: None,
                tolerance: 0.005,
                // heavy enough that the contact term dominates style and
                // regularization at the touch frames (millimeter accuracy)
                weight: 50.0,
            }
        })
        .collect();

    Ok(DemoScenario {
        source,
        beta_source,
        beta_target,
        constraints,
    })
}
