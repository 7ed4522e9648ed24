//! Property-based checks of the kinematic core and weight defaults.

use mrt_core::io::default_skeleton;
use mrt_core::kinematics::{
    end_effector_frames, fk, PoseParams, Rotation3, ShapeParams, JOINT_COUNT,
};
use mrt_core::retarget::default_weights;
use nalgebra::{Matrix3, Matrix4, Vector3};
use proptest::prelude::*;

fn angle_vec() -> impl Strategy<Value = Vector3<f64>> {
    (-1.5_f64..1.5, -1.5_f64..1.5, -1.5_f64..1.5).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn random_pose() -> impl Strategy<Value = PoseParams> {
    (
        proptest::collection::vec(angle_vec(), JOINT_COUNT),
        angle_vec(),
    )
        .prop_map(|(angles, t)| {
            let mut pose = PoseParams::rest();
            for (th, a) in pose.theta.iter_mut().zip(angles) {
                *th = Rotation3(a);
            }
            pose.root_translation = t;
            pose
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bone_lengths_are_pose_invariant(pose in random_pose()) {
        let sk = default_skeleton();
        let off = sk.offsets(&ShapeParams::zeros()).unwrap();
        let poses = fk(&sk.topology, &off, &pose);
        for i in 1..JOINT_COUNT {
            let p = sk.topology.parent[i].unwrap();
            let len = (poses.poses[i].translation - poses.poses[p].translation).norm();
            let expect = off.offsets[i].norm();
            prop_assert!((len - expect).abs() <= 1e-9 * expect.max(1.0));
        }
    }

    #[test]
    fn root_transform_acts_rigidly_on_all_joints(
        pose in random_pose(),
        g_rot in angle_vec(),
        g_t in angle_vec(),
    ) {
        let sk = default_skeleton();
        let off = sk.offsets(&ShapeParams::zeros()).unwrap();
        let base = fk(&sk.topology, &off, &pose);

        // pre-compose a rigid transform G on the root
        let g = Rotation3(g_rot).to_matrix();
        let mut moved = pose.clone();
        let combined = g * pose.theta[0].to_matrix();
        moved.theta[0] = Rotation3::from_matrix(&combined);
        moved.root_translation = g_t;
        let out = fk(&sk.topology, &off, &moved);

        for i in 0..JOINT_COUNT {
            let expect = g * (base.poses[i].translation - pose.root_translation) + g_t;
            prop_assert!((out.poses[i].translation - expect).norm() < 1e-6);
            let expect_rot = g * base.poses[i].rotation;
            prop_assert!((out.poses[i].rotation - expect_rot).norm() < 1e-6);
        }
        let ee = end_effector_frames(&out, &sk.topology);
        for (e, &idx) in ee.iter().zip(sk.topology.end_effectors.iter()) {
            prop_assert_eq!(e.translation, out.poses[idx].translation);
        }
    }

    #[test]
    fn axis_angle_matrix_round_trip(
        axis in angle_vec().prop_filter("nonzero axis", |v| v.norm() > 1e-3),
        angle in 1e-6_f64..std::f64::consts::PI - 1e-6,
    ) {
        let aa = Rotation3(axis.normalize() * angle);
        let m = aa.to_matrix();
        let back = Rotation3::from_matrix(&m);
        let m2 = back.to_matrix();
        prop_assert!((m - m2).norm() < 1e-9);
        // orthonormality with unit determinant
        prop_assert!((m.transpose() * m - Matrix3::identity()).norm() < 1e-12);
        prop_assert!((m.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fk_matches_explicit_matrix_products_on_a_chain(pose in random_pose()) {
        let sk = default_skeleton();
        let off = sk.offsets(&ShapeParams::zeros()).unwrap();
        let poses = fk(&sk.topology, &off, &pose);

        // spine chain pelvis -> spine1 -> spine2 -> spine3 -> neck, length 5
        let chain = [0usize, 3, 6, 9, 12];
        let mut acc = Matrix4::identity();
        for &j in &chain {
            let mut local = Matrix4::identity();
            let r = pose.theta[j].to_matrix();
            let t = if j == 0 { pose.root_translation } else { off.offsets[j] };
            local.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
            local.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
            acc *= local;
            let pos = Vector3::new(acc[(0, 3)], acc[(1, 3)], acc[(2, 3)]);
            prop_assert!((poses.poses[j].translation - pos).norm() < 1e-10);
            let rot: Matrix3<f64> = acc.fixed_view::<3, 3>(0, 0).into();
            prop_assert!((poses.poses[j].rotation - rot).norm() < 1e-10);
        }
    }

    #[test]
    fn default_weights_are_depth_monotone(rho in 0.01_f64..=1.0) {
        let sk = default_skeleton();
        let w = default_weights(&sk.topology, rho).unwrap();
        for i in 0..JOINT_COUNT {
            for j in 0..JOINT_COUNT {
                if sk.topology.depth[i] < sk.topology.depth[j] {
                    prop_assert!(w.w_pred[i] >= w.w_pred[j]);
                    prop_assert!(w.w_reg[i] >= w.w_reg[j]);
                }
            }
        }
    }

    #[test]
    fn fk_is_deterministic(pose in random_pose()) {
        let sk = default_skeleton();
        let off = sk.offsets(&ShapeParams::zeros()).unwrap();
        let a = fk(&sk.topology, &off, &pose);
        let b = fk(&sk.topology, &off, &pose);
        for (x, y) in a.poses.iter().zip(b.poses.iter()) {
            prop_assert_eq!(x.translation, y.translation);
            prop_assert_eq!(x.rotation, y.rotation);
        }
    }
}
