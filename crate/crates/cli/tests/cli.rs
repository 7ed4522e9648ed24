//! End-to-end checks of the binary: every subcommand once, plus the exit
//! code contract (0 ok, 1 bad input, usage errors never collide with 2).

use std::path::Path;
use std::process::{Command, Output};

use mrt_core::io::{default_skeleton, load_motion, save_motion, save_observations};
use mrt_core::kinematics::ShapeParams;
use mrt_core::synth;

fn mrt(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrt"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

#[test]
fn demo_pipeline_and_downstream_commands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let out = mrt(&["demo", "--out-dir", "demo", "--seed", "601"], d);
    assert_eq!(
        code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "source.json",
        "target_shape.json",
        "constraints.json",
        "retargeted.json",
        "unconstrained.json",
        "report.json",
        "source_hand_y.csv",
        "unconstrained_hand_y.csv",
        "constrained_hand_y.csv",
    ] {
        assert!(d.join("demo").join(f).exists(), "missing {f}");
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("within tolerance"), "stdout: {stdout}");

    // smooth the demo source and verify the result still loads
    let out = mrt(
        &[
            "smooth",
            "--in",
            "demo/source.json",
            "--radius",
            "3",
            "--out",
            "smoothed.json",
        ],
        d,
    );
    assert_eq!(
        code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let sk = default_skeleton();
    let (smoothed, _) = load_motion(&d.join("smoothed.json"), &sk).unwrap();
    assert_eq!(smoothed.frames.len(), 180);

    // a second retarget run straight from the saved artifacts
    let out = mrt(
        &[
            "retarget",
            "--source",
            "demo/source.json",
            "--target-shape",
            "demo/target_shape.json",
            "--constraints",
            "demo/constraints.json",
            "--out",
            "rt.json",
            "--report",
            "rt_report.json",
        ],
        d,
    );
    assert_eq!(
        code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("rt_report.json")).unwrap()).unwrap();
    for c in report["constraints"].as_array().unwrap() {
        assert_eq!(c["within_tolerance"], serde_json::Value::Bool(true));
    }

    // metrics against the constraints
    let out = mrt(
        &[
            "metrics",
            "--in",
            "rt.json",
            "--constraints",
            "demo/constraints.json",
            "--out",
            "metrics.json",
        ],
        d,
    );
    assert_eq!(code(&out), 0);
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("metrics.json")).unwrap()).unwrap();
    for e in metrics["constraint_errors"].as_array().unwrap() {
        assert!(e.as_f64().unwrap() < 0.005);
    }

    // CSV export of the retargeted hand height
    let out = mrt(
        &[
            "export-csv",
            "--in",
            "rt.json",
            "--joint",
            "left_hand",
            "--axis",
            "y",
            "--out",
            "hand.csv",
        ],
        d,
    );
    assert_eq!(code(&out), 0);
    let csv = std::fs::read_to_string(d.join("hand.csv")).unwrap();
    assert_eq!(csv.lines().count(), 181); // header + one row per frame
    assert_eq!(csv.lines().next().unwrap(), "frame,value");
}

#[test]
fn estimate_recovers_a_synthetic_clip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sk = default_skeleton();
    let beta = ShapeParams::zeros();
    let k = mrt_core::estimate::CameraIntrinsics::new(1000.0, 1000.0, 500.0, 500.0).unwrap();
    let mut truth = synth::sway_motion(10, 30.0, 7);
    for f in truth.frames.iter_mut() {
        f.root_translation.z += 3.0;
    }
    let obs = synth::observations_from_motion(&truth, &beta, &sk, &k).unwrap();
    save_observations(&d.join("obs.json"), &obs, [1000, 1000], Some(&k), 30.0).unwrap();

    let out = mrt(
        &[
            "estimate",
            "--obs",
            "obs.json",
            "--out",
            "est.json",
            "--lambda1",
            "1.0",
        ],
        d,
    );
    assert_eq!(
        code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (est, _) = load_motion(&d.join("est.json"), &sk).unwrap();
    assert_eq!(est.frames.len(), 10);
    // exact initialization at the ground truth: angles should barely move
    for (a, b) in est.frames.iter().zip(truth.frames.iter()) {
        for (x, y) in a.to_flat().iter().zip(b.to_flat().iter()) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }
}

#[test]
fn exit_codes_for_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    // missing file is a validation failure naming the path
    let out = mrt(&["metrics", "--in", "nope.json"], d);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.json"));

    // malformed motion file
    std::fs::write(d.join("bad.json"), "{\"version\": \"1\"").unwrap();
    let out = mrt(&["metrics", "--in", "bad.json"], d);
    assert_eq!(code(&out), 1);

    // unknown joint in export-csv
    let sk = default_skeleton();
    let motion = synth::sway_motion(3, 30.0, 1);
    save_motion(&d.join("m.json"), &motion, &ShapeParams::zeros(), &sk).unwrap();
    let out = mrt(
        &[
            "export-csv",
            "--in",
            "m.json",
            "--joint",
            "left_flipper",
            "--axis",
            "y",
            "--out",
            "x.csv",
        ],
        d,
    );
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("left_flipper"));

    // usage errors are validation failures (1), never the solver code (2)
    let out = mrt(&["retarget", "--source", "m.json"], d);
    assert_eq!(code(&out), 1);
    let out = mrt(
        &[
            "export-csv",
            "--in",
            "m.json",
            "--joint",
            "pelvis",
            "--axis",
            "w",
            "--out",
            "x.csv",
        ],
        d,
    );
    assert_eq!(code(&out), 1);

    // --help is not an error
    let out = mrt(&["--help"], d);
    assert_eq!(code(&out), 0);
}
