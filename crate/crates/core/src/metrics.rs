//! Motion quality metrics: constraint errors, smoothness, frame jumps.

use crate::error::{Error, Result};
use crate::kinematics::{fk, Motion, ShapeParams, Skeleton};
use crate::retarget::Constraint;
use nalgebra::Vector3;
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct MetricsReport {
    /// Achieved position error per constraint, meters.
    pub constraint_errors: Vec<f64>,
    /// Mean squared second difference of all joint world positions, m^2.
    pub smoothness: f64,
    /// Largest single-frame joint displacement, meters.
    pub max_frame_jump: f64,
    pub per_window_cost: Vec<f64>,
}

fn joint_positions(
    motion: &Motion,
    skeleton: &Skeleton,
    beta: &ShapeParams,
) -> Result<Vec<Vec<Vector3<f64>>>> {
    let offsets = skeleton.offsets(beta)?;
    Ok(motion
        .frames
        .iter()
        .map(|p| fk(&skeleton.topology, &offsets, p).positions())
        .collect())
}

/// Mean squared second difference of the joint world positions.
///
/// Zero for fewer than three frames.
pub fn mean_squared_second_difference(
    motion: &Motion,
    skeleton: &Skeleton,
    beta: &ShapeParams,
) -> Result<f64> {
    let pos = joint_positions(motion, skeleton, beta)?;
    if pos.len() < 3 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for k in 1..pos.len() - 1 {
        for j in 0..pos[k].len() {
            let dd = pos[k + 1][j] - pos[k][j] * 2.0 + pos[k - 1][j];
            sum += dd.norm_squared();
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// Largest per-frame joint displacement over the whole motion.
pub fn max_frame_jump(motion: &Motion, skeleton: &Skeleton, beta: &ShapeParams) -> Result<f64> {
    let pos = joint_positions(motion, skeleton, beta)?;
    let mut max = 0.0_f64;
    for k in 0..pos.len().saturating_sub(1) {
        for j in 0..pos[k].len() {
            max = max.max((pos[k + 1][j] - pos[k][j]).norm());
        }
    }
    Ok(max)
}

/// Fills a [`MetricsReport`] from FK evaluations of the result motion.
pub fn compute_metrics(
    result: &Motion,
    beta_result: &ShapeParams,
    skeleton: &Skeleton,
    constraints: &[Constraint],
    per_window_cost: &[f64],
) -> Result<MetricsReport> {
    let offsets = skeleton.offsets(beta_result)?;
    let mut constraint_errors = Vec::with_capacity(constraints.len());
    for c in constraints {
        if c.frame >= result.frames.len() {
            return Err(Error::validation(format!(
                "constraint frame {} beyond result motion length {}",
                c.frame,
                result.frames.len()
            )));
        }
        let poses = fk(&skeleton.topology, &offsets, &result.frames[c.frame]);
        constraint_errors.push((poses.poses[c.joint].translation - c.target_position).norm());
    }
    Ok(MetricsReport {
        constraint_errors,
        smoothness: mean_squared_second_difference(result, skeleton, beta_result)?,
        max_frame_jump: max_frame_jump(result, skeleton, beta_result)?,
        per_window_cost: per_window_cost.to_vec(),
    })
}
