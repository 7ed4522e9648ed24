//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A value or structure violated one of its documented invariants.
    #[error("validation: {0}")]
    Validation(String),

    /// A structured input file did not match the expected schema.
    #[error("schema error in {path}: {detail}")]
    Schema { path: String, detail: String },

    /// A motion file references a different skeleton than the one loaded.
    #[error("skeleton hash mismatch: motion references {expected}, loaded skeleton is {actual}")]
    SkeletonHashMismatch { expected: String, actual: String },

    /// A joint name or index that does not exist in the skeleton.
    #[error("unknown joint: {0}")]
    UnknownJoint(String),

    /// Projection of a joint at or behind the camera plane.
    #[error("joint {joint} is behind the camera (z = {z})")]
    BehindCamera { joint: usize, z: f64 },

    /// A per-frame or per-window solve failed; the index identifies where.
    #[error("solve failed at {unit} {index}: {detail}")]
    SolveFailed {
        unit: &'static str,
        index: usize,
        detail: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
