//! Shared domain types: detections, datasets, camera pairs and fusion modes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One query, gallery or training record.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub record_id: String,
    pub feature: Vec<f64>,
    pub camera_id: usize,
    /// Frame number on the dataset's shared frame counter.
    pub timestamp: i64,
    pub person_id: Option<u32>,
    pub is_distractor: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Query,
    Gallery,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Train => "train",
            Role::Query => "query",
            Role::Gallery => "gallery",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub detections: Vec<Detection>,
    pub camera_count: usize,
    pub feature_dim: usize,
    pub role: Role,
}

impl Dataset {
    pub fn new(detections: Vec<Detection>, camera_count: usize, feature_dim: usize, role: Role) -> Self {
        Dataset {
            detections,
            camera_count,
            feature_dim,
            role,
        }
    }

    /// Builds a dataset and rejects it if [`validate_dataset`] reports anything.
    pub fn validated(
        detections: Vec<Detection>,
        camera_count: usize,
        feature_dim: usize,
        role: Role,
    ) -> Result<Self> {
        let d = Dataset::new(detections, camera_count, feature_dim, role);
        let violations = validate_dataset(&d);
        if violations.is_empty() {
            Ok(d)
        } else {
            let msg = violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
            Err(Error::Validation(msg))
        }
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }
}

/// Ordered camera pair; `from` is the camera of the earlier detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CameraPairKey {
    pub from: usize,
    pub to: usize,
}

impl CameraPairKey {
    pub fn new(from: usize, to: usize) -> Self {
        CameraPairKey { from, to }
    }

    /// Orders two sightings by `(timestamp, camera)` and returns the pair key
    /// together with the absolute frame difference.
    ///
    /// Equal timestamps fall back to the lower camera index as the source, so
    /// the result does not depend on argument order.
    pub fn time_ordered(cam_a: usize, t_a: i64, cam_b: usize, t_b: i64) -> (Self, u64) {
        let delta = t_a.abs_diff(t_b);
        if (t_a, cam_a) <= (t_b, cam_b) {
            (CameraPairKey::new(cam_a, cam_b), delta)
        } else {
            (CameraPairKey::new(cam_b, cam_a), delta)
        }
    }
}

impl fmt::Display for CameraPairKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMode {
    VisualOnly,
    StOnly,
    NaiveProduct,
    JointLogisticSmoothing,
}

impl FusionMode {
    pub const ALL: [FusionMode; 4] = [
        FusionMode::VisualOnly,
        FusionMode::StOnly,
        FusionMode::NaiveProduct,
        FusionMode::JointLogisticSmoothing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FusionMode::VisualOnly => "visual-only",
            FusionMode::StOnly => "st-only",
            FusionMode::NaiveProduct => "naive-product",
            FusionMode::JointLogisticSmoothing => "joint-ls",
        }
    }

    pub fn needs_st_model(self) -> bool {
        !matches!(self, FusionMode::VisualOnly)
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "visual-only" | "vis" => Ok(FusionMode::VisualOnly),
            "st-only" | "st" => Ok(FusionMode::StOnly),
            "naive-product" | "naive" => Ok(FusionMode::NaiveProduct),
            "joint-ls" | "joint-logistic-smoothing" => Ok(FusionMode::JointLogisticSmoothing),
            other => Err(Error::InvalidConfig(format!("unknown fusion mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DimensionMismatch { index: usize, expected: usize, actual: usize },
    CameraOutOfRange { index: usize, camera_id: usize, camera_count: usize },
    NegativeTimestamp { index: usize, timestamp: i64 },
    TooFewCameras { camera_count: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DimensionMismatch { index, expected, actual } => {
                write!(f, "detection {index}: feature length {actual}, expected {expected}")
            }
            Violation::CameraOutOfRange { index, camera_id, camera_count } => {
                write!(f, "detection {index}: camera {camera_id} not in [0, {camera_count})")
            }
            Violation::NegativeTimestamp { index, timestamp } => {
                write!(f, "detection {index}: negative timestamp {timestamp}")
            }
            Violation::TooFewCameras { camera_count } => {
                write!(f, "camera_count {camera_count} < 2")
            }
        }
    }
}

/// Lists every invariant violation in `d`; an empty list means the dataset is valid.
pub fn validate_dataset(d: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    if d.camera_count < 2 {
        out.push(Violation::TooFewCameras {
            camera_count: d.camera_count,
        });
    }
    for (index, det) in d.detections.iter().enumerate() {
        if det.feature.len() != d.feature_dim {
            out.push(Violation::DimensionMismatch {
                index,
                expected: d.feature_dim,
                actual: det.feature.len(),
            });
        }
        if det.camera_id >= d.camera_count {
            out.push(Violation::CameraOutOfRange {
                index,
                camera_id: det.camera_id,
                camera_count: d.camera_count,
            });
        }
        if det.timestamp < 0 {
            out.push(Violation::NegativeTimestamp {
                index,
                timestamp: det.timestamp,
            });
        }
    }
    out
}
