//! Logistic smoothing and fusion of visual and spatial-temporal scores.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, FusionMode};
use crate::st::StModel;
use crate::visual::{visual_score_matrix, ScoreMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    /// Smoothing factor applied to the visual similarity.
    pub lambda0: f64,
    /// Shrinking factor applied to the visual similarity.
    pub gamma0: f64,
    /// Smoothing factor applied to the transition probability.
    pub lambda1: f64,
    /// Shrinking factor applied to the transition probability.
    pub gamma1: f64,
    pub mode: FusionMode,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            lambda0: 1.0,
            gamma0: 5.0,
            lambda1: 2.0,
            gamma1: 5.0,
            mode: FusionMode::JointLogisticSmoothing,
        }
    }
}

impl FusionConfig {
    pub fn with_mode(mode: FusionMode) -> Self {
        FusionConfig {
            mode,
            ..FusionConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda0", self.lambda0),
            ("gamma0", self.gamma0),
            ("lambda1", self.lambda1),
            ("gamma1", self.gamma1),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be a positive finite number, got {v}")));
            }
        }
        Ok(())
    }
}

/// `1 / (1 + lambda * exp(-gamma * x))`.
pub fn logistic(x: f64, lambda: f64, gamma: f64) -> f64 {
    1.0 / (1.0 + lambda * (-gamma * x).exp())
}

/// Maps a cosine similarity from [-1, 1] onto [0, 1].
pub fn normalize_similarity(s: f64) -> f64 {
    (s + 1.0) / 2.0
}

fn combine(s: f64, p_st: f64, cfg: &FusionConfig) -> f64 {
    match cfg.mode {
        FusionMode::JointLogisticSmoothing => {
            logistic(s, cfg.lambda0, cfg.gamma0) * logistic(p_st, cfg.lambda1, cfg.gamma1)
        }
        FusionMode::NaiveProduct => normalize_similarity(s) * p_st,
        FusionMode::VisualOnly => normalize_similarity(s),
        FusionMode::StOnly => p_st,
    }
}

fn check_inputs(s: f64, p_st: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&s) {
        return Err(Error::OutOfRange {
            value: s,
            range: "[-1, 1]",
        });
    }
    if !(0.0..=1.0).contains(&p_st) {
        return Err(Error::OutOfRange {
            value: p_st,
            range: "[0, 1]",
        });
    }
    Ok(())
}

/// Fuses a visual similarity `s` and a transition probability `p_st` under
/// `cfg.mode`. Larger is better in every mode.
pub fn joint_score(s: f64, p_st: f64, cfg: &FusionConfig) -> Result<f64> {
    check_inputs(s, p_st)?;
    Ok(combine(s, p_st, cfg))
}

/// Transition probability for every query/gallery pair, recorded with mode
/// `StOnly`. Each pair is ordered by timestamp before lookup.
pub fn st_score_matrix(queries: &Dataset, gallery: &Dataset, st: &StModel) -> Result<ScoreMatrix> {
    let bad = |d: &Dataset| {
        d.detections
            .iter()
            .position(|det| det.camera_id >= st.camera_count())
            .map(|i| (i, d.detections[i].camera_id))
    };
    let located = match (bad(queries), bad(gallery)) {
        (Some((0, camera)), _) => Some((0, 0, camera)),
        (_, Some((j, camera))) => Some((0, j, camera)),
        (Some((i, camera)), None) => Some((i, 0, camera)),
        (None, None) => None,
    };
    if let Some((row, col, camera)) = located {
        if !queries.is_empty() && !gallery.is_empty() {
            return Err(Error::CameraOutOfRange {
                camera,
                camera_count: st.camera_count(),
            }
            .at(row, col));
        }
    }
    let values: Vec<f64> = queries
        .detections
        .par_iter()
        .flat_map_iter(|q| {
            gallery.detections.iter().map(move |g| {
                st.probability_between(q.camera_id, q.timestamp, g.camera_id, g.timestamp)
                    .expect("camera range checked above")
            })
        })
        .collect();
    ScoreMatrix::from_vec(queries.len(), gallery.len(), values, FusionMode::StOnly)
}

/// Combines precomputed visual and transition matrices under `cfg.mode`.
/// `st` may be `None` only for `VisualOnly`.
pub fn fuse_matrices(visual: &ScoreMatrix, st: Option<&ScoreMatrix>, cfg: &FusionConfig) -> Result<ScoreMatrix> {
    cfg.validate()?;
    let st = match (cfg.mode.needs_st_model(), st) {
        (false, _) => None,
        (true, Some(st)) => Some(st),
        (true, None) => {
            return Err(Error::InvalidConfig(format!(
                "mode {} requires a spatial-temporal model",
                cfg.mode
            )))
        }
    };
    if let Some(st) = st {
        if (st.rows(), st.cols()) != (visual.rows(), visual.cols()) {
            return Err(Error::DimensionMismatch {
                expected: visual.rows() * visual.cols(),
                actual: st.rows() * st.cols(),
            });
        }
    }
    let cols = visual.cols();
    let values: Vec<f64> = visual
        .values()
        .par_iter()
        .enumerate()
        .map(|(idx, &s)| {
            let p = st.map_or(1.0, |m| m.values()[idx]);
            check_inputs(s, p)
                .map(|_| combine(s, p, cfg))
                .map_err(|e| e.at(idx / cols, idx % cols))
        })
        .collect::<Vec<Result<f64>>>()
        .into_iter()
        .collect::<Result<_>>()?;
    ScoreMatrix::from_vec(visual.rows(), cols, values, cfg.mode)
}

/// Scores every query against every gallery item under `cfg.mode`.
pub fn fused_score_matrix(
    queries: &Dataset,
    gallery: &Dataset,
    st: Option<&StModel>,
    cfg: &FusionConfig,
) -> Result<ScoreMatrix> {
    cfg.validate()?;
    let visual = visual_score_matrix(queries, gallery)?;
    let probs = match (cfg.mode.needs_st_model(), st) {
        (true, Some(model)) => Some(st_score_matrix(queries, gallery, model)?),
        _ => None,
    };
    fuse_matrices(&visual, probs.as_ref(), cfg)
}
