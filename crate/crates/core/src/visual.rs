//! Cosine similarity and batched query x gallery score matrices.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, FusionMode};

/// Dense row-major query x gallery scores. Larger is more similar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    mode: FusionMode,
}

impl ScoreMatrix {
    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>, mode: FusionMode) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: values.len(),
            });
        }
        Ok(ScoreMatrix {
            rows,
            cols,
            values,
            mode,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn mode(&self) -> FusionMode {
        self.mode
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Applies `f` entrywise, keeping the shape and recording `mode`.
    pub fn map(&self, mode: FusionMode, f: impl Fn(f64) -> f64) -> ScoreMatrix {
        ScoreMatrix {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
            mode,
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `a . b / (|a| |b|)`, clamped to [-1, 1] against rounding.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Unit-normalizes every feature in `d`, reporting the first zero-norm or
/// wrongly sized row.
fn unit_rows(d: &Dataset, dim: usize) -> std::result::Result<Vec<Vec<f64>>, (usize, Error)> {
    d.detections
        .iter()
        .enumerate()
        .map(|(i, det)| {
            if det.feature.len() != dim {
                return Err((
                    i,
                    Error::DimensionMismatch {
                        expected: dim,
                        actual: det.feature.len(),
                    },
                ));
            }
            let n = norm(&det.feature);
            if n == 0.0 {
                return Err((i, Error::ZeroNorm));
            }
            Ok(det.feature.iter().map(|x| x / n).collect())
        })
        .collect()
}

/// Cosine similarity of every query against every gallery item.
///
/// Rows are computed in parallel on the current rayon pool; the output does
/// not depend on the pool size.
pub fn visual_score_matrix(queries: &Dataset, gallery: &Dataset) -> Result<ScoreMatrix> {
    let dim = queries.feature_dim;
    if gallery.feature_dim != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: gallery.feature_dim,
        });
    }
    if queries.is_empty() || gallery.is_empty() {
        return ScoreMatrix::from_vec(queries.len(), gallery.len(), Vec::new(), FusionMode::VisualOnly);
    }
    // Report the first bad entry in row-major order.
    let (q, g) = match (unit_rows(queries, dim), unit_rows(gallery, dim)) {
        (Ok(q), Ok(g)) => (q, g),
        (Err((0, e)), _) => return Err(e.at(0, 0)),
        (_, Err((j, e))) => return Err(e.at(0, j)),
        (Err((i, e)), Ok(_)) => return Err(e.at(i, 0)),
    };
    let cols = g.len();
    let values: Vec<f64> = q
        .par_iter()
        .flat_map_iter(|qv| g.iter().map(move |gv| dot(qv, gv).clamp(-1.0, 1.0)))
        .collect();
    ScoreMatrix::from_vec(q.len(), cols, values, FusionMode::VisualOnly)
}
