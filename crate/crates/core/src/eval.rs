//! Cross-view retrieval evaluation: ranking with junk exclusion, CMC and mAP.
//!
//! For a query with identity `p` seen by camera `c`, gallery items that are
//! distractors, or that show `p` in camera `c`, are junk and removed before
//! ranking. Remaining items with identity `p` are the positives. Queries with
//! no positive left are dropped from every average.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::visual::ScoreMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    pub query_index: usize,
    pub query_person: u32,
    pub query_camera: usize,
    /// Non-junk gallery indices, best first; ties in ascending index order.
    pub ordered_gallery: Vec<usize>,
    /// `true` marks gallery items excluded for this query.
    pub junk_mask: Vec<bool>,
}

impl RankedResult {
    fn is_positive(&self, gallery: &Dataset, g: usize) -> bool {
        !self.junk_mask[g] && gallery.detections[g].person_id == Some(self.query_person)
    }

    /// 0-based positions in `ordered_gallery` that hold positives.
    pub fn hit_positions(&self, gallery: &Dataset) -> Vec<usize> {
        self.ordered_gallery
            .iter()
            .enumerate()
            .filter(|&(_, &g)| self.is_positive(gallery, g))
            .map(|(pos, _)| pos)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `cmc[k - 1]` is the rank-k accuracy.
    pub cmc: Vec<f64>,
    pub map: f64,
    /// AP of each retained query, aligned with `query_indices`.
    pub per_query_ap: Vec<f64>,
    pub query_indices: Vec<usize>,
    pub dropped_queries: usize,
}

impl EvalReport {
    /// Rank-k accuracy; `k` beyond the curve saturates at its last value.
    pub fn rank(&self, k: usize) -> f64 {
        match self.cmc.len() {
            0 => 0.0,
            n => self.cmc[k.clamp(1, n) - 1],
        }
    }
}

/// Orders `[0, n)` by descending score, ascending index on ties.
fn descending(row: &[f64], candidates: &mut [usize]) {
    // +0.0 folds -0.0 into 0.0 so total_cmp treats them as a tie
    candidates.sort_by(|&a, &b| (row[b] + 0.0).total_cmp(&(row[a] + 0.0)).then(a.cmp(&b)));
}

pub fn rank(scores: &ScoreMatrix, queries: &Dataset, gallery: &Dataset) -> Result<Vec<RankedResult>> {
    if scores.rows() != queries.len() || scores.cols() != gallery.len() {
        return Err(Error::Validation(format!(
            "score matrix is {}x{} but datasets are {}x{}",
            scores.rows(),
            scores.cols(),
            queries.len(),
            gallery.len()
        )));
    }
    if let Some(i) = queries.detections.iter().position(|q| q.person_id.is_none()) {
        return Err(Error::MissingLabels(format!("query {i} has no person_id; evaluation requires labels")));
    }
    Ok(queries
        .detections
        .par_iter()
        .enumerate()
        .map(|(qi, q)| {
            let person = q.person_id.expect("checked above");
            let junk_mask: Vec<bool> = gallery
                .detections
                .iter()
                .map(|g| g.is_distractor || (g.person_id == Some(person) && g.camera_id == q.camera_id))
                .collect();
            let mut ordered: Vec<usize> = (0..gallery.len()).filter(|&g| !junk_mask[g]).collect();
            descending(scores.row(qi), &mut ordered);
            RankedResult {
                query_index: qi,
                query_person: person,
                query_camera: q.camera_id,
                ordered_gallery: ordered,
                junk_mask,
            }
        })
        .collect())
}

/// Rank-k accuracy for `k = 1..=k_max` over queries with at least one
/// positive. All zeros when no query qualifies.
pub fn cmc(ranked: &[RankedResult], gallery: &Dataset, k_max: usize) -> Vec<f64> {
    let mut first_hits = vec![0usize; k_max];
    let mut retained = 0usize;
    for r in ranked {
        let hits = r.hit_positions(gallery);
        let Some(&first) = hits.first() else { continue };
        retained += 1;
        if first < k_max {
            first_hits[first] += 1;
        }
    }
    if retained == 0 {
        return vec![0.0; k_max];
    }
    let mut acc = 0usize;
    first_hits
        .into_iter()
        .map(|n| {
            acc += n;
            acc as f64 / retained as f64
        })
        .collect()
}

/// Average precision from 0-based hit positions: mean of precision at each hit.
pub fn average_precision(hit_positions: &[usize]) -> f64 {
    if hit_positions.is_empty() {
        return 0.0;
    }
    let sum: f64 = hit_positions
        .iter()
        .enumerate()
        .map(|(found, &pos)| (found + 1) as f64 / (pos + 1) as f64)
        .sum();
    sum / hit_positions.len() as f64
}

/// mAP and the per-query APs (with their query indices) over queries that
/// have at least one positive.
pub fn mean_ap(ranked: &[RankedResult], gallery: &Dataset) -> (f64, Vec<f64>, Vec<usize>) {
    let mut aps = Vec::new();
    let mut idx = Vec::new();
    for r in ranked {
        let hits = r.hit_positions(gallery);
        if hits.is_empty() {
            continue;
        }
        aps.push(average_precision(&hits));
        idx.push(r.query_index);
    }
    let map = if aps.is_empty() {
        0.0
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    };
    (map, aps, idx)
}

/// Ranks, then computes CMC up to `k_max` and mAP.
pub fn evaluate(scores: &ScoreMatrix, queries: &Dataset, gallery: &Dataset, k_max: usize) -> Result<EvalReport> {
    let ranked = rank(scores, queries, gallery)?;
    let curve = cmc(&ranked, gallery, k_max);
    let (map, per_query_ap, query_indices) = mean_ap(&ranked, gallery);
    if query_indices.is_empty() && !queries.is_empty() {
        return Err(Error::Validation(
            "no query has a cross-camera positive in the gallery".into(),
        ));
    }
    Ok(EvalReport {
        cmc: curve,
        map,
        dropped_queries: ranked.len() - query_indices.len(),
        per_query_ap,
        query_indices,
    })
}

/// Plain-text table with R-1, R-5, R-10 and mAP columns, in percent.
pub fn format_table<'a>(rows: impl IntoIterator<Item = (&'a str, &'a EvalReport)>) -> String {
    let mut out = format!("{:<16}{:>8}{:>8}{:>8}{:>8}\n", "method", "R-1", "R-5", "R-10", "mAP");
    for (label, r) in rows {
        out.push_str(&format!(
            "{:<16}{:>8.2}{:>8.2}{:>8.2}{:>8.2}\n",
            label,
            100.0 * r.rank(1),
            100.0 * r.rank(5),
            100.0 * r.rank(10),
            100.0 * r.map
        ));
    }
    out
}
