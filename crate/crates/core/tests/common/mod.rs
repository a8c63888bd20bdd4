//! Independent reference implementations used as test oracles. They follow
//! the definitions directly and share no code with the library paths they check.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use streid::{Dataset, Detection, Role};

/// Untruncated Gaussian convolution of the normalized histogram, renormalized.
pub fn full_convolution(raw: &[f64], sigma: f64) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    let n = raw.len();
    let mut out = vec![0.0; n];
    for k in 0..n {
        let mut acc = 0.0;
        for l in 0..n {
            let x = l as f64 - k as f64;
            let kernel = (-(x * x) / (2.0 * sigma * sigma)).exp() / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
            acc += raw[l] / total * kernel;
        }
        out[k] = acc;
    }
    let z: f64 = out.iter().sum();
    out.into_iter().map(|v| v / z).collect()
}

/// Smallest k >= 1 with delta <= k * width, found by stepping.
pub fn stepped_bin(delta: u64, width: u64, max_bins: usize) -> usize {
    let mut k = 1u64;
    while delta > k * width {
        k += 1;
    }
    (k as usize).min(max_bins)
}

/// Enumerates every index pair of the training set. Returns counts keyed by
/// `(from, to)` then by 1-based bin.
pub fn brute_force_pair_counts(
    train: &Dataset,
    width: u64,
    max_bins: usize,
) -> BTreeMap<(usize, usize), BTreeMap<usize, u64>> {
    let mut out: BTreeMap<(usize, usize), BTreeMap<usize, u64>> = BTreeMap::new();
    let d = &train.detections;
    for i in 0..d.len() {
        for j in 0..d.len() {
            if i >= j {
                continue;
            }
            let (a, b) = (&d[i], &d[j]);
            if a.is_distractor || b.is_distractor || a.person_id.is_none() || a.person_id != b.person_id {
                continue;
            }
            if a.camera_id == b.camera_id {
                continue;
            }
            let a_first = a.timestamp < b.timestamp || (a.timestamp == b.timestamp && a.camera_id < b.camera_id);
            let (early, late) = if a_first { (a, b) } else { (b, a) };
            let delta = (late.timestamp - early.timestamp) as u64;
            *out.entry((early.camera_id, late.camera_id))
                .or_default()
                .entry(stepped_bin(delta, width, max_bins))
                .or_default() += 1;
        }
    }
    out
}

pub struct Instance {
    pub queries: Vec<(u32, usize)>,
    /// (person, camera, distractor)
    pub gallery: Vec<(Option<u32>, usize, bool)>,
    pub scores: Vec<Vec<f64>>,
}

/// Scores by definition: a gallery item j beats item i when it scores higher,
/// or scores the same with a lower index.
pub fn brute_force_cmc_map(inst: &Instance, k_max: usize) -> (Vec<f64>, f64, Vec<f64>) {
    let mut hits = vec![0usize; k_max];
    let mut aps = Vec::new();
    for (qi, &(qp, qc)) in inst.queries.iter().enumerate() {
        let row = &inst.scores[qi];
        let valid = |j: usize| {
            let (p, c, dis) = inst.gallery[j];
            !(dis || (p == Some(qp) && c == qc))
        };
        let positive = |j: usize| valid(j) && inst.gallery[j].0 == Some(qp);
        let position = |j: usize| -> usize {
            // 1-based rank of j among valid items
            1 + (0..inst.gallery.len())
                .filter(|&i| valid(i) && i != j && (row[i] > row[j] || (row[i] == row[j] && i < j)))
                .count()
        };
        let positives: Vec<usize> = (0..inst.gallery.len()).filter(|&j| positive(j)).collect();
        if positives.is_empty() {
            continue;
        }
        let best = positives.iter().map(|&j| position(j)).min().unwrap();
        for (k, slot) in hits.iter_mut().enumerate() {
            if best <= k + 1 {
                *slot += 1;
            }
        }
        let mut ap = 0.0;
        for &j in &positives {
            let r = position(j);
            let above = positives.iter().filter(|&&o| position(o) <= r).count();
            ap += above as f64 / r as f64;
        }
        aps.push(ap / positives.len() as f64);
    }
    let n = aps.len() as f64;
    let cmc = hits.iter().map(|&h| h as f64 / n).collect();
    let map = aps.iter().sum::<f64>() / n;
    (cmc, map, aps)
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let nq = rng.random_range(1..=20);
    let ng = rng.random_range(1..=100);
    let ids = rng.random_range(2..=12);
    let cams = rng.random_range(2..=6);
    let queries = (0..nq).map(|_| (rng.random_range(0..ids), rng.random_range(0..cams))).collect();
    let gallery = (0..ng)
        .map(|_| {
            if rng.random_bool(0.1) {
                (None, rng.random_range(0..cams), true)
            } else {
                (Some(rng.random_range(0..ids)), rng.random_range(0..cams), false)
            }
        })
        .collect();
    // coarse grid so ties occur
    let scores = (0..nq)
        .map(|_| (0..ng).map(|_| rng.random_range(0..20) as f64 / 20.0).collect())
        .collect();
    Instance {
        queries,
        gallery,
        scores,
    }
}

pub fn instance_datasets(inst: &Instance) -> (Dataset, Dataset) {
    let det = |person: Option<u32>, camera_id: usize, is_distractor: bool| Detection {
        record_id: String::new(),
        feature: vec![],
        camera_id,
        timestamp: 0,
        person_id: person,
        is_distractor,
    };
    let q = inst.queries.iter().map(|&(p, c)| det(Some(p), c, false)).collect();
    let g = inst.gallery.iter().map(|&(p, c, d)| det(p, c, d)).collect();
    (Dataset::new(q, 6, 0, Role::Query), Dataset::new(g, 6, 0, Role::Gallery))
}

pub fn random_training_set(rng: &mut ChaCha8Rng, max_len: usize, max_cams: usize) -> Dataset {
    let n = rng.random_range(0..=max_len);
    let cams = rng.random_range(2..=max_cams);
    let ids = rng.random_range(1..=20);
    let dets = (0..n)
        .map(|_| {
            let distractor = rng.random_bool(0.05);
            Detection {
                record_id: String::new(),
                feature: vec![],
                camera_id: rng.random_range(0..cams),
                timestamp: rng.random_range(0..5_000),
                person_id: if distractor { None } else { Some(rng.random_range(0..ids)) },
                is_distractor: distractor,
            }
        })
        .collect();
    Dataset::new(dets, cams, 0, Role::Train)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Two cameras, one directed edge with a two-path transit mixture, and many
/// single-hop training identities. Used to check recovery of planted shapes.
pub fn recovery_config(std: f64, seed: u64) -> streid::SimConfig {
    use streid::sim::{MixtureComponent, TransitEdge};
    streid::SimConfig {
        camera_count: 2,
        train_identities: 2500,
        test_identities: 10,
        distractor_identities: 0,
        min_sightings: 2,
        max_sightings: 2,
        min_images_per_visit: 1,
        max_images_per_visit: 1,
        visit_duration_frames: 0,
        seed,
        topology: vec![TransitEdge {
            from: 0,
            to: 1,
            components: vec![
                MixtureComponent {
                    mean: 40_000.0,
                    std,
                    weight: 0.4,
                },
                MixtureComponent {
                    mean: 110_000.0,
                    std,
                    weight: 0.6,
                },
            ],
        }],
        ..streid::SimConfig::default()
    }
}

/// Interior local maxima of a pmf as 1-based bins. A plateau counts once, at its left end.
pub fn local_maxima(p: &[f64]) -> Vec<usize> {
    if p.len() < 3 {
        return Vec::new();
    }
    (1..p.len() - 1)
        .filter(|&i| p[i] > p[i - 1] && p[i] >= p[i + 1])
        .map(|i| i + 1)
        .collect()
}
