//! Synthetic camera-network generator with planted transit-time mixtures.
//!
//! Each identity walks the camera graph: it starts at a random time on a
//! random camera with outgoing edges, and every hop draws a transit time from
//! the edge's Gaussian mixture (components truncated at zero by resampling).
//! Every visit yields one or more images within `visit_duration_frames` of
//! arrival. Features are `(1 - identity_signal) * shared + identity_signal *
//! own` plus isotropic Gaussian noise, where `shared` and `own` are random
//! unit vectors.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as NormalDist};

use crate::error::{Error, Result};
use crate::model::{CameraPairKey, Dataset, Detection, Role};
use crate::st::StConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub mean: f64,
    pub std: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitEdge {
    pub from: usize,
    pub to: usize,
    pub components: Vec<MixtureComponent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub camera_count: usize,
    pub train_identities: usize,
    pub test_identities: usize,
    /// Gallery-only identities seen by a single camera.
    pub distractor_identities: usize,
    pub min_sightings: usize,
    pub max_sightings: usize,
    pub min_images_per_visit: usize,
    pub max_images_per_visit: usize,
    pub visit_duration_frames: u64,
    /// Identities enter the network uniformly in `[0, start_horizon_frames)`.
    pub start_horizon_frames: u64,
    pub feature_dim: usize,
    pub identity_signal: f64,
    pub noise_std: f64,
    pub seed: u64,
    pub topology: Vec<TransitEdge>,
}

fn bimodal(from: usize, to: usize, first: f64, second: f64, std: f64) -> TransitEdge {
    TransitEdge {
        from,
        to,
        components: vec![
            MixtureComponent {
                mean: first,
                std,
                weight: 0.5,
            },
            MixtureComponent {
                mean: second,
                std,
                weight: 0.5,
            },
        ],
    }
}

impl Default for SimConfig {
    /// Four cameras on a line, each neighbouring pair joined in both
    /// directions by a well separated two-path transit mixture.
    fn default() -> Self {
        let mut topology = Vec::new();
        for (a, b, first, second) in [(0, 1, 20_000.0, 60_000.0), (1, 2, 30_000.0, 80_000.0), (2, 3, 25_000.0, 70_000.0)] {
            topology.push(bimodal(a, b, first, second, 3_000.0));
            topology.push(bimodal(b, a, first, second, 3_000.0));
        }
        SimConfig {
            camera_count: 4,
            train_identities: 600,
            test_identities: 300,
            distractor_identities: 100,
            min_sightings: 2,
            max_sightings: 4,
            min_images_per_visit: 2,
            max_images_per_visit: 4,
            visit_duration_frames: 300,
            start_horizon_frames: 20_000_000,
            feature_dim: 32,
            identity_signal: 0.3,
            noise_std: 0.0425,
            seed: 20190118,
            topology,
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| {
            let location = match e.span() {
                Some(span) => {
                    let line = text[..span.start].matches('\n').count() as u64 + 1;
                    crate::error::Location::Line(line)
                }
                None => crate::error::Location::Unknown,
            };
            Error::Parse {
                location,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("SimConfig always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.camera_count < 2 {
            return bad(format!("camera_count {} < 2", self.camera_count));
        }
        if self.min_sightings < 2 || self.max_sightings < self.min_sightings {
            return bad("need 2 <= min_sightings <= max_sightings".into());
        }
        if self.min_images_per_visit < 1 || self.max_images_per_visit < self.min_images_per_visit {
            return bad("need 1 <= min_images_per_visit <= max_images_per_visit".into());
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.identity_signal) {
            return bad(format!("identity_signal {} not in [0, 1]", self.identity_signal));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return bad(format!("noise_std {} must be >= 0", self.noise_std));
        }
        if self.start_horizon_frames == 0 {
            return bad("start_horizon_frames must be >= 1".into());
        }
        if self.topology.is_empty() {
            return bad("topology has no edges".into());
        }
        let mut seen = BTreeSet::new();
        for e in &self.topology {
            if e.from >= self.camera_count || e.to >= self.camera_count || e.from == e.to {
                return bad(format!("edge {}->{} invalid for {} cameras", e.from, e.to, self.camera_count));
            }
            if !seen.insert((e.from, e.to)) {
                return bad(format!("edge {}->{} listed twice", e.from, e.to));
            }
            if e.components.is_empty() {
                return bad(format!("edge {}->{} has no components", e.from, e.to));
            }
            for c in &e.components {
                if !(c.std.is_finite() && c.std > 0.0) || !c.mean.is_finite() || c.weight.is_nan() || c.weight <= 0.0 {
                    return bad(format!("edge {}->{}: component {c:?} invalid", e.from, e.to));
                }
            }
            let w: f64 = e.components.iter().map(|c| c.weight).sum();
            if (w - 1.0).abs() > 1e-9 {
                return bad(format!("edge {}->{}: weights sum to {w}", e.from, e.to));
            }
        }
        Ok(())
    }
}

/// Planted transit mixtures, keyed by ordered camera pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub edges: BTreeMap<String, Vec<MixtureComponent>>,
}

impl GroundTruth {
    fn from_topology(topology: &[TransitEdge]) -> Self {
        GroundTruth {
            edges: topology
                .iter()
                .map(|e| (CameraPairKey::new(e.from, e.to).to_string(), e.components.clone()))
                .collect(),
        }
    }

    pub fn mixture(&self, key: CameraPairKey) -> Option<&[MixtureComponent]> {
        self.edges.get(&key.to_string()).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub train: Dataset,
    pub query: Dataset,
    pub gallery: Dataset,
    pub ground_truth: GroundTruth,
}

/// Probability that a transit drawn from `components` (each truncated at
/// zero, rounded to whole frames) lands in bins `1..=num_bins`.
pub fn binned_mixture(components: &[MixtureComponent], cfg: &StConfig, num_bins: usize) -> Vec<f64> {
    let width = cfg.bin_width_frames as f64;
    let mut out = vec![0.0; num_bins];
    for c in components {
        let n = NormalDist::new(c.mean, c.std).expect("validated component");
        let kept = 1.0 - n.cdf(0.0);
        let mut lo = 0.0;
        for (k, slot) in out.iter_mut().enumerate() {
            let hi = (k + 1) as f64 * width + 0.5;
            *slot += c.weight * (n.cdf(hi) - n.cdf(lo)) / kept;
            lo = hi;
        }
    }
    out
}

/// Total-variation distance between two sub-probability vectors over the
/// same bins; mass missing from either vector counts as lying outside them.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let inside: f64 = (0..n).map(|i| (at(p, i) - at(q, i)).abs()).sum();
    let outside = (1.0 - p.iter().sum::<f64>()).max(0.0) + (1.0 - q.iter().sum::<f64>()).max(0.0);
    0.5 * (inside + outside)
}

const TIME_STREAM: u64 = 1;
const FEATURE_STREAM: u64 = 2;
const SPLIT_STREAM: u64 = 3;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sample_transit(components: &[MixtureComponent], rng: &mut ChaCha8Rng) -> i64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut chosen = components[components.len() - 1];
    for c in components {
        acc += c.weight;
        if u < acc {
            chosen = *c;
            break;
        }
    }
    let normal = Normal::new(chosen.mean, chosen.std).expect("validated component");
    for _ in 0..64 {
        let x: f64 = normal.sample(rng);
        if x >= 0.0 {
            return x.round() as i64;
        }
    }
    0
}

fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

struct Sighting {
    camera_id: usize,
    timestamp: i64,
}

/// Walks the camera graph for one identity and returns its images in time order.
fn walk(cfg: &SimConfig, out_edges: &BTreeMap<usize, Vec<&TransitEdge>>, rng: &mut ChaCha8Rng) -> Vec<Sighting> {
    let starts: Vec<usize> = out_edges.keys().copied().collect();
    let mut camera = *starts.choose(rng).expect("topology is non-empty");
    let mut arrival = rng.random_range(0..cfg.start_horizon_frames) as i64;
    let visits = rng.random_range(cfg.min_sightings..=cfg.max_sightings);
    let mut out = Vec::new();
    for v in 0..visits {
        let images = rng.random_range(cfg.min_images_per_visit..=cfg.max_images_per_visit);
        let mut stamps: Vec<i64> = (0..images)
            .map(|_| arrival + rng.random_range(0..=cfg.visit_duration_frames) as i64)
            .collect();
        stamps.sort_unstable();
        out.extend(stamps.into_iter().map(|timestamp| Sighting {
            camera_id: camera,
            timestamp,
        }));
        if v + 1 == visits {
            break;
        }
        let Some(edge) = out_edges.get(&camera).and_then(|edges| edges.choose(rng)) else {
            break;
        };
        arrival += sample_transit(&edge.components, rng);
        camera = edge.to;
    }
    out
}

/// Picks one query image per visited camera while some non-query image of
/// the identity remains in another camera; everything else goes to the gallery.
fn split_identity(sightings: &[Sighting], rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut is_query = vec![false; sightings.len()];
    let cameras: BTreeSet<usize> = sightings.iter().map(|s| s.camera_id).collect();
    for cam in cameras {
        let elsewhere = sightings
            .iter()
            .zip(&is_query)
            .any(|(s, &q)| s.camera_id != cam && !q);
        if !elsewhere {
            continue;
        }
        let here: Vec<usize> = (0..sightings.len()).filter(|&i| sightings[i].camera_id == cam).collect();
        is_query[*here.choose(rng).expect("camera has images")] = true;
    }
    is_query
}

/// Generates identity-disjoint train and query/gallery sets. Deterministic in `cfg.seed`.
pub fn simulate(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let mut time_rng = rng_for(cfg.seed, TIME_STREAM);
    let mut feat_rng = rng_for(cfg.seed, FEATURE_STREAM);
    let mut split_rng = rng_for(cfg.seed, SPLIT_STREAM);

    let mut out_edges: BTreeMap<usize, Vec<&TransitEdge>> = BTreeMap::new();
    for e in &cfg.topology {
        out_edges.entry(e.from).or_default().push(e);
    }

    let shared = random_unit(cfg.feature_dim, &mut feat_rng);
    let a = cfg.identity_signal;
    let centroid = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let own = random_unit(cfg.feature_dim, rng);
        shared.iter().zip(&own).map(|(g, u)| (1.0 - a) * g + a * u).collect()
    };
    let noisy = |c: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
        c.iter()
            .map(|x| {
                let z: f64 = StandardNormal.sample(rng);
                x + cfg.noise_std * z
            })
            .collect::<Vec<f64>>()
    };

    let mut train = Vec::new();
    let mut query = Vec::new();
    let mut gallery = Vec::new();
    let total = cfg.train_identities + cfg.test_identities;
    for id in 0..total {
        let sightings = walk(cfg, &out_edges, &mut time_rng);
        let c = centroid(&mut feat_rng);
        let is_train = id < cfg.train_identities;
        let query_mask = if is_train {
            vec![false; sightings.len()]
        } else {
            split_identity(&sightings, &mut split_rng)
        };
        for (s, q) in sightings.iter().zip(query_mask) {
            let det = Detection {
                record_id: String::new(),
                feature: noisy(&c, &mut feat_rng),
                camera_id: s.camera_id,
                timestamp: s.timestamp,
                person_id: Some(id as u32),
                is_distractor: false,
            };
            match (is_train, q) {
                (true, _) => train.push(det),
                (false, true) => query.push(det),
                (false, false) => gallery.push(det),
            }
        }
    }
    for _ in 0..cfg.distractor_identities {
        let camera = time_rng.random_range(0..cfg.camera_count);
        let arrival = time_rng.random_range(0..cfg.start_horizon_frames) as i64;
        let images = time_rng.random_range(cfg.min_images_per_visit..=cfg.max_images_per_visit);
        let c = centroid(&mut feat_rng);
        for _ in 0..images {
            gallery.push(Detection {
                record_id: String::new(),
                feature: noisy(&c, &mut feat_rng),
                camera_id: camera,
                timestamp: arrival + time_rng.random_range(0..=cfg.visit_duration_frames) as i64,
                person_id: None,
                is_distractor: true,
            });
        }
    }

    query.shuffle(&mut split_rng);
    gallery.shuffle(&mut split_rng);
    let finish = |mut dets: Vec<Detection>, role: Role| {
        for (i, d) in dets.iter_mut().enumerate() {
            d.record_id = format!("{role}_{i:06}");
        }
        Dataset::validated(dets, cfg.camera_count, cfg.feature_dim, role)
    };
    Ok(SimOutput {
        train: finish(train, Role::Train)?,
        query: finish(query, Role::Query)?,
        gallery: finish(gallery, Role::Gallery)?,
        ground_truth: GroundTruth::from_topology(&cfg.topology),
    })
}
