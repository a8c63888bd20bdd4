//! Spatial-temporal transition model.
//!
//! For every ordered camera pair, the frame differences of same-identity
//! training sightings are binned into a coarse histogram, normalized, then
//! smoothed with a truncated Gaussian Parzen window. The result is a
//! probability mass over time bins that is looked up at scoring time.
//!
//! Bins are 1-based: bin `k` covers `((k - 1) * width, k * width]` frames, and
//! a zero frame difference belongs to bin 1.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Location, Result};
use crate::model::{validate_dataset, CameraPairKey, Dataset};

/// Upper bound on the automatically derived histogram length.
pub const MAX_BINS_CAP: usize = 3000;

pub const MODEL_FORMAT: &str = "streid-st-model";
pub const MODEL_VERSION: u32 = 1;

const PMF_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StConfig {
    /// Histogram bin width in frames.
    pub bin_width_frames: u64,
    /// Gaussian kernel standard deviation, in bins.
    pub kernel_sigma: f64,
    /// Kernel support is cut at this many standard deviations.
    pub truncation_sigmas: f64,
    /// Histogram length. `None` derives it from the longest training
    /// frame difference, capped at [`MAX_BINS_CAP`].
    pub max_bins: Option<usize>,
}

impl Default for StConfig {
    fn default() -> Self {
        StConfig {
            bin_width_frames: 100,
            kernel_sigma: 50.0,
            truncation_sigmas: 3.0,
            max_bins: None,
        }
    }
}

impl StConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bin_width_frames == 0 {
            return Err(Error::InvalidConfig("bin_width_frames must be >= 1".into()));
        }
        if !(self.kernel_sigma.is_finite() && self.kernel_sigma > 0.0) {
            return Err(Error::InvalidConfig("kernel_sigma must be a positive finite number".into()));
        }
        if self.truncation_sigmas.is_nan() || self.truncation_sigmas <= 0.0 {
            return Err(Error::InvalidConfig("truncation_sigmas must be > 0".into()));
        }
        if self.max_bins == Some(0) {
            return Err(Error::InvalidConfig("max_bins must be >= 1".into()));
        }
        Ok(())
    }

    fn bin_limit(&self) -> usize {
        self.max_bins.unwrap_or(MAX_BINS_CAP)
    }

    /// Half-width of the truncated kernel window, in bins, for a histogram of
    /// `len` bins.
    fn window_radius(&self, len: usize) -> usize {
        let r = (self.truncation_sigmas * self.kernel_sigma).floor();
        let max = len.saturating_sub(1) as f64;
        r.min(max) as usize
    }
}

fn unclamped_bin(delta_frames: u64, bin_width: u64) -> u64 {
    delta_frames.div_ceil(bin_width).max(1)
}

/// 1-based histogram bin for a frame difference, clamped to the configured
/// histogram length.
pub fn bin_index(delta_frames: u64, cfg: &StConfig) -> usize {
    let k = unclamped_bin(delta_frames, cfg.bin_width_frames);
    k.min(cfg.bin_limit() as u64) as usize
}

/// Parzen window kernel: zero-mean Gaussian density with standard deviation `sigma`.
pub fn gaussian_kernel(x: f64, sigma: f64) -> f64 {
    (-x * x / (2.0 * sigma * sigma)).exp() / ((2.0 * std::f64::consts::PI).sqrt() * sigma)
}

/// Raw per-pair counts. Only pairs with at least one positive pair appear;
/// every vector has the same length (the resolved histogram length) and
/// index `k - 1` holds bin `k`.
pub type RawHistograms = BTreeMap<CameraPairKey, Vec<u64>>;

fn check_training_set(train: &Dataset) -> Result<()> {
    let violations = validate_dataset(train);
    if let Some(v) = violations.first() {
        return Err(Error::Validation(format!("training set: {v}")));
    }
    if let Some(pos) = train
        .detections
        .iter()
        .position(|d| !d.is_distractor && d.person_id.is_none())
    {
        return Err(Error::MissingLabels(format!(
            "training detection {pos} has no person_id; fitting requires labelled identities"
        )));
    }
    Ok(())
}

/// Every cross-camera same-identity pair as `(key, frame difference)`, with
/// the key oriented from the earlier sighting to the later one.
fn positive_pairs(train: &Dataset) -> Vec<(CameraPairKey, u64)> {
    let mut by_id: BTreeMap<u32, Vec<(usize, i64)>> = BTreeMap::new();
    for d in &train.detections {
        if d.is_distractor {
            continue;
        }
        if let Some(id) = d.person_id {
            by_id.entry(id).or_default().push((d.camera_id, d.timestamp));
        }
    }
    let mut out = Vec::new();
    for sightings in by_id.values() {
        for (i, &(ca, ta)) in sightings.iter().enumerate() {
            for &(cb, tb) in &sightings[i + 1..] {
                if ca != cb {
                    out.push(CameraPairKey::time_ordered(ca, ta, cb, tb));
                }
            }
        }
    }
    out
}

fn resolve_config(cfg: &StConfig, pairs: &[(CameraPairKey, u64)]) -> StConfig {
    let max_bins = cfg.max_bins.unwrap_or_else(|| {
        let longest = pairs.iter().map(|&(_, d)| d).max().unwrap_or(0);
        (unclamped_bin(longest, cfg.bin_width_frames) as usize).min(MAX_BINS_CAP)
    });
    StConfig {
        max_bins: Some(max_bins),
        ..*cfg
    }
}

fn histograms(pairs: &[(CameraPairKey, u64)], cfg: &StConfig) -> RawHistograms {
    let len = cfg.bin_limit();
    let mut out = RawHistograms::new();
    for &(key, delta) in pairs {
        let k = bin_index(delta, cfg);
        out.entry(key).or_insert_with(|| vec![0; len])[k - 1] += 1;
    }
    out
}

/// Counts same-identity cross-camera pairs per ordered camera pair and bin.
/// Same-camera pairs and distractors are skipped.
pub fn fit_histogram(train: &Dataset, cfg: &StConfig) -> Result<RawHistograms> {
    cfg.validate()?;
    check_training_set(train)?;
    let pairs = positive_pairs(train);
    Ok(histograms(&pairs, &resolve_config(cfg, &pairs)))
}

/// Normalizes `raw` to a histogram pmf, convolves it with the truncated
/// Gaussian kernel (window clipped at the histogram edges) and renormalizes
/// the result to sum to 1.
pub fn smooth(raw: &[f64], cfg: &StConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if raw.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::InvalidConfig("histogram entries must be finite and non-negative".into()));
    }
    let total: f64 = raw.iter().sum();
    if raw.is_empty() || total <= 0.0 {
        return Err(Error::EmptyHistogram);
    }
    let len = raw.len();
    let radius = cfg.window_radius(len);
    let weights: Vec<f64> = (0..=radius)
        .map(|off| gaussian_kernel(off as f64, cfg.kernel_sigma))
        .collect();

    let mut out = vec![0.0; len];
    for (l, &count) in raw.iter().enumerate() {
        if count == 0.0 {
            continue;
        }
        let p = count / total;
        let lo = l.saturating_sub(radius);
        let hi = (l + radius).min(len - 1);
        for (k, slot) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
            *slot += p * weights[l.abs_diff(k)];
        }
    }
    let z: f64 = out.iter().sum();
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "kernel_sigma {} gives a degenerate smoothing normalizer",
            cfg.kernel_sigma
        )));
    }
    out.iter_mut().for_each(|v| *v /= z);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairDistribution {
    pub count: u64,
    pub pmf: Vec<f64>,
}

/// Fitted transition model. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct StModel {
    config: StConfig,
    camera_count: usize,
    pairs: BTreeMap<CameraPairKey, PairDistribution>,
}

impl StModel {
    /// Assembles a model from explicit distributions, checking the same
    /// invariants as [`load_model`]. Pairs with `from == to` are accepted.
    pub fn from_parts(
        config: StConfig,
        camera_count: usize,
        pairs: BTreeMap<CameraPairKey, PairDistribution>,
    ) -> Result<Self> {
        let m = StModel {
            config,
            camera_count,
            pairs,
        };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        self.config.validate()?;
        let max_bins = self
            .config
            .max_bins
            .ok_or_else(|| Error::Validation("model config must carry a resolved max_bins".into()))?;
        if self.camera_count < 2 {
            return Err(Error::Validation(format!("camera_count {} < 2", self.camera_count)));
        }
        for (key, dist) in &self.pairs {
            if key.from >= self.camera_count || key.to >= self.camera_count {
                return Err(Error::Validation(format!(
                    "pair {key} outside {} cameras",
                    self.camera_count
                )));
            }
            if dist.count == 0 {
                return Err(Error::Validation(format!("pair {key} listed with zero count")));
            }
            if dist.pmf.is_empty() || dist.pmf.len() > max_bins {
                return Err(Error::Validation(format!(
                    "pair {key}: pmf length {} not in [1, {max_bins}]",
                    dist.pmf.len()
                )));
            }
            if dist.pmf.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::Validation(format!("pair {key}: pmf has a negative or non-finite entry")));
            }
            let sum: f64 = dist.pmf.iter().sum();
            if (sum - 1.0).abs() > PMF_SUM_TOLERANCE {
                return Err(Error::Validation(format!("pair {key}: pmf sums to {sum}, expected 1")));
            }
        }
        Ok(())
    }

    /// A model that ignores time: every ordered pair (including same-camera
    /// pairs) has all mass in a single bin covering `bin_width_frames`.
    /// Any lookup with a frame difference within that width returns 1.
    pub fn degenerate_uniform(camera_count: usize, bin_width_frames: u64) -> Result<Self> {
        let config = StConfig {
            bin_width_frames,
            max_bins: Some(1),
            ..StConfig::default()
        };
        let mut pairs = BTreeMap::new();
        for from in 0..camera_count {
            for to in 0..camera_count {
                pairs.insert(CameraPairKey::new(from, to), PairDistribution { count: 1, pmf: vec![1.0] });
            }
        }
        StModel::from_parts(config, camera_count, pairs)
    }

    pub fn config(&self) -> &StConfig {
        &self.config
    }

    pub fn camera_count(&self) -> usize {
        self.camera_count
    }

    pub fn num_bins(&self) -> usize {
        self.config.bin_limit()
    }

    /// Smoothed pmf for `key`; empty when the pair was never observed.
    pub fn pmf(&self, key: CameraPairKey) -> &[f64] {
        self.pairs.get(&key).map_or(&[], |d| d.pmf.as_slice())
    }

    pub fn pair_count(&self, key: CameraPairKey) -> u64 {
        self.pairs.get(&key).map_or(0, |d| d.count)
    }

    /// Observed pairs in key order.
    pub fn pairs(&self) -> impl Iterator<Item = (CameraPairKey, &PairDistribution)> {
        self.pairs.iter().map(|(k, v)| (*k, v))
    }

    /// Probability of the bin containing `delta_frames` for the transit
    /// `from_cam -> to_cam`; zero for unobserved pairs and beyond the stored
    /// support.
    pub fn query_probability(&self, from_cam: usize, to_cam: usize, delta_frames: u64) -> Result<f64> {
        for camera in [from_cam, to_cam] {
            if camera >= self.camera_count {
                return Err(Error::CameraOutOfRange {
                    camera,
                    camera_count: self.camera_count,
                });
            }
        }
        let pmf = self.pmf(CameraPairKey::new(from_cam, to_cam));
        let k = unclamped_bin(delta_frames, self.config.bin_width_frames);
        Ok(usize::try_from(k - 1)
            .ok()
            .and_then(|i| pmf.get(i))
            .copied()
            .unwrap_or(0.0))
    }

    /// Looks up two sightings in either order; the earlier one is the source.
    pub fn probability_between(&self, cam_a: usize, t_a: i64, cam_b: usize, t_b: i64) -> Result<f64> {
        let (key, delta) = CameraPairKey::time_ordered(cam_a, t_a, cam_b, t_b);
        self.query_probability(key.from, key.to, delta)
    }
}

/// Fits histograms and smooths every observed pair.
pub fn fit(train: &Dataset, cfg: &StConfig) -> Result<StModel> {
    cfg.validate()?;
    check_training_set(train)?;
    let pairs = positive_pairs(train);
    let config = resolve_config(cfg, &pairs);
    let mut out = BTreeMap::new();
    for (key, counts) in histograms(&pairs, &config) {
        let as_f64: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        out.insert(
            key,
            PairDistribution {
                count: counts.iter().sum(),
                pmf: smooth(&as_f64, &config)?,
            },
        );
    }
    StModel::from_parts(config, train.camera_count, out)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    config: StConfig,
    camera_count: usize,
    pairs: Vec<PairEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairEntry {
    from: usize,
    to: usize,
    count: u64,
    pmf: Vec<f64>,
}

/// Writes the model as pretty-printed JSON (see README for the schema).
pub fn save_model<W: Write>(model: &StModel, mut sink: W) -> Result<()> {
    let file = ModelFile {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        config: model.config,
        camera_count: model.camera_count,
        pairs: model
            .pairs
            .iter()
            .map(|(k, d)| PairEntry {
                from: k.from,
                to: k.to,
                count: d.count,
                pmf: d.pmf.clone(),
            })
            .collect(),
    };
    serde_json::to_writer_pretty(&mut sink, &file).map_err(std::io::Error::from)?;
    sink.write_all(b"\n")?;
    Ok(())
}

pub fn load_model<R: Read>(source: R) -> Result<StModel> {
    let file: ModelFile = serde_json::from_reader(source).map_err(|e| {
        Error::parse(
            Location::LineColumn {
                line: e.line() as u64,
                column: e.column() as u64,
            },
            e.to_string(),
        )
    })?;
    if file.format != MODEL_FORMAT {
        return Err(Error::Validation(format!(
            "format tag {:?}, expected {MODEL_FORMAT:?}",
            file.format
        )));
    }
    if file.version != MODEL_VERSION {
        return Err(Error::Validation(format!("unsupported model version {}", file.version)));
    }
    let mut pairs = BTreeMap::new();
    for p in file.pairs {
        let key = CameraPairKey::new(p.from, p.to);
        let dist = PairDistribution {
            count: p.count,
            pmf: p.pmf,
        };
        if pairs.insert(key, dist).is_some() {
            return Err(Error::Validation(format!("pair {key} listed twice")));
        }
    }
    StModel::from_parts(file.config, file.camera_count, pairs)
}
