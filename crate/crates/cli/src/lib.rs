//! Batch front end: fit transit models, evaluate and ablate fusion modes,
//! and generate synthetic datasets. Every command writes into a run
//! directory together with a `manifest.json` describing the run.

mod args;
mod error;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use streid::eval::format_table;
use streid::fusion::{fuse_matrices, st_score_matrix};
use streid::io::{
    features_of, infer_camera_count, join, parse_metadata_csv, read_feature_matrix_f64, records_of, write_feature_matrix,
    write_metadata_csv, MetadataRecord,
};
use streid::{
    evaluate, fit, load_model, rank, save_model, simulate, visual_score_matrix, Dataset, EvalReport, FusionConfig,
    FusionMode, Role, SimConfig, StConfig, StModel,
};

pub use args::{AblateArgs, Cli, Command, EvalInputs, EvaluateArgs, FitStArgs, FusionArgs, SimulateArgs, StArgs};
pub use error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";
pub const MODEL_FILE: &str = "st_model.json";

/// Everything that determines a run's artifacts. Output paths are relative
/// to the run directory, so runs into different directories share a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: BTreeMap<String, PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub st_config: Option<StConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fusion: Option<FusionConfig>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<FusionMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub camera_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            inputs: BTreeMap::new(),
            st_config: None,
            fusion: None,
            modes: Vec::new(),
            camera_count: None,
            k_max: None,
            seed: None,
            outputs: Vec::new(),
        }
    }

    /// Fails with a usage error if any referenced input is missing.
    pub fn check_inputs(&self) -> Result<()> {
        for (role, path) in &self.inputs {
            if !path.is_file() {
                return Err(CliError::Usage(format!("{role} input {} does not exist", path.display())));
            }
        }
        Ok(())
    }
}

/// Report for a single mode, as stored in `report.json` and `ablation.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: FusionMode,
    pub report: EvalReport,
}

pub fn run(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    pool.build()?.install(|| match cli.command {
        Command::FitSt(a) => fit_st(&a),
        Command::Evaluate(a) => evaluate_cmd(&a),
        Command::Ablate(a) => ablate(&a),
        Command::Simulate(a) => simulate_cmd(&a),
    })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_records(path: &Path) -> Result<Vec<MetadataRecord>> {
    parse_metadata_csv(open(path)?).map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })
}

struct RunDir {
    root: PathBuf,
    manifest: RunManifest,
}

impl RunDir {
    fn create(root: &Path, manifest: RunManifest) -> Result<Self> {
        fs::create_dir_all(root).map_err(|source| CliError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(RunDir {
            root: root.to_path_buf(),
            manifest,
        })
    }

    fn write(&mut self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        let path = self.root.join(name);
        let mut out = BufWriter::new(File::create(&path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?);
        out.write_all(&buf)
            .and_then(|_| out.flush())
            .map_err(|source| CliError::Io { path, source })?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        self.write(name, |b| {
            b.extend_from_slice(text.as_bytes());
            Ok(())
        })
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |b| {
            serde_json::to_writer_pretty(&mut *b, value)?;
            b.push(b'\n');
            Ok(())
        })
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.outputs.push(MANIFEST.to_string());
        let manifest = self.manifest.clone();
        self.write_json(MANIFEST, &manifest)
    }
}

fn resolve(explicit: &Option<PathBuf>, data: &Option<PathBuf>, name: &str, flag: &str) -> Result<PathBuf> {
    match (explicit, data) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(dir)) => Ok(dir.join(name)),
        (None, None) => Err(CliError::Usage(format!("missing --{flag} (or --data DIR)"))),
    }
}

fn fit_st(a: &FitStArgs) -> Result<()> {
    let train_path = resolve(&a.train, &a.data, "train.csv", "train")?;
    let mut manifest = RunManifest::new("fit-st");
    manifest.inputs.insert("train".into(), train_path.clone());
    manifest.check_inputs()?;

    let records = read_records(&train_path)?;
    let cameras = a.cameras.unwrap_or_else(|| infer_camera_count(&records));
    let train = join(&records, None, cameras, Role::Train)?;
    let cfg = a.st.config();
    eprintln!("fitting transit model on {} detections over {cameras} cameras", train.len());
    let model = fit(&train, &cfg)?;

    manifest.st_config = Some(cfg);
    manifest.camera_count = Some(cameras);
    let mut run = RunDir::create(&a.out_dir, manifest)?;
    run.write(MODEL_FILE, |b| Ok(save_model(&model, b)?))?;
    run.finish()?;

    print!("{}", pair_summary(&model));
    if model.pairs().next().is_none() {
        eprintln!("warning: no same-identity cross-camera pairs in the training set; every camera pair has an empty pmf");
    }
    Ok(())
}

fn pair_summary(model: &StModel) -> String {
    let mut out = format!("{} bins of {} frames\n", model.num_bins(), model.config().bin_width_frames);
    out.push_str(&format!("{:<10}{:>10}\n", "pair", "count"));
    for (key, dist) in model.pairs() {
        out.push_str(&format!("{:<10}{:>10}\n", key.to_string(), dist.count));
    }
    out
}

struct Loaded {
    query: Dataset,
    gallery: Dataset,
    model: Option<StModel>,
    manifest: RunManifest,
}

fn load_inputs(inp: &EvalInputs, command: &str, need_model: bool) -> Result<Loaded> {
    if need_model && inp.model.is_none() {
        return Err(CliError::Usage(format!(
            "{command} needs --model for spatial-temporal modes; run fit-st first"
        )));
    }
    let mut manifest = RunManifest::new(command);
    let paths = [
        ("query", resolve(&inp.query, &inp.data, "query.csv", "query")?),
        ("query_features", resolve(&inp.query_features, &inp.data, "query.feat", "query-features")?),
        ("gallery", resolve(&inp.gallery, &inp.data, "gallery.csv", "gallery")?),
        ("gallery_features", resolve(&inp.gallery_features, &inp.data, "gallery.feat", "gallery-features")?),
    ];
    for (role, p) in &paths {
        manifest.inputs.insert((*role).into(), p.clone());
    }
    if let Some(m) = &inp.model {
        manifest.inputs.insert("model".into(), m.clone());
    }
    manifest.check_inputs()?;

    let model = match &inp.model {
        Some(p) => Some(load_model(open(p)?).map_err(|source| CliError::Input {
            path: p.clone(),
            source,
        })?),
        None => None,
    };
    let q_records = read_records(&paths[0].1)?;
    let g_records = read_records(&paths[2].1)?;
    let features = |p: &PathBuf| {
        read_feature_matrix_f64(open(p)?).map_err(|source| CliError::Input {
            path: p.clone(),
            source,
        })
    };
    let q_feat = features(&paths[1].1)?;
    let g_feat = features(&paths[3].1)?;

    let inferred = infer_camera_count(q_records.iter().chain(&g_records));
    let cameras = inp
        .cameras
        .unwrap_or_else(|| inferred.max(model.as_ref().map_or(0, StModel::camera_count)));
    let query = join(&q_records, Some(&q_feat), cameras, Role::Query)?;
    let gallery = join(&g_records, Some(&g_feat), cameras, Role::Gallery)?;
    if query.feature_dim != gallery.feature_dim {
        return Err(CliError::Core(streid::Error::DimensionMismatch {
            expected: query.feature_dim,
            actual: gallery.feature_dim,
        }));
    }
    manifest.camera_count = Some(cameras);
    manifest.k_max = Some(inp.k_max);
    Ok(Loaded {
        query,
        gallery,
        model,
        manifest,
    })
}

fn evaluate_cmd(a: &EvaluateArgs) -> Result<()> {
    let inp = &a.inputs;
    let cfg = inp.fusion.config(a.mode);
    cfg.validate()?;
    let Loaded {
        query,
        gallery,
        model,
        mut manifest,
    } = load_inputs(inp, "evaluate", a.mode.needs_st_model())?;
    manifest.fusion = Some(cfg);
    manifest.modes = vec![a.mode];

    eprintln!("scoring {} queries against {} gallery items ({})", query.len(), gallery.len(), a.mode);
    let scores = streid::fused_score_matrix(&query, &gallery, model.as_ref(), &cfg)?;
    let report = evaluate(&scores, &query, &gallery, inp.k_max)?;
    let table = format_table([(a.mode.name(), &report)]);

    let mut run = RunDir::create(&inp.out_dir, manifest)?;
    run.write_json("report.json", &ModeReport { mode: a.mode, report })?;
    run.write_text("report.txt", &table)?;
    if a.ranked {
        let ranked = rank(&scores, &query, &gallery)?;
        run.write("ranked.csv", |b| {
            let mut w = csv::Writer::from_writer(b);
            w.write_record(["query", "rank", "gallery", "score", "match"])?;
            for r in &ranked {
                let q = &query.detections[r.query_index];
                for (pos, &g) in r.ordered_gallery.iter().enumerate() {
                    let item = &gallery.detections[g];
                    let hit = item.person_id == Some(r.query_person);
                    w.write_record([
                        q.record_id.as_str(),
                        &(pos + 1).to_string(),
                        item.record_id.as_str(),
                        &scores.get(r.query_index, g).to_string(),
                        if hit { "1" } else { "0" },
                    ])?;
                }
            }
            w.flush().map_err(csv::Error::from)?;
            Ok(())
        })?;
    }
    run.finish()?;
    print!("{table}");
    Ok(())
}

fn ablate(a: &AblateArgs) -> Result<()> {
    let inp = &a.inputs;
    let base = inp.fusion.config(FusionMode::JointLogisticSmoothing);
    base.validate()?;
    let Loaded {
        query,
        gallery,
        model,
        mut manifest,
    } = load_inputs(inp, "ablate", true)?;
    let model = model.expect("checked by load_inputs");
    manifest.fusion = Some(base);
    manifest.modes = FusionMode::ALL.to_vec();

    eprintln!("scoring {} queries against {} gallery items", query.len(), gallery.len());
    let visual = visual_score_matrix(&query, &gallery)?;
    let st = st_score_matrix(&query, &gallery, &model)?;
    let mut rows = Vec::new();
    for mode in FusionMode::ALL {
        let cfg = FusionConfig { mode, ..base };
        let scores = fuse_matrices(&visual, Some(&st), &cfg)?;
        rows.push(ModeReport {
            mode,
            report: evaluate(&scores, &query, &gallery, inp.k_max)?,
        });
    }
    let table = format_table(rows.iter().map(|r| (r.mode.name(), &r.report)));

    let mut run = RunDir::create(&inp.out_dir, manifest)?;
    run.write_json("ablation.json", &rows)?;
    run.write_text("ablation.txt", &table)?;
    run.finish()?;
    print!("{table}");
    Ok(())
}

fn simulate_cmd(a: &SimulateArgs) -> Result<()> {
    let mut manifest = RunManifest::new("simulate");
    let mut cfg = match &a.config {
        Some(p) => {
            manifest.inputs.insert("config".into(), p.clone());
            manifest.check_inputs()?;
            let text = fs::read_to_string(p).map_err(|source| CliError::Io {
                path: p.clone(),
                source,
            })?;
            SimConfig::from_toml_str(&text).map_err(|source| CliError::Input {
                path: p.clone(),
                source,
            })?
        }
        None => SimConfig::default(),
    };
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.train_identities {
        cfg.train_identities = v;
    }
    if let Some(v) = a.test_identities {
        cfg.test_identities = v;
    }
    if let Some(v) = a.distractor_identities {
        cfg.distractor_identities = v;
    }
    if let Some(v) = a.feature_dim {
        cfg.feature_dim = v;
    }
    if let Some(v) = a.identity_signal {
        cfg.identity_signal = v;
    }
    if let Some(v) = a.noise_std {
        cfg.noise_std = v;
    }
    cfg.validate()?;
    manifest.seed = Some(cfg.seed);
    manifest.camera_count = Some(cfg.camera_count);

    let out = simulate(&cfg)?;
    let mut run = RunDir::create(&a.out_dir, manifest)?;
    for (name, d) in [("train", &out.train), ("query", &out.query), ("gallery", &out.gallery)] {
        run.write(&format!("{name}.csv"), |b| Ok(write_metadata_csv(b, &records_of(d))?))?;
        run.write(&format!("{name}.feat"), |b| Ok(write_feature_matrix(b, &features_of(d)?)?))?;
        eprintln!("{name}: {} detections", d.len());
    }
    run.write_json("ground_truth.json", &out.ground_truth)?;
    run.write_text("sim_config.toml", &cfg.to_toml_string())?;
    run.finish()
}
