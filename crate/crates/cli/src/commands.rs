//! Subcommand bodies. Each returns the text to print on success.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hyperproj::data::{Dataset, ProjectionArchive};
use hyperproj::engines::{Engine, HyperValue};
use hyperproj::inference::{
    bench, infer, linear_fit, write_layout_binary, write_layout_csv, InferenceOptions, Layout,
    DEFAULT_BATCH_SIZE,
};
use hyperproj::metrics::{evaluate_model, EvaluationOptions, MetricReport};
use hyperproj::model::NetworkModel;
use hyperproj::pipeline::{
    corpus_from_archive, project_chain, sample_training_subset, train_model, TrainingCorpus,
};
use serde::{Deserialize, Serialize};

use crate::config::{EngineConfig, RunConfig};
use crate::failure::Failure;
use crate::output::StagedDir;

pub const CONFIG_FILE: &str = "config.toml";
pub const MODEL_FILE: &str = "model.hpnm";
pub const ARCHIVE_FILE: &str = "archive.hpta";
pub const HISTORY_FILE: &str = "history.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Parses `"12.5"` or a comma-separated weight vector `"1,0.5,1"`.
pub fn parse_h(text: &str) -> Result<HyperValue, Failure> {
    let values = text
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Failure::new("hyperparameter", format!("cannot parse h component {p:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(HyperValue(values))
}

fn subset_for(cfg: &RunConfig, data: &Dataset) -> Result<Vec<usize>, Failure> {
    let s = &cfg.sampling;
    Ok(sample_training_subset(data.len(), data.labels(), s.fraction, s.seed, s.stratify)?)
}

/// Ground-truth layouts for the configured run, computed or imported.
fn ground_truth(cfg: &RunConfig, data: &Dataset) -> Result<ProjectionArchive, Failure> {
    match &cfg.engine {
        EngineConfig::External {
            archive,
            allow_fingerprint_mismatch,
        } => {
            let a = ProjectionArchive::read(archive)?;
            a.validate()?;
            a.check_dataset(data, *allow_fingerprint_mismatch)?;
            Ok(a)
        }
        computed => {
            let engine = computed.engine().expect("computing engine");
            let grid = cfg
                .grid
                .as_ref()
                .ok_or_else(|| Failure::config("grid missing"))?
                .values(data.dims())?;
            let idx = subset_for(cfg, data)?;
            log::info!("projecting {} points at {} grid values", idx.len(), grid.len());
            Ok(project_chain(data, &idx, &grid, &engine, cfg.sampling.seed)?)
        }
    }
}

fn history_csv(model: &NetworkModel) -> String {
    let mut out = String::from("epoch,train,validation\n");
    for e in &model.history {
        let v = e.validation.map(|v| format!("{v:e}")).unwrap_or_default();
        let _ = writeln!(out, "{},{:e},{v}", e.epoch, e.train);
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainSummary {
    pub corpus_rows: usize,
    pub subset_points: usize,
    pub grid_values: usize,
    pub parameters: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_validation: Option<f64>,
}

/// Subset, ground truth, corpus, training; writes the run directory.
pub fn train(cfg: &RunConfig) -> Result<String, Failure> {
    let data = cfg.dataset.load()?;
    let start = Instant::now();
    let archive = ground_truth(cfg, &data)?;
    let allow = matches!(
        cfg.engine,
        EngineConfig::External {
            allow_fingerprint_mismatch: true,
            ..
        }
    );
    let corpus: TrainingCorpus = corpus_from_archive(&data, &archive, allow)?;
    log::info!("ground truth ready after {:.1} s", start.elapsed().as_secs_f64());

    let model = train_model(&corpus, cfg.network.spec(corpus.inputs.ncols()), &cfg.training.fit())?;
    let finite = model
        .history
        .iter()
        .all(|e| e.train.is_finite() && e.validation.is_none_or(f64::is_finite));
    if !finite {
        return Err(Failure::new("numeric", "loss history contains non-finite values"));
    }
    log::info!("training done after {:.1} s", start.elapsed().as_secs_f64());

    let summary = TrainSummary {
        corpus_rows: corpus.len(),
        subset_points: corpus.subset_size(),
        grid_values: archive.records.len(),
        parameters: model.network.spec().parameter_count(),
        epochs_run: model.history.len().saturating_sub(1),
        best_epoch: model.best_epoch,
        best_validation: model.history[model.best_epoch].validation,
    };
    let stage = StagedDir::create(&cfg.output_dir())?;
    stage.write(MODEL_FILE, model.to_bytes()?)?;
    stage.write(ARCHIVE_FILE, archive.to_bytes()?)?;
    stage.write(HISTORY_FILE, history_csv(&model))?;
    stage.write(CONFIG_FILE, cfg.to_toml()?)?;
    stage.write(SUMMARY_FILE, to_json(&summary)?)?;
    let dir = stage.commit()?;
    Ok(format!(
        "trained on {} rows ({} points x {} values), best epoch {} (validation MAE {}), wrote {}",
        summary.corpus_rows,
        summary.subset_points,
        summary.grid_values,
        summary.best_epoch,
        summary
            .best_validation
            .map_or("n/a".to_string(), |v| format!("{v:.5}")),
        dir.display()
    ))
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, Failure> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Failure::new("format", e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Ground-truth layouts only: writes the archive and one CSV per value.
pub fn project(cfg: &RunConfig) -> Result<String, Failure> {
    if cfg.engine.engine().is_none() {
        return Err(Failure::config("project needs a computing engine, not an external archive"));
    }
    let data = cfg.dataset.load()?;
    let archive = ground_truth(cfg, &data)?;
    let stage = StagedDir::create(&cfg.output_dir())?;
    stage.write(ARCHIVE_FILE, archive.to_bytes()?)?;
    stage.write(CONFIG_FILE, cfg.to_toml()?)?;
    let labels = data.labels().map(|l| archive.index_usize().iter().map(|&i| l[i]).collect::<Vec<_>>());
    for (k, record) in archive.records.iter().enumerate() {
        write_layout_csv(&stage.path(&format!("layout_{k:03}.csv")), record.coords.view(), labels.as_deref())?;
    }
    let dir = stage.commit()?;
    Ok(format!(
        "projected {} points at {} values, wrote {}",
        archive.indices.len(),
        archive.records.len(),
        dir.display()
    ))
}

/// A trained run directory.
pub struct Run {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub model: NetworkModel,
}

impl Run {
    pub fn open(dir: &Path) -> Result<Self, Failure> {
        let config = RunConfig::load(&dir.join(CONFIG_FILE), &[])?;
        let model = NetworkModel::load(dir.join(MODEL_FILE))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            config,
            model,
        })
    }

    /// Loads the dataset and checks it is the one the model was trained on.
    pub fn dataset(&self) -> Result<Dataset, Failure> {
        let data = self.config.dataset.load()?;
        let want = &self.model.provenance.dataset_fingerprint;
        let allow = matches!(
            self.config.engine,
            EngineConfig::External {
                allow_fingerprint_mismatch: true,
                ..
            }
        );
        if !allow && data.fingerprint() != want {
            return Err(hyperproj::Error::FingerprintMismatch {
                archive: want.clone(),
                dataset: data.fingerprint().to_string(),
            }
            .into());
        }
        Ok(data)
    }

    pub fn rows(&self, data: &Dataset, split: Split) -> Result<Vec<usize>, Failure> {
        let train: std::collections::BTreeSet<usize> =
            self.model.provenance.indices.iter().map(|&i| i as usize).collect();
        Ok(match split {
            Split::All => (0..data.len()).collect(),
            Split::Train => train.into_iter().collect(),
            Split::Test => (0..data.len()).filter(|i| !train.contains(i)).collect(),
        })
    }

    /// Midpoint of the trained h range.
    pub fn default_h(&self) -> HyperValue {
        let n = &self.model.normalization;
        HyperValue(n.h_min.iter().zip(&n.h_max).map(|(a, b)| 0.5 * (a + b)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    All,
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::All => "all",
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub h: Vec<HyperValue>,
    pub splits: Vec<Split>,
    pub k: usize,
    /// Cap on points per split, taken as a label-stratified sample.
    pub max_points: Option<usize>,
    pub allow_extrapolation: bool,
    pub out: Option<PathBuf>,
}

fn cap_rows(data: &Dataset, rows: Vec<usize>, cap: Option<usize>, seed: u64) -> Result<Vec<usize>, Failure> {
    match cap {
        Some(m) if m < rows.len() => {
            let labels = data.labels().map(|l| rows.iter().map(|&i| l[i]).collect::<Vec<_>>());
            let pick = sample_training_subset(rows.len(), labels.as_deref(), m as f64 / rows.len() as f64, seed, true)?;
            Ok(pick.into_iter().map(|p| rows[p]).collect())
        }
        _ => Ok(rows),
    }
}

/// Per-split metric reports for a trained run.
pub fn evaluate(run_dir: &Path, args: &EvaluateArgs) -> Result<(String, Vec<MetricReport>), Failure> {
    if args.k == 0 {
        return Err(Failure::config("K must be at least 1"));
    }
    let run = Run::open(run_dir)?;
    let engine: Engine = run
        .config
        .engine
        .engine()
        .ok_or_else(|| Failure::config("evaluation needs a computing engine for ground truth"))?;
    let data = run.dataset()?;
    let h = if args.h.is_empty() {
        run.model.provenance.grid.clone()
    } else {
        args.h.clone()
    };
    let mut splits = Vec::new();
    for &split in &args.splits {
        let rows = cap_rows(&data, run.rows(&data, split)?, args.max_points, run.config.sampling.seed)?;
        if args.k * 2 >= rows.len() {
            return Err(Failure::config(format!(
                "K = {} needs fewer than half of the {} points of the {} split",
                args.k,
                rows.len(),
                split.name()
            )));
        }
        splits.push((split, rows));
    }
    let opts = EvaluationOptions {
        k: args.k,
        seed: None,
        allow_extrapolation: args.allow_extrapolation,
    };
    let mut reports = Vec::new();
    let mut text = String::new();
    for (split, rows) in splits {
        let subset = data.subset(&rows)?;
        let report = evaluate_model(&run.model, &subset, split.name(), &engine, &h, &opts)?;
        text.push_str(&report.to_table());
        let _ = writeln!(text, "{}", report.summary());
        reports.push(report);
    }
    let out = args.out.clone().unwrap_or_else(|| run.dir.join("evaluation"));
    let stage = StagedDir::create(&out)?;
    for r in &reports {
        stage.write(&format!("report_{}.tsv", r.split), r.to_table())?;
        stage.write(&format!("report_{}.json", r.split), to_json(r)?)?;
    }
    stage.commit()?;
    Ok((text, reports))
}

#[derive(Debug, Clone)]
pub struct BenchArgs {
    pub sizes: Vec<usize>,
    pub h: Option<HyperValue>,
    pub batch_size: usize,
    pub repeats: usize,
}

/// Timing table over oversampled inputs; the linear fit is printed when
/// there are at least two sizes.
pub fn bench_run(run_dir: &Path, args: &BenchArgs) -> Result<String, Failure> {
    if args.sizes.is_empty() {
        return Err(Failure::config("bench needs at least one size"));
    }
    let run = Run::open(run_dir)?;
    let data = run.dataset()?;
    let h = args.h.clone().unwrap_or_else(|| run.default_h());
    let opts = InferenceOptions {
        batch_size: args.batch_size,
        ..InferenceOptions::default()
    };
    let rows = bench(&run.model, data.features(), &args.sizes, &h, &opts, args.repeats)?;
    let mut out = String::from("rows\tseconds\trows_per_second\n");
    for r in &rows {
        let _ = writeln!(out, "{}\t{:.6}\t{:.0}", r.rows, r.seconds, r.rows_per_second);
    }
    if rows.len() >= 2 {
        let x: Vec<f64> = rows.iter().map(|r| r.rows as f64).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.seconds).collect();
        let fit = linear_fit(&x, &y)?;
        let _ = writeln!(
            out,
            "linear fit: seconds = {:.3e} * rows + {:.3e}, R^2 = {:.4}",
            fit.slope, fit.intercept, fit.r_squared
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum LayoutFormat {
    Binary,
    Csv,
}

#[derive(Debug, Clone)]
pub struct InferArgs {
    pub h: Option<HyperValue>,
    pub split: Split,
    pub format: LayoutFormat,
    pub out: PathBuf,
    pub batch_size: usize,
    pub allow_extrapolation: bool,
    pub normalized: bool,
}

impl Default for InferArgs {
    fn default() -> Self {
        Self {
            h: None,
            split: Split::All,
            format: LayoutFormat::Binary,
            out: PathBuf::from("layout.f32"),
            batch_size: DEFAULT_BATCH_SIZE,
            allow_extrapolation: false,
            normalized: false,
        }
    }
}

/// The layout a run's model gives `rows` of its dataset at `h`.
pub fn run_layout(run: &Run, data: &Dataset, rows: &[usize], h: &HyperValue, opts: &InferenceOptions) -> Result<Layout, Failure> {
    let subset = data.subset(rows)?;
    Ok(infer(&run.model, subset.features(), h, opts)?)
}

pub fn infer_run(run_dir: &Path, args: &InferArgs) -> Result<String, Failure> {
    let run = Run::open(run_dir)?;
    let data = run.dataset()?;
    let rows = run.rows(&data, args.split)?;
    let h = args.h.clone().unwrap_or_else(|| run.default_h());
    let opts = InferenceOptions {
        batch_size: args.batch_size,
        denormalize: !args.normalized,
        allow_extrapolation: args.allow_extrapolation,
    };
    let layout = run_layout(&run, &data, &rows, &h, &opts)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Failure::io(parent, e))?;
    }
    match args.format {
        LayoutFormat::Binary => write_layout_binary(&args.out, &layout, &run.model.normalization.hyper_names)?,
        LayoutFormat::Csv => {
            let labels = data.labels().map(|l| rows.iter().map(|&i| l[i]).collect::<Vec<_>>());
            write_layout_csv(&args.out, layout.coords.view(), labels.as_deref())?
        }
    }
    Ok(format!(
        "{} points at h = {}{} in {:.4} s, wrote {}",
        rows.len(),
        h,
        if layout.extrapolated { " (extrapolated)" } else { "" },
        layout.timing.seconds,
        args.out.display()
    ))
}

#[derive(Debug, Serialize, Deserialize)]
struct ExportManifest {
    engine: String,
    fingerprint: String,
    hyper_names: Vec<String>,
    seed: u64,
    aligned: bool,
    points: usize,
    files: Vec<(Vec<f64>, String)>,
}

/// Unpacks an archive into one layout file per record plus a manifest and
/// the row indices.
pub fn export(archive_path: &Path, out: &Path, format: LayoutFormat) -> Result<String, Failure> {
    let archive = ProjectionArchive::read(archive_path)?;
    archive.validate()?;
    let stage = StagedDir::create(out)?;
    let mut files = Vec::new();
    for (k, record) in archive.records.iter().enumerate() {
        let name = match format {
            LayoutFormat::Binary => format!("layout_{k:03}.f32"),
            LayoutFormat::Csv => format!("layout_{k:03}.csv"),
        };
        match format {
            LayoutFormat::Binary => {
                let layout = Layout {
                    coords: record.coords.clone(),
                    h: record.h.clone(),
                    extrapolated: false,
                    denormalized: true,
                    timing: hyperproj::inference::TimingRecord {
                        rows: record.coords.nrows(),
                        seconds: 1.0,
                        rows_per_second: record.coords.nrows() as f64,
                    },
                };
                write_layout_binary(&stage.path(&name), &layout, &archive.hyper_names)?;
            }
            LayoutFormat::Csv => write_layout_csv(&stage.path(&name), record.coords.view(), None)?,
        }
        files.push((record.h.values().to_vec(), name));
    }
    let indices: String = archive.indices.iter().map(|i| format!("{i}\n")).collect();
    stage.write("indices.txt", indices)?;
    let manifest = ExportManifest {
        engine: archive.engine.name().to_string(),
        fingerprint: archive.fingerprint.clone(),
        hyper_names: archive.hyper_names.clone(),
        seed: archive.seed,
        aligned: archive.aligned,
        points: archive.indices.len(),
        files,
    };
    stage.write("manifest.json", to_json(&manifest)?)?;
    let dir = stage.commit()?;
    Ok(format!("exported {} layouts to {}", archive.records.len(), dir.display()))
}
