//! Declarative run configuration: a TOML file plus `key.path=value`
//! overrides.

use std::path::{Path, PathBuf};

use hyperproj::data::{load_delimited, load_idx_images, synth_blobs, Dataset, DelimitedOptions};
use hyperproj::engines::{Engine, TsneConfig};
use hyperproj::nn::{AdamConfig, FitConfig, NetworkSpec, DEFAULT_DROPOUT, DEFAULT_HIDDEN};
use hyperproj::pipeline::HyperparameterGrid;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

pub const OUTPUT_ROOT_ENV: &str = "HYPERPROJ_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Synthetic {
        clusters: usize,
        per_cluster: usize,
        dims: usize,
        #[serde(default = "one")]
        spread: f64,
        #[serde(default)]
        seed: u64,
    },
    Delimited {
        path: PathBuf,
        #[serde(default = "comma")]
        delimiter: String,
        #[serde(default)]
        label_column: Option<usize>,
        #[serde(default)]
        header: bool,
        #[serde(default)]
        standardize: bool,
    },
    Idx {
        images: PathBuf,
        #[serde(default)]
        labels: Option<PathBuf>,
        limit: usize,
    },
}

fn one() -> f64 {
    1.0
}

fn comma() -> String {
    ",".into()
}

impl DatasetConfig {
    pub fn load(&self) -> Result<Dataset, Failure> {
        Ok(match self {
            DatasetConfig::Synthetic {
                clusters,
                per_cluster,
                dims,
                spread,
                seed,
            } => synth_blobs(*clusters, *per_cluster, *dims, *spread, *seed)?,
            DatasetConfig::Delimited {
                path,
                delimiter,
                label_column,
                header,
                standardize,
            } => {
                let &[delimiter] = delimiter.as_bytes() else {
                    return Err(Failure::config(format!("delimiter must be one byte, got {delimiter:?}")));
                };
                let opts = DelimitedOptions {
                    delimiter,
                    label_column: *label_column,
                    header: *header,
                };
                let data = load_delimited(path, &opts)?;
                if *standardize {
                    data.standardized()
                } else {
                    data
                }
            }
            DatasetConfig::Idx { images, labels, limit } => load_idx_images(images, labels.as_deref(), *limit)?,
        })
    }

    fn absolutize(&mut self) {
        let fix = |p: &mut PathBuf| {
            if let Ok(abs) = std::path::absolute(&*p) {
                *p = abs;
            }
        };
        match self {
            DatasetConfig::Synthetic { .. } => {}
            DatasetConfig::Delimited { path, .. } => fix(path),
            DatasetConfig::Idx { images, labels, .. } => {
                fix(images);
                if let Some(l) = labels {
                    fix(l);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EngineConfig {
    Tsne(TsneConfig),
    Isomap,
    WeightedPca,
    /// Layouts read from a projection archive instead of computed here.
    External {
        archive: PathBuf,
        #[serde(default)]
        allow_fingerprint_mismatch: bool,
    },
}

impl EngineConfig {
    /// The engine that computes ground truth, if this run computes any.
    pub fn engine(&self) -> Option<Engine> {
        match self {
            EngineConfig::Tsne(cfg) => Some(Engine::Tsne(cfg.clone())),
            EngineConfig::Isomap => Some(Engine::Isomap),
            EngineConfig::WeightedPca => Some(Engine::WeightedPca),
            EngineConfig::External { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub fraction: f64,
    pub stratify: bool,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            fraction: 0.2,
            stratify: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub batch_norm: bool,
    pub dropout: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN.to_vec(),
            batch_norm: true,
            dropout: DEFAULT_DROPOUT,
        }
    }
}

impl NetworkConfig {
    pub fn spec(&self, input_width: usize) -> NetworkSpec {
        NetworkSpec::new(input_width, &self.hidden, self.batch_norm, self.dropout)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let fit = FitConfig::default();
        Self {
            epochs: fit.epochs,
            batch_size: fit.batch_size,
            patience: fit.patience,
            validation_fraction: fit.validation_fraction,
            learning_rate: fit.adam.learning_rate,
            seed: fit.seed,
        }
    }
}

impl TrainingConfig {
    pub fn fit(&self) -> FitConfig {
        FitConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            validation_fraction: self.validation_fraction,
            patience: self.patience,
            seed: self.seed,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                ..AdamConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output: PathBuf,
    pub dataset: DatasetConfig,
    pub engine: EngineConfig,
    /// Not used by external-archive runs, whose grid is the archive's.
    #[serde(default)]
    pub grid: Option<HyperparameterGrid>,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub training: TrainingConfig,
}

fn parse_override_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets `a.b.c = value` in `table`, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), Failure> {
    let Some((key, raw)) = assignment.split_once('=') else {
        return Err(Failure::config(format!("override {assignment:?} is not key=value")));
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Failure::config(format!("override key {key:?} is malformed")));
    }
    let mut cursor = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| Failure::config(format!("override key {key:?}: {part} is not a table")))?;
    }
    cursor.insert(parts[parts.len() - 1].to_string(), parse_override_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, Failure> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Failure::config(e.to_string().trim().replace('\n', " ")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Failure::config(e.to_string().trim().replace('\n', " ")))?;
        cfg.validate()?;
        cfg.dataset.absolutize();
        if let EngineConfig::External { archive, .. } = &mut cfg.engine {
            if let Ok(abs) = std::path::absolute(&*archive) {
                *archive = abs;
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        Self::parse(&text, overrides)
    }

    fn validate(&self) -> Result<(), Failure> {
        if self.engine.engine().is_some() && self.grid.is_none() {
            return Err(Failure::config("a grid is required unless the engine is external"));
        }
        let f = self.sampling.fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(Failure::config(format!("sampling.fraction must be in (0, 1], got {f}")));
        }
        if self.network.hidden.is_empty() {
            return Err(Failure::config("network.hidden needs at least one layer"));
        }
        Ok(())
    }

    /// Output directory, placed under the output-root environment variable
    /// when it is set and the configured path is relative.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output.is_relative() => PathBuf::from(root).join(&self.output),
            _ => self.output.clone(),
        }
    }

    pub fn to_toml(&self) -> Result<String, Failure> {
        toml::to_string(self).map_err(|e| Failure::config(e.to_string()))
    }
}
