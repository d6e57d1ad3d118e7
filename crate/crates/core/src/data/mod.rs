//! Datasets, loaders and the projection archive.

mod archive;
mod delimited;
mod idx;
mod synth;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use archive::{ProjectionArchive, ProjectionRecord, ARCHIVE_MAGIC, ARCHIVE_VERSION};
pub use delimited::{load_delimited, DelimitedOptions};
pub use idx::{load_idx_images, parse_idx_images};
pub use synth::synth_blobs;

/// A feature matrix with optional integer labels.
///
/// Construction checks that there are at least two rows and one column and
/// that every value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Option<Vec<i64>>,
    feature_names: Vec<String>,
    fingerprint: String,
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn content_fingerprint(features: ArrayView2<f64>, labels: Option<&[i64]>) -> String {
    let mut h = Sha256::new();
    h.update((features.nrows() as u64).to_le_bytes());
    h.update((features.ncols() as u64).to_le_bytes());
    for v in features.iter() {
        h.update(v.to_le_bytes());
    }
    if let Some(labels) = labels {
        for l in labels {
            h.update(l.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Option<Vec<i64>>,
        feature_names: Option<Vec<String>>,
        fingerprint: Option<String>,
    ) -> Result<Self> {
        let (n, d) = features.dim();
        if n < 2 {
            return Err(Error::InvalidData(format!("a dataset needs at least 2 rows, got {n}")));
        }
        if d < 1 {
            return Err(Error::InvalidData("a dataset needs at least 1 feature".into()));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "dataset features",
                row: pos / d,
                column: pos % d,
            });
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "dataset labels",
                    expected: n,
                    actual: l.len(),
                });
            }
        }
        let feature_names = feature_names.unwrap_or_else(|| (0..d).map(|j| format!("x{j}")).collect());
        if feature_names.len() != d {
            return Err(Error::DimensionMismatch {
                context: "feature names",
                expected: d,
                actual: feature_names.len(),
            });
        }
        let fingerprint =
            fingerprint.unwrap_or_else(|| content_fingerprint(features.view(), labels.as_deref()));
        Ok(Self {
            features,
            labels,
            feature_names,
            fingerprint,
        })
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn dims(&self) -> usize {
        self.features.ncols()
    }

    /// Rows at `indices`, in that order. The fingerprint is recomputed from
    /// the selected content.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidArgument(format!(
                "row index {bad} out of range for {} rows",
                self.len()
            )));
        }
        let features = self.features.select(Axis(0), indices);
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Dataset::new(features, labels, Some(self.feature_names.clone()), None)
    }

    /// Z-score standardized copy (opt-in preprocessing for generic tabular
    /// data).
    pub fn standardized(&self) -> Dataset {
        let z = Standardizer::fit(self.features.view());
        Dataset::new(
            z.apply(self.features.view()),
            self.labels.clone(),
            Some(self.feature_names.clone()),
            None,
        )
        .expect("standardizing finite data keeps it valid")
    }
}

/// Per-column z-score transform. Constant columns are only centered.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl Standardizer {
    pub fn fit(data: ArrayView2<f64>) -> Self {
        let mean = data.mean_axis(Axis(0)).expect("non-empty data");
        let std = data.std_axis(Axis(0), 0.0).mapv(|s| if s > 0.0 { s } else { 1.0 });
        Self { mean, std }
    }

    pub fn apply(&self, data: ArrayView2<f64>) -> Array2<f64> {
        (&data - &self.mean) / &self.std
    }
}
