use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ProjectionArchive, ProjectionRecord};
use crate::engines::{Engine, EngineKind, HyperValue};
use crate::error::{Error, Result};
use crate::stability::seeded_chain;

/// Everything needed to map raw inputs to network inputs and network
/// outputs back to layout coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub feature_min: Vec<f64>,
    pub feature_max: Vec<f64>,
    pub hyper_names: Vec<String>,
    pub h_min: Vec<f64>,
    pub h_max: Vec<f64>,
    /// Lower-left corner of the global target bounding box.
    pub target_min: [f64; 2],
    /// Larger side of the bounding box; both axes are divided by it so the
    /// layouts keep their aspect ratio and relative scale.
    pub target_scale: f64,
}

/// One hyperparameter component outside its trained range.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeViolation {
    pub name: String,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

fn column_bounds(data: ArrayView2<f64>) -> (Vec<f64>, Vec<f64>) {
    let lo = data
        .columns()
        .into_iter()
        .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let hi = data
        .columns()
        .into_iter()
        .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    (lo, hi)
}

impl Normalization {
    /// Fits feature ranges on `features`, h ranges on `grid` and one
    /// bounding box over every layout in `layouts`.
    pub fn fit(
        features: ArrayView2<f64>,
        hyper_names: Vec<String>,
        grid: &[HyperValue],
        layouts: &[ArrayView2<f32>],
    ) -> Result<Self> {
        if grid.is_empty() || layouts.is_empty() {
            return Err(Error::InvalidArgument("normalization needs at least one layout".into()));
        }
        let (feature_min, feature_max) = column_bounds(features);
        for (j, (lo, hi)) in feature_min.iter().zip(&feature_max).enumerate() {
            if lo == hi {
                log::warn!("feature {j} is constant on the training subset; it maps to 0.5");
            }
        }
        let dims = hyper_names.len();
        let mut h_min = vec![f64::INFINITY; dims];
        let mut h_max = vec![f64::NEG_INFINITY; dims];
        for h in grid {
            if h.dims() != dims {
                return Err(Error::DimensionMismatch {
                    context: "grid hyperparameter components",
                    expected: dims,
                    actual: h.dims(),
                });
            }
            for (c, &v) in h.values().iter().enumerate() {
                h_min[c] = h_min[c].min(v);
                h_max[c] = h_max[c].max(v);
            }
        }
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for layout in layouts {
            for row in layout.rows() {
                for a in 0..2 {
                    lo[a] = lo[a].min(row[a] as f64);
                    hi[a] = hi[a].max(row[a] as f64);
                }
            }
        }
        let side = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        Ok(Self {
            feature_min,
            feature_max,
            hyper_names,
            h_min,
            h_max,
            target_min: lo,
            target_scale: if side > 0.0 { side } else { 1.0 },
        })
    }

    pub fn feature_count(&self) -> usize {
        self.feature_min.len()
    }

    pub fn h_dims(&self) -> usize {
        self.hyper_names.len()
    }

    pub fn normalize_features(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.feature_count() {
            return Err(Error::DimensionMismatch {
                context: "feature count",
                expected: self.feature_count(),
                actual: x.ncols(),
            });
        }
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (lo, hi) = (self.feature_min[j], self.feature_max[j]);
            if hi > lo {
                let inv = 1.0 / (hi - lo);
                col.mapv_inplace(|v| (v - lo) * inv);
            } else {
                col.fill(0.5);
            }
        }
        Ok(out)
    }

    pub fn denormalize_features(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (lo, hi) = (self.feature_min[j], self.feature_max[j]);
            if hi > lo {
                col.mapv_inplace(|v| v * (hi - lo) + lo);
            } else {
                col.fill(lo);
            }
        }
        out
    }

    /// First component of `h` outside the trained range, if any.
    pub fn range_violation(&self, h: &HyperValue) -> Option<RangeViolation> {
        h.values()
            .iter()
            .enumerate()
            .find(|(c, v)| **v < self.h_min[*c] || **v > self.h_max[*c])
            .map(|(c, &value)| RangeViolation {
                name: self.hyper_names[c].clone(),
                value,
                lo: self.h_min[c],
                hi: self.h_max[c],
            })
    }

    /// Maps `h` to `[0, 1]` per component using the grid bounds; a
    /// component with a single trained value maps to 0.
    pub fn normalize_h(&self, h: &HyperValue) -> Result<Vec<f64>> {
        if h.dims() != self.h_dims() {
            return Err(Error::InvalidHyperparameter(format!(
                "expected {} hyperparameter components ({}), got {}",
                self.h_dims(),
                self.hyper_names.join(", "),
                h.dims()
            )));
        }
        if let Some(v) = h.values().iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidHyperparameter(format!("h component {v} is not finite")));
        }
        Ok(h
            .values()
            .iter()
            .enumerate()
            .map(|(c, &v)| {
                let (lo, hi) = (self.h_min[c], self.h_max[c]);
                if hi > lo {
                    (v - lo) / (hi - lo)
                } else {
                    0.0
                }
            })
            .collect())
    }

    pub fn normalize_targets(&self, coords: ArrayView2<f32>) -> Array2<f32> {
        let s = self.target_scale;
        Array2::from_shape_fn(coords.dim(), |(i, a)| {
            ((coords[[i, a]] as f64 - self.target_min[a]) / s) as f32
        })
    }

    pub fn denormalize_targets(&self, coords: ArrayView2<f32>) -> Array2<f64> {
        let s = self.target_scale;
        Array2::from_shape_fn(coords.dim(), |(i, a)| coords[[i, a]] as f64 * s + self.target_min[a])
    }

    /// Network input rows: normalized features followed by the normalized h.
    pub fn assemble_inputs(&self, normalized_features: ArrayView2<f64>, h_norm: &[f64]) -> Array2<f32> {
        let (n, d) = normalized_features.dim();
        let mut out = Array2::<f32>::zeros((n, d + h_norm.len()));
        for (mut row, src) in out.rows_mut().into_iter().zip(normalized_features.rows()) {
            for (dst, &v) in row.iter_mut().zip(src.iter()) {
                *dst = v as f32;
            }
            for (c, &v) in h_norm.iter().enumerate() {
                row[d + c] = v as f32;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset_fingerprint: String,
    pub engine: EngineKind,
    pub seed: u64,
    /// Share of the dataset used for training.
    pub fraction: f64,
    pub grid: Vec<HyperValue>,
    /// Training rows of the dataset, in archive order.
    pub indices: Vec<u32>,
}

/// Stacked `(features ++ h) -> layout` training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingCorpus {
    pub inputs: Array2<f32>,
    pub targets: Array2<f32>,
    /// Grid position of every row.
    pub slot: Vec<usize>,
    pub normalization: Normalization,
    pub provenance: Provenance,
}

impl TrainingCorpus {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    pub fn subset_size(&self) -> usize {
        self.provenance.indices.len()
    }
}

/// Runs the seeded chain over `grid` on the rows `indices` and packs the
/// aligned layouts into an archive.
pub fn project_chain(
    dataset: &Dataset,
    indices: &[usize],
    grid: &[HyperValue],
    engine: &Engine,
    seed: u64,
) -> Result<ProjectionArchive> {
    let subset = dataset.subset(indices)?;
    let chain = seeded_chain(engine, subset.features(), grid, seed)?;
    let indices = indices
        .iter()
        .map(|&i| u32::try_from(i).map_err(|_| Error::InvalidData(format!("row index {i} exceeds u32"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProjectionArchive {
        fingerprint: dataset.fingerprint().to_string(),
        engine: engine.kind(),
        hyper_names: engine.kind().hyper_names(dataset.dims()),
        seed,
        aligned: true,
        indices,
        records: chain
            .into_iter()
            .map(|e| ProjectionRecord {
                h: e.h,
                coords: e.coords.mapv(|v| v as f32),
            })
            .collect(),
    })
}

/// Ground truth plus corpus in one step.
pub fn build_corpus(
    dataset: &Dataset,
    indices: &[usize],
    grid: &[HyperValue],
    engine: &Engine,
    seed: u64,
) -> Result<(TrainingCorpus, ProjectionArchive)> {
    let archive = project_chain(dataset, indices, grid, engine, seed)?;
    let corpus = corpus_from_archive(dataset, &archive, false)?;
    Ok((corpus, archive))
}

/// Builds the stacked corpus from archived layouts, whether produced here or
/// imported from another tool.
pub fn corpus_from_archive(
    dataset: &Dataset,
    archive: &ProjectionArchive,
    allow_fingerprint_mismatch: bool,
) -> Result<TrainingCorpus> {
    archive.validate()?;
    archive.check_dataset(dataset, allow_fingerprint_mismatch)?;
    if archive.records.is_empty() {
        return Err(Error::InvalidData("archive holds no layouts".into()));
    }
    let rows = archive.index_usize();
    let m = rows.len();
    let features = dataset.features().select(Axis(0), &rows);
    let grid: Vec<HyperValue> = archive.records.iter().map(|r| r.h.clone()).collect();
    let layouts: Vec<ArrayView2<f32>> = archive.records.iter().map(|r| r.coords.view()).collect();
    let normalization = Normalization::fit(features.view(), archive.hyper_names.clone(), &grid, &layouts)?;
    let normalized = normalization.normalize_features(features.view())?;

    let total = m * grid.len();
    let width = dataset.dims() + normalization.h_dims();
    let mut inputs = Array2::<f32>::zeros((total, width));
    let mut targets = Array2::<f32>::zeros((total, 2));
    let mut slot = Vec::with_capacity(total);
    for (k, record) in archive.records.iter().enumerate() {
        let h_norm = normalization.normalize_h(&record.h)?;
        let block = k * m..(k + 1) * m;
        inputs
            .slice_mut(s![block.clone(), ..])
            .assign(&normalization.assemble_inputs(normalized.view(), &h_norm));
        targets
            .slice_mut(s![block, ..])
            .assign(&normalization.normalize_targets(record.coords.view()));
        slot.extend(std::iter::repeat_n(k, m));
    }
    Ok(TrainingCorpus {
        inputs,
        targets,
        slot,
        normalization,
        provenance: Provenance {
            dataset_fingerprint: archive.fingerprint.clone(),
            engine: archive.engine,
            seed: archive.seed,
            fraction: m as f64 / dataset.len() as f64,
            grid,
            indices: archive.indices.clone(),
        },
    })
}
