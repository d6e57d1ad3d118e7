//! Batched inference over a trained model, layout export and throughput
//! measurement.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engines::HyperValue;
use crate::error::{Error, Result};
use crate::model::NetworkModel;

pub const DEFAULT_BATCH_SIZE: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceOptions {
    pub batch_size: usize,
    /// Map outputs back to the training target box instead of `[0, 1]`.
    pub denormalize: bool,
    pub allow_extrapolation: bool,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        Self {
            batch_size: DEFAULT_BATCH_SIZE,
            denormalize: true,
            allow_extrapolation: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub rows: usize,
    pub seconds: f64,
    pub rows_per_second: f64,
}

impl TimingRecord {
    fn new(rows: usize, seconds: f64) -> Self {
        let seconds = seconds.max(1e-9);
        Self {
            rows,
            seconds,
            rows_per_second: rows as f64 / seconds,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub coords: Array2<f32>,
    pub h: HyperValue,
    /// Set when `h` lies outside the trained grid bounds.
    pub extrapolated: bool,
    pub denormalized: bool,
    pub timing: TimingRecord,
}

/// Normalized input rows for one model, ready to be paired with any `h`.
/// Only the trailing h columns change between calls.
#[derive(Debug, Clone)]
pub struct PreparedInputs {
    inputs: Array2<f32>,
    features: usize,
}

impl PreparedInputs {
    pub fn new(model: &NetworkModel, rows: ArrayView2<f64>) -> Result<Self> {
        let norm = &model.normalization;
        let features = norm.normalize_features(rows)?;
        if let Some((r, c)) = features
            .indexed_iter()
            .find(|(_, v)| !v.is_finite())
            .map(|(ix, _)| ix)
        {
            return Err(Error::NonFinite {
                context: "inference input",
                row: r,
                column: c,
            });
        }
        let h_zero = vec![0.0; norm.h_dims()];
        Ok(Self {
            inputs: norm.assemble_inputs(features.view(), &h_zero),
            features: norm.feature_count(),
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    fn set_h(&mut self, h_norm: &[f64]) {
        let d = self.features;
        for mut row in self.inputs.rows_mut() {
            for (c, &v) in h_norm.iter().enumerate() {
                row[d + c] = v as f32;
            }
        }
    }

    /// Runs the model at `h` over every prepared row.
    pub fn infer(&mut self, model: &NetworkModel, h: &HyperValue, opts: &InferenceOptions) -> Result<Layout> {
        if opts.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        let norm = &model.normalization;
        let h_norm = norm.normalize_h(h)?;
        let violation = norm.range_violation(h);
        if let Some(v) = &violation {
            if !opts.allow_extrapolation {
                return Err(Error::Extrapolation {
                    name: v.name.clone(),
                    h: v.value,
                    lo: v.lo,
                    hi: v.hi,
                });
            }
        }
        self.set_h(&h_norm);

        let start = Instant::now();
        let outputs = run_batches(model, self.inputs.view(), opts.batch_size);
        let seconds = start.elapsed().as_secs_f64();

        let coords = if opts.denormalize {
            norm.denormalize_targets(outputs.view()).mapv(|v| v as f32)
        } else {
            outputs
        };
        Ok(Layout {
            coords,
            h: h.clone(),
            extrapolated: violation.is_some(),
            denormalized: opts.denormalize,
            timing: TimingRecord::new(self.len(), seconds),
        })
    }
}

/// Forwards `inputs` in chunks of `batch_size`, chunks in parallel. Every
/// output row depends only on its input row, so the result does not depend
/// on the chunking.
fn run_batches(model: &NetworkModel, inputs: ArrayView2<f32>, batch_size: usize) -> Array2<f32> {
    let n = inputs.nrows();
    let chunks: Vec<(usize, usize)> = (0..n)
        .step_by(batch_size)
        .map(|lo| (lo, (lo + batch_size).min(n)))
        .collect();
    let parts: Vec<Array2<f32>> = chunks
        .par_iter()
        .map(|&(lo, hi)| model.network.predict_unchecked(inputs.slice(s![lo..hi, ..])))
        .collect();
    let mut out = Array2::<f32>::zeros((n, 2));
    for (&(lo, hi), part) in chunks.iter().zip(&parts) {
        out.slice_mut(s![lo..hi, ..]).assign(part);
    }
    out
}

/// Layout of raw feature rows `rows` at `h`.
pub fn infer(model: &NetworkModel, rows: ArrayView2<f64>, h: &HyperValue, opts: &InferenceOptions) -> Result<Layout> {
    PreparedInputs::new(model, rows)?.infer(model, h, opts)
}

/// One layout per entry of `h_values`, normalizing the rows once.
pub fn sweep(
    model: &NetworkModel,
    rows: ArrayView2<f64>,
    h_values: &[HyperValue],
    opts: &InferenceOptions,
) -> Result<Vec<Layout>> {
    if h_values.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one h value".into()));
    }
    let mut prepared = PreparedInputs::new(model, rows)?;
    h_values.iter().map(|h| prepared.infer(model, h, opts)).collect()
}

/// Repeats rows of `data` cyclically until there are `rows` of them.
pub fn oversample(data: ArrayView2<f64>, rows: usize) -> Result<Array2<f64>> {
    if data.nrows() == 0 {
        return Err(Error::InvalidArgument("cannot oversample an empty matrix".into()));
    }
    let picks: Vec<usize> = (0..rows).map(|i| i % data.nrows()).collect();
    Ok(data.select(Axis(0), &picks))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("linear fit needs at least two paired points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("linear fit needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - (slope * a + intercept)).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Times inference on `data` oversampled to each size. Each size is run
/// `repeats` times after one warm-up pass and the fastest run is kept.
pub fn bench(
    model: &NetworkModel,
    data: ArrayView2<f64>,
    sizes: &[usize],
    h: &HyperValue,
    opts: &InferenceOptions,
    repeats: usize,
) -> Result<Vec<TimingRecord>> {
    if sizes.is_empty() {
        return Err(Error::InvalidArgument("bench needs at least one size".into()));
    }
    if let Some(0) = sizes.iter().find(|&&s| s == 0) {
        return Err(Error::InvalidArgument("bench sizes must be positive".into()));
    }
    let mut out = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let rows = oversample(data, size)?;
        let mut prepared = PreparedInputs::new(model, rows.view())?;
        prepared.infer(model, h, opts)?;
        let mut best: Option<TimingRecord> = None;
        for _ in 0..repeats.max(1) {
            let t = prepared.infer(model, h, opts)?.timing;
            if best.is_none_or(|b| t.seconds < b.seconds) {
                best = Some(t);
            }
        }
        let best = best.expect("at least one repeat");
        log::info!("bench {size} rows: {:.6} s ({:.0} rows/s)", best.seconds, best.rows_per_second);
        out.push(best);
    }
    Ok(out)
}

/// Sidecar written next to a binary layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutHeader {
    pub rows: usize,
    pub columns: usize,
    pub dtype: String,
    pub endianness: String,
    pub hyper_names: Vec<String>,
    pub h: Vec<f64>,
    pub extrapolated: bool,
    pub denormalized: bool,
}

impl LayoutHeader {
    pub fn for_layout(layout: &Layout, hyper_names: &[String]) -> Self {
        Self {
            rows: layout.coords.nrows(),
            columns: 2,
            dtype: "float32".into(),
            endianness: "little".into(),
            hyper_names: hyper_names.to_vec(),
            h: layout.h.values().to_vec(),
            extrapolated: layout.extrapolated,
            denormalized: layout.denormalized,
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub fn layout_bytes(coords: ArrayView2<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(coords.len() * 4);
    for row in coords.rows() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Writes packed little-endian `f32` rows to `path` and the header to
/// `path` + `.json`.
pub fn write_layout_binary(path: &Path, layout: &Layout, hyper_names: &[String]) -> Result<()> {
    std::fs::write(path, layout_bytes(layout.coords.view())).map_err(|e| Error::io(path, e))?;
    let header = LayoutHeader::for_layout(layout, hyper_names);
    let sidecar = sidecar_path(path);
    let json = serde_json::to_vec_pretty(&header).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(&sidecar, json).map_err(|e| Error::io(&sidecar, e))
}

/// Reads a layout written by [`write_layout_binary`].
pub fn read_layout_binary(path: &Path) -> Result<(LayoutHeader, Array2<f32>)> {
    let sidecar = sidecar_path(path);
    let json = std::fs::read(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let header: LayoutHeader = serde_json::from_slice(&json).map_err(|e| Error::Format(e.to_string()))?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if header.columns != 2 || bytes.len() != header.rows * 8 {
        return Err(Error::Format(format!(
            "layout payload has {} bytes, header promises {} rows of {} columns",
            bytes.len(),
            header.rows,
            header.columns
        )));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let coords = Array2::from_shape_vec((header.rows, 2), values).map_err(|e| Error::Format(e.to_string()))?;
    Ok((header, coords))
}

/// Writes `x,y[,label]` rows with a header line.
pub fn write_layout_csv(path: &Path, coords: ArrayView2<f32>, labels: Option<&[i64]>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let wrap = |e: csv::Error| Error::Format(e.to_string());
    if labels.is_some() {
        w.write_record(["x", "y", "label"]).map_err(wrap)?;
    } else {
        w.write_record(["x", "y"]).map_err(wrap)?;
    }
    for (i, row) in coords.rows().into_iter().enumerate() {
        let (x, y) = (row[0].to_string(), row[1].to_string());
        match labels {
            Some(l) => w.write_record([x, y, l[i].to_string()]).map_err(wrap)?,
            None => w.write_record([x, y]).map_err(wrap)?,
        }
    }
    let mut inner = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_of_exact_line() {
        let f = linear_fit(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_single_point() {
        assert!(linear_fit(&[1.0], &[2.0]).is_err());
    }

    #[test]
    fn oversample_cycles_rows() {
        let a = ndarray::array![[1.0], [2.0]];
        let o = oversample(a.view(), 5).unwrap();
        assert_eq!(o.column(0).to_vec(), vec![1.0, 2.0, 1.0, 2.0, 1.0]);
    }

    #[test]
    fn sidecar_appends_extension() {
        assert_eq!(sidecar_path(Path::new("out/layout.f32")), PathBuf::from("out/layout.f32.json"));
    }
}
