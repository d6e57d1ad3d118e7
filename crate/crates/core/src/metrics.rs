//! Rank-based neighborhood preservation scores (trustworthiness and
//! continuity) and model-versus-ground-truth evaluation reports.

use std::fmt::Write as _;

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::engines::{Engine, EngineKind, HyperValue};
use crate::error::{Error, Result};
use crate::inference::{sweep, InferenceOptions};
use crate::model::NetworkModel;
use crate::stability::seeded_chain;

pub const DEFAULT_K: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub trustworthiness: f64,
    pub continuity: f64,
}

fn check_k(n: usize, k: usize) -> Result<()> {
    // 2N - 3K - 1 > 0 and K < N / 2
    if k == 0 || 2 * k >= n {
        return Err(Error::InvalidArgument(format!(
            "neighborhood size K = {k} needs 1 <= K < N/2 with N = {n}"
        )));
    }
    Ok(())
}

fn distances_from(x: ArrayView2<f64>, i: usize) -> Vec<f64> {
    let a = x.row(i);
    x.rows()
        .into_iter()
        .map(|b| {
            a.iter()
                .zip(b.iter())
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// `rank[j]` is the 1-based position of `j` among the other points sorted
/// by distance from `i`, ties broken by index. `order` holds the points in
/// that order.
fn ranks_from(x: ArrayView2<f64>, i: usize) -> (Vec<usize>, Vec<usize>) {
    let d = distances_from(x, i);
    let mut order: Vec<usize> = (0..x.nrows()).filter(|&j| j != i).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    let mut rank = vec![0usize; x.nrows()];
    for (pos, &j) in order.iter().enumerate() {
        rank[j] = pos + 1;
    }
    (rank, order)
}

/// Penalty sums of point `i`: (trustworthiness, continuity).
fn point_penalties(high: ArrayView2<f64>, low: ArrayView2<f64>, i: usize, k: usize) -> (usize, usize) {
    let (high_rank, high_order) = ranks_from(high, i);
    let (low_rank, low_order) = ranks_from(low, i);
    let trust = low_order[..k]
        .iter()
        .filter(|&&j| high_rank[j] > k)
        .map(|&j| high_rank[j] - k)
        .sum();
    let cont = high_order[..k]
        .iter()
        .filter(|&&j| low_rank[j] > k)
        .map(|&j| low_rank[j] - k)
        .sum();
    (trust, cont)
}

/// Trustworthiness and continuity of `low` as a layout of `high` with
/// neighborhood size `k`.
pub fn neighborhood_scores(high: ArrayView2<f64>, low: ArrayView2<f64>, k: usize) -> Result<Scores> {
    if high.nrows() != low.nrows() {
        return Err(Error::DimensionMismatch {
            context: "metric row count",
            expected: high.nrows(),
            actual: low.nrows(),
        });
    }
    let n = high.nrows();
    check_k(n, k)?;
    let penalties: Vec<(usize, usize)> = (0..n)
        .into_par_iter()
        .map(|i| point_penalties(high, low, i, k))
        .collect();
    let (t, c) = penalties
        .iter()
        .fold((0u128, 0u128), |acc, p| (acc.0 + p.0 as u128, acc.1 + p.1 as u128));
    let (nf, kf) = (n as f64, k as f64);
    let scale = 2.0 / (nf * kf * (2.0 * nf - 3.0 * kf - 1.0));
    Ok(Scores {
        trustworthiness: 1.0 - scale * t as f64,
        continuity: 1.0 - scale * c as f64,
    })
}

pub fn trustworthiness(high: ArrayView2<f64>, low: ArrayView2<f64>, k: usize) -> Result<f64> {
    Ok(neighborhood_scores(high, low, k)?.trustworthiness)
}

pub fn continuity(high: ArrayView2<f64>, low: ArrayView2<f64>, k: usize) -> Result<f64> {
    Ok(neighborhood_scores(high, low, k)?.continuity)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub h: HyperValue,
    /// `h` is not one of the values the model was trained on.
    pub interpolated: bool,
    pub extrapolated: bool,
    pub ground_truth: Scores,
    pub model: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub k: usize,
    pub split: String,
    pub points: usize,
    pub dataset_fingerprint: String,
    pub engine: EngineKind,
    pub model_seed: u64,
    pub hyper_names: Vec<String>,
    pub rows: Vec<MetricRow>,
    pub mean_ground_truth: Scores,
    pub mean_model: Scores,
}

fn mean_scores<'a>(scores: impl Iterator<Item = &'a Scores>) -> Scores {
    let mut n = 0usize;
    let (mut t, mut c) = (0.0, 0.0);
    for s in scores {
        n += 1;
        t += s.trustworthiness;
        c += s.continuity;
    }
    let n = n.max(1) as f64;
    Scores {
        trustworthiness: t / n,
        continuity: c / n,
    }
}

impl MetricReport {
    /// Absolute gaps between mean model and mean ground-truth scores.
    pub fn mean_gap(&self) -> Scores {
        Scores {
            trustworthiness: (self.mean_model.trustworthiness - self.mean_ground_truth.trustworthiness).abs(),
            continuity: (self.mean_model.continuity - self.mean_ground_truth.continuity).abs(),
        }
    }

    /// Tab-separated table, one line per h, metric and source, followed by
    /// the means.
    pub fn to_table(&self) -> String {
        let mut out = String::from("split\th\tmetric\tsource\tvalue\tinterpolated\n");
        let mut line = |h: &str, metric: &str, source: &str, value: f64, flag: &str| {
            let _ = writeln!(out, "{}\t{h}\t{metric}\t{source}\t{value:.6}\t{flag}", self.split);
        };
        for row in &self.rows {
            let h = row.h.to_string();
            let flag = if row.extrapolated {
                "extrapolated"
            } else if row.interpolated {
                "interpolated"
            } else {
                "trained"
            };
            for (source, s) in [("ground_truth", &row.ground_truth), ("model", &row.model)] {
                line(&h, "trustworthiness", source, s.trustworthiness, flag);
                line(&h, "continuity", source, s.continuity, flag);
            }
        }
        for (source, s) in [("ground_truth", &self.mean_ground_truth), ("model", &self.mean_model)] {
            line("mean", "trustworthiness", source, s.trustworthiness, "-");
            line("mean", "continuity", source, s.continuity, "-");
        }
        out
    }

    /// Short human summary with the mean gaps.
    pub fn summary(&self) -> String {
        let gap = self.mean_gap();
        format!(
            "{} split, {} points, K = {}: trustworthiness {:.4} (ground truth {:.4}, gap {:.4}); continuity {:.4} (ground truth {:.4}, gap {:.4})",
            self.split,
            self.points,
            self.k,
            self.mean_model.trustworthiness,
            self.mean_ground_truth.trustworthiness,
            gap.trustworthiness,
            self.mean_model.continuity,
            self.mean_ground_truth.continuity,
            gap.continuity,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationOptions {
    pub k: usize,
    /// Seed of the ground-truth chain; the model's training seed by default.
    pub seed: Option<u64>,
    pub allow_extrapolation: bool,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            seed: None,
            allow_extrapolation: false,
        }
    }
}

/// Scores matching pairs of ground-truth and approximated layouts of `high`.
pub fn compare_layouts(
    high: ArrayView2<f64>,
    ground_truth: &[ArrayView2<f64>],
    approximated: &[ArrayView2<f64>],
    k: usize,
) -> Result<Vec<(Scores, Scores)>> {
    if ground_truth.len() != approximated.len() {
        return Err(Error::DimensionMismatch {
            context: "layout pairs",
            expected: ground_truth.len(),
            actual: approximated.len(),
        });
    }
    check_k(high.nrows(), k)?;
    ground_truth
        .par_iter()
        .zip(approximated.par_iter())
        .map(|(g, a)| Ok((neighborhood_scores(high, *g, k)?, neighborhood_scores(high, *a, k)?)))
        .collect()
}

/// Ground truth (a seeded chain over `h_values` on `split`) against the
/// model's layouts of the same points. Neighborhoods use only the points
/// of `split`.
pub fn evaluate_model(
    model: &NetworkModel,
    split: &Dataset,
    split_name: &str,
    engine: &Engine,
    h_values: &[HyperValue],
    opts: &EvaluationOptions,
) -> Result<MetricReport> {
    if h_values.is_empty() {
        return Err(Error::InvalidArgument("evaluation needs at least one h value".into()));
    }
    check_k(split.len(), opts.k)?;
    let trained = model.provenance.engine;
    if trained != EngineKind::External && trained != engine.kind() {
        return Err(Error::InvalidArgument(format!(
            "model was trained on {} layouts, evaluation engine is {}",
            trained.name(),
            engine.kind().name()
        )));
    }
    let high = split.features();
    let seed = opts.seed.unwrap_or(model.provenance.seed);
    let truth = seeded_chain(engine, high, h_values, seed)?;
    let inference = InferenceOptions {
        denormalize: false,
        allow_extrapolation: opts.allow_extrapolation,
        ..InferenceOptions::default()
    };
    let predicted = sweep(model, high, h_values, &inference)?;
    let predicted_f64: Vec<_> = predicted.iter().map(|l| l.coords.mapv(|v| v as f64)).collect();
    let truth_views: Vec<_> = truth.iter().map(|e| e.coords.view()).collect();
    let pred_views: Vec<_> = predicted_f64.iter().map(|c| c.view()).collect();
    let scores = compare_layouts(high, &truth_views, &pred_views, opts.k)?;

    let rows: Vec<MetricRow> = h_values
        .iter()
        .zip(&predicted)
        .zip(scores)
        .map(|((h, layout), (g, m))| MetricRow {
            h: h.clone(),
            interpolated: !model.provenance.grid.contains(h),
            extrapolated: layout.extrapolated,
            ground_truth: g,
            model: m,
        })
        .collect();
    Ok(MetricReport {
        k: opts.k,
        split: split_name.to_string(),
        points: split.len(),
        dataset_fingerprint: split.fingerprint().to_string(),
        engine: engine.kind(),
        model_seed: model.provenance.seed,
        hyper_names: model.normalization.hyper_names.clone(),
        mean_ground_truth: mean_scores(rows.iter().map(|r| &r.ground_truth)),
        mean_model: mean_scores(rows.iter().map(|r| &r.model)),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn k_range_is_enforced() {
        let x = ndarray::Array2::<f64>::zeros((10, 2));
        assert!(neighborhood_scores(x.view(), x.view(), 0).is_err());
        assert!(neighborhood_scores(x.view(), x.view(), 5).is_err());
        assert!(neighborhood_scores(x.view(), x.view(), 4).is_ok());
    }

    #[test]
    fn swapped_pair_costs_known_amount() {
        // points on a line; the layout swaps the two outermost points
        let high = array![[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]];
        let low = array![[5.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0], [4.0, 0.0], [0.0, 0.0]];
        let s = neighborhood_scores(high.view(), low.view(), 1).unwrap();
        assert!(s.trustworthiness < 1.0 && s.continuity < 1.0);
        assert!((0.0..=1.0).contains(&s.trustworthiness));
    }

    #[test]
    fn row_mismatch_rejected() {
        let a = ndarray::Array2::<f64>::zeros((10, 2));
        let b = ndarray::Array2::<f64>::zeros((9, 2));
        assert!(trustworthiness(a.view(), b.view(), 2).is_err());
    }
}
