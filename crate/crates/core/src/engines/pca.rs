use ndarray::{Array2, ArrayView2, Axis};

use super::{symmetric_top2, Embedding2D, EngineKind, HyperValue};
use crate::error::{Error, Result};

/// PCA of the data after scaling column `j` by `weights[j]`.
///
/// The projection uses the top two eigenvectors of the covariance of the
/// scaled, centered data, each with its first non-negligible loading made
/// positive. `objective` is the explained variance ratio of the two axes.
/// All-zero weights return a zero layout flagged `degenerate`.
pub fn weighted_pca_project(data: ArrayView2<f64>, weights: &[f64]) -> Result<Embedding2D> {
    let features = data.ncols();
    if weights.len() != features {
        return Err(Error::DimensionMismatch {
            context: "weight vector",
            expected: features,
            actual: weights.len(),
        });
    }
    let mut scaled = data.to_owned();
    for (mut col, &w) in scaled.columns_mut().into_iter().zip(weights) {
        col *= w;
    }
    let mut emb = pca_project(scaled.view())?;
    emb.h = HyperValue(weights.to_vec());
    Ok(emb)
}

/// Plain PCA into 2-D.
pub fn pca_project(data: ArrayView2<f64>) -> Result<Embedding2D> {
    let (n, features) = data.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("PCA needs at least one row".into()));
    }
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "PCA input",
            row: pos / features.max(1),
            column: pos % features.max(1),
        });
    }
    let mean = data.mean_axis(Axis(0)).expect("non-empty");
    let centered = &data - &mean;
    let cov = centered.t().dot(&centered) / n as f64;
    let eig = symmetric_top2(cov.view());

    let cutoff = 1e-10 * eig.values[0].abs().max(f64::MIN_POSITIVE);
    let mut basis = Array2::zeros((features, 2));
    let mut informative = 0;
    for axis in 0..features.min(2) {
        if eig.values[axis] > cutoff {
            informative += 1;
            basis.column_mut(axis).assign(&eig.vectors.column(axis));
        }
    }
    let degenerate = informative < 2;
    if degenerate {
        log::warn!("PCA found {informative} informative axes, zero-filling the rest");
    }
    let coords = centered.dot(&basis);
    let kept: f64 = eig.values.iter().take(informative).sum();
    let objective = if eig.trace > 0.0 { kept / eig.trace } else { 0.0 };
    Ok(Embedding2D {
        coords,
        engine: EngineKind::WeightedPca,
        h: HyperValue(vec![1.0; features]),
        seed: 0,
        objective,
        degenerate,
    })
}
