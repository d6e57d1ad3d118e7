//! Ground-truth projection methods parameterized by a hyperparameter `h`.
//!
//! Each engine maps an `N x n` data matrix to an `N x 2` layout:
//!
//! - [`Engine::Tsne`]: exact t-SNE, `h` is the perplexity.
//! - [`Engine::Isomap`]: kNN graph, geodesic distances, classical MDS; `h` is
//!   the neighbor count `k`.
//! - [`Engine::WeightedPca`]: PCA of column-scaled data; `h` is the weight
//!   vector (one entry per feature, each in `[0, 1]`).

mod eigen;
pub mod isomap;
pub mod pca;
pub mod tsne;

use std::fmt;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use eigen::{orient_sign, symmetric_top2, TopEigen};
pub use isomap::{bridge_components, classical_mds, geodesic_distances, isomap_project, knn_graph, NeighborGraph};
pub use pca::{pca_project, weighted_pca_project};
pub use tsne::{joint_probabilities, kl_divergence, perplexity_calibration, tsne_project, Calibration, TsneConfig};

/// Hyperparameter value: one component for scalar hyperparameters, `n` for
/// per-feature weight vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HyperValue(pub Vec<f64>);

impl HyperValue {
    pub fn scalar(v: f64) -> Self {
        Self(vec![v])
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self.0.as_slice() {
            [v] => Some(*v),
            _ => None,
        }
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl From<f64> for HyperValue {
    fn from(v: f64) -> Self {
        Self::scalar(v)
    }
}

impl fmt::Display for HyperValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.as_scalar() {
            Some(v) => write!(f, "{v}"),
            None => {
                write!(f, "[")?;
                for (i, v) in self.0.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, "]")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Tsne,
    Isomap,
    WeightedPca,
    /// Layouts computed elsewhere and imported through a projection archive.
    External,
}

impl EngineKind {
    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Tsne => "tsne",
            EngineKind::Isomap => "isomap",
            EngineKind::WeightedPca => "weighted_pca",
            EngineKind::External => "external",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "tsne" => Some(EngineKind::Tsne),
            "isomap" => Some(EngineKind::Isomap),
            "weighted_pca" => Some(EngineKind::WeightedPca),
            "external" => Some(EngineKind::External),
            _ => None,
        }
    }

    /// Hyperparameter component names for data with `features` columns.
    pub fn hyper_names(self, features: usize) -> Vec<String> {
        match self {
            EngineKind::Tsne => vec!["perplexity".into()],
            EngineKind::Isomap => vec!["k".into()],
            EngineKind::WeightedPca => (0..features).map(|j| format!("w{j}")).collect(),
            EngineKind::External => vec!["h".into()],
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A computed layout and how it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding2D {
    pub coords: Array2<f64>,
    pub engine: EngineKind,
    pub h: HyperValue,
    pub seed: u64,
    /// KL divergence for t-SNE, residual stress proxy for Isomap, explained
    /// variance ratio for PCA.
    pub objective: f64,
    /// Set when fewer than two informative directions existed.
    pub degenerate: bool,
}

impl Embedding2D {
    pub fn len(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.nrows() == 0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EngineRequest<'a> {
    pub data: ArrayView2<'a, f64>,
    pub h: &'a HyperValue,
    /// Starting layout for engines that optimize iteratively.
    pub init: Option<ArrayView2<'a, f64>>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Engine {
    Tsne(TsneConfig),
    Isomap,
    WeightedPca,
}

impl Engine {
    pub fn kind(&self) -> EngineKind {
        match self {
            Engine::Tsne(_) => EngineKind::Tsne,
            Engine::Isomap => EngineKind::Isomap,
            Engine::WeightedPca => EngineKind::WeightedPca,
        }
    }

    /// Whether the engine accepts a starting layout.
    pub fn supports_init(&self) -> bool {
        matches!(self, Engine::Tsne(_))
    }

    pub fn validate_h(&self, points: usize, features: usize, h: &HyperValue) -> Result<()> {
        match self {
            Engine::Tsne(cfg) => {
                let p = scalar_h(h, "perplexity")?;
                if !(p > 0.0 && p < (points as f64 - 1.0)) {
                    return Err(Error::InvalidHyperparameter(format!(
                        "perplexity {p} outside (0, {})",
                        points as f64 - 1.0
                    )));
                }
                if points > cfg.max_points {
                    return Err(Error::InvalidArgument(format!(
                        "exact t-SNE is limited to {} points, got {points}",
                        cfg.max_points
                    )));
                }
                Ok(())
            }
            Engine::Isomap => {
                let k = scalar_h(h, "k")?;
                if k.fract() != 0.0 || k < 1.0 || k > points as f64 - 1.0 {
                    return Err(Error::InvalidHyperparameter(format!(
                        "k = {k} must be an integer in [1, {}]",
                        points.saturating_sub(1)
                    )));
                }
                Ok(())
            }
            Engine::WeightedPca => {
                if h.dims() != features {
                    return Err(Error::InvalidHyperparameter(format!(
                        "weight vector has {} entries, data has {features} features",
                        h.dims()
                    )));
                }
                if let Some(w) = h.values().iter().find(|w| !(0.0..=1.0).contains(*w)) {
                    return Err(Error::InvalidHyperparameter(format!(
                        "weight {w} outside [0, 1]"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn project(&self, request: EngineRequest<'_>) -> Result<Embedding2D> {
        let (points, features) = request.data.dim();
        self.validate_h(points, features, request.h)?;
        match self {
            Engine::Tsne(cfg) => {
                let perplexity = request.h.values()[0];
                tsne_project(request.data, perplexity, request.init, request.seed, cfg)
            }
            Engine::Isomap => {
                let k = request.h.values()[0] as usize;
                isomap_project(request.data, k)
            }
            Engine::WeightedPca => weighted_pca_project(request.data, request.h.values()),
        }
    }
}

fn scalar_h(h: &HyperValue, name: &str) -> Result<f64> {
    h.as_scalar()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::InvalidHyperparameter(format!("{name} must be a finite scalar, got {h}")))
}

/// Pairwise squared Euclidean distances, `N x N`.
pub fn squared_distances(data: ArrayView2<f64>) -> Array2<f64> {
    let n = data.nrows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        let a = data.row(i);
        for j in (i + 1)..n {
            let b = data.row(j);
            let d: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
            out[[i, j]] = d;
            out[[j, i]] = d;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn perplexity_range_is_enforced() {
        let engine = Engine::Tsne(TsneConfig::default());
        assert!(engine.validate_h(10, 3, &HyperValue::scalar(9.0)).is_err());
        assert!(engine.validate_h(10, 3, &HyperValue::scalar(0.0)).is_err());
        assert!(engine.validate_h(10, 3, &HyperValue::scalar(8.5)).is_ok());
    }

    #[test]
    fn isomap_k_must_be_integral() {
        assert!(Engine::Isomap.validate_h(10, 3, &HyperValue::scalar(3.5)).is_err());
        assert!(Engine::Isomap.validate_h(10, 3, &HyperValue::scalar(10.0)).is_err());
        assert!(Engine::Isomap.validate_h(10, 3, &HyperValue::scalar(9.0)).is_ok());
    }

    #[test]
    fn weights_must_match_features_and_range() {
        let e = Engine::WeightedPca;
        assert!(e.validate_h(10, 3, &HyperValue(vec![1.0, 1.0])).is_err());
        assert!(e.validate_h(10, 2, &HyperValue(vec![1.0, 1.5])).is_err());
        assert!(e.validate_h(10, 2, &HyperValue(vec![0.0, 1.0])).is_ok());
    }

    #[test]
    fn exact_tsne_ceiling() {
        let engine = Engine::Tsne(TsneConfig {
            max_points: 20,
            ..TsneConfig::default()
        });
        let data = Array2::zeros((21, 2));
        let h = HyperValue::scalar(5.0);
        let err = engine
            .project(EngineRequest {
                data: data.view(),
                h: &h,
                init: None,
                seed: 0,
            })
            .unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn display_formats() {
        assert_eq!(HyperValue::scalar(15.0).to_string(), "15");
        assert_eq!(HyperValue(vec![1.0, 0.5]).to_string(), "[1, 0.5]");
    }
}
