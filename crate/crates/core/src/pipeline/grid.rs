use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engines::HyperValue;
use crate::error::{Error, Result};

/// `lo, lo + gap, ...` up to `hi`, with `hi` appended when the lattice
/// misses it. Values within `1e-9 * gap` of `hi` snap to `hi`.
pub fn sample_hyperparameter_grid(lo: f64, hi: f64, gap: f64) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::InvalidConfig(format!("grid bounds [{lo}, {hi}] are invalid")));
    }
    if !(gap > 0.0 && gap.is_finite()) {
        return Err(Error::InvalidConfig(format!("grid gap {gap} must be positive")));
    }
    let tol = 1e-9 * gap;
    let mut out = Vec::new();
    let mut i = 0u64;
    loop {
        let v = lo + i as f64 * gap;
        if v >= hi - tol {
            break;
        }
        out.push(v);
        i += 1;
    }
    out.push(hi);
    Ok(out)
}

/// How the training hyperparameter values are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HyperparameterGrid {
    /// Scalar lattice, see [`sample_hyperparameter_grid`].
    Range { lo: f64, hi: f64, gap: f64 },
    /// Explicit scalar values, strictly ascending.
    Values { values: Vec<f64> },
    /// Per-feature weight vectors: the all-ones vector, nonzero vertices of
    /// the unit cube (all of them, or `max_vertices` including all-ones) and
    /// `interior` uniform points, ordered as a nearest-neighbor walk from
    /// all-ones.
    Weights {
        max_vertices: Option<usize>,
        interior: usize,
        seed: u64,
    },
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Greedy walk: start at the first point, always step to the nearest
/// unvisited one (ties by position).
fn nearest_neighbor_order(points: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut left = points;
    let mut out = Vec::with_capacity(left.len());
    if left.is_empty() {
        return out;
    }
    let mut current = left.remove(0);
    while !left.is_empty() {
        let (pos, _) = left
            .iter()
            .enumerate()
            .map(|(i, p)| (i, sq_dist(&current, p)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("non-empty");
        let next = left.remove(pos);
        out.push(std::mem::replace(&mut current, next));
    }
    out.push(current);
    out
}

/// The weight-vector training set for `features` columns.
pub fn weight_vector_grid(
    features: usize,
    max_vertices: Option<usize>,
    interior: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if features == 0 {
        return Err(Error::InvalidConfig("weight grid needs at least one feature".into()));
    }
    if features > 30 && max_vertices.is_none() {
        return Err(Error::InvalidConfig(format!(
            "{features} features give too many cube vertices; set a vertex cap"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ones = vec![1.0; features];
    let vertex = |mask: u64| -> Vec<f64> { (0..features).map(|j| ((mask >> j) & 1) as f64).collect() };
    let mut points = vec![ones];
    let full_mask = if features >= 64 { u64::MAX } else { (1u64 << features) - 1 };
    match max_vertices {
        None => points.extend((1..full_mask).map(vertex)),
        Some(cap) => {
            let extra = cap.saturating_sub(1);
            if features < 64 && (extra as u64) >= full_mask - 1 {
                points.extend((1..full_mask).map(vertex));
            } else if features <= 20 {
                let pool = (full_mask - 1) as usize;
                let mut chosen: Vec<usize> = sample(&mut rng, pool, extra).into_vec();
                chosen.sort_unstable();
                points.extend(chosen.into_iter().map(|i| vertex(i as u64 + 1)));
            } else {
                let mut seen = std::collections::BTreeSet::new();
                while seen.len() < extra {
                    let mask = rng.random::<u64>() & full_mask;
                    if mask != 0 && mask != full_mask {
                        seen.insert(mask);
                    }
                }
                points.extend(seen.into_iter().map(vertex));
            }
        }
    }
    for _ in 0..interior {
        points.push((0..features).map(|_| rng.random::<f64>()).collect());
    }
    Ok(nearest_neighbor_order(points))
}

impl HyperparameterGrid {
    /// Materializes the grid; `features` sizes weight vectors.
    pub fn values(&self, features: usize) -> Result<Vec<HyperValue>> {
        match self {
            HyperparameterGrid::Range { lo, hi, gap } => Ok(sample_hyperparameter_grid(*lo, *hi, *gap)?
                .into_iter()
                .map(HyperValue::scalar)
                .collect()),
            HyperparameterGrid::Values { values } => {
                if values.is_empty() {
                    return Err(Error::InvalidConfig("grid value list is empty".into()));
                }
                if values.windows(2).any(|w| !(w[0] < w[1])) || values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidConfig(
                        "grid values must be finite and strictly ascending".into(),
                    ));
                }
                Ok(values.iter().copied().map(HyperValue::scalar).collect())
            }
            HyperparameterGrid::Weights {
                max_vertices,
                interior,
                seed,
            } => Ok(weight_vector_grid(features, *max_vertices, *interior, *seed)?
                .into_iter()
                .map(HyperValue)
                .collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        assert_eq!(sample_hyperparameter_grid(2.0, 20.0, 6.0).unwrap(), vec![2.0, 8.0, 14.0, 20.0]);
        assert_eq!(sample_hyperparameter_grid(5.0, 5.0, 3.0).unwrap(), vec![5.0]);
        assert_eq!(sample_hyperparameter_grid(2.0, 50.0, 16.0).unwrap(), vec![2.0, 18.0, 34.0, 50.0]);
        assert_eq!(sample_hyperparameter_grid(5.0, 45.0, 10.0).unwrap(), vec![5.0, 15.0, 25.0, 35.0, 45.0]);
    }

    #[test]
    fn off_lattice_upper_bound_is_appended() {
        assert_eq!(sample_hyperparameter_grid(0.0, 10.0, 4.0).unwrap(), vec![0.0, 4.0, 8.0, 10.0]);
    }

    #[test]
    fn fractional_gap_snaps_to_upper_bound() {
        let g = sample_hyperparameter_grid(0.0, 0.3, 0.1).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(*g.last().unwrap(), 0.3);
    }

    #[test]
    fn bad_bounds_rejected() {
        assert!(sample_hyperparameter_grid(3.0, 2.0, 1.0).is_err());
        assert!(sample_hyperparameter_grid(1.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn four_feature_weight_grid() {
        let g = weight_vector_grid(4, None, 5, 1).unwrap();
        assert_eq!(g.len(), 20);
        assert_eq!(g[0], vec![1.0; 4]);
        assert!(!g.iter().any(|w| w.iter().all(|&v| v == 0.0)));
        let vertices = g.iter().filter(|w| w.iter().all(|&v| v == 0.0 || v == 1.0)).count();
        assert_eq!(vertices, 15);
    }

    #[test]
    fn capped_weight_grid() {
        let g = weight_vector_grid(6, Some(8), 2, 3).unwrap();
        assert_eq!(g.len(), 10);
        assert_eq!(g[0], vec![1.0; 6]);
        let mut sorted = g.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sorted.dedup();
        assert_eq!(sorted.len(), 10);
    }

    #[test]
    fn explicit_values_must_ascend() {
        let g = HyperparameterGrid::Values { values: vec![3.0, 2.0] };
        assert!(g.values(1).is_err());
    }
}
