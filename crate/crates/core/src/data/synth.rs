use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Dataset;
use crate::error::{Error, Result};

/// Isotropic Gaussian blobs around random centers. Centers are at least
/// `6 * spread` apart; labels are cluster ids; rows are grouped by cluster.
pub fn synth_blobs(
    clusters: usize,
    per_cluster: usize,
    dims: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if clusters == 0 || dims == 0 || clusters * per_cluster < 2 {
        return Err(Error::InvalidArgument(format!(
            "blobs need clusters, dims >= 1 and at least 2 points (got {clusters} x {per_cluster} in {dims}-D)"
        )));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::InvalidArgument(format!("spread {spread} must be finite and >= 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = spread.max(1e-3);
    let min_sep = 6.0 * spread;
    let mut half_width = 5.0 * unit * clusters as f64;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(clusters);
    let mut attempts = 0;
    while centers.len() < clusters {
        let c: Vec<f64> = (0..dims).map(|_| rng.random_range(-half_width..=half_width)).collect();
        let far = centers.iter().all(|o| {
            let d2: f64 = o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            d2.sqrt() >= min_sep && d2 > 0.0
        });
        if far {
            centers.push(c);
        } else {
            attempts += 1;
            if attempts % 100 == 0 {
                half_width *= 1.5;
            }
        }
    }
    let n = clusters * per_cluster;
    let mut features = Array2::zeros((n, dims));
    let mut labels = Vec::with_capacity(n);
    for (k, center) in centers.iter().enumerate() {
        for p in 0..per_cluster {
            let row = k * per_cluster + p;
            for (j, c) in center.iter().enumerate() {
                let z: f64 = StandardNormal.sample(&mut rng);
                features[[row, j]] = c + spread * z;
            }
            labels.push(k as i64);
        }
    }
    Dataset::new(features, Some(labels), None, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_labels() {
        let d = synth_blobs(3, 100, 10, 1.0, 4).unwrap();
        assert_eq!((d.len(), d.dims()), (300, 10));
        let mut l = d.labels().unwrap().to_vec();
        l.dedup();
        assert_eq!(l, vec![0, 1, 2]);
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(synth_blobs(2, 5, 3, 1.0, 9).unwrap(), synth_blobs(2, 5, 3, 1.0, 9).unwrap());
        assert_ne!(synth_blobs(2, 5, 3, 1.0, 9).unwrap(), synth_blobs(2, 5, 3, 1.0, 10).unwrap());
    }

    #[test]
    fn zero_spread_collapses_clusters() {
        let d = synth_blobs(2, 10, 4, 0.0, 1).unwrap();
        let f = d.features();
        for r in 1..10 {
            assert_eq!(f.row(r), f.row(0));
        }
        assert_ne!(f.row(10), f.row(0));
    }

    #[test]
    fn centers_are_separated() {
        let spread = 2.0;
        let d = synth_blobs(4, 200, 3, spread, 2).unwrap();
        let f = d.features();
        let means: Vec<Vec<f64>> = (0..4)
            .map(|k| (0..3).map(|j| f.column(j).iter().skip(k * 200).take(200).sum::<f64>() / 200.0).collect())
            .collect();
        for a in 0..4 {
            for b in (a + 1)..4 {
                let d: f64 = (0..3).map(|j| (means[a][j] - means[b][j]).powi(2)).sum::<f64>().sqrt();
                assert!(d > 5.0 * spread, "{d}");
            }
        }
    }
}
