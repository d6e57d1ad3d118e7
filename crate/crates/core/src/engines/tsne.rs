//! Exact (dense) t-SNE.
//!
//! Per-point Gaussian bandwidths are calibrated to the requested perplexity,
//! the symmetrized affinities are matched by a Student-t kernel in 2-D, and
//! the KL divergence is minimized by gradient descent with momentum, per-
//! coordinate gains and early exaggeration.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{squared_distances, Embedding2D, EngineKind, HyperValue};
use crate::error::{Error, Result};

const KL_CHECK_INTERVAL: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub iterations: usize,
    pub exaggeration: f64,
    pub exaggeration_iterations: usize,
    /// Whether runs started from a provided layout also get early
    /// exaggeration. Off by default: the provided layout already has its
    /// clusters formed and exaggeration would mostly scramble it.
    pub exaggerate_provided_init: bool,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    /// `None` picks `N / 12` clamped to `[50, 200]`.
    pub learning_rate: Option<f64>,
    pub min_gain: f64,
    pub perplexity_tolerance: f64,
    pub calibration_max_iter: usize,
    /// Dense affinities are `O(N^2)` in memory; larger inputs are refused.
    pub max_points: usize,
    /// Standard deviation of the random Gaussian start.
    pub init_std: f64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            exaggeration: 12.0,
            exaggeration_iterations: 250,
            exaggerate_provided_init: false,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            learning_rate: None,
            min_gain: 0.01,
            perplexity_tolerance: 1e-5,
            calibration_max_iter: 200,
            max_points: 5000,
            init_std: 1e-4,
        }
    }
}

/// Outcome of the bandwidth search for one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// Precision `1 / (2 sigma^2)`.
    pub beta: f64,
    pub sigma: f64,
    /// Conditional neighbor probabilities, same order as the input row.
    pub probabilities: Vec<f64>,
    /// Achieved perplexity `2^H`.
    pub perplexity: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn conditional(shifted: &[f64], beta: f64, out: &mut [f64]) -> f64 {
    let mut z = 0.0;
    for (p, &s) in out.iter_mut().zip(shifted) {
        *p = (-beta * s).exp();
        z += *p;
    }
    let mut weighted = 0.0;
    for (p, &s) in out.iter_mut().zip(shifted) {
        *p /= z;
        weighted += *p * s;
    }
    // Entropy in nats.
    z.ln() + beta * weighted
}

/// Finds the Gaussian bandwidth whose conditional distribution over the given
/// neighbors has perplexity `target`, by bisection on the precision.
///
/// When the target cannot be reached (equidistant neighbors fix the entropy
/// at `log2(len)`), the search stops after `max_iter` steps and reports the
/// residual with `converged = false`.
pub fn perplexity_calibration(
    squared_distances: &[f64],
    target: f64,
    tolerance: f64,
    max_iter: usize,
) -> Result<Calibration> {
    let len = squared_distances.len();
    if len < 2 {
        return Err(Error::InvalidArgument(format!(
            "perplexity calibration needs at least 2 neighbors, got {len}"
        )));
    }
    if !(target > 0.0 && target <= len as f64) {
        return Err(Error::InvalidHyperparameter(format!(
            "perplexity {target} outside (0, {len}]"
        )));
    }
    if squared_distances.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::InvalidData(
            "squared distances must be finite and non-negative".into(),
        ));
    }
    if squared_distances.iter().all(|&d| d == 0.0) {
        return Err(Error::InvalidData(
            "all neighbor distances are zero (duplicate points)".into(),
        ));
    }

    let min = squared_distances.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = squared_distances.iter().map(|d| d - min).collect();
    let mean_shift = shifted.iter().sum::<f64>() / len as f64;
    let target_entropy = target.ln();

    let mut beta = if mean_shift > 0.0 { 1.0 / mean_shift } else { 1.0 };
    let mut lo = 0.0f64;
    let mut hi = f64::INFINITY;
    let mut probabilities = vec![0.0; len];
    let mut entropy = conditional(&shifted, beta, &mut probabilities);
    let mut iterations = 0;
    let mut converged = (entropy.exp() - target).abs() <= tolerance;

    while !converged && iterations < max_iter {
        if entropy > target_entropy {
            // Too flat: sharpen.
            lo = beta;
            beta = if hi.is_finite() { 0.5 * (lo + hi) } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = 0.5 * (lo + hi);
        }
        entropy = conditional(&shifted, beta, &mut probabilities);
        iterations += 1;
        converged = (entropy.exp() - target).abs() <= tolerance;
    }

    let perplexity = entropy.exp();
    Ok(Calibration {
        beta,
        sigma: (0.5 / beta).sqrt(),
        probabilities,
        perplexity,
        residual: (perplexity - target).abs(),
        iterations,
        converged,
    })
}

/// Symmetric joint affinities `P = (P_cond + P_cond^T) / 2N`, row-major
/// `N x N` with a zero diagonal.
pub fn joint_probabilities(
    data: ArrayView2<f64>,
    perplexity: f64,
    config: &TsneConfig,
) -> Result<Array2<f64>> {
    let n = data.nrows();
    let sq = squared_distances(data);
    let mut cond = Array2::<f64>::zeros((n, n));
    let mut row = Vec::with_capacity(n.saturating_sub(1));
    let mut unconverged = 0usize;
    for i in 0..n {
        row.clear();
        row.extend((0..n).filter(|&j| j != i).map(|j| sq[[i, j]]));
        let cal = perplexity_calibration(
            &row,
            perplexity,
            config.perplexity_tolerance,
            config.calibration_max_iter,
        )?;
        if !cal.converged {
            unconverged += 1;
        }
        let mut k = 0;
        for j in 0..n {
            if j != i {
                cond[[i, j]] = cal.probabilities[k];
                k += 1;
            }
        }
    }
    if unconverged > 0 {
        log::warn!("perplexity calibration did not converge for {unconverged} of {n} points");
    }
    let scale = 1.0 / (2.0 * n as f64);
    let mut p = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            p[[i, j]] = (cond[[i, j]] + cond[[j, i]]) * scale;
        }
    }
    Ok(p)
}

/// Fills `num` with Student-t kernel values `1 / (1 + |y_i - y_j|^2)` (zero
/// diagonal) and returns their total.
fn student_kernel(y: &[[f64; 2]], num: &mut [f64]) -> f64 {
    let n = y.len();
    let mut total = 0.0;
    for i in 0..n {
        num[i * n + i] = 0.0;
        let yi = y[i];
        for j in (i + 1)..n {
            let dx = yi[0] - y[j][0];
            let dy = yi[1] - y[j][1];
            let q = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = q;
            num[j * n + i] = q;
            total += 2.0 * q;
        }
    }
    total
}

/// `KL(P || Q)` for a layout.
pub fn kl_divergence(p: &Array2<f64>, coords: ArrayView2<f64>) -> f64 {
    let n = coords.nrows();
    let y: Vec<[f64; 2]> = coords.rows().into_iter().map(|r| [r[0], r[1]]).collect();
    let mut num = vec![0.0; n * n];
    let z = student_kernel(&y, &mut num);
    kl_from_kernel(p.as_slice().expect("standard layout"), &num, z)
}

fn kl_from_kernel(p: &[f64], num: &[f64], z: f64) -> f64 {
    let mut kl = 0.0;
    for (&pij, &nij) in p.iter().zip(num) {
        if pij > 0.0 {
            let q = (nij / z).max(f64::MIN_POSITIVE);
            kl += pij * (pij / q).ln();
        }
    }
    kl
}

fn random_init(n: usize, std: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).expect("positive std");
    Array2::from_shape_fn((n, 2), |_| normal.sample(&mut rng))
}

/// Runs exact t-SNE. With `init` the optimization starts from that layout;
/// otherwise from a seeded Gaussian. Deterministic for fixed inputs.
pub fn tsne_project(
    data: ArrayView2<f64>,
    perplexity: f64,
    init: Option<ArrayView2<f64>>,
    seed: u64,
    config: &TsneConfig,
) -> Result<Embedding2D> {
    let n = data.nrows();
    if n > config.max_points {
        return Err(Error::InvalidArgument(format!(
            "exact t-SNE is limited to {} points, got {n}",
            config.max_points
        )));
    }
    if !(perplexity > 0.0 && perplexity < n as f64 - 1.0) {
        return Err(Error::InvalidHyperparameter(format!(
            "perplexity {perplexity} outside (0, {})",
            n as f64 - 1.0
        )));
    }
    let start = match init {
        Some(init) => {
            if init.dim() != (n, 2) {
                return Err(Error::DimensionMismatch {
                    context: "t-SNE initial layout rows",
                    expected: n,
                    actual: init.nrows(),
                });
            }
            if let Some(pos) = init.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: "t-SNE initial layout",
                    row: pos / 2,
                    column: pos % 2,
                });
            }
            init.to_owned()
        }
        None => random_init(n, config.init_std, seed),
    };

    let p = joint_probabilities(data, perplexity, config)?;
    let p_flat = p.as_slice().expect("standard layout");

    let mut y: Vec<[f64; 2]> = start.rows().into_iter().map(|r| [r[0], r[1]]).collect();
    let mut num = vec![0.0; n * n];

    if config.iterations == 0 {
        let z = student_kernel(&y, &mut num);
        return Ok(Embedding2D {
            coords: start,
            engine: EngineKind::Tsne,
            h: HyperValue::scalar(perplexity),
            seed,
            objective: kl_from_kernel(p_flat, &num, z),
            degenerate: false,
        });
    }

    let learning_rate = config
        .learning_rate
        .unwrap_or_else(|| (n as f64 / 12.0).clamp(50.0, 200.0));
    let exaggeration_iterations = if init.is_some() && !config.exaggerate_provided_init {
        0
    } else {
        config.exaggeration_iterations
    };
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut grad = vec![[0.0f64; 2]; n];

    // The returned layout is the lowest-KL iterate among the start, every
    // KL_CHECK_INTERVAL-th unexaggerated iterate and the last one.
    let mut best_y = y.clone();
    let mut best_kl = f64::INFINITY;

    for it in 0..config.iterations {
        let exaggeration = if it < exaggeration_iterations {
            config.exaggeration
        } else {
            1.0
        };
        let momentum = if it < config.momentum_switch {
            config.initial_momentum
        } else {
            config.final_momentum
        };

        let z = student_kernel(&y, &mut num);
        if it == 0 || (exaggeration == 1.0 && it % KL_CHECK_INTERVAL == 0) {
            let kl = kl_from_kernel(p_flat, &num, z);
            if kl < best_kl {
                best_kl = kl;
                best_y.clone_from(&y);
            }
        }
        let inv_z = 1.0 / z;
        for i in 0..n {
            let row_p = &p_flat[i * n..(i + 1) * n];
            let row_q = &num[i * n..(i + 1) * n];
            let yi = y[i];
            let (mut gx, mut gy) = (0.0, 0.0);
            for j in 0..n {
                let q = row_q[j];
                let mult = (exaggeration * row_p[j] - q * inv_z) * q;
                gx += mult * (yi[0] - y[j][0]);
                gy += mult * (yi[1] - y[j][1]);
            }
            grad[i] = [4.0 * gx, 4.0 * gy];
        }

        let mut mean = [0.0; 2];
        for i in 0..n {
            for d in 0..2 {
                let g = grad[i][d];
                let gain = &mut gains[i][d];
                *gain = if (g > 0.0) != (update[i][d] > 0.0) {
                    *gain + 0.2
                } else {
                    *gain * 0.8
                };
                if *gain < config.min_gain {
                    *gain = config.min_gain;
                }
                update[i][d] = momentum * update[i][d] - learning_rate * *gain * g;
                y[i][d] += update[i][d];
                mean[d] += y[i][d];
            }
        }
        mean[0] /= n as f64;
        mean[1] /= n as f64;
        for yi in &mut y {
            yi[0] -= mean[0];
            yi[1] -= mean[1];
            if !(yi[0].is_finite() && yi[1].is_finite()) {
                return Err(Error::Diverged {
                    iteration: it,
                    detail: "non-finite t-SNE coordinate".into(),
                });
            }
        }
    }

    let z = student_kernel(&y, &mut num);
    let mut objective = kl_from_kernel(p_flat, &num, z);
    if best_kl < objective {
        log::debug!("t-SNE: keeping earlier iterate with KL {best_kl} over final {objective}");
        objective = best_kl;
        y = best_y;
    }
    let coords = Array2::from_shape_fn((n, 2), |(i, d)| y[i][d]);
    Ok(Embedding2D {
        coords,
        engine: EngineKind::Tsne,
        h: HyperValue::scalar(perplexity),
        seed,
        objective,
        degenerate: false,
    })
}
