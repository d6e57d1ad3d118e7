use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{mae, AdamConfig, AdamState, Mode, Network, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// Share of rows held out for early stopping when [`fit`] does the split.
    pub validation_fraction: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 120,
            validation_fraction: 0.1,
            patience: 10,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    /// 0 is the evaluation before any update.
    pub epoch: usize,
    pub train: f64,
    pub validation: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Fitted<F> {
    /// Snapshot with the lowest monitored loss.
    pub network: Network<F>,
    pub history: Vec<EpochLoss>,
    pub best_epoch: usize,
}

/// Trains on a random `validation_fraction` split of `(inputs, targets)`.
pub fn fit<F: Real>(
    network: Network<F>,
    inputs: ArrayView2<F>,
    targets: ArrayView2<F>,
    config: &FitConfig,
) -> Result<Fitted<F>> {
    if inputs.nrows() != targets.nrows() {
        return Err(Error::DimensionMismatch {
            context: "fit targets",
            expected: inputs.nrows(),
            actual: targets.nrows(),
        });
    }
    let n = inputs.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_5911));
    let n_val = ((n as f64) * config.validation_fraction).round() as usize;
    let n_val = n_val.min(n.saturating_sub(1));
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let mut val_idx = val_idx.to_vec();
    train_idx.sort_unstable();
    val_idx.sort_unstable();

    let tx = inputs.select(Axis(0), &train_idx);
    let ty = targets.select(Axis(0), &train_idx);
    if val_idx.is_empty() {
        fit_split(network, tx.view(), ty.view(), None, config)
    } else {
        let vx = inputs.select(Axis(0), &val_idx);
        let vy = targets.select(Axis(0), &val_idx);
        fit_split(
            network,
            tx.view(),
            ty.view(),
            Some((vx.view(), vy.view())),
            config,
        )
    }
}

fn eval_mae<F: Real>(net: &Network<F>, x: ArrayView2<F>, y: ArrayView2<F>) -> Result<f64> {
    let pred = net.predict(x)?;
    Ok(mae(&pred.view(), &y).to_f64().unwrap_or(f64::NAN))
}

/// Mini-batch training with an explicit validation set. Rows are reshuffled
/// every epoch; the returned network is the snapshot with the lowest
/// validation loss (training loss when no validation set is given), with its
/// running batch-norm statistics as they were at that epoch.
pub fn fit_split<F: Real>(
    mut network: Network<F>,
    train_x: ArrayView2<F>,
    train_y: ArrayView2<F>,
    validation: Option<(ArrayView2<F>, ArrayView2<F>)>,
    config: &FitConfig,
) -> Result<Fitted<F>> {
    let n = train_x.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("no training rows".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be positive".into()));
    }
    if train_y.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "fit targets",
            expected: n,
            actual: train_y.nrows(),
        });
    }

    let monitor = |net: &Network<F>, train: f64| -> Result<(Option<f64>, f64)> {
        match &validation {
            Some((vx, vy)) => {
                let v = eval_mae(net, vx.view(), vy.view())?;
                Ok((Some(v), v))
            }
            None => Ok((None, train)),
        }
    };

    let initial_train = eval_mae(&network, train_x, train_y)?;
    let (initial_val, initial_monitored) = monitor(&network, initial_train)?;
    let mut history = vec![EpochLoss {
        epoch: 0,
        train: initial_train,
        validation: initial_val,
    }];
    let mut best = network.clone();
    let mut best_loss = initial_monitored;
    let mut best_epoch = 0;
    let mut stale = 0;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::<F>::new(config.adam);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for (batch_index, chunk) in order.chunks(config.batch_size).enumerate() {
            let bx: Array2<F> = train_x.select(Axis(0), chunk);
            let by: Array2<F> = train_y.select(Axis(0), chunk);
            let step = network.train_step(bx.view(), by.view(), Mode::Train, &mut rng)?;
            let loss = step.loss.to_f64().unwrap_or(f64::NAN);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_index,
                });
            }
            weighted += loss * chunk.len() as f64;
            let grads = step.gradients.slices();
            adam.apply(&mut network.param_slices_mut(), &grads)?;
            network.update_running_stats(&step.batch_stats);
        }
        let train = weighted / n as f64;
        let (val, monitored) = monitor(&network, train)?;
        history.push(EpochLoss {
            epoch,
            train,
            validation: val,
        });
        if !monitored.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        if monitored < best_loss {
            best_loss = monitored;
            best = network.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                log::debug!("early stop at epoch {epoch}, best epoch {best_epoch}");
                break;
            }
        }
    }

    Ok(Fitted {
        network: best,
        history,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetworkSpec;

    fn linear_problem(n: usize) -> (Array2<f32>, Array2<f32>) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        use rand::Rng;
        let x = Array2::from_shape_fn((n, 3), |_| rng.random::<f32>() * 2.0 - 1.0);
        let y = Array2::from_shape_fn((n, 2), |(i, j)| {
            let r = x.row(i);
            if j == 0 {
                0.5 * r[0] - 0.3 * r[1] + 0.2 * r[2] + 0.1
            } else {
                -0.2 * r[0] + 0.4 * r[1] + 0.6 * r[2] - 0.3
            }
        });
        (x, y)
    }

    #[test]
    fn zero_epochs_returns_initial_network() {
        let (x, y) = linear_problem(40);
        let net = Network::<f32>::new(NetworkSpec::new(3, &[8], true, 0.0), 3).unwrap();
        let cfg = FitConfig {
            epochs: 0,
            ..FitConfig::default()
        };
        let fitted = fit(net.clone(), x.view(), y.view(), &cfg).unwrap();
        assert_eq!(fitted.network, net);
        assert_eq!(fitted.history.len(), 1);
        assert_eq!(fitted.history[0].epoch, 0);
    }

    #[test]
    fn same_seed_gives_identical_history() {
        let (x, y) = linear_problem(64);
        let spec = NetworkSpec::new(3, &[16, 16], true, 0.25);
        let cfg = FitConfig {
            epochs: 5,
            seed: 5,
            ..FitConfig::default()
        };
        let a = fit(Network::<f32>::new(spec.clone(), 1).unwrap(), x.view(), y.view(), &cfg).unwrap();
        let b = fit(Network::<f32>::new(spec, 1).unwrap(), x.view(), y.view(), &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.network, b.network);
    }

    #[test]
    fn learns_a_linear_map() {
        let (x, y) = linear_problem(200);
        let spec = NetworkSpec::new(3, &[16], false, 0.0);
        let cfg = FitConfig {
            epochs: 200,
            patience: 200,
            seed: 2,
            ..FitConfig::default()
        };
        let fitted = fit(Network::<f32>::new(spec, 2).unwrap(), x.view(), y.view(), &cfg).unwrap();
        let pred = fitted.network.predict(x.view()).unwrap();
        let err = mae(&pred.view(), &y.view()) as f64;
        let mean = y.mean().unwrap() as f64;
        let std = (y.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
        assert!(err < 0.05 * std, "mae {err} vs target std {std}");
    }

    #[test]
    fn non_finite_targets_abort_with_batch_index() {
        let (x, mut y) = linear_problem(64);
        y[[40, 1]] = f32::INFINITY;
        let net = Network::<f32>::new(NetworkSpec::new(3, &[8], false, 0.0), 0).unwrap();
        let cfg = FitConfig {
            epochs: 3,
            validation_fraction: 0.0,
            batch_size: 64,
            ..FitConfig::default()
        };
        // initial evaluation is already infinite, first training batch aborts
        let err = fit(net, x.view(), y.view(), &cfg).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 1, batch: 0 }), "{err:?}");
    }
}
