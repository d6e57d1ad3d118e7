use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use super::{Activation, NetworkSpec, Real};
use crate::error::{Error, Result};

const INFER_TILE_ROWS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics for normalization, dropout active.
    Train,
    /// Running statistics, dropout disabled. Deterministic.
    Infer,
}

/// Affine map `x W + b` with `W` stored `in_width x out_width`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    pub weights: Array2<F>,
    pub bias: Array1<F>,
}

/// Batch normalization parameters.
///
/// `running_var` tracks the EMA of `batch_var + epsilon`, so inference divides
/// by `sqrt(running_var)` directly and an identity-initialized layer (mean 0,
/// variance 1, scale 1, shift 0) passes its input through unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<F> {
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
    pub running_mean: Array1<F>,
    pub running_var: Array1<F>,
}

impl<F: Real> BatchNorm<F> {
    pub fn identity(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }

    #[cfg(test)]
    fn infer_in_place(&self, x: &mut Array2<F>) {
        let inv_std = self.running_var.mapv(|v| F::one() / v.sqrt());
        for mut row in x.rows_mut() {
            Zip::from(&mut row)
                .and(&self.running_mean)
                .and(&inv_std)
                .and(&self.gamma)
                .and(&self.beta)
                .for_each(|x, &m, &s, &g, &b| *x = (*x - m) * s * g + b);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParameters<F> {
    pub dense: Dense<F>,
    pub batch_norm: Option<BatchNorm<F>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients<F> {
    pub weights: Array2<F>,
    pub bias: Array1<F>,
    pub gamma: Option<Array1<F>>,
    pub beta: Option<Array1<F>>,
}

/// Gradients aligned one-to-one with [`Network::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub layers: Vec<LayerGradients<F>>,
}

impl<F: Real> Gradients<F> {
    /// Trainable gradient buffers in the order of [`Network::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[F]> {
        let mut out = Vec::new();
        for g in &self.layers {
            out.push(g.weights.as_slice().expect("standard layout"));
            out.push(g.bias.as_slice().expect("standard layout"));
            if let (Some(gamma), Some(beta)) = (&g.gamma, &g.beta) {
                out.push(gamma.as_slice().expect("standard layout"));
                out.push(beta.as_slice().expect("standard layout"));
            }
        }
        out
    }
}

/// Result of one training-mode forward and backward pass.
#[derive(Debug, Clone)]
pub struct TrainStep<F> {
    pub loss: F,
    pub outputs: Array2<F>,
    pub gradients: Gradients<F>,
    /// Per hidden layer: batch mean and `variance + epsilon`, if normalized.
    pub batch_stats: Vec<Option<(Array1<F>, Array1<F>)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<F> {
    spec: NetworkSpec,
    layers: Vec<LayerParameters<F>>,
}

struct HiddenCache<F> {
    pre_activation: Array2<F>,
    normalized: Option<(Array2<F>, Array1<F>)>,
    mask: Option<Array2<F>>,
}

struct ForwardCache<F> {
    /// Input of every dense layer.
    inputs: Vec<Array2<F>>,
    hidden: Vec<HiddenCache<F>>,
    batch_stats: Vec<Option<(Array1<F>, Array1<F>)>>,
}

/// Mean absolute error over every output element.
pub fn mae<F: Real>(outputs: &ArrayView2<F>, targets: &ArrayView2<F>) -> F {
    let count = F::from_usize(outputs.len()).expect("count fits");
    let total: F = Zip::from(outputs)
        .and(targets)
        .fold(F::zero(), |acc, &o, &t| acc + (o - t).abs());
    total / count
}

fn check_finite<F: Real>(batch: &ArrayView2<F>, context: &'static str) -> Result<()> {
    for (row, values) in batch.rows().into_iter().enumerate() {
        if let Some(column) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context,
                row,
                column,
            });
        }
    }
    Ok(())
}

impl<F: Real> Network<F> {
    /// He-uniform weights (limit `sqrt(6 / fan_in)`), zero biases,
    /// identity batch norm.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(spec.layer_widths.len() - 1);
        for (l, pair) in spec.layer_widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            let dist = Uniform::new(-limit, limit).expect("finite bounds");
            let weights = Array2::from_shape_fn((fan_in, fan_out), |_| {
                F::from_f64_lossy(dist.sample(&mut rng))
            });
            let batch_norm = (l < spec.hidden_count() && spec.batch_norm[l])
                .then(|| BatchNorm::identity(fan_out));
            layers.push(LayerParameters {
                dense: Dense {
                    weights,
                    bias: Array1::zeros(fan_out),
                },
                batch_norm,
            });
        }
        Ok(Self { spec, layers })
    }

    /// All weights and biases zero, batch norm at identity.
    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_widths
            .windows(2)
            .enumerate()
            .map(|(l, pair)| LayerParameters {
                dense: Dense {
                    weights: Array2::zeros((pair[0], pair[1])),
                    bias: Array1::zeros(pair[1]),
                },
                batch_norm: (l < spec.hidden_count() && spec.batch_norm[l])
                    .then(|| BatchNorm::identity(pair[1])),
            })
            .collect();
        Ok(Self { spec, layers })
    }

    /// Rebuilds a network from explicit layers, checking shapes against `spec`.
    pub fn from_layers(spec: NetworkSpec, layers: Vec<LayerParameters<F>>) -> Result<Self> {
        spec.validate()?;
        if layers.len() != spec.layer_widths.len() - 1 {
            return Err(Error::DimensionMismatch {
                context: "layer count",
                expected: spec.layer_widths.len() - 1,
                actual: layers.len(),
            });
        }
        for (l, (layer, pair)) in layers.iter().zip(spec.layer_widths.windows(2)).enumerate() {
            let w = &layer.dense.weights;
            if w.dim() != (pair[0], pair[1]) || layer.dense.bias.len() != pair[1] {
                return Err(Error::DimensionMismatch {
                    context: "dense layer shape",
                    expected: pair[0] * pair[1],
                    actual: w.len(),
                });
            }
            let wants_bn = l < spec.hidden_count() && spec.batch_norm[l];
            match (&layer.batch_norm, wants_bn) {
                (Some(bn), true) => {
                    for v in [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
                        if v.len() != pair[1] {
                            return Err(Error::DimensionMismatch {
                                context: "batch-norm width",
                                expected: pair[1],
                                actual: v.len(),
                            });
                        }
                    }
                }
                (None, false) => {}
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "layer {l}: batch-norm presence disagrees with spec"
                    )))
                }
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[LayerParameters<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParameters<F>] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.spec.input_width()
    }

    /// Trainable parameter buffers: per layer weights, bias, then batch-norm
    /// scale and shift when present.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [F]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.push(layer.dense.weights.as_slice_mut().expect("standard layout"));
            out.push(layer.dense.bias.as_slice_mut().expect("standard layout"));
            if let Some(bn) = &mut layer.batch_norm {
                out.push(bn.gamma.as_slice_mut().expect("standard layout"));
                out.push(bn.beta.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    /// Every stored buffer (trainable and running statistics) in persistence
    /// order: weights, bias, then gamma, beta, running mean, running variance.
    pub fn state_slices(&self) -> Vec<&[F]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.push(layer.dense.weights.as_slice().expect("standard layout"));
            out.push(layer.dense.bias.as_slice().expect("standard layout"));
            if let Some(bn) = &layer.batch_norm {
                out.push(bn.gamma.as_slice().expect("standard layout"));
                out.push(bn.beta.as_slice().expect("standard layout"));
                out.push(bn.running_mean.as_slice().expect("standard layout"));
                out.push(bn.running_var.as_slice().expect("standard layout"));
            }
        }
        out
    }

    pub fn state_slices_mut(&mut self) -> Vec<&mut [F]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.push(layer.dense.weights.as_slice_mut().expect("standard layout"));
            out.push(layer.dense.bias.as_slice_mut().expect("standard layout"));
            if let Some(bn) = &mut layer.batch_norm {
                out.push(bn.gamma.as_slice_mut().expect("standard layout"));
                out.push(bn.beta.as_slice_mut().expect("standard layout"));
                out.push(bn.running_mean.as_slice_mut().expect("standard layout"));
                out.push(bn.running_var.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    fn check_batch(&self, batch: &ArrayView2<F>) -> Result<()> {
        if batch.ncols() != self.input_width() {
            return Err(Error::DimensionMismatch {
                context: "network input width",
                expected: self.input_width(),
                actual: batch.ncols(),
            });
        }
        check_finite(batch, "network input")
    }

    /// Inference-mode forward pass. Pure function of `(self, batch)`; each
    /// output row depends only on its own input row.
    pub fn predict(&self, batch: ArrayView2<F>) -> Result<Array2<F>> {
        self.check_batch(&batch)?;
        Ok(self.predict_unchecked(batch))
    }

    pub(crate) fn predict_unchecked(&self, batch: ArrayView2<F>) -> Array2<F> {
        let mut out = Array2::zeros((batch.nrows(), self.spec.output_width()));
        let prepared: Vec<_> = self
            .layers
            .iter()
            .map(|layer| {
                layer.batch_norm.as_ref().map(|bn| {
                    (bn.running_var.mapv(|v| F::one() / v.sqrt()), bn)
                })
            })
            .collect();
        for (rows, mut dst) in batch
            .axis_chunks_iter(Axis(0), INFER_TILE_ROWS)
            .zip(out.axis_chunks_iter_mut(Axis(0), INFER_TILE_ROWS))
        {
            let tile = self.predict_tile(rows, &prepared);
            dst.assign(&tile);
        }
        out
    }

    /// Rows are pushed through the network in fixed-size tiles so the
    /// intermediate activations stay cache resident. Each output row depends
    /// only on its own input row, whatever the tile composition.
    fn predict_tile(
        &self,
        rows: ArrayView2<F>,
        prepared: &[Option<(Array1<F>, &BatchNorm<F>)>],
    ) -> Array2<F> {
        let last = self.layers.len() - 1;
        let mut x = self.layers[0].dense.weights.view();
        let mut z = rows.dot(&x);
        for (l, layer) in self.layers.iter().enumerate() {
            if l > 0 {
                x = layer.dense.weights.view();
                z = z.dot(&x);
            }
            let relu = l < last && self.spec.activations[l] == Activation::Relu;
            let norm = if l < last { prepared[l].as_ref() } else { None };
            let width = z.ncols();
            let bias = layer.dense.bias.as_slice().expect("standard layout");
            let values = z.as_slice_mut().expect("dot output is contiguous");
            match norm {
                Some((inv_std, bn)) => {
                    let mean = bn.running_mean.as_slice().expect("standard layout");
                    let inv_std = inv_std.as_slice().expect("standard layout");
                    let gamma = bn.gamma.as_slice().expect("standard layout");
                    let beta = bn.beta.as_slice().expect("standard layout");
                    for row in values.chunks_exact_mut(width) {
                        for j in 0..width {
                            let mut a = row[j] + bias[j];
                            if relu {
                                a = a.max(F::zero());
                            }
                            row[j] = (a - mean[j]) * inv_std[j] * gamma[j] + beta[j];
                        }
                    }
                }
                None => {
                    for row in values.chunks_exact_mut(width) {
                        for j in 0..width {
                            let a = row[j] + bias[j];
                            row[j] = if relu { a.max(F::zero()) } else { a };
                        }
                    }
                }
            }
        }
        z
    }

    /// Forward pass in either mode. Train mode samples dropout masks from `rng`
    /// and normalizes with batch statistics; it does not touch running stats.
    pub fn forward<R: Rng>(&self, batch: ArrayView2<F>, mode: Mode, rng: &mut R) -> Result<Array2<F>> {
        match mode {
            Mode::Infer => self.predict(batch),
            Mode::Train => {
                self.check_batch(&batch)?;
                Ok(self.forward_train(batch, rng).0)
            }
        }
    }

    fn forward_train<R: Rng>(&self, batch: ArrayView2<F>, rng: &mut R) -> (Array2<F>, ForwardCache<F>) {
        let last = self.layers.len() - 1;
        let rows = F::from_usize(batch.nrows()).expect("row count fits");
        let eps = F::from_f64_lossy(self.spec.bn_epsilon);
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            hidden: Vec::with_capacity(last),
            batch_stats: Vec::with_capacity(last),
        };
        let mut x = batch.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = x.dot(&layer.dense.weights);
            z += &layer.dense.bias;
            cache.inputs.push(x);
            if l == last {
                x = z;
                break;
            }
            let mut a = if self.spec.activations[l] == Activation::Relu {
                z.mapv(|v| v.max(F::zero()))
            } else {
                z.clone()
            };
            let mut normalized = None;
            let mut stats = None;
            if let Some(bn) = &layer.batch_norm {
                let mean = a.sum_axis(Axis(0)) / rows;
                let centered = &a - &mean;
                let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / rows;
                let var_eps = var.mapv(|v| v + eps);
                let inv_std = var_eps.mapv(|v| F::one() / v.sqrt());
                let xhat = centered * &inv_std;
                a = &xhat * &bn.gamma + &bn.beta;
                normalized = Some((xhat, inv_std));
                stats = Some((mean, var_eps));
            }
            let p = self.spec.dropout[l];
            let mask = (p > 0.0).then(|| {
                let keep = F::from_f64_lossy(1.0 / (1.0 - p));
                Array2::from_shape_fn(a.dim(), |_| {
                    if rng.random::<f64>() < p {
                        F::zero()
                    } else {
                        keep
                    }
                })
            });
            if let Some(m) = &mask {
                a *= m;
            }
            cache.hidden.push(HiddenCache {
                pre_activation: z,
                normalized,
                mask,
            });
            cache.batch_stats.push(stats);
            x = a;
        }
        (x, cache)
    }

    /// Training-mode forward pass followed by backpropagation of the mean
    /// absolute error. The dropout masks drawn for the forward pass are the
    /// ones differentiated through. The subgradient of `|e|` at `e = 0` is 0.
    pub fn train_step<R: Rng>(
        &self,
        batch: ArrayView2<F>,
        targets: ArrayView2<F>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<TrainStep<F>> {
        if mode == Mode::Infer {
            return Err(Error::InvalidArgument(
                "gradients require train mode".into(),
            ));
        }
        self.check_batch(&batch)?;
        if targets.nrows() != batch.nrows() {
            return Err(Error::DimensionMismatch {
                context: "target rows",
                expected: batch.nrows(),
                actual: targets.nrows(),
            });
        }
        if targets.ncols() != self.spec.output_width() {
            return Err(Error::DimensionMismatch {
                context: "target columns",
                expected: self.spec.output_width(),
                actual: targets.ncols(),
            });
        }
        let (outputs, cache) = self.forward_train(batch, rng);
        let loss = mae(&outputs.view(), &targets);

        let count = F::from_usize(outputs.len()).expect("count fits");
        let rows = F::from_usize(batch.nrows()).expect("row count fits");
        let mut grad = Zip::from(&outputs).and(&targets).map_collect(|&o, &t| {
            let e = o - t;
            if e > F::zero() {
                F::one() / count
            } else if e < F::zero() {
                -F::one() / count
            } else {
                F::zero()
            }
        });

        let last = self.layers.len() - 1;
        let mut layer_grads = Vec::with_capacity(self.layers.len());
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let mut gamma_grad = None;
            let mut beta_grad = None;
            if l < last {
                let hc = &cache.hidden[l];
                if let Some(m) = &hc.mask {
                    grad *= m;
                }
                if let (Some(bn), Some((xhat, inv_std))) = (&layer.batch_norm, &hc.normalized) {
                    gamma_grad = Some((&grad * xhat).sum_axis(Axis(0)));
                    beta_grad = Some(grad.sum_axis(Axis(0)));
                    let dxhat = &grad * &bn.gamma;
                    let sum_dxhat = dxhat.sum_axis(Axis(0));
                    let sum_dxhat_xhat = (&dxhat * xhat).sum_axis(Axis(0));
                    grad = (dxhat * rows - &sum_dxhat - xhat * &sum_dxhat_xhat) * inv_std / rows;
                }
                if self.spec.activations[l] == Activation::Relu {
                    Zip::from(&mut grad)
                        .and(&hc.pre_activation)
                        .for_each(|g, &z| {
                            if z <= F::zero() {
                                *g = F::zero();
                            }
                        });
                }
            }
            let input = &cache.inputs[l];
            let weights = input.t().dot(&grad);
            let bias = grad.sum_axis(Axis(0));
            if l > 0 {
                grad = grad.dot(&layer.dense.weights.t());
            }
            layer_grads.push(LayerGradients {
                weights,
                bias,
                gamma: gamma_grad,
                beta: beta_grad,
            });
        }
        layer_grads.reverse();
        Ok(TrainStep {
            loss,
            outputs,
            gradients: Gradients {
                layers: layer_grads,
            },
            batch_stats: cache.batch_stats,
        })
    }

    /// Folds batch statistics into the running estimates using the network's
    /// momentum.
    pub fn update_running_stats(&mut self, stats: &[Option<(Array1<F>, Array1<F>)>]) {
        let momentum = F::from_f64_lossy(self.spec.bn_momentum);
        let rest = F::one() - momentum;
        for (layer, stat) in self.layers.iter_mut().zip(stats) {
            if let (Some(bn), Some((mean, var))) = (&mut layer.batch_norm, stat) {
                Zip::from(&mut bn.running_mean)
                    .and(mean)
                    .for_each(|r, &m| *r = *r * momentum + m * rest);
                Zip::from(&mut bn.running_var)
                    .and(var)
                    .for_each(|r, &v| *r = *r * momentum + v * rest);
            }
        }
    }
}
