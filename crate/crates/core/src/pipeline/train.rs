use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::corpus::TrainingCorpus;
use crate::error::{Error, Result};
use crate::model::NetworkModel;
use crate::nn::{fit_split, FitConfig, Network, NetworkSpec};

/// Validation rows: `round(fraction * size)` from every grid slot.
pub fn stratified_validation(corpus: &TrainingCorpus, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let slots = corpus.slot.iter().copied().max().map_or(0, |m| m + 1);
    let mut by_slot: Vec<Vec<usize>> = vec![Vec::new(); slots];
    for (row, &s) in corpus.slot.iter().enumerate() {
        by_slot[s].push(row);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7A11_DA7E);
    let mut train = Vec::with_capacity(corpus.len());
    let mut val = Vec::new();
    for mut rows in by_slot {
        let take = ((rows.len() as f64) * fraction).round() as usize;
        let take = take.min(rows.len().saturating_sub(1));
        rows.shuffle(&mut rng);
        val.extend_from_slice(&rows[..take]);
        train.extend_from_slice(&rows[take..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Trains a network on the corpus with a per-slot validation split for early
/// stopping. The network is initialized from `fit.seed`.
pub fn train_model(corpus: &TrainingCorpus, spec: NetworkSpec, fit: &FitConfig) -> Result<NetworkModel> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("training corpus is empty".into()));
    }
    if spec.input_width() != corpus.inputs.ncols() {
        return Err(Error::DimensionMismatch {
            context: "network input width vs corpus",
            expected: corpus.inputs.ncols(),
            actual: spec.input_width(),
        });
    }
    let network = Network::<f32>::new(spec, fit.seed)?;
    let (train, val) = stratified_validation(corpus, fit.validation_fraction, fit.seed);
    let tx = corpus.inputs.select(Axis(0), &train);
    let ty = corpus.targets.select(Axis(0), &train);
    log::info!(
        "training on {} rows ({} validation), {} parameters",
        train.len(),
        val.len(),
        network.spec().parameter_count()
    );
    let fitted = if val.is_empty() {
        fit_split(network, tx.view(), ty.view(), None, fit)?
    } else {
        let vx = corpus.inputs.select(Axis(0), &val);
        let vy = corpus.targets.select(Axis(0), &val);
        fit_split(network, tx.view(), ty.view(), Some((vx.view(), vy.view())), fit)?
    };
    Ok(NetworkModel {
        network: fitted.network,
        normalization: corpus.normalization.clone(),
        provenance: corpus.provenance.clone(),
        fit: fit.clone(),
        history: fitted.history,
        best_epoch: fitted.best_epoch,
    })
}
