//! Training-set construction and training: subset sampling, hyperparameter
//! grids, ground-truth chains, normalization and stacking.

mod corpus;
mod grid;
mod subset;
mod train;

pub use corpus::{
    build_corpus, corpus_from_archive, project_chain, Normalization, Provenance, RangeViolation,
    TrainingCorpus,
};
pub use grid::{sample_hyperparameter_grid, weight_vector_grid, HyperparameterGrid};
pub use subset::sample_training_subset;
pub use train::{stratified_validation, train_model};
