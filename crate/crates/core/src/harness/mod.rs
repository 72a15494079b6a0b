//! Architecture catalog, experiment configuration, pre-training and the
//! batch runner.

mod catalog;
mod config;
mod pretrain;
mod runner;

pub use catalog::{architecture, catalog, catalog_entry, catalog_names, CatalogEntry, ConvParams, CATALOG};
pub use config::{
    class_indices, ArchitectureSelection, BaselineConfig, DatasetConfig, DatasetSource, ExperimentConfig, HybridConfig,
    InlineArchitecture, OutputConfig, PretrainConfig, WeightsConfig, DATASET_ENV, DEFAULT_BATCH,
};
pub use pretrain::{mean_loss, pretrain, select_training_data, EpochLoss, PretrainOutcome};
pub use runner::{
    derive_seed, initial_weights, load_weights, pretrain_architecture, run_experiment, save_weights, training_pool,
    write_loss_curve, ExperimentOutcome,
};
