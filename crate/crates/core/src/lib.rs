//! Evolutionary GAN training on 2D Gaussian mixtures.
//!
//! A population of generators is evolved against a single discriminator.
//! Every step the discriminator is trained, each parent produces one child per
//! mutation objective, children are scored on sample quality and diversity,
//! and the best survive.

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod evolution;
pub mod metrics;
pub mod nets;

pub use autodiff::{Array, GradientMap, Graph, Var};
pub use checkpoint::Checkpoint;
pub use data::{DataSource, GaussianMixture, NoiseSampler, Stream};
pub use error::{Error, Result};
pub use evolution::{
    baseline_train, train, EvolutionStepLog, FitnessScore, Individual, Mutation, RunArtifacts,
    TrainingConfig,
};
pub use nets::{MlpSpec, Network, ParamVector};
