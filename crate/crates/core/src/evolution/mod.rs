//! Evolutionary training of a generator population against one discriminator.

mod fitness;
mod objectives;
mod runlog;
mod trainer;

pub use fitness::{
    diversity_fitness, evaluate, quality_fitness, select, Candidate, FitnessScore, LOG_CAP,
};
pub use objectives::{mutation_loss, mutation_objective, DiscriminatorLoss, LossGraph, Mutation};
pub use trainer::{
    baseline_train, produce_child, train, update_discriminator, BaselineStepLog, ChildLog,
    Environment, EvolutionStepLog, Individual, Lineage, RunArtifacts, RunError, RunObserver,
    Samplers, Trainer, TrainingConfig,
};
