//! The training loop: discriminator updates, variation, evaluation and
//! selection, plus conventional single-objective training for comparison.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::fitness::{self, Candidate, FitnessScore};
use super::objectives::{mutation_loss, DiscriminatorLoss, Mutation};
use crate::autodiff::{adam_step, AdamConfig, AdamState, Array};
use crate::checkpoint::Checkpoint;
use crate::data::{stream, DataSource, GaussianMixture, NoiseSampler, Stream};
use crate::error::{Error, Result};
use crate::nets::{gen_forward, MlpSpec, Network};

/// Hyper-parameters of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub adam: AdamConfig,
    /// Discriminator updates per step.
    pub n_disc: usize,
    /// Survivors kept per step.
    pub n_parents: usize,
    /// Mutations applied to every parent, in evaluation order.
    pub mutations: Vec<Mutation>,
    /// Batch size `m`.
    pub batch_size: usize,
    /// Weight of the diversity score.
    pub gamma: f64,
    pub iterations: u64,
    pub seed: u64,
    pub data: DataSource,
    pub generator: MlpSpec,
    pub discriminator: MlpSpec,
    /// Emit a checkpoint after every this many steps.
    pub checkpoint_every: Option<u64>,
}

impl TrainingConfig {
    /// Defaults: Adam(2e-4, 0.5, 0.99), two discriminator steps, one parent,
    /// all three mutations, batches of 16, γ = 0.5, and 3×128 leaky-rectifier
    /// networks with 2D noise.
    pub fn new(data: DataSource) -> Self {
        TrainingConfig {
            adam: AdamConfig::default(),
            n_disc: 2,
            n_parents: 1,
            mutations: Mutation::ALL.to_vec(),
            batch_size: 16,
            gamma: 0.5,
            iterations: 0,
            seed: 0,
            data,
            generator: MlpSpec::generator(2, 2, 128, 3),
            discriminator: MlpSpec::discriminator(2, 128, 3),
            checkpoint_every: None,
        }
    }

    pub fn ring8() -> Self {
        TrainingConfig::new(DataSource::Mixture(GaussianMixture::ring8()))
    }

    pub fn grid25() -> Self {
        TrainingConfig::new(DataSource::Mixture(GaussianMixture::grid25()))
    }

    pub fn n_mutations(&self) -> usize {
        self.mutations.len()
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.adam;
        if !(a.lr > 0.0 && a.lr.is_finite()) {
            return Err(Error::config("adam.lr", "must be positive"));
        }
        for (key, b) in [("adam.beta1", a.beta1), ("adam.beta2", a.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(key, "must lie in [0, 1)"));
            }
        }
        if !(a.eps >= 0.0 && a.eps.is_finite()) {
            return Err(Error::config("adam.eps", "must be non-negative"));
        }
        if self.n_disc == 0 {
            return Err(Error::config("train.n_disc", "must be at least 1"));
        }
        if self.n_parents == 0 {
            return Err(Error::config("train.n_parents", "must be at least 1"));
        }
        if self.mutations.is_empty() {
            return Err(Error::config("train.mutations", "at least one mutation is required"));
        }
        for (i, m) in self.mutations.iter().enumerate() {
            if self.mutations[..i].contains(m) {
                return Err(Error::config("train.mutations", format!("`{m}` listed twice")));
            }
        }
        if self.batch_size == 0 || self.batch_size % self.n_parents != 0 {
            return Err(Error::config(
                "train.batch_size",
                format!(
                    "{} is not a positive multiple of n_parents = {}",
                    self.batch_size, self.n_parents
                ),
            ));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config("train.gamma", "must be a non-negative real"));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::config("run.checkpoint_every", "must be at least 1"));
        }
        self.generator
            .validate_generator()
            .map_err(|e| Error::config("generator", e.to_string()))?;
        self.discriminator
            .validate_discriminator()
            .map_err(|e| Error::config("discriminator", e.to_string()))?;
        if self.generator.output_dim != 2 || self.discriminator.input_dim != 2 {
            return Err(Error::config("generator", "networks must produce and consume 2D points"));
        }
        Ok(())
    }
}

/// Where an individual came from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lineage {
    pub parent: usize,
    pub mutation: Mutation,
    pub step: u64,
}

/// One generator of the population with its optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub generator: Network,
    pub adam: AdamState,
    pub lineage: Option<Lineage>,
}

impl Individual {
    pub fn new(generator: Network) -> Self {
        let adam = AdamState::new(generator.params().tensors());
        Individual { generator, adam, lineage: None }
    }
}

/// The discriminator and its optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    pub discriminator: Network,
    pub adam: AdamState,
}

impl Environment {
    pub fn new(discriminator: Network) -> Self {
        let adam = AdamState::new(discriminator.params().tensors());
        Environment { discriminator, adam }
    }
}

/// Random sources consumed by a run, one per sub-stream.
#[derive(Clone, Debug)]
pub struct Samplers {
    pub data: DataSource,
    pub noise: NoiseSampler,
    pub data_rng: ChaCha8Rng,
    pub noise_rng: ChaCha8Rng,
    pub fitness_rng: ChaCha8Rng,
}

impl Samplers {
    pub fn new(config: &TrainingConfig) -> Result<Self> {
        Ok(Samplers {
            data: config.data.clone(),
            noise: NoiseSampler::new(config.generator.input_dim)?,
            data_rng: stream(config.seed, Stream::Data),
            noise_rng: stream(config.seed, Stream::Noise),
            fitness_rng: stream(config.seed, Stream::Fitness),
        })
    }
}

/// Runs `n_disc` Adam steps on the discriminator loss. Each step uses a fresh
/// real batch of `m` points and `m / n_p` fresh fakes from every parent.
///
/// Returns the objective value seen by each step, before its update.
pub fn update_discriminator(
    env: &mut Environment,
    parents: &[Individual],
    samplers: &mut Samplers,
    config: &TrainingConfig,
) -> Result<Vec<f64>> {
    if parents.is_empty() {
        return Err(Error::Usage("discriminator update without parents".into()));
    }
    let m = config.batch_size;
    let per_parent = m / parents.len();
    let mut objectives = Vec::with_capacity(config.n_disc);
    for _ in 0..config.n_disc {
        let real = samplers.data.sample(m, &mut samplers.data_rng)?;
        let mut fakes = Vec::with_capacity(parents.len());
        for p in parents {
            let z = samplers.noise.sample(per_parent, &mut samplers.noise_rng)?;
            fakes.push(gen_forward(&p.generator, &z)?);
        }
        let loss = DiscriminatorLoss::new(&env.discriminator, &real, &fakes)?;
        objectives.push(loss.objective());
        let grads = loss.loss().gradients()?;
        adam_step(env.discriminator.params_mut().tensors_mut(), &grads, &mut env.adam, &config.adam)?;
    }
    Ok(objectives)
}

/// A copy of `parent` advanced by one Adam step on the `tag` objective.
pub fn produce_child(
    parent: &Individual,
    parent_index: usize,
    tag: Mutation,
    disc: &Network,
    z: &Array,
    adam: &AdamConfig,
    step: u64,
) -> Result<(Individual, f64)> {
    let loss = mutation_loss(tag, disc, &parent.generator, z)?;
    let grads = loss.gradients()?;
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!("non-finite gradient in the {tag} mutation")));
    }
    let mut child = parent.clone();
    adam_step(child.generator.params_mut().tensors_mut(), &grads, &mut child.adam, adam)
        .map_err(|e| Error::Numeric(format!("{tag} mutation: {e}")))?;
    child.lineage = Some(Lineage { parent: parent_index, mutation: tag, step });
    Ok((child, loss.value()))
}

/// Score of one child in a step log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChildLog {
    pub parent: usize,
    pub mutation: Mutation,
    pub fitness: FitnessScore,
}

/// Everything recorded about one evolutionary step.
#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionStepLog {
    pub step: u64,
    /// Children in production order: parent-major, then mutation order.
    pub children: Vec<ChildLog>,
    /// Indices into `children` of the survivors, best first.
    pub survivors: Vec<usize>,
    pub disc_objectives: Vec<f64>,
}

impl EvolutionStepLog {
    /// Mutations of the survivors, best first.
    pub fn selected(&self) -> impl Iterator<Item = Mutation> + '_ {
        self.survivors.iter().map(|&i| self.children[i].mutation)
    }
}

/// Everything recorded about one conventional training step.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineStepLog {
    pub step: u64,
    pub mutation: Mutation,
    pub disc_objectives: Vec<f64>,
    /// Generator loss before its update.
    pub generator_loss: f64,
}

/// Mutable state of a run.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: TrainingConfig,
    population: Vec<Individual>,
    env: Environment,
    samplers: Samplers,
    step: u64,
}

impl Trainer {
    /// Initializes the discriminator and then every generator from the
    /// initialization stream of the seed.
    pub fn new(config: TrainingConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(config.seed, Stream::Init);
        let env = Environment::new(Network::init(config.discriminator.clone(), &mut rng)?);
        let population = (0..config.n_parents)
            .map(|_| Network::init(config.generator.clone(), &mut rng).map(Individual::new))
            .collect::<Result<_>>()?;
        let samplers = Samplers::new(&config)?;
        Ok(Trainer { config, population, env, samplers, step: 0 })
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    pub fn population(&self) -> &[Individual] {
        &self.population
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    /// Completed steps.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            step: self.step,
            generators: self.population.iter().map(|i| i.generator.clone()).collect(),
            discriminator: self.env.discriminator.clone(),
        }
    }

    /// Discriminator update, variation, evaluation and selection.
    pub fn evolutionary_step(&mut self) -> Result<EvolutionStepLog> {
        let cfg = &self.config;
        let disc_objectives = update_discriminator(&mut self.env, &self.population, &mut self.samplers, cfg)?;

        // fitness batches shared by all siblings, from their own stream
        let s = &mut self.samplers;
        let real_eval = s.data.sample(cfg.batch_size, &mut s.fitness_rng)?;
        let z_eval = s.noise.sample(cfg.batch_size, &mut s.fitness_rng)?;

        let mut tasks = Vec::with_capacity(cfg.n_parents * cfg.n_mutations());
        for j in 0..self.population.len() {
            for &tag in &cfg.mutations {
                tasks.push((j, tag, s.noise.sample(cfg.batch_size, &mut s.noise_rng)?));
            }
        }
        let disc = &self.env.discriminator;
        let population = &self.population;
        let step = self.step;
        let results: Vec<Result<(Individual, FitnessScore)>> = tasks
            .par_iter()
            .map(|(j, tag, z)| {
                let (child, _) = produce_child(&population[*j], *j, *tag, disc, z, &cfg.adam, step)?;
                let score = fitness::evaluate(disc, &child.generator, &real_eval, &z_eval, cfg.gamma)?;
                Ok((child, score))
            })
            .collect();

        let mut children = Vec::with_capacity(results.len());
        let mut logs = Vec::with_capacity(results.len());
        for ((j, tag, _), r) in tasks.iter().zip(results) {
            let (child, score) = r?;
            children.push(Some(child));
            logs.push(ChildLog { parent: *j, mutation: *tag, fitness: score });
        }
        let candidates: Vec<Candidate> = logs
            .iter()
            .map(|c| Candidate { parent: c.parent, mutation: c.mutation, total: c.fitness.total })
            .collect();
        let survivors = fitness::select(&candidates, cfg.n_parents)?;
        self.population = survivors
            .iter()
            .map(|&i| children[i].take().expect("distinct survivors"))
            .collect();

        let log = EvolutionStepLog { step: self.step, children: logs, survivors, disc_objectives };
        self.step += 1;
        Ok(log)
    }

    /// Discriminator update followed by one generator step on `tag`.
    pub fn baseline_step(&mut self, tag: Mutation) -> Result<BaselineStepLog> {
        if self.population.len() != 1 {
            return Err(Error::config("train.n_parents", "baseline training uses one generator"));
        }
        let cfg = &self.config;
        let disc_objectives = update_discriminator(&mut self.env, &self.population, &mut self.samplers, cfg)?;
        let s = &mut self.samplers;
        let z = s.noise.sample(cfg.batch_size, &mut s.noise_rng)?;
        let (child, generator_loss) =
            produce_child(&self.population[0], 0, tag, &self.env.discriminator, &z, &cfg.adam, self.step)?;
        self.population[0] = child;
        let log = BaselineStepLog { step: self.step, mutation: tag, disc_objectives, generator_loss };
        self.step += 1;
        Ok(log)
    }
}

/// Receives step logs and checkpoints while a run progresses.
pub trait RunObserver<L> {
    fn on_step(&mut self, _log: &L) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _checkpoint: &Checkpoint) -> Result<()> {
        Ok(())
    }
}

impl<L> RunObserver<L> for () {}

/// Final state and records of a run.
#[derive(Clone, Debug)]
pub struct RunArtifacts<L> {
    pub population: Vec<Individual>,
    pub environment: Environment,
    pub logs: Vec<L>,
    pub checkpoints: Vec<Checkpoint>,
}

impl<L> RunArtifacts<L> {
    pub fn final_checkpoint(&self, step: u64) -> Checkpoint {
        Checkpoint {
            step,
            generators: self.population.iter().map(|i| i.generator.clone()).collect(),
            discriminator: self.environment.discriminator.clone(),
        }
    }
}

/// Why a run stopped early.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Setup(Error),
    /// A step failed; `last_good` holds the state before it.
    #[error("step {step}: {source}")]
    Step {
        step: u64,
        source: Error,
        last_good: Box<Checkpoint>,
    },
}

fn run<L>(
    config: TrainingConfig,
    observer: &mut dyn RunObserver<L>,
    mut step_fn: impl FnMut(&mut Trainer) -> Result<L>,
) -> Result<RunArtifacts<L>, RunError> {
    let mut trainer = Trainer::new(config).map_err(RunError::Setup)?;
    let iterations = trainer.config.iterations;
    let every = trainer.config.checkpoint_every;
    let mut logs = Vec::with_capacity(iterations as usize);
    let mut checkpoints = Vec::new();
    let mut last_good = trainer.checkpoint();
    for _ in 0..iterations {
        let step = trainer.step();
        let fail = |source: Error, last_good: &Checkpoint| RunError::Step {
            step,
            source,
            last_good: Box::new(last_good.clone()),
        };
        let log = step_fn(&mut trainer).map_err(|e| fail(e, &last_good))?;
        observer.on_step(&log).map_err(|e| fail(e, &last_good))?;
        logs.push(log);
        last_good = trainer.checkpoint();
        if every.is_some_and(|k| trainer.step() % k == 0) {
            observer.on_checkpoint(&last_good).map_err(|e| fail(e, &last_good))?;
            checkpoints.push(last_good.clone());
        }
    }
    Ok(RunArtifacts {
        population: trainer.population,
        environment: trainer.env,
        logs,
        checkpoints,
    })
}

/// Runs `config.iterations` evolutionary steps.
pub fn train(
    config: TrainingConfig,
    observer: &mut dyn RunObserver<EvolutionStepLog>,
) -> Result<RunArtifacts<EvolutionStepLog>, RunError> {
    run(config, observer, Trainer::evolutionary_step)
}

/// Runs `config.iterations` conventional steps with the fixed objective `tag`.
pub fn baseline_train(
    tag: Mutation,
    config: TrainingConfig,
    observer: &mut dyn RunObserver<BaselineStepLog>,
) -> Result<RunArtifacts<BaselineStepLog>, RunError> {
    run(config, observer, |t| t.baseline_step(tag))
}
