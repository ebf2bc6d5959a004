//! `egan`: train, compare, evaluate and inspect evolutionary GANs on 2D data.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use egan_core::{Error, Mutation};

use commands::{Failure, Invocation};
use config::RunConfig;

#[derive(Parser)]
#[command(name = "egan", version, about = "Evolutionary GAN training on 2D Gaussian mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a generator population against one discriminator.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Conventional training with a single generator objective.
    Baseline {
        #[arg(long, value_enum)]
        objective: Objective,
        #[command(flatten)]
        common: Common,
    },
    /// Sample a checkpointed generator and score the samples.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of samples (overrides metrics.eval_samples).
        #[arg(long)]
        samples: Option<usize>,
        /// Which generator of the checkpoint to use.
        #[arg(long, default_value_t = 0)]
        generator: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Walk the latent line between two noise vectors.
    Interp {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        generator: usize,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Objective {
    Minimax,
    Heuristic,
    Leastsq,
}

impl From<Objective> for Mutation {
    fn from(o: Objective) -> Self {
        match o {
            Objective::Minimax => Mutation::Minimax,
            Objective::Heuristic => Mutation::Heuristic,
            Objective::Leastsq => Mutation::LeastSquares,
        }
    }
}

/// Flags shared by every command; each one overrides its config key.
#[derive(Args)]
struct Common {
    /// TOML file with dotted sections (run, dataset, train, adam, generator,
    /// discriminator, metrics).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; must be new or empty.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,
    /// ring8, grid25, ring, grid, or a path to a CSV of `x,y` rows.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
}

impl Common {
    fn resolve(&self, command: &'static str) -> Result<Invocation, Error> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            config.run.seed = s;
        }
        if let Some(n) = self.iterations {
            config.run.iterations = n;
        }
        if let Some(g) = self.gamma {
            config.train.gamma = g;
        }
        if let Some(k) = self.checkpoint_every {
            config.run.checkpoint_every = Some(k);
        }
        if let Some(d) = &self.dataset {
            // the flag selects a whole dataset; refinements from the file are dropped
            config.dataset = Default::default();
            match d.as_str() {
                "ring8" | "grid25" | "ring" | "grid" => config.dataset.name = d.clone(),
                path => {
                    config.dataset.name = "csv".into();
                    config.dataset.path = Some(path.into());
                }
            }
        }
        Ok(Invocation {
            command,
            arguments: std::env::args().skip(1).collect(),
            config,
            out: self.out.clone(),
        })
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numeric(_) => 3,
        Error::Io(_) => 1,
        _ => 2,
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train { common } => commands::cmd_train(&common.resolve("train")?),
        Command::Baseline { objective, common } => {
            commands::cmd_baseline(&common.resolve("baseline")?, objective.into())
        }
        Command::Eval { checkpoint, samples, generator, common } => {
            let mut inv = common.resolve("eval")?;
            if let Some(n) = samples {
                inv.config.metrics.eval_samples = n;
            }
            commands::cmd_eval(&inv, &checkpoint, generator)
        }
        Command::Interp { checkpoint, steps, generator, common } => {
            commands::cmd_interp(&common.resolve("interp")?, &checkpoint, generator, steps)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            if let Some(path) = &f.checkpoint {
                eprintln!("last good checkpoint: {}", path.display());
            }
            ExitCode::from(exit_code(&f.error))
        }
    }
}
