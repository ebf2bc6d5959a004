use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use egan_core::data::{stream, GaussianMixture, Stream};
use egan_core::evolution::{BaselineStepLog, RunError, RunObserver};
use egan_core::metrics::{kde_grid, latent_interpolation, mode_coverage, selection_histogram, ModeCoverageReport};
use egan_core::nets::gen_forward;
use egan_core::{baseline_train, train, Checkpoint, Error, EvolutionStepLog, Mutation, Network, NoiseSampler};

use crate::config::{MetricsSection, RunConfig};
use crate::output::{write_manifest, OutDir, RunRecord};

/// An error together with the checkpoint saved before the failing step.
#[derive(Debug)]
pub struct Failure {
    pub error: Error,
    pub checkpoint: Option<PathBuf>,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure { error, checkpoint: None }
    }
}

/// Where a command was invoked from and what it resolved to.
pub struct Invocation {
    pub command: &'static str,
    pub arguments: Vec<String>,
    pub config: RunConfig,
    pub out: PathBuf,
}

impl Invocation {
    fn bandwidth(&self) -> f64 {
        let c = &self.config;
        c.metrics.kde_bandwidth.unwrap_or_else(|| c.dataset.default_bandwidth())
    }

    fn finish(&self, out: &OutDir, status: &str) -> Result<(), Error> {
        write_manifest(
            out,
            &RunRecord {
                command: self.command,
                arguments: &self.arguments,
                seed: self.config.run.seed,
                status,
                config: &self.config.to_toml(),
            },
        )?;
        Ok(())
    }
}

trait CsvLog {
    fn row(&self) -> String;
    fn step(&self) -> u64;
}

impl CsvLog for EvolutionStepLog {
    fn row(&self) -> String {
        self.csv_row()
    }
    fn step(&self) -> u64 {
        self.step
    }
}

impl CsvLog for BaselineStepLog {
    fn row(&self) -> String {
        self.csv_row()
    }
    fn step(&self) -> u64 {
        self.step
    }
}

/// Streams step rows and checkpoints to disk while a run progresses.
struct Recorder<'a> {
    out: &'a OutDir,
    steps: BufWriter<File>,
    report_every: u64,
}

impl<'a> Recorder<'a> {
    fn new(out: &'a OutDir, header: &str, iterations: u64) -> Result<Self, Error> {
        let mut steps = out.create_file("steps.csv")?;
        writeln!(steps, "{header}").map_err(|e| Error::Io(format!("steps.csv: {e}")))?;
        Ok(Recorder { out, steps, report_every: (iterations / 10).max(1) })
    }

    fn flush(&mut self) -> Result<(), Error> {
        self.steps.flush().map_err(|e| Error::Io(format!("steps.csv: {e}")))
    }
}

impl<L: CsvLog> RunObserver<L> for Recorder<'_> {
    fn on_step(&mut self, log: &L) -> Result<(), Error> {
        writeln!(self.steps, "{}", log.row()).map_err(|e| Error::Io(format!("steps.csv: {e}")))?;
        if (log.step() + 1) % self.report_every == 0 {
            eprintln!("step {}", log.step() + 1);
        }
        Ok(())
    }

    fn on_checkpoint(&mut self, c: &Checkpoint) -> Result<(), Error> {
        let path = self.out.path(&format!("checkpoints/step-{:06}.ckpt", c.step));
        std::fs::create_dir_all(path.parent().expect("nested")).map_err(|e| Error::Io(e.to_string()))?;
        c.save(&path)
    }
}

/// Samples the generator on the evaluation stream and writes samples, KDE
/// and, for mixtures, mode coverage.
fn evaluate(
    out: &OutDir,
    gen: &Network,
    mixture: Option<&GaussianMixture>,
    metrics: &MetricsSection,
    bandwidth: f64,
    seed: u64,
) -> Result<Option<ModeCoverageReport>, Error> {
    let z = NoiseSampler::new(gen.spec().input_dim)?.sample(metrics.eval_samples, &mut stream(seed, Stream::Eval))?;
    let x = gen_forward(gen, &z)?;
    let mut samples = String::from("x,y\n");
    for r in 0..x.rows() {
        let p = x.row(r);
        samples.push_str(&format!("{},{}\n", p[0], p[1]));
    }
    out.write("samples.csv", &samples)?;
    let [lo, hi] = metrics.kde_extent;
    out.write("kde.csv", &kde_grid(&x, bandwidth, (lo, hi), metrics.kde_resolution)?.to_csv())?;
    let Some(mix) = mixture else { return Ok(None) };
    let report = mode_coverage(&x, mix, metrics.k_sigma)?;
    out.write("coverage.csv", &report.to_csv(mix))?;
    Ok(Some(report))
}

fn summarize(report: Option<&ModeCoverageReport>, modes: usize) {
    if let Some(r) = report {
        println!(
            "modes captured {}/{modes}, high-quality ratio {:.3}",
            r.modes_captured, r.high_quality_ratio
        );
    }
}

fn training_run<L: CsvLog>(
    inv: &Invocation,
    header: impl FnOnce(&egan_core::TrainingConfig) -> String,
    run: impl FnOnce(egan_core::TrainingConfig, &mut Recorder) -> Result<egan_core::RunArtifacts<L>, RunError>,
    after: impl FnOnce(&OutDir, &[L]) -> Result<(), Error>,
) -> Result<(), Failure> {
    let dataset = inv.config.dataset.build()?;
    let cfg = inv.config.training(dataset.source)?;
    let out = OutDir::create(&inv.out)?;
    out.write("config.toml", &inv.config.to_toml())?;
    let iterations = cfg.iterations;
    let mut recorder = Recorder::new(&out, &header(&cfg), iterations)?;
    let result = run(cfg, &mut recorder);
    recorder.flush()?;
    drop(recorder);
    match result {
        Ok(art) => {
            art.final_checkpoint(iterations).save(&out.path("final.ckpt"))?;
            after(&out, &art.logs)?;
            let report = evaluate(
                &out,
                &art.population[0].generator,
                dataset.mixture.as_ref(),
                &inv.config.metrics,
                inv.bandwidth(),
                inv.config.run.seed,
            )?;
            inv.finish(&out, "ok")?;
            summarize(report.as_ref(), dataset.mixture.map_or(0, |m| m.centers().len()));
            Ok(())
        }
        Err(RunError::Setup(e)) => Err(e.into()),
        Err(RunError::Step { step, source, last_good }) => {
            let path = out.path("last_good.ckpt");
            last_good.save(&path)?;
            inv.finish(&out, &format!("failed at step {step}"))?;
            Err(Failure {
                error: relabel(source, |m| format!("step {step}: {m}")),
                checkpoint: Some(path),
            })
        }
    }
}

fn relabel(e: Error, f: impl Fn(&str) -> String) -> Error {
    match e {
        Error::Numeric(m) => Error::Numeric(f(&m)),
        Error::Io(m) => Error::Io(f(&m)),
        Error::Usage(m) => Error::Usage(f(&m)),
        Error::Data(m) => Error::Data(f(&m)),
        Error::Structural(m) => Error::Structural(f(&m)),
        Error::Config { key, message } => Error::Config { key, message: f(&message) },
    }
}

pub fn cmd_train(inv: &Invocation) -> Result<(), Failure> {
    let window = inv.config.metrics.selection_window;
    training_run(
        inv,
        |c| EvolutionStepLog::csv_header(c.n_parents * c.n_mutations(), c.n_disc),
        |c, rec| train(c, rec),
        |out, logs| {
            out.write("selection.csv", &selection_histogram(logs, window)?.to_csv())?;
            Ok(())
        },
    )
}

pub fn cmd_baseline(inv: &Invocation, tag: Mutation) -> Result<(), Failure> {
    if inv.config.train.n_parents != 1 {
        return Err(Error::config("train.n_parents", "baseline training uses one generator").into());
    }
    training_run(
        inv,
        |c| BaselineStepLog::csv_header(c.n_disc),
        |c, rec| baseline_train(tag, c, rec),
        |_, _| Ok(()),
    )
}

fn load_generator(path: &Path, index: usize) -> Result<Network, Error> {
    let ckpt = Checkpoint::load(path).map_err(|e| match e {
        Error::Io(m) => Error::Usage(format!("cannot read checkpoint: {m}")),
        other => other,
    })?;
    let count = ckpt.generators.len();
    let gen = ckpt
        .generators
        .into_iter()
        .nth(index)
        .ok_or_else(|| Error::Usage(format!("checkpoint holds {count} generators, no index {index}")))?;
    if gen.spec().output_dim != 2 {
        return Err(Error::Structural(format!(
            "checkpointed generator emits {}D points, datasets are 2D",
            gen.spec().output_dim
        )));
    }
    Ok(gen)
}

pub fn cmd_eval(inv: &Invocation, checkpoint: &Path, generator: usize) -> Result<(), Failure> {
    inv.config.metrics.validate()?;
    let dataset = inv.config.dataset.build()?;
    let gen = load_generator(checkpoint, generator)?;
    let out = OutDir::create(&inv.out)?;
    out.write("config.toml", &inv.config.to_toml())?;
    let report = evaluate(&out, &gen, dataset.mixture.as_ref(), &inv.config.metrics, inv.bandwidth(), inv.config.run.seed)?;
    inv.finish(&out, "ok")?;
    summarize(report.as_ref(), dataset.mixture.map_or(0, |m| m.centers().len()));
    Ok(())
}

pub fn cmd_interp(inv: &Invocation, checkpoint: &Path, generator: usize, steps: usize) -> Result<(), Failure> {
    if steps < 2 {
        return Err(Error::Usage("--steps must be at least 2".into()).into());
    }
    let gen = load_generator(checkpoint, generator)?;
    let dim = gen.spec().input_dim;
    let z = NoiseSampler::new(dim)?.sample(2, &mut stream(inv.config.run.seed, Stream::Eval))?;
    let x = latent_interpolation(&gen, z.row(0), z.row(1), steps)?;

    let out = OutDir::create(&inv.out)?;
    out.write("config.toml", &inv.config.to_toml())?;
    let mut csv = String::from("step,t");
    for k in 0..dim {
        csv.push_str(&format!(",z{k}"));
    }
    csv.push_str(",x,y\n");
    for i in 0..steps {
        let t = i as f64 / (steps - 1) as f64;
        csv.push_str(&format!("{i},{t}"));
        for k in 0..dim {
            let (a, b) = (z.row(0)[k], z.row(1)[k]);
            let zk = if i == 0 { a } else if i == steps - 1 { b } else { a + t * (b - a) };
            csv.push_str(&format!(",{zk}"));
        }
        let p = x.row(i);
        csv.push_str(&format!(",{},{}\n", p[0], p[1]));
    }
    out.write("interp.csv", &csv)?;
    inv.finish(&out, "ok")?;
    Ok(())
}
