//! Run configuration: a TOML file of dotted sections, overridden by flags.

use std::path::{Path, PathBuf};

use egan_core::autodiff::AdamConfig;
use egan_core::data::{DataSource, GaussianMixture};
use egan_core::nets::{Activation, Hidden, MlpSpec, OutputActivation};
use egan_core::{Error, Mutation, TrainingConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub dataset: DatasetSection,
    pub train: TrainSection,
    pub adam: AdamSection,
    pub generator: GeneratorSection,
    pub discriminator: DiscriminatorSection,
    pub metrics: MetricsSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub iterations: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<u64>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { seed: 0, iterations: 50_000, checkpoint_every: None }
    }
}

/// `name` is one of `ring8`, `grid25`, `ring`, `grid`, `mixture` or `csv`;
/// the other keys refine it and default to the named preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub components: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub side: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub centers: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            name: "ring8".into(),
            components: None,
            radius: None,
            side: None,
            spacing: None,
            sigma: None,
            centers: None,
            path: None,
        }
    }
}

/// The dataset a run trains on, with the mixture when there is one.
pub struct Dataset {
    pub source: DataSource,
    pub mixture: Option<GaussianMixture>,
}

impl DatasetSection {
    /// Default KDE bandwidth: narrower for the ring, whose modes are tighter.
    pub fn default_bandwidth(&self) -> f64 {
        match self.name.as_str() {
            "ring8" | "ring" => 0.1,
            _ => 0.15,
        }
    }

    pub fn build(&self) -> Result<Dataset, Error> {
        let reject = |key: &str, set: bool, kind: &str| {
            if set {
                Err(Error::config(format!("dataset.{key}"), format!("does not apply to {kind} datasets")))
            } else {
                Ok(())
            }
        };
        reject("centers", self.centers.is_some() && self.name != "mixture", &self.name)?;
        let mixture = match self.name.as_str() {
            "ring8" | "ring" => {
                reject("side", self.side.is_some(), "ring")?;
                reject("spacing", self.spacing.is_some(), "ring")?;
                reject("path", self.path.is_some(), "ring")?;
                GaussianMixture::ring(
                    self.components.unwrap_or(8),
                    self.radius.unwrap_or(2.0),
                    self.sigma.unwrap_or(0.02),
                )?
            }
            "grid25" | "grid" => {
                reject("components", self.components.is_some(), "grid")?;
                reject("radius", self.radius.is_some(), "grid")?;
                reject("path", self.path.is_some(), "grid")?;
                GaussianMixture::grid(
                    self.side.unwrap_or(5),
                    self.spacing.unwrap_or(2.0),
                    self.sigma.unwrap_or(0.05),
                )?
            }
            "mixture" => {
                for (key, set) in [
                    ("components", self.components.is_some()),
                    ("radius", self.radius.is_some()),
                    ("side", self.side.is_some()),
                    ("spacing", self.spacing.is_some()),
                    ("path", self.path.is_some()),
                ] {
                    reject(key, set, "mixture")?;
                }
                let centers = self
                    .centers
                    .clone()
                    .ok_or_else(|| Error::config("dataset.centers", "required for mixture datasets"))?;
                let sigma = self.sigma.ok_or_else(|| Error::config("dataset.sigma", "required for mixture datasets"))?;
                GaussianMixture::new(centers, sigma)?
            }
            "csv" => {
                for (key, set) in [
                    ("components", self.components.is_some()),
                    ("radius", self.radius.is_some()),
                    ("side", self.side.is_some()),
                    ("spacing", self.spacing.is_some()),
                    ("sigma", self.sigma.is_some()),
                ] {
                    reject(key, set, "csv")?;
                }
                let path = self
                    .path
                    .as_deref()
                    .ok_or_else(|| Error::config("dataset.path", "required for csv datasets"))?;
                return Ok(Dataset { source: DataSource::load_csv(path)?, mixture: None });
            }
            other => {
                return Err(Error::config(
                    "dataset.name",
                    format!("unknown dataset `{other}`, expected ring8, grid25, ring, grid, mixture or csv"),
                ))
            }
        };
        Ok(Dataset { source: DataSource::Mixture(mixture.clone()), mixture: Some(mixture) })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub n_disc: usize,
    pub n_parents: usize,
    pub mutations: Vec<String>,
    pub batch_size: usize,
    pub gamma: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            n_disc: 2,
            n_parents: 1,
            mutations: Mutation::ALL.iter().map(|m| m.name().to_string()).collect(),
            batch_size: 16,
            gamma: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamSection {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamSection {
    fn default() -> Self {
        let a = AdamConfig::default();
        AdamSection { lr: a.lr, beta1: a.beta1, beta2: a.beta2, eps: a.eps }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSection {
    pub z_dim: usize,
    pub width: usize,
    pub depth: usize,
    pub activation: String,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        GeneratorSection { z_dim: 2, width: 128, depth: 3, activation: "leaky_relu".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminatorSection {
    pub width: usize,
    pub depth: usize,
    pub activation: String,
}

impl Default for DiscriminatorSection {
    fn default() -> Self {
        DiscriminatorSection { width: 128, depth: 3, activation: "leaky_relu".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    /// Generator samples drawn for the final evaluation.
    pub eval_samples: usize,
    /// A sample is high quality within this many standard deviations of a center.
    pub k_sigma: f64,
    /// Defaults to 0.1 for ring datasets and 0.15 otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kde_bandwidth: Option<f64>,
    pub kde_resolution: usize,
    pub kde_extent: [f64; 2],
    /// Steps per row of the selection histogram.
    pub selection_window: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            eval_samples: 2500,
            k_sigma: 3.0,
            kde_bandwidth: None,
            kde_resolution: 128,
            kde_extent: [-6.0, 6.0],
            selection_window: 1000,
        }
    }
}

impl MetricsSection {
    pub fn validate(&self) -> Result<(), Error> {
        if self.eval_samples == 0 {
            return Err(Error::Usage("metrics.eval_samples: must be at least 1".into()));
        }
        if !(self.k_sigma > 0.0 && self.k_sigma.is_finite()) {
            return Err(Error::config("metrics.k_sigma", "must be positive"));
        }
        if self.kde_bandwidth.is_some_and(|b| !(b > 0.0 && b.is_finite())) {
            return Err(Error::config("metrics.kde_bandwidth", "must be positive"));
        }
        if self.kde_resolution == 0 {
            return Err(Error::config("metrics.kde_resolution", "must be at least 1"));
        }
        let [lo, hi] = self.kde_extent;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::config("metrics.kde_extent", "must be an increasing pair of reals"));
        }
        if self.selection_window == 0 {
            return Err(Error::config("metrics.selection_window", "must be at least 1"));
        }
        Ok(())
    }
}

fn hidden(key: &str, width: usize, depth: usize, activation: &str) -> Result<Vec<Hidden>, Error> {
    let activation: Activation = activation
        .parse()
        .map_err(|_| Error::config(format!("{key}.activation"), format!("unknown activation `{activation}`, expected leaky_relu or tanh")))?;
    if width == 0 {
        return Err(Error::config(format!("{key}.width"), "must be at least 1"));
    }
    Ok(vec![Hidden { width, activation }; depth])
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, Error> {
        toml::from_str(text).map_err(|e| Error::Usage(format!("config: {}", e.to_string().trim_end())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn mutations(&self) -> Result<Vec<Mutation>, Error> {
        self.train
            .mutations
            .iter()
            .map(|s| s.parse().map_err(|e: Error| Error::config("train.mutations", e.to_string())))
            .collect()
    }

    /// Checks every section and assembles the core configuration.
    pub fn training(&self, data: DataSource) -> Result<TrainingConfig, Error> {
        self.metrics.validate()?;
        let g = &self.generator;
        let d = &self.discriminator;
        let mut cfg = TrainingConfig::new(data);
        cfg.adam = AdamConfig { lr: self.adam.lr, beta1: self.adam.beta1, beta2: self.adam.beta2, eps: self.adam.eps };
        cfg.n_disc = self.train.n_disc;
        cfg.n_parents = self.train.n_parents;
        cfg.mutations = self.mutations()?;
        cfg.batch_size = self.train.batch_size;
        cfg.gamma = self.train.gamma;
        cfg.iterations = self.run.iterations;
        cfg.seed = self.run.seed;
        cfg.checkpoint_every = self.run.checkpoint_every;
        if g.z_dim == 0 {
            return Err(Error::config("generator.z_dim", "must be at least 1"));
        }
        cfg.generator = MlpSpec {
            input_dim: g.z_dim,
            hidden: hidden("generator", g.width, g.depth, &g.activation)?,
            output_dim: 2,
            output_activation: OutputActivation::Identity,
        };
        cfg.discriminator = MlpSpec {
            input_dim: 2,
            hidden: hidden("discriminator", d.width, d.depth, &d.activation)?,
            output_dim: 1,
            output_activation: OutputActivation::Sigmoid,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        let t = c.training(c.dataset.build().unwrap().source).unwrap();
        assert_eq!(t.gamma, 0.5);
        assert_eq!(t.mutations, Mutation::ALL.to_vec());
        assert_eq!(t.generator, MlpSpec::generator(2, 2, 128, 3));
    }

    #[test]
    fn dotted_keys_and_sections_agree() {
        let a = RunConfig::parse("train.gamma = 0.2\nrun.seed = 4\n").unwrap();
        let b = RunConfig::parse("[train]\ngamma = 0.2\n[run]\nseed = 4\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.gamma, 0.2);
    }

    #[test]
    fn unknown_keys_are_named() {
        let e = RunConfig::parse("train.gama = 0.2\n").unwrap_err().to_string();
        assert!(e.contains("gama"), "{e}");
        let e = RunConfig::parse("[optimizer]\nlr = 1\n").unwrap_err().to_string();
        assert!(e.contains("optimizer"), "{e}");
    }

    #[test]
    fn snapshot_round_trips() {
        let mut c = RunConfig::default();
        c.run.checkpoint_every = Some(10);
        c.dataset.name = "grid".into();
        c.dataset.sigma = Some(0.1);
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn semantic_errors_name_the_key() {
        let key = |text: &str| match RunConfig::parse(text).and_then(|c| c.dataset.build().and_then(|d| c.training(d.source))) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("{text}: {:?}", other.map(|_| ())),
        };
        assert_eq!(key("train.gamma = -1.0"), "train.gamma");
        assert_eq!(key("train.mutations = [\"wgan\"]"), "train.mutations");
        assert_eq!(key("dataset.name = \"moons\""), "dataset.name");
        assert_eq!(key("dataset.side = 3"), "dataset.side");
        assert_eq!(key("generator.activation = \"relu\""), "generator.activation");
        assert_eq!(key("dataset.name = \"csv\""), "dataset.path");
    }
}
