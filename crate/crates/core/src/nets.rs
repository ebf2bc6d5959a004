//! Generator and discriminator MLPs for the 2D toy experiments.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Array, Graph, Var};
use crate::error::{Error, Result};

/// Negative slope of every leaky rectifier.
pub const LEAKY_SLOPE: f64 = 0.2;
/// Lower bound applied to discriminator probabilities before any log.
pub const PROB_MIN: f64 = 1e-7;
/// Upper bound applied to discriminator probabilities before any log.
pub const PROB_MAX: f64 = 1.0 - 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    LeakyRelu,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputActivation {
    Identity,
    Sigmoid,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::LeakyRelu => "leaky_relu",
            Activation::Tanh => "tanh",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leaky_relu" => Ok(Activation::LeakyRelu),
            "tanh" => Ok(Activation::Tanh),
            _ => Err(Error::Structural(format!("unknown activation `{s}`"))),
        }
    }
}

impl fmt::Display for OutputActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputActivation::Identity => "identity",
            OutputActivation::Sigmoid => "sigmoid",
        })
    }
}

impl FromStr for OutputActivation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(OutputActivation::Identity),
            "sigmoid" => Ok(OutputActivation::Sigmoid),
            _ => Err(Error::Structural(format!("unknown output activation `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hidden {
    pub width: usize,
    pub activation: Activation,
}

/// Layer layout of a fully connected network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<Hidden>,
    pub output_dim: usize,
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    /// `depth` leaky-rectifier layers of `width` units and a linear output.
    pub fn generator(z_dim: usize, data_dim: usize, width: usize, depth: usize) -> Self {
        MlpSpec {
            input_dim: z_dim,
            hidden: vec![Hidden { width, activation: Activation::LeakyRelu }; depth],
            output_dim: data_dim,
            output_activation: OutputActivation::Identity,
        }
    }

    /// `depth` leaky-rectifier layers of `width` units and one sigmoid output.
    pub fn discriminator(data_dim: usize, width: usize, depth: usize) -> Self {
        MlpSpec {
            input_dim: data_dim,
            hidden: vec![Hidden { width, activation: Activation::LeakyRelu }; depth],
            output_dim: 1,
            output_activation: OutputActivation::Sigmoid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.iter().any(|h| h.width == 0) {
            return Err(Error::Structural(format!("zero-width layer in {self}")));
        }
        Ok(())
    }

    pub fn validate_generator(&self) -> Result<()> {
        self.validate()?;
        if self.output_activation != OutputActivation::Identity {
            return Err(Error::Structural("generator output must be linear".into()));
        }
        Ok(())
    }

    pub fn validate_discriminator(&self) -> Result<()> {
        self.validate()?;
        if self.output_activation != OutputActivation::Sigmoid || self.output_dim != 1 {
            return Err(Error::Structural(
                "discriminator output must be a single sigmoid unit".into(),
            ));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for every affine layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut fan_in = self.input_dim;
        for h in &self.hidden {
            dims.push((fan_in, h.width));
            fan_in = h.width;
        }
        dims.push((fan_in, self.output_dim));
        dims
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

impl fmt::Display for MlpSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.input_dim)?;
        for h in &self.hidden {
            write!(f, " -> {}:{}", h.width, h.activation)?;
        }
        write!(f, " -> {}:{}", self.output_dim, self.output_activation)
    }
}

/// Weights and biases, laid out as `[w0, b0, w1, b1, ...]`.
///
/// Weight `i` has shape `fan_in × fan_out`; bias `i` is a vector of `fan_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    tensors: Vec<Array>,
}

impl ParamVector {
    pub fn from_tensors(spec: &MlpSpec, tensors: Vec<Array>) -> Result<Self> {
        let dims = spec.layer_dims();
        if tensors.len() != 2 * dims.len() {
            return Err(Error::Structural(format!(
                "{} tensors for {} layers",
                tensors.len(),
                dims.len()
            )));
        }
        for (l, &(i, o)) in dims.iter().enumerate() {
            let (w, b) = (&tensors[2 * l], &tensors[2 * l + 1]);
            if w.shape() != [i, o] || b.shape() != [o] {
                return Err(Error::Structural(format!(
                    "layer {l}: weight {:?} and bias {:?}, expected [{i}, {o}] and [{o}]",
                    w.shape(),
                    b.shape()
                )));
            }
            if !w.is_finite() || !b.is_finite() {
                return Err(Error::Numeric(format!("layer {l} has non-finite entries")));
            }
        }
        Ok(ParamVector { tensors })
    }

    pub fn zeros(spec: &MlpSpec) -> Self {
        let tensors = spec
            .layer_dims()
            .into_iter()
            .flat_map(|(i, o)| [Array::zeros(&[i, o]), Array::zeros(&[o])])
            .collect();
        ParamVector { tensors }
    }

    pub fn tensors(&self) -> &[Array] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Array] {
        &mut self.tensors
    }

    pub fn weight(&self, layer: usize) -> &Array {
        &self.tensors[2 * layer]
    }

    pub fn bias(&self, layer: usize) -> &Array {
        &self.tensors[2 * layer + 1]
    }

    pub fn layers(&self) -> usize {
        self.tensors.len() / 2
    }
}

/// An MLP: its layout and its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    spec: MlpSpec,
    params: ParamVector,
}

/// Graph handles produced when a network is placed on a [`Graph`].
#[derive(Clone, Debug)]
pub struct NetworkVars {
    pub output: Var,
    pub params: Vec<Var>,
}

impl Network {
    pub fn new(spec: MlpSpec, params: ParamVector) -> Result<Self> {
        spec.validate()?;
        let params = ParamVector::from_tensors(&spec, params.tensors)?;
        Ok(Network { spec, params })
    }

    /// He-normal weights (std `sqrt(2 / fan_in)`) and zero biases.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut tensors = Vec::new();
        for (i, o) in spec.layer_dims() {
            let normal = Normal::new(0.0, (2.0 / i as f64).sqrt())
                .map_err(|e| Error::Structural(e.to_string()))?;
            let w: Vec<f64> = (0..i * o).map(|_| normal.sample(rng)).collect();
            tensors.push(Array::matrix(i, o, w)?);
            tensors.push(Array::zeros(&[o]));
        }
        Ok(Network { spec, params: ParamVector { tensors } })
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let params = ParamVector::zeros(&spec);
        Ok(Network { spec, params })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    /// Places the network on `g` with `input` as its batch.
    ///
    /// Parameters become differentiable leaves when `trainable`, constants
    /// otherwise. A sigmoid output is clamped to `[PROB_MIN, PROB_MAX]`.
    pub fn build(&self, g: &mut Graph, input: Var, trainable: bool) -> NetworkVars {
        let params: Vec<Var> = self
            .params
            .tensors
            .iter()
            .map(|t| {
                if trainable {
                    g.parameter(t.clone())
                } else {
                    g.constant(t.clone())
                }
            })
            .collect();
        let output = self.build_on(g, input, &params);
        NetworkVars { output, params }
    }

    /// Places the network on `g` using existing leaves for its tensors.
    pub fn build_on(&self, g: &mut Graph, input: Var, params: &[Var]) -> Var {
        let mut h = input;
        for (l, hidden) in self.spec.hidden.iter().enumerate() {
            h = g.affine(h, params[2 * l], params[2 * l + 1]);
            h = match hidden.activation {
                Activation::LeakyRelu => g.leaky_relu(h, LEAKY_SLOPE),
                Activation::Tanh => g.tanh(h),
            };
        }
        let l = self.spec.hidden.len();
        let mut out = g.affine(h, params[2 * l], params[2 * l + 1]);
        if self.spec.output_activation == OutputActivation::Sigmoid {
            out = g.sigmoid(out);
            out = g.clamp(out, PROB_MIN, PROB_MAX);
        }
        out
    }

    /// Evaluates the network on a batch of rows.
    pub fn forward(&self, input: &Array) -> Result<Array> {
        if input.shape().len() != 2 || input.cols() != self.spec.input_dim {
            return Err(Error::Structural(format!(
                "input of shape {:?} for a network expecting {} features",
                input.shape(),
                self.spec.input_dim
            )));
        }
        let mut g = Graph::new();
        let x = g.constant(input.clone());
        let out = self.build(&mut g, x, false).output;
        Ok(g.forward(out)?.clone())
    }

    /// Writes the versioned text form of this network.
    pub fn write_text(&self, out: &mut String) {
        use std::fmt::Write;
        let s = &self.spec;
        let _ = writeln!(out, "input_dim {}", s.input_dim);
        let hidden: Vec<String> = s
            .hidden
            .iter()
            .map(|h| format!("{}:{}", h.width, h.activation))
            .collect();
        let _ = writeln!(out, "hidden {}", hidden.join(" "));
        let _ = writeln!(out, "output {}:{}", s.output_dim, s.output_activation);
        for t in &self.params.tensors {
            let _ = writeln!(out, "tensor {}", t.shape().iter().map(|e| e.to_string()).collect::<Vec<_>>().join(" "));
            for r in 0..t.rows() {
                let row: Vec<String> = t.row(r).iter().map(|v| format!("{v:?}")).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
    }

    /// Parses the form produced by [`Network::write_text`] from `lines`.
    pub fn read_text<'a, I>(lines: &mut I) -> Result<Self>
    where
        I: Iterator<Item = (usize, &'a str)>,
    {
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Data(format!("unexpected end of input, expected {what}")))
        };
        let (n, line) = next("input_dim")?;
        let input_dim = keyed(n, line, "input_dim")?.parse().map_err(|_| bad(n, line))?;
        let (n, line) = next("hidden")?;
        let mut hidden = Vec::new();
        for tok in keyed(n, line, "hidden")?.split_whitespace() {
            let (w, a) = tok.split_once(':').ok_or_else(|| bad(n, line))?;
            hidden.push(Hidden {
                width: w.parse().map_err(|_| bad(n, line))?,
                activation: a.parse().map_err(|_| bad(n, line))?,
            });
        }
        let (n, line) = next("output")?;
        let (d, a) = keyed(n, line, "output")?.split_once(':').ok_or_else(|| bad(n, line))?;
        let spec = MlpSpec {
            input_dim,
            hidden,
            output_dim: d.parse().map_err(|_| bad(n, line))?,
            output_activation: a.parse().map_err(|_| bad(n, line))?,
        };
        spec.validate().map_err(|e| Error::Data(format!("line {}: {e}", n + 1)))?;

        let mut tensors = Vec::new();
        for (i, o) in spec.layer_dims() {
            for shape in [vec![i, o], vec![o]] {
                let (n, line) = next("tensor")?;
                let dims: Vec<usize> = keyed(n, line, "tensor")?
                    .split_whitespace()
                    .map(|t| t.parse().map_err(|_| bad(n, line)))
                    .collect::<Result<_>>()?;
                if dims != shape {
                    return Err(Error::Data(format!(
                        "line {}: tensor shape {dims:?}, expected {shape:?}",
                        n + 1
                    )));
                }
                let rows = if shape.len() == 2 { shape[0] } else { 1 };
                let mut data = Vec::with_capacity(shape.iter().product());
                for _ in 0..rows {
                    let (n, line) = next("tensor row")?;
                    let before = data.len();
                    for tok in line.split_whitespace() {
                        data.push(tok.parse::<f64>().map_err(|_| bad(n, line))?);
                    }
                    if data.len() - before != *shape.last().unwrap() {
                        return Err(bad(n, line));
                    }
                }
                tensors.push(Array::new(shape, data)?);
            }
        }
        let params = ParamVector::from_tensors(&spec, tensors)?;
        Ok(Network { spec, params })
    }
}

fn bad(n: usize, line: &str) -> Error {
    Error::Data(format!("line {}: cannot parse `{line}`", n + 1))
}

fn keyed<'a>(n: usize, line: &'a str, key: &str) -> Result<&'a str> {
    match line.split_once(' ') {
        Some((k, rest)) if k == key => Ok(rest.trim()),
        None if line == key => Ok(""),
        _ => Err(Error::Data(format!("line {}: expected `{key}`, found `{line}`", n + 1))),
    }
}

/// Generator output for a noise batch `z` (`batch × z_dim`).
pub fn gen_forward(generator: &Network, z: &Array) -> Result<Array> {
    generator.forward(z)
}

/// Discriminator probabilities (`batch × 1`) for a data batch `x`.
pub fn disc_forward(discriminator: &Network, x: &Array) -> Result<Array> {
    discriminator.forward(x)
}
