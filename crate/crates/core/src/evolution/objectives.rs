//! Discriminator loss and the three generator mutation objectives.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{Array, GradientMap, Graph, Var};
use crate::error::{Error, Result};
use crate::nets::Network;

/// A generator variation operator, identified by the objective it descends.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mutation {
    /// `½·E[log(1 − D(G(z)))]`
    Minimax,
    /// `−½·E[log D(G(z))]`
    Heuristic,
    /// `E[(D(G(z)) − 1)²]`
    LeastSquares,
}

impl Mutation {
    /// Every mutation in evaluation (and tie-break) order.
    pub const ALL: [Mutation; 3] = [Mutation::Minimax, Mutation::Heuristic, Mutation::LeastSquares];

    pub fn name(self) -> &'static str {
        match self {
            Mutation::Minimax => "minimax",
            Mutation::Heuristic => "heuristic",
            Mutation::LeastSquares => "leastsq",
        }
    }

    /// Position in [`Mutation::ALL`].
    pub fn rank(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mutation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minimax" => Ok(Mutation::Minimax),
            "heuristic" => Ok(Mutation::Heuristic),
            "leastsq" | "least_squares" => Ok(Mutation::LeastSquares),
            _ => Err(Error::Usage(format!(
                "unknown objective `{s}`, expected one of minimax, heuristic, leastsq"
            ))),
        }
    }
}

/// Appends the mutation objective on a batch of (already clamped)
/// discriminator probabilities and returns the scalar loss node.
pub fn mutation_objective(tag: Mutation, g: &mut Graph, probs: Var) -> Var {
    match tag {
        Mutation::Minimax => {
            let q = g.scale_shift(probs, -1.0, 1.0);
            let l = g.log(q);
            let m = g.mean(l);
            g.scale(m, 0.5)
        }
        Mutation::Heuristic => {
            let l = g.log(probs);
            let m = g.mean(l);
            g.scale(m, -0.5)
        }
        Mutation::LeastSquares => {
            let d = g.scale_shift(probs, 1.0, -1.0);
            let s = g.square(d);
            g.mean(s)
        }
    }
}

/// A forward-evaluated scalar loss together with its parameter leaves.
#[derive(Debug)]
pub struct LossGraph {
    graph: Graph,
    output: Var,
    params: Vec<Var>,
    value: f64,
}

impl LossGraph {
    fn evaluate(mut graph: Graph, output: Var, params: Vec<Var>) -> Result<Self> {
        let value = graph
            .forward(output)?
            .item()
            .ok_or_else(|| Error::Structural("loss is not a scalar".into()))?;
        Ok(LossGraph { graph, output, params, value })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn output(&self) -> Var {
        self.output
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// Parameter leaves, in the order of the network's tensors.
    pub fn params(&self) -> &[Var] {
        &self.params
    }

    pub fn gradient_map(&self) -> Result<GradientMap> {
        self.graph.backward(&self.params)
    }

    /// Gradients ordered like the network's tensors.
    pub fn gradients(&self) -> Result<Vec<Array>> {
        self.gradient_map()?.take(&self.params)
    }
}

/// Discriminator loss `−mean log D(x) − mean log(1 − D(fake))` over the real
/// batch and the stacked fake batches, differentiable in the discriminator.
///
/// Descending this loss ascends the objective reported by
/// [`DiscriminatorLoss::objective`].
#[derive(Debug)]
pub struct DiscriminatorLoss(LossGraph);

impl DiscriminatorLoss {
    pub fn new(disc: &Network, real: &Array, fakes: &[Array]) -> Result<Self> {
        let fake = Array::vstack(fakes)?;
        let mut g = Graph::new();
        let params: Vec<Var> = disc.params().tensors().iter().map(|t| g.parameter(t.clone())).collect();
        let real_in = g.constant(real.clone());
        let fake_in = g.constant(fake);
        let d_real = disc.build_on(&mut g, real_in, &params);
        let d_fake = disc.build_on(&mut g, fake_in, &params);
        let log_real = g.log(d_real);
        let real_term = g.mean(log_real);
        let one_minus = g.scale_shift(d_fake, -1.0, 1.0);
        let log_fake = g.log(one_minus);
        let fake_term = g.mean(log_fake);
        let objective = g.add(real_term, fake_term);
        let loss = g.scale(objective, -1.0);
        Ok(DiscriminatorLoss(LossGraph::evaluate(g, loss, params)?))
    }

    /// `mean log D(x) + mean log(1 − D(fake))`.
    pub fn objective(&self) -> f64 {
        -self.0.value
    }

    pub fn loss(&self) -> &LossGraph {
        &self.0
    }
}

/// Generator loss for mutation `tag` on noise `z`, differentiable in the
/// generator; the discriminator enters as constants.
pub fn mutation_loss(tag: Mutation, disc: &Network, gen: &Network, z: &Array) -> Result<LossGraph> {
    if z.shape().len() != 2 || z.cols() != gen.spec().input_dim {
        return Err(Error::Structural(format!(
            "noise of shape {:?} for a generator expecting {} inputs",
            z.shape(),
            gen.spec().input_dim
        )));
    }
    let mut g = Graph::new();
    let z_in = g.constant(z.clone());
    let gv = gen.build(&mut g, z_in, true);
    let probs = disc.build(&mut g, gv.output, false).output;
    let loss = mutation_objective(tag, &mut g, probs);
    LossGraph::evaluate(g, loss, gv.params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{MlpSpec, ParamVector};

    fn on_constant_probs(tag: Mutation, p: f64) -> (f64, f64) {
        let mut g = Graph::new();
        let probs = g.parameter(Array::full(&[4, 1], p));
        let out = mutation_objective(tag, &mut g, probs);
        let v = g.forward(out).unwrap().item().unwrap();
        // derivative with respect to a common shift of every probability
        let d: f64 = g.backward(&[probs]).unwrap().get(probs).unwrap().data().iter().sum();
        (v, d)
    }

    #[test]
    fn constant_half_values() {
        let h = 0.5f64.ln();
        assert!((on_constant_probs(Mutation::Minimax, 0.5).0 - 0.5 * h).abs() < 1e-15);
        assert!((on_constant_probs(Mutation::Heuristic, 0.5).0 + 0.5 * h).abs() < 1e-15);
        assert_eq!(on_constant_probs(Mutation::LeastSquares, 0.5).0, 0.25);
        assert!((on_constant_probs(Mutation::Minimax, 0.5).0 + 0.34657).abs() < 1e-5);
    }

    #[test]
    fn perfect_deception_least_squares() {
        let (v, _) = on_constant_probs(Mutation::LeastSquares, 1.0 - 1e-7);
        assert!(v < 1e-13);
    }

    #[test]
    fn derivative_closed_forms() {
        for p in [0.01, 0.5, 0.99] {
            let (_, d) = on_constant_probs(Mutation::Minimax, p);
            assert!((d - (-1.0 / (2.0 * (1.0 - p)))).abs() < 1e-12);
            let (_, d) = on_constant_probs(Mutation::Heuristic, p);
            assert!((d - (-1.0 / (2.0 * p))).abs() < 1e-12);
            let (_, d) = on_constant_probs(Mutation::LeastSquares, p);
            assert!((d - 2.0 * (p - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn mutation_names_round_trip() {
        for m in Mutation::ALL {
            assert_eq!(m.name().parse::<Mutation>().unwrap(), m);
        }
        assert!("wgan".parse::<Mutation>().is_err());
    }

    fn zero_disc() -> Network {
        Network::zeros(MlpSpec::discriminator(2, 4, 1)).unwrap()
    }

    #[test]
    fn constant_discriminator_objective() {
        let real = Array::matrix(4, 2, vec![1.0; 8]).unwrap();
        let fake = Array::matrix(4, 2, vec![-1.0; 8]).unwrap();
        let l = DiscriminatorLoss::new(&zero_disc(), &real, &[fake]).unwrap();
        assert!((l.objective() - 2.0 * 0.5f64.ln()).abs() < 1e-15);
        assert!((l.objective() + 1.3863).abs() < 1e-4);
    }

    #[test]
    fn saturated_discriminator_objective() {
        // a single linear unit with a huge weight on the first coordinate
        let spec = MlpSpec {
            input_dim: 2,
            hidden: vec![],
            output_dim: 1,
            output_activation: crate::nets::OutputActivation::Sigmoid,
        };
        let params = ParamVector::from_tensors(
            &spec,
            vec![Array::from_rows(&[[100.0], [0.0]]).unwrap(), Array::zeros(&[1])],
        )
        .unwrap();
        let d = Network::new(spec, params).unwrap();
        let real = Array::matrix(3, 2, vec![1.0, 0.0, 2.0, 0.0, 3.0, 0.0]).unwrap();
        let fake = Array::matrix(3, 2, vec![-1.0, 0.0, -2.0, 0.0, -3.0, 0.0]).unwrap();
        let l = DiscriminatorLoss::new(&d, &real, &[fake]).unwrap();
        let want = 2.0 * (1.0f64 - 1e-7).ln();
        assert!((l.objective() - want).abs() < 1e-15);
        assert!(l.objective().abs() < 1e-6);
    }

    #[test]
    fn generator_gradient_vanishes_for_zero_discriminator() {
        let gen = Network::init(
            MlpSpec::generator(2, 2, 4, 1),
            &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0),
        )
        .unwrap();
        let z = Array::matrix(3, 2, vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6]).unwrap();
        for tag in Mutation::ALL {
            let grads = mutation_loss(tag, &zero_disc(), &gen, &z).unwrap().gradients().unwrap();
            assert!(grads.iter().all(|g| g.data().iter().all(|&v| v == 0.0)));
        }
    }
}
