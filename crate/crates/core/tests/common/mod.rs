#![allow(dead_code)]

use egan_core::autodiff::Array;
use egan_core::data::{stream, Stream};
use egan_core::evolution::{mutation_loss, DiscriminatorLoss, Mutation};
use egan_core::nets::{Activation, Hidden, MlpSpec, Network, OutputActivation};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_TOL: f64 = 1e-8;
pub const SMALL_GRAD: f64 = 1e-6;

/// Central finite differences of `f` with respect to every entry of `params`.
///
/// A coordinate whose two one-sided differences disagree straddles a kink of
/// a rectifier or clamp within `FD_STEP`; its step is shrunk tenfold, at most
/// three times. `refined` counts such coordinates.
pub fn finite_differences(params: &[Array], f: impl Fn(&[Array]) -> f64) -> Vec<Vec<f64>> {
    finite_differences_counted(params, f).0
}

pub fn finite_differences_counted(params: &[Array], f: impl Fn(&[Array]) -> f64) -> (Vec<Vec<f64>>, usize) {
    let mut work = params.to_vec();
    let centre = f(&work);
    let mut out = Vec::with_capacity(params.len());
    let mut refined = 0;
    for t in 0..params.len() {
        let mut grads = Vec::with_capacity(params[t].len());
        for k in 0..params[t].len() {
            let orig = work[t].data()[k];
            let mut h = FD_STEP;
            let mut estimate = 0.0;
            for attempt in 0..4 {
                work[t].data_mut()[k] = orig + h;
                let up = f(&work);
                work[t].data_mut()[k] = orig - h;
                let down = f(&work);
                work[t].data_mut()[k] = orig;
                estimate = (up - down) / (2.0 * h);
                let (fwd, bwd) = ((up - centre) / h, (centre - down) / h);
                let scale = fwd.abs().max(bwd.abs()).max(SMALL_GRAD);
                // smooth: one-sided slopes agree up to O(h) curvature
                if (fwd - bwd).abs() <= 1e-2 * scale + 1e-7 {
                    break;
                }
                if attempt == 0 {
                    refined += 1;
                }
                h /= 10.0;
            }
            grads.push(estimate);
        }
        out.push(grads);
    }
    (out, refined)
}

/// Worst per-coordinate disagreement; `Err` names the first failing coordinate.
pub fn compare_gradients(analytic: &[Array], numeric: &[Vec<f64>]) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for (t, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        for (k, (&av, &nv)) in a.data().iter().zip(n).enumerate() {
            let ok = if av.abs() < SMALL_GRAD {
                (av - nv).abs() < ABS_TOL
            } else {
                let rel = (av - nv).abs() / av.abs();
                worst = worst.max(rel);
                rel < REL_TOL
            };
            if !ok {
                return Err(format!("tensor {t} entry {k}: analytic {av:e}, numeric {nv:e}"));
            }
        }
    }
    Ok(worst)
}

pub fn random_spec(rng: &mut ChaCha8Rng, input: usize, output: usize, out_act: OutputActivation) -> MlpSpec {
    let depth = rng.gen_range(1..=3);
    let hidden = (0..depth)
        .map(|_| Hidden {
            width: rng.gen_range(2..=16),
            activation: if rng.gen_bool(0.7) { Activation::LeakyRelu } else { Activation::Tanh },
        })
        .collect();
    MlpSpec { input_dim: input, hidden, output_dim: output, output_activation: out_act }
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array {
    Array::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// A randomly drawn loss: which objective, and the networks and batches it uses.
pub struct LossCase {
    pub objective: Option<Mutation>,
    pub gen: Network,
    pub disc: Network,
    pub real: Array,
    pub z: Array,
}

impl LossCase {
    pub fn draw(index: u64, objective: Option<Mutation>) -> Self {
        let mut rng = stream(1000 + index, Stream::Eval);
        let z_dim = rng.gen_range(1..=3);
        let gspec = random_spec(&mut rng, z_dim, 2, OutputActivation::Identity);
        let dspec = random_spec(&mut rng, 2, 1, OutputActivation::Sigmoid);
        let gen = Network::init(gspec, &mut rng).unwrap();
        let disc = Network::init(dspec, &mut rng).unwrap();
        let m = rng.gen_range(2..=8);
        let real = random_matrix(&mut rng, m, 2, 2.0);
        let z = random_matrix(&mut rng, m, z_dim, 1.5);
        LossCase { objective, gen, disc, real, z }
    }

    /// The trainable tensors of this loss: the generator's for a mutation,
    /// the discriminator's otherwise.
    pub fn params(&self) -> Vec<Array> {
        match self.objective {
            Some(_) => self.gen.params().tensors().to_vec(),
            None => self.disc.params().tensors().to_vec(),
        }
    }

    pub fn value_at(&self, params: &[Array]) -> f64 {
        match self.objective {
            Some(tag) => {
                let gen = with_params(&self.gen, params);
                mutation_loss(tag, &self.disc, &gen, &self.z).unwrap().value()
            }
            None => {
                let disc = with_params(&self.disc, params);
                let fake = egan_core::nets::gen_forward(&self.gen, &self.z).unwrap();
                DiscriminatorLoss::new(&disc, &self.real, &[fake]).unwrap().loss().value()
            }
        }
    }

    pub fn analytic(&self) -> Vec<Array> {
        match self.objective {
            Some(tag) => mutation_loss(tag, &self.disc, &self.gen, &self.z).unwrap().gradients().unwrap(),
            None => {
                let fake = egan_core::nets::gen_forward(&self.gen, &self.z).unwrap();
                DiscriminatorLoss::new(&self.disc, &self.real, &[fake]).unwrap().loss().gradients().unwrap()
            }
        }
    }

    /// Checks analytic gradients against central differences.
    pub fn check(&self) -> Result<f64, String> {
        let numeric = finite_differences(&self.params(), |p| self.value_at(p));
        compare_gradients(&self.analytic(), &numeric)
    }
}

pub fn with_params(net: &Network, params: &[Array]) -> Network {
    let mut n = net.clone();
    n.params_mut().tensors_mut().clone_from_slice(params);
    n
}
