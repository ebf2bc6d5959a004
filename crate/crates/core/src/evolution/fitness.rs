//! Child evaluation and survivor selection.

use std::cmp::Ordering;

use super::objectives::{DiscriminatorLoss, Mutation};
use crate::autodiff::{gradient_norm, Array};
use crate::error::{Error, Result};
use crate::nets::{disc_forward, gen_forward, Network};

/// Upper bound on the diversity score, reached when the discriminator
/// gradient norm falls below `exp(-LOG_CAP)`.
pub const LOG_CAP: f64 = 20.0;

/// Quality, diversity and their weighted sum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitnessScore {
    pub fq: f64,
    pub fd: f64,
    pub total: f64,
}

impl FitnessScore {
    pub fn new(fq: f64, fd: f64, gamma: f64) -> Self {
        FitnessScore { fq, fd, total: fq + gamma * fd }
    }
}

/// Mean discriminator output on the generator's samples for `z`.
pub fn quality_fitness(disc: &Network, gen: &Network, z: &Array) -> Result<f64> {
    let fake = gen_forward(gen, z)?;
    let probs = disc_forward(disc, &fake)?;
    Ok(probs.data().iter().sum::<f64>() / probs.len() as f64)
}

/// `−ln ‖∇_w L_D‖` for the discriminator loss on `real` against the
/// generator's samples for `z`, capped at [`LOG_CAP`].
///
/// The gradient covers every discriminator tensor; `disc` is not modified.
pub fn diversity_fitness(disc: &Network, gen: &Network, real: &Array, z: &Array) -> Result<f64> {
    let fake = gen_forward(gen, z)?;
    let loss = DiscriminatorLoss::new(disc, real, &[fake])?;
    let norm = gradient_norm(&loss.loss().gradient_map()?)?;
    Ok(diversity_from_norm(norm))
}

pub(crate) fn diversity_from_norm(norm: f64) -> f64 {
    (-norm.ln()).min(LOG_CAP)
}

/// Evaluates both components and combines them with weight `gamma`.
pub fn evaluate(disc: &Network, gen: &Network, real: &Array, z: &Array, gamma: f64) -> Result<FitnessScore> {
    let fq = quality_fitness(disc, gen, z)?;
    let fd = diversity_fitness(disc, gen, real, z)?;
    Ok(FitnessScore::new(fq, fd, gamma))
}

/// Identification of one child inside a step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub parent: usize,
    pub mutation: Mutation,
    pub total: f64,
}

/// Indices of the `n_parents` best candidates, best first.
///
/// Order is by total descending, then mutation order, then parent index.
pub fn select(candidates: &[Candidate], n_parents: usize) -> Result<Vec<usize>> {
    if n_parents == 0 || candidates.len() < n_parents {
        return Err(Error::Usage(format!(
            "cannot keep {n_parents} survivors out of {} children",
            candidates.len()
        )));
    }
    if let Some(c) = candidates.iter().find(|c| c.total.is_nan()) {
        return Err(Error::Numeric(format!(
            "NaN fitness for the {} child of parent {}",
            c.mutation, c.parent
        )));
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (&candidates[a], &candidates[b]);
        cb.total
            .partial_cmp(&ca.total)
            .unwrap_or(Ordering::Equal)
            .then(ca.mutation.rank().cmp(&cb.mutation.rank()))
            .then(ca.parent.cmp(&cb.parent))
    });
    order.truncate(n_parents);
    Ok(order)
}
