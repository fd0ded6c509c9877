use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seeds::derive_seed;

use super::config::{Loss, TrainConfig};
use super::loss::{objective_grad, rows_for};
use super::model::RelevanceModel;
use super::optim::Adam;
use super::pairs::TrainingPair;

/// Mean batch objective per epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub epoch_loss: Vec<f64>,
    pub steps: u64,
}

pub fn train(pairs: &[TrainingPair], config: &TrainConfig) -> Result<RelevanceModel> {
    train_traced(pairs, config).map(|(m, _)| m)
}

/// Trains the head with Adam over shuffled mini-batches.
///
/// Weights and biases start at `U(-1/sqrt(D), 1/sqrt(D))`. Initialization and
/// batch order draw from streams derived from `config.seed`, so equal inputs
/// give bit-identical models.
pub fn train_traced(
    pairs: &[TrainingPair],
    config: &TrainConfig,
) -> Result<(RelevanceModel, TrainTrace)> {
    config.validate()?;
    let Some(first) = pairs.first() else {
        return Err(Error::Empty("no training pairs".into()));
    };
    let dim = first.dim();
    if dim == 0 {
        return Err(Error::Empty("training features have dimension 0".into()));
    }
    for p in pairs {
        for v in [&p.positive, &p.negative] {
            if v.len() != dim {
                return Err(Error::DimMismatch {
                    context: format!("training pair {}", p.example_id),
                    expected: dim,
                    found: v.len(),
                });
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite(format!("features of {}", p.example_id)));
            }
        }
    }

    let rows = rows_for(config.loss);
    let bound = 1.0 / (dim as f64).sqrt();
    let init = Uniform::new_inclusive(-bound, bound);
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "init"));
    let mut theta: Vec<f64> = (0..rows * (dim + 1))
        .map(|_| init.sample(&mut init_rng))
        .collect();
    let mut order_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "batch-order"));
    let mut adam = Adam::new(theta.len(), config.learning_rate, config.adam);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut trace = TrainTrace::default();

    for epoch in 0..config.epochs {
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&TrainingPair> = chunk.iter().map(|&i| &pairs[i]).collect();
            let (loss, grad) = objective_grad(&theta, dim, &batch, config);
            if !loss.is_finite() || !grad.iter().all(|g| g.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "training objective at epoch {epoch}, batch {b} (loss {loss})"
                )));
            }
            adam.step(&mut theta, &grad);
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        log::debug!("epoch {epoch}: mean objective {mean:.6}");
        trace.epoch_loss.push(mean);
    }
    trace.steps = adam.steps();

    let (weights, bias) = match config.loss {
        Loss::BceSoftmax2 => (
            (0..dim).map(|i| theta[dim + i] - theta[i]).collect(),
            theta[2 * dim + 1] - theta[2 * dim],
        ),
        Loss::BceSigmoid | Loss::TripletMod => (theta[..dim].to_vec(), theta[dim]),
    };
    Ok((RelevanceModel::new(weights, bias, config.clone()), trace))
}
