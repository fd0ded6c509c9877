//! Per-pair losses, weight penalties and the batch objective with its
//! analytic gradient.
//!
//! Parameters are a flat vector: `rows * dim` weights followed by `rows`
//! biases. The sigmoid and triplet heads have one row; the softmax head has
//! two (row 0 "irrelevant", row 1 "relevant").

use super::config::{Loss, Regularizer, TrainConfig};
use super::pairs::TrainingPair;
use super::sigmoid;

/// Probabilities entering a logarithm are clamped to `[PROB_EPS, 1 - PROB_EPS]`.
pub const PROB_EPS: f64 = 1e-7;

fn clamp_prob(y: f64) -> f64 {
    y.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Binary cross-entropy of one (positive, negative) pair of sigmoid outputs.
pub fn bce_pair(y_pos: f64, y_neg: f64) -> f64 {
    -clamp_prob(y_pos).ln() - (1.0 - clamp_prob(y_neg)).ln()
}

/// Hinge term of the modified triplet loss: zero once the positive outscores
/// the negative by at least `margin`.
pub fn triplet_hinge(y_pos: f64, y_neg: f64, margin: f64) -> f64 {
    (y_neg - y_pos + margin).max(0.0)
}

/// `-ln(1 + m - f)`. Minimum `-ln(1 + m)` when the positive leads by the
/// margin, 0 at a tie.
pub fn triplet_mod(y_pos: f64, y_neg: f64, margin: f64) -> f64 {
    let f = triplet_hinge(y_pos, y_neg, margin);
    -(1.0 + margin - f).max(PROB_EPS).ln()
}

fn log_sum_exp2(z: [f64; 2]) -> f64 {
    let m = z[0].max(z[1]);
    m + ((z[0] - m).exp() + (z[1] - m).exp()).ln()
}

/// Cross-entropy of two-logit softmax outputs: the positive is labelled
/// class 1, the negative class 0.
pub fn softmax2_pair(z_pos: [f64; 2], z_neg: [f64; 2]) -> f64 {
    (log_sum_exp2(z_pos) - z_pos[1]) + (log_sum_exp2(z_neg) - z_neg[0])
}

pub fn penalty(weights: &[f64], reg: Regularizer, lambda: f64) -> f64 {
    match reg {
        Regularizer::None => 0.0,
        Regularizer::L1 => lambda * weights.iter().map(|w| w.abs()).sum::<f64>(),
        Regularizer::L2 => lambda * weights.iter().map(|w| w * w).sum::<f64>(),
    }
}

/// Adds the penalty (sub)gradient to `grad`. The L1 subgradient at 0 is 0.
pub fn add_penalty_grad(weights: &[f64], reg: Regularizer, lambda: f64, grad: &mut [f64]) {
    match reg {
        Regularizer::None => {}
        Regularizer::L1 => {
            for (g, &w) in grad.iter_mut().zip(weights) {
                if w > 0.0 {
                    *g += lambda;
                } else if w < 0.0 {
                    *g -= lambda;
                }
            }
        }
        Regularizer::L2 => {
            for (g, &w) in grad.iter_mut().zip(weights) {
                *g += 2.0 * lambda * w;
            }
        }
    }
}

pub fn rows_for(loss: Loss) -> usize {
    match loss {
        Loss::BceSoftmax2 => 2,
        Loss::BceSigmoid | Loss::TripletMod => 1,
    }
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

fn logit(theta: &[f64], dim: usize, rows: usize, row: usize, x: &[f64]) -> f64 {
    dot(&theta[row * dim..(row + 1) * dim], x) + theta[rows * dim + row]
}

/// Mean pair loss over `batch` plus one copy of the weight penalty; biases
/// are not penalized.
pub fn objective(theta: &[f64], dim: usize, batch: &[&TrainingPair], config: &TrainConfig) -> f64 {
    let rows = rows_for(config.loss);
    debug_assert_eq!(theta.len(), rows * (dim + 1));
    let data: f64 = batch
        .iter()
        .map(|p| pair_loss(theta, dim, rows, p, config))
        .sum::<f64>()
        / batch.len() as f64;
    data + penalty(&theta[..rows * dim], config.regularizer, config.lambda)
}

fn pair_loss(
    theta: &[f64],
    dim: usize,
    rows: usize,
    p: &TrainingPair,
    config: &TrainConfig,
) -> f64 {
    match config.loss {
        Loss::BceSigmoid => bce_pair(
            sigmoid(logit(theta, dim, rows, 0, &p.positive)),
            sigmoid(logit(theta, dim, rows, 0, &p.negative)),
        ),
        Loss::TripletMod => triplet_mod(
            sigmoid(logit(theta, dim, rows, 0, &p.positive)),
            sigmoid(logit(theta, dim, rows, 0, &p.negative)),
            config.margin,
        ),
        Loss::BceSoftmax2 => {
            let z = |x: &[f64]| [logit(theta, dim, rows, 0, x), logit(theta, dim, rows, 1, x)];
            softmax2_pair(z(&p.positive), z(&p.negative))
        }
    }
}

/// Objective value and gradient with respect to `theta`.
///
/// The sigmoid BCE gradient uses the logit form `y - label`, which equals
/// the derivative of the unclamped loss.
pub fn objective_grad(
    theta: &[f64],
    dim: usize,
    batch: &[&TrainingPair],
    config: &TrainConfig,
) -> (f64, Vec<f64>) {
    let rows = rows_for(config.loss);
    let mut grad = vec![0.0; theta.len()];
    let scale = 1.0 / batch.len() as f64;
    let mut data = 0.0;
    let accumulate = |grad: &mut [f64], row: usize, x: &[f64], dz: f64| {
        if dz == 0.0 {
            return;
        }
        for (g, xi) in grad[row * dim..(row + 1) * dim].iter_mut().zip(x) {
            *g += scale * dz * xi;
        }
        grad[rows * dim + row] += scale * dz;
    };
    for p in batch {
        match config.loss {
            Loss::BceSigmoid => {
                let yp = sigmoid(logit(theta, dim, rows, 0, &p.positive));
                let yn = sigmoid(logit(theta, dim, rows, 0, &p.negative));
                data += bce_pair(yp, yn);
                accumulate(&mut grad, 0, &p.positive, yp - 1.0);
                accumulate(&mut grad, 0, &p.negative, yn);
            }
            Loss::TripletMod => {
                let yp = sigmoid(logit(theta, dim, rows, 0, &p.positive));
                let yn = sigmoid(logit(theta, dim, rows, 0, &p.negative));
                data += triplet_mod(yp, yn, config.margin);
                let f = triplet_hinge(yp, yn, config.margin);
                if f > 0.0 {
                    let d = 1.0 / (1.0 + config.margin - f).max(PROB_EPS);
                    accumulate(&mut grad, 0, &p.positive, -d * yp * (1.0 - yp));
                    accumulate(&mut grad, 0, &p.negative, d * yn * (1.0 - yn));
                }
            }
            Loss::BceSoftmax2 => {
                for (x, label) in [(&p.positive, 1usize), (&p.negative, 0usize)] {
                    let z = [logit(theta, dim, rows, 0, x), logit(theta, dim, rows, 1, x)];
                    let lse = log_sum_exp2(z);
                    data += lse - z[label];
                    for k in 0..2 {
                        let pk = (z[k] - lse).exp();
                        let target = if k == label { 1.0 } else { 0.0 };
                        accumulate(&mut grad, k, x, pk - target);
                    }
                }
            }
        }
    }
    let weights = &theta[..rows * dim];
    add_penalty_grad(
        weights,
        config.regularizer,
        config.lambda,
        &mut grad[..rows * dim],
    );
    (
        data * scale + penalty(weights, config.regularizer, config.lambda),
        grad,
    )
}
