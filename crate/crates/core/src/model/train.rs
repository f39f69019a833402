use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sample_negatives, FeatureSet, NeuAcfModel, TrainingSet};
use crate::error::{Error, Result};
use crate::nn::AdamState;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Example {
    pub user: usize,
    pub item: usize,
    pub label: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub neg_ratio: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 1024,
            neg_ratio: 10,
        }
    }
}

/// Shuffles the positives and follows each with `neg_ratio` fresh negatives.
pub fn build_epoch_examples<R: Rng + ?Sized>(
    train: &TrainingSet,
    neg_ratio: usize,
    rng: &mut R,
) -> Vec<Example> {
    let mut order: Vec<(usize, usize)> = train.positives().to_vec();
    order.shuffle(rng);
    let mut out = Vec::with_capacity(order.len() * (neg_ratio + 1));
    for (user, item) in order {
        out.push(Example {
            user,
            item,
            label: 1.0,
        });
        for neg in sample_negatives(train, user, neg_ratio, rng) {
            out.push(Example {
                user,
                item: neg,
                label: 0.0,
            });
        }
    }
    out
}

/// One pass over the training positives with freshly sampled negatives.
/// Returns the example-weighted mean loss.
pub fn train_epoch<R: Rng + ?Sized>(
    model: &mut NeuAcfModel,
    optimizer: &mut AdamState,
    features: &FeatureSet,
    train: &TrainingSet,
    config: &TrainConfig,
    epoch: usize,
    rng: &mut R,
) -> Result<f64> {
    if config.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let examples = build_epoch_examples(train, config.neg_ratio, rng);
    let mut total = 0.0;
    for (batch_id, batch) in examples.chunks(config.batch_size).enumerate() {
        let (loss, grads) = model.loss_and_grads(features, batch)?;
        if !loss.is_finite() {
            return Err(Error::NumericFault {
                epoch,
                batch: batch_id,
            });
        }
        total += loss * batch.len() as f64;
        let g = grads.slices();
        optimizer.step(&mut model.params_mut(), &g);
    }
    Ok(if examples.is_empty() {
        0.0
    } else {
        total / examples.len() as f64
    })
}
