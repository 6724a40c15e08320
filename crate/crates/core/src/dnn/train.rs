//! Mini-batch Adam on the per-sample RMSE, keeping the weights with the best
//! validation loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{NetworkSpec, NetworkWeights, TrainingMeta};
use crate::dataset::DatasetFile;
use crate::error::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Seeds both the initial weights and the batch order.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub validation: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    /// Weights at the epoch with the lowest validation loss.
    pub weights: NetworkWeights,
    /// Entry 0 is the untrained network; entry `e` follows epoch `e`.
    pub history: Vec<EpochLoss>,
    pub best_epoch: usize,
}

struct Split {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
}

fn split(data: &DatasetFile, spec: &NetworkSpec, idx: &[usize]) -> Split {
    let width = spec.input_dim();
    Split {
        inputs: idx
            .iter()
            .map(|&i| data.normalization.normalize_features(&data.samples[i].features)[..width].to_vec())
            .collect(),
        targets: idx.iter().map(|&i| data.target(i)).collect(),
    }
}

fn mean_loss(w: &NetworkWeights, s: &Split) -> Result<f64> {
    let mut total = 0.0;
    for (x, y) in s.inputs.iter().zip(&s.targets) {
        total += w.loss(x, y)?;
    }
    Ok(total / s.inputs.len().max(1) as f64)
}

pub fn train(data: &DatasetFile, spec: &NetworkSpec, cfg: &TrainConfig) -> Result<TrainOutput> {
    spec.validate()?;
    if data.k != spec.users || data.g != spec.groups {
        return Err(Error::Dimension(format!(
            "dataset has K={}, G={}; network expects K={}, G={}",
            data.k, data.g, spec.users, spec.groups
        )));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::domain("batch size and learning rate must be positive"));
    }
    if data.split_indices.train.is_empty() || data.split_indices.validation.is_empty() {
        return Err(Error::domain("training needs non-empty train and validation splits"));
    }
    let train_set = split(data, spec, &data.split_indices.train);
    let val_set = split(data, spec, &data.split_indices.validation);

    let mut w = NetworkWeights::init(spec, cfg.seed)?;
    w.normalization = Some(data.normalization.clone());
    let mut m: Vec<Vec<f64>> = w.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect();
    let mut v = m.clone();
    let mut grads = m.clone();
    let mut step = 0i32;

    let check = |loss: f64, epoch: usize| -> Result<f64> {
        if loss.is_finite() {
            Ok(loss)
        } else {
            Err(Error::Training {
                epoch,
                message: format!("loss became {loss}"),
            })
        }
    };
    let mut history = vec![EpochLoss {
        epoch: 0,
        train: check(mean_loss(&w, &train_set)?, 0)?,
        validation: check(mean_loss(&w, &val_set)?, 0)?,
    }];
    let mut best = (history[0].validation, 0, w.clone());

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e);
    let mut order: Vec<usize> = (0..train_set.inputs.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grads.iter_mut().flatten().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let trace = w.run(&train_set.inputs[i])?;
                w.accumulate(&trace, &train_set.targets[i], scale, &mut grads)?;
            }
            step += 1;
            let c1 = 1.0 - BETA1.powi(step);
            let c2 = 1.0 - BETA2.powi(step);
            for (ti, t) in w.tensors.iter_mut().enumerate() {
                for (j, p) in t.data.iter_mut().enumerate() {
                    let g = grads[ti][j];
                    m[ti][j] = BETA1 * m[ti][j] + (1.0 - BETA1) * g;
                    v[ti][j] = BETA2 * v[ti][j] + (1.0 - BETA2) * g * g;
                    let m_hat = m[ti][j] / c1;
                    let v_hat = v[ti][j] / c2;
                    *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
        }
        let entry = EpochLoss {
            epoch,
            train: check(mean_loss(&w, &train_set)?, epoch)?,
            validation: check(mean_loss(&w, &val_set)?, epoch)?,
        };
        if entry.validation < best.0 {
            best = (entry.validation, epoch, w.clone());
        }
        history.push(entry);
    }
    let (best_loss, best_epoch, mut weights) = best;
    weights.meta = TrainingMeta {
        seed: cfg.seed,
        epochs: cfg.epochs,
        best_epoch,
        best_validation_loss: best_loss,
    };
    Ok(TrainOutput {
        weights,
        history,
        best_epoch,
    })
}
