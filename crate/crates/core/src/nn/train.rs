//! Mini-batch training and evaluation.

use super::{Gradients, Model, ModelError, Scalar, Tensor};
use crate::scalogram::Scalogram;
use crate::signal::SignalClass;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// One training/evaluation sample.
#[derive(Debug, Clone)]
pub struct LabeledExample {
    pub x: Scalogram,
    pub y: SignalClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 12,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.batch_size < 1 {
            return Err(ModelError::BadTrainConfig("batch_size must be >= 1".into()));
        }
        if self.epochs < 1 {
            return Err(ModelError::BadTrainConfig("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) && self.learning_rate != 0.0 {
            return Err(ModelError::BadTrainConfig(
                "learning_rate must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

enum Optimizer<T> {
    Sgd,
    Adam {
        m: Vec<T>,
        v: Vec<T>,
        t: usize,
    },
}

impl<T: Scalar> Optimizer<T> {
    fn new(kind: OptimizerKind, n: usize) -> Optimizer<T> {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::Adam {
                m: vec![T::zero(); n],
                v: vec![T::zero(); n],
                t: 0,
            },
        }
    }

    fn step(&mut self, params: &mut [T], grad: &[T], lr: T) {
        match self {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p = *p - lr * *g;
                }
            }
            Optimizer::Adam { m, v, t } => {
                let beta1 = T::from_f64(0.9);
                let beta2 = T::from_f64(0.999);
                let eps = T::from_f64(1e-8);
                *t += 1;
                let bc1 = T::one() - beta1.powi(*t as i32);
                let bc2 = T::one() - beta2.powi(*t as i32);
                for i in 0..params.len() {
                    m[i] = beta1 * m[i] + (T::one() - beta1) * grad[i];
                    v[i] = beta2 * v[i] + (T::one() - beta2) * grad[i] * grad[i];
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

/// Train a copy of the model; deterministic for a fixed seed.
///
/// Per-example gradients within a batch are computed in parallel but
/// reduced in index order, so results are bit-identical across runs.
pub fn train<T: Scalar>(
    model: &Model<T>,
    data: &[LabeledExample],
    cfg: &TrainConfig,
) -> Result<(Model<T>, TrainReport), ModelError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let tensors: Vec<Tensor<T>> = data.iter().map(|e| Tensor::from_scalogram(&e.x)).collect();
    let labels: Vec<SignalClass> = data.iter().map(|e| e.y).collect();
    for &y in &labels {
        if model.class_index(y).is_none() {
            return Err(ModelError::UnknownClass(y));
        }
    }

    let mut work = model.clone();
    let mut params = work.param_vector();
    let mut opt = Optimizer::new(cfg.optimizer, params.len());
    let lr = T::from_f64(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport::default();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            work.load_param_vector(&params)?;
            let results: Vec<(Gradients<T>, f64, bool)> = batch
                .par_iter()
                .map(|&i| {
                    let pass = work.backward(&tensors[i], labels[i])?;
                    let mut best = 0;
                    for (j, p) in pass.probs.iter().enumerate() {
                        if *p > pass.probs[best] {
                            best = j;
                        }
                    }
                    let correct = model.classes()[best] == labels[i];
                    Ok((pass.grads, pass.loss.as_f64(), correct))
                })
                .collect::<Result<_, ModelError>>()?;

            let scale = T::from_f64(1.0 / batch.len() as f64);
            let mut grad_sum = vec![T::zero(); params.len()];
            for (grads, loss, ok) in &results {
                let flat = grads.to_vector();
                for (acc, g) in grad_sum.iter_mut().zip(&flat) {
                    *acc = *acc + *g;
                }
                loss_sum += loss;
                correct += *ok as usize;
            }
            for g in &mut grad_sum {
                *g = *g * scale;
            }
            opt.step(&mut params, &grad_sum, lr);
        }
        report.epochs.push(EpochStats {
            epoch,
            mean_loss: loss_sum / data.len() as f64,
            accuracy: correct as f64 / data.len() as f64,
        });
    }

    work.load_param_vector(&params)?;
    Ok((work, report))
}

/// Fraction of argmax-correct predictions. Labels outside the model's
/// class set are never correct.
pub fn evaluate<T: Scalar>(model: &Model<T>, data: &[LabeledExample]) -> Result<f64, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let correct: usize = data
        .par_iter()
        .map(|e| {
            let (pred, _) = model.predict(&Tensor::from_scalogram(&e.x))?;
            Ok((pred == e.y) as usize)
        })
        .sum::<Result<usize, ModelError>>()?;
    Ok(correct as f64 / data.len() as f64)
}
