//! FGSM and PGD adversarial perturbations of scalograms.
//!
//! Epsilon and alpha are fractions of the [0, 1] pixel range. PGD starts
//! from the clean input (no random start), clips every iterate elementwise
//! to `[x - eps, x + eps]`, and additionally clamps to the valid pixel
//! range each step. `sign(0)` is defined as 0. Both attacks are
//! deterministic functions of (model, input, label, config).

use crate::nn::{Model, ModelError, Scalar, Tensor};
use crate::scalogram::Scalogram;
use crate::signal::SignalClass;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default PGD step size: the paper-style "5" read on an 8-bit pixel
/// scale, i.e. 5/255 of the unit range.
pub const DEFAULT_ALPHA: f64 = 5.0 / 255.0;

/// Default PGD iteration count.
pub const DEFAULT_STEPS: usize = 20;

/// Default epsilon grid for accuracy-vs-epsilon sweeps.
pub const DEFAULT_EPSILON_GRID: [f64; 7] = [0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.10];

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("attack config is {got:?} but {expected:?} was requested")]
    KindMismatch { expected: AttackKind, got: AttackKind },
    #[error("invalid attack config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AttackKind {
    Fgsm,
    Pgd,
}

impl std::fmt::Display for AttackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AttackKind::Fgsm => "FGSM",
            AttackKind::Pgd => "PGD",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub epsilon: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub clamp_lo: f64,
    #[serde(default = "default_clamp_hi")]
    pub clamp_hi: f64,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_steps() -> usize {
    DEFAULT_STEPS
}

fn default_clamp_hi() -> f64 {
    1.0
}

impl AttackConfig {
    pub fn fgsm(epsilon: f64) -> AttackConfig {
        AttackConfig {
            kind: AttackKind::Fgsm,
            epsilon,
            alpha: DEFAULT_ALPHA,
            steps: 1,
            clamp_lo: 0.0,
            clamp_hi: 1.0,
        }
    }

    pub fn pgd(epsilon: f64) -> AttackConfig {
        AttackConfig {
            kind: AttackKind::Pgd,
            epsilon,
            alpha: DEFAULT_ALPHA,
            steps: DEFAULT_STEPS,
            clamp_lo: 0.0,
            clamp_hi: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        if !(self.epsilon >= 0.0) {
            return Err(AttackError::BadConfig("epsilon must be >= 0".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(AttackError::BadConfig("alpha must be > 0".into()));
        }
        if self.steps < 1 {
            return Err(AttackError::BadConfig("steps must be >= 1".into()));
        }
        if !(self.clamp_lo < self.clamp_hi) {
            return Err(AttackError::BadConfig("clamp_lo must be < clamp_hi".into()));
        }
        Ok(())
    }
}

fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

fn to_scalogram<T: Scalar>(data: &[T], template: &Scalogram) -> Scalogram {
    Scalogram {
        pixels: data.iter().map(|v| v.as_f64() as f32).collect(),
        height: template.height,
        width: template.width,
        source_id: template.source_id.clone(),
    }
}

/// One-step fast gradient sign attack:
/// `x_adv = clamp(x + eps * sign(grad_x L), lo, hi)`.
pub fn fgsm<T: Scalar>(
    model: &Model<T>,
    x: &Scalogram,
    y: SignalClass,
    cfg: &AttackConfig,
) -> Result<Scalogram, AttackError> {
    if cfg.kind != AttackKind::Fgsm {
        return Err(AttackError::KindMismatch {
            expected: AttackKind::Fgsm,
            got: cfg.kind,
        });
    }
    cfg.validate()?;
    let input = Tensor::from_scalogram(x);
    let (grad, _) = model.input_gradient(&input, y)?;
    let eps = T::from_f64(cfg.epsilon);
    let (lo, hi) = (T::from_f64(cfg.clamp_lo), T::from_f64(cfg.clamp_hi));
    let adv: Vec<T> = input
        .data
        .iter()
        .zip(&grad.data)
        .map(|(&xi, &g)| (xi + eps * sign(g)).max(lo).min(hi))
        .collect();
    Ok(to_scalogram(&adv, x))
}

/// N-step projected gradient descent:
/// `x_n = clip_[x,eps](x_{n-1} + alpha * sign(grad L))`, clamped to the
/// valid range each step; `x_0 = x`.
pub fn pgd<T: Scalar>(
    model: &Model<T>,
    x: &Scalogram,
    y: SignalClass,
    cfg: &AttackConfig,
) -> Result<Scalogram, AttackError> {
    if cfg.kind != AttackKind::Pgd {
        return Err(AttackError::KindMismatch {
            expected: AttackKind::Pgd,
            got: cfg.kind,
        });
    }
    cfg.validate()?;
    let origin = Tensor::<T>::from_scalogram(x);
    let eps = T::from_f64(cfg.epsilon);
    let alpha = T::from_f64(cfg.alpha);
    let (lo, hi) = (T::from_f64(cfg.clamp_lo), T::from_f64(cfg.clamp_hi));

    let mut current = origin.clone();
    for _ in 0..cfg.steps {
        let (grad, _) = model.input_gradient(&current, y)?;
        for i in 0..current.data.len() {
            let stepped = current.data[i] + alpha * sign(grad.data[i]);
            let clipped = stepped
                .max(origin.data[i] - eps)
                .min(origin.data[i] + eps);
            current.data[i] = clipped.max(lo).min(hi);
        }
    }
    Ok(to_scalogram(&current.data, x))
}

/// Dispatch on the configured attack kind.
pub fn perturb<T: Scalar>(
    model: &Model<T>,
    x: &Scalogram,
    y: SignalClass,
    cfg: &AttackConfig,
) -> Result<Scalogram, AttackError> {
    match cfg.kind {
        AttackKind::Fgsm => fgsm(model, x, y, cfg),
        AttackKind::Pgd => pgd(model, x, y, cfg),
    }
}

/// One row of an accuracy-vs-epsilon sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kind: AttackKind,
    pub epsilon: f64,
    pub n_samples: usize,
    pub accuracy: f64,
}

/// Evaluate model accuracy on attacked inputs over a (kind, epsilon) grid.
/// The epsilon = 0 rows equal clean accuracy exactly.
pub fn attack_sweep(
    model: &Model<f32>,
    data: &[crate::nn::LabeledExample],
    kinds: &[AttackKind],
    epsilons: &[f64],
) -> Result<Vec<SweepRow>, AttackError> {
    if data.is_empty() {
        return Err(AttackError::BadConfig("empty dataset".into()));
    }
    if epsilons.is_empty() {
        return Err(AttackError::BadConfig("empty epsilon grid".into()));
    }
    let mut rows = Vec::with_capacity(kinds.len() * epsilons.len());
    for &kind in kinds {
        for &eps in epsilons {
            let cfg = match kind {
                AttackKind::Fgsm => AttackConfig::fgsm(eps),
                AttackKind::Pgd => AttackConfig::pgd(eps),
            };
            let correct: usize = data
                .par_iter()
                .map(|e| {
                    let adv = perturb(model, &e.x, e.y, &cfg)?;
                    let (pred, _) = model.classify(&adv)?;
                    Ok((pred == e.y) as usize)
                })
                .sum::<Result<usize, AttackError>>()?;
            rows.push(SweepRow {
                kind,
                epsilon: eps,
                n_samples: data.len(),
                accuracy: correct as f64 / data.len() as f64,
            });
        }
    }
    Ok(rows)
}
