//! Finite-difference gradient verification.
//!
//! Compares every analytic parameter and input gradient against central
//! finite differences at 64-bit precision. Instances are resampled until
//! all relu/pool kink sites have enough margin that the difference stencil
//! cannot straddle one.

use super::{LayerSpec, Model, ModelError, Tensor};
use crate::signal::SignalClass;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Result of one full-model gradient check.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckOutcome {
    pub max_rel_err: f64,
    pub values_checked: usize,
}

/// Relative error with an absolute floor for near-zero pairs.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs());
    if denom < 1e-6 {
        if (analytic - numeric).abs() <= 1e-8 {
            0.0
        } else {
            1.0
        }
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// Check all parameter gradients and the input gradient of `model` at
/// `(x, y)` against central finite differences with step `h`.
pub fn check_gradients(
    model: &Model<f64>,
    x: &Tensor<f64>,
    y: SignalClass,
    h: f64,
) -> Result<GradCheckOutcome, ModelError> {
    let pass = model.backward(x, y)?;
    let analytic_params = pass.grads.to_vector();
    let analytic_input = &pass.input_grad.data;

    let mut max_err = 0.0f64;
    let mut checked = 0usize;

    let base_params = model.param_vector();
    let mut work = model.clone();
    for i in 0..base_params.len() {
        let mut p = base_params.clone();
        p[i] = base_params[i] + h;
        work.load_param_vector(&p)?;
        let loss_hi = work.loss(x, y)?;
        p[i] = base_params[i] - h;
        work.load_param_vector(&p)?;
        let loss_lo = work.loss(x, y)?;
        let numeric = (loss_hi - loss_lo) / (2.0 * h);
        max_err = max_err.max(rel_err(analytic_params[i], numeric));
        checked += 1;
    }

    for i in 0..x.data.len() {
        let mut xp = x.clone();
        xp.data[i] = x.data[i] + h;
        let loss_hi = model.loss(&xp, y)?;
        xp.data[i] = x.data[i] - h;
        let loss_lo = model.loss(&xp, y)?;
        let numeric = (loss_hi - loss_lo) / (2.0 * h);
        max_err = max_err.max(rel_err(analytic_input[i], numeric));
        checked += 1;
    }

    Ok(GradCheckOutcome {
        max_rel_err: max_err,
        values_checked: checked,
    })
}

/// Layer types covered by per-layer gradient checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv2d,
    Residual,
    Relu,
    Softplus,
    MaxPool2,
    Flatten,
    Dense,
    Softmax,
}

impl LayerKind {
    pub const ALL: [LayerKind; 8] = [
        LayerKind::Conv2d,
        LayerKind::Residual,
        LayerKind::Relu,
        LayerKind::Softplus,
        LayerKind::MaxPool2,
        LayerKind::Flatten,
        LayerKind::Dense,
        LayerKind::Softmax,
    ];
}

const CLASSES: [SignalClass; 3] = SignalClass::SYNTHETIC;

fn instance_specs(kind: LayerKind) -> (Vec<usize>, Vec<LayerSpec>) {
    match kind {
        LayerKind::Conv2d => (
            vec![2, 4, 4],
            vec![
                LayerSpec::Conv2d {
                    in_channels: 2,
                    out_channels: 3,
                    kernel: 3,
                    padding: 1,
                },
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    in_features: 48,
                    out_features: 3,
                },
                LayerSpec::Softmax,
            ],
        ),
        LayerKind::Residual => (
            vec![2, 4, 4],
            vec![
                LayerSpec::Residual {
                    channels: 2,
                    kernel: 3,
                    padding: 1,
                },
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    in_features: 32,
                    out_features: 3,
                },
                LayerSpec::Softmax,
            ],
        ),
        LayerKind::Relu => (
            vec![6],
            vec![
                LayerSpec::Relu,
                LayerSpec::Dense {
                    in_features: 6,
                    out_features: 3,
                },
                LayerSpec::Softmax,
            ],
        ),
        LayerKind::Softplus => (
            vec![6],
            vec![
                LayerSpec::Softplus,
                LayerSpec::Dense {
                    in_features: 6,
                    out_features: 3,
                },
                LayerSpec::Softmax,
            ],
        ),
        LayerKind::MaxPool2 => (
            vec![1, 4, 4],
            vec![
                LayerSpec::MaxPool2,
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    in_features: 4,
                    out_features: 3,
                },
                LayerSpec::Softmax,
            ],
        ),
        LayerKind::Flatten => (
            vec![2, 3, 3],
            vec![
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    in_features: 18,
                    out_features: 3,
                },
                LayerSpec::Softmax,
            ],
        ),
        LayerKind::Dense => (
            vec![6],
            vec![
                LayerSpec::Dense {
                    in_features: 6,
                    out_features: 5,
                },
                LayerSpec::Dense {
                    in_features: 5,
                    out_features: 3,
                },
                LayerSpec::Softmax,
            ],
        ),
        LayerKind::Softmax => (
            vec![4],
            vec![
                LayerSpec::Dense {
                    in_features: 4,
                    out_features: 3,
                },
                LayerSpec::Softmax,
            ],
        ),
    }
}

/// Build a random small model and input exercising `kind`, resampling
/// until every kink site has margin for the finite-difference stencil.
pub fn random_instance(kind: LayerKind, seed: u64) -> (Model<f64>, Tensor<f64>, SignalClass) {
    let (input_shape, specs) = instance_specs(kind);
    let mut attempt = 0u64;
    loop {
        let s = seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let model = Model::<f64>::init(
            input_shape.clone(),
            CLASSES.to_vec(),
            specs.clone(),
            s,
        )
        .expect("instance architecture is well-formed");
        let mut rng = ChaCha8Rng::seed_from_u64(s ^ 0xA5A5_5A5A);
        let data: Vec<f64> = (0..input_shape.iter().product::<usize>())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let x = Tensor::new(input_shape.clone(), data);
        let y = CLASSES[(s % 3) as usize];
        if model.kink_margin(&x).unwrap_or(0.0) >= 1e-3 {
            return (model, x, y);
        }
        attempt += 1;
        assert!(attempt < 1000, "could not find a kink-free instance");
    }
}
