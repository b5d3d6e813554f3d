//! The layered model: architecture validation, forward pass, loss, and
//! exact reverse-mode gradients for parameters and input.

use super::layer::{softmax, Layer, LayerCache, LayerGrad};
use super::{LayerSpec, ModelError, Scalar, Tensor};
use crate::scalogram::Scalogram;
use crate::signal::SignalClass;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A feed-forward model ending in a softmax output layer.
///
/// The model is immutable during inference; concurrent `forward`/`backward`
/// calls on a shared instance are safe.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    input_shape: Vec<usize>,
    classes: Vec<SignalClass>,
    layers: Vec<Layer<T>>,
}

/// Per-layer parameter gradients, parallel to the model's layers.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub per_layer: Vec<LayerGrad<T>>,
}

/// Everything one reverse pass produces.
#[derive(Debug, Clone)]
pub struct BackwardPass<T> {
    pub grads: Gradients<T>,
    pub input_grad: Tensor<T>,
    pub loss: T,
    pub probs: Vec<T>,
}

impl<T: Scalar> Gradients<T> {
    /// Flatten into the model's canonical parameter order.
    pub fn to_vector(&self) -> Vec<T> {
        let mut out = Vec::new();
        for g in &self.per_layer {
            g.visit(&mut |slice| out.extend_from_slice(slice));
        }
        out
    }
}

impl<T: Scalar> Model<T> {
    /// Build a model with seeded He-uniform initialization.
    pub fn init(
        input_shape: Vec<usize>,
        classes: Vec<SignalClass>,
        specs: Vec<LayerSpec>,
        seed: u64,
    ) -> Result<Model<T>, ModelError> {
        Self::validate_architecture(&input_shape, &classes, &specs)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = specs.iter().map(|s| Layer::init(s, &mut rng)).collect();
        Ok(Model {
            input_shape,
            classes,
            layers,
        })
    }

    /// Build a model with all-zero parameters (for checkpoint loading).
    pub fn zeroed(
        input_shape: Vec<usize>,
        classes: Vec<SignalClass>,
        specs: Vec<LayerSpec>,
    ) -> Result<Model<T>, ModelError> {
        Self::validate_architecture(&input_shape, &classes, &specs)?;
        let layers = specs.iter().map(Layer::zeroed).collect();
        Ok(Model {
            input_shape,
            classes,
            layers,
        })
    }

    /// The desk-scale CNN: conv(8)-relu-pool, one residual block, conv(16)-
    /// relu-pool, dense(64)-relu-dense(K)-softmax on 1x64x64 inputs.
    pub fn desk_cnn(classes: Vec<SignalClass>, seed: u64) -> Model<T> {
        let k = classes.len();
        Model::init(
            vec![1, 64, 64],
            classes,
            vec![
                LayerSpec::Conv2d {
                    in_channels: 1,
                    out_channels: 8,
                    kernel: 3,
                    padding: 1,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool2,
                LayerSpec::Residual {
                    channels: 8,
                    kernel: 3,
                    padding: 1,
                },
                LayerSpec::Conv2d {
                    in_channels: 8,
                    out_channels: 16,
                    kernel: 3,
                    padding: 1,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool2,
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    in_features: 16 * 16 * 16,
                    out_features: 64,
                },
                LayerSpec::Relu,
                LayerSpec::Dense {
                    in_features: 64,
                    out_features: k,
                },
                LayerSpec::Softmax,
            ],
            seed,
        )
        .expect("desk architecture is well-formed")
    }

    fn validate_architecture(
        input_shape: &[usize],
        classes: &[SignalClass],
        specs: &[LayerSpec],
    ) -> Result<(), ModelError> {
        if classes.len() < 2 {
            return Err(ModelError::BadArchitecture(
                "need at least two classes".into(),
            ));
        }
        if specs.last() != Some(&LayerSpec::Softmax) {
            return Err(ModelError::BadArchitecture(
                "final layer must be softmax".into(),
            ));
        }
        if specs[..specs.len() - 1].contains(&LayerSpec::Softmax) {
            return Err(ModelError::BadArchitecture(
                "softmax may appear only as the final layer".into(),
            ));
        }
        let mut shape = input_shape.to_vec();
        for spec in specs {
            shape = spec.output_shape(&shape)?;
        }
        if shape != [classes.len()] {
            return Err(ModelError::BadArchitecture(format!(
                "output shape {shape:?} does not match {} classes",
                classes.len()
            )));
        }
        Ok(())
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn classes(&self) -> &[SignalClass] {
        &self.classes
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.spec().param_count()).sum()
    }

    pub fn class_index(&self, class: SignalClass) -> Option<usize> {
        self.classes.iter().position(|&c| c == class)
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(), ModelError> {
        if x.shape != self.input_shape {
            return Err(ModelError::ShapeMismatch {
                expected: self.input_shape.clone(),
                got: x.shape.clone(),
            });
        }
        Ok(())
    }

    /// Run all layers up to (not including) the softmax, keeping the tape
    /// of per-layer caches for the backward pass.
    fn forward_tape(&self, x: &Tensor<T>) -> Result<(Vec<T>, Vec<LayerCache<T>>), ModelError> {
        self.check_input(x)?;
        let n = self.layers.len();
        let mut tape = Vec::with_capacity(n - 1);
        let mut cur = x.clone();
        for layer in &self.layers[..n - 1] {
            let (next, cache) = layer.forward(&cur)?;
            tape.push(cache);
            cur = next;
        }
        Ok((cur.data, tape))
    }

    /// Class probabilities; they sum to 1 for any finite input.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Vec<T>, ModelError> {
        let (logits, _) = self.forward_tape(x)?;
        Ok(softmax(&logits))
    }

    /// Cross-entropy loss `-ln p_y`.
    pub fn loss(&self, x: &Tensor<T>, y: SignalClass) -> Result<T, ModelError> {
        let yi = self
            .class_index(y)
            .ok_or(ModelError::UnknownClass(y))?;
        let (logits, _) = self.forward_tape(x)?;
        Ok(cross_entropy_from_logits(&logits, yi))
    }

    /// Exact reverse-mode gradients of the cross-entropy loss with respect
    /// to every parameter tensor and to the input.
    pub fn backward(&self, x: &Tensor<T>, y: SignalClass) -> Result<BackwardPass<T>, ModelError> {
        let yi = self
            .class_index(y)
            .ok_or(ModelError::UnknownClass(y))?;
        let (logits, tape) = self.forward_tape(x)?;
        let loss = cross_entropy_from_logits(&logits, yi);

        // Softmax + cross-entropy fuse to dlogits = p - onehot(y).
        let probs = softmax(&logits);
        let mut dlogits = probs.clone();
        dlogits[yi] = dlogits[yi] - T::one();
        let mut dy = Tensor::new(vec![dlogits.len()], dlogits);

        let n = self.layers.len();
        let mut per_layer: Vec<LayerGrad<T>> = Vec::with_capacity(n);
        per_layer.push(LayerGrad::None); // the softmax layer itself
        for (layer, cache) in self.layers[..n - 1].iter().zip(&tape).rev() {
            let (grad, dx) = layer.backward(cache, &dy);
            per_layer.push(grad);
            dy = dx;
        }
        per_layer.reverse();
        Ok(BackwardPass {
            grads: Gradients { per_layer },
            input_grad: dy,
            loss,
            probs,
        })
    }

    /// Gradient of the loss with respect to the input only.
    pub fn input_gradient(
        &self,
        x: &Tensor<T>,
        y: SignalClass,
    ) -> Result<(Tensor<T>, T), ModelError> {
        let pass = self.backward(x, y)?;
        Ok((pass.input_grad, pass.loss))
    }

    /// Argmax prediction with lowest-index tie-break.
    pub fn predict(&self, x: &Tensor<T>) -> Result<(SignalClass, T), ModelError> {
        let probs = self.forward(x)?;
        let mut best = 0;
        for (i, p) in probs.iter().enumerate() {
            if *p > probs[best] {
                best = i;
            }
        }
        Ok((self.classes[best], probs[best]))
    }

    /// Predict directly from a scalogram image.
    pub fn classify(&self, s: &Scalogram) -> Result<(SignalClass, T), ModelError> {
        self.predict(&Tensor::from_scalogram(s))
    }

    /// Flat copy of all parameters in canonical layer order.
    pub fn param_vector(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            layer.visit_params(&mut |slice| out.extend_from_slice(slice));
        }
        out
    }

    /// Overwrite all parameters from a flat vector in canonical order.
    pub fn load_param_vector(&mut self, params: &[T]) -> Result<(), ModelError> {
        if params.len() != self.num_params() {
            return Err(ModelError::BadParamVector {
                got: params.len(),
                expected: self.num_params(),
            });
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            layer.visit_params_mut(&mut |slice| {
                slice.copy_from_slice(&params[offset..offset + slice.len()]);
                offset += slice.len();
            });
        }
        Ok(())
    }

    /// Minimum distance of any relu input, residual pre-activation, or
    /// max-pool runner-up gap from its kink. Gradient checks resample
    /// instances whose margin is too small for the difference stencil.
    pub fn kink_margin(&self, x: &Tensor<T>) -> Result<f64, ModelError> {
        self.check_input(x)?;
        let mut margin = f64::INFINITY;
        let mut cur = x.clone();
        let n = self.layers.len();
        for layer in &self.layers[..n - 1] {
            match layer {
                Layer::Relu => {
                    for v in &cur.data {
                        margin = margin.min(v.as_f64().abs());
                    }
                }
                Layer::MaxPool2 => {
                    let (c, h, w) = (cur.shape[0], cur.shape[1], cur.shape[2]);
                    for ch in 0..c {
                        for oy in 0..h / 2 {
                            for ox in 0..w / 2 {
                                let mut vals = [0.0f64; 4];
                                for dy in 0..2 {
                                    for dx in 0..2 {
                                        vals[dy * 2 + dx] = cur.data
                                            [(ch * h + oy * 2 + dy) * w + ox * 2 + dx]
                                            .as_f64();
                                    }
                                }
                                vals.sort_by(f64::total_cmp);
                                margin = margin.min(vals[3] - vals[2]);
                            }
                        }
                    }
                }
                _ => {}
            }
            let (next, cache) = layer.forward(&cur)?;
            if let LayerCache::Residual { pre_a, pre_out, .. } = &cache {
                for v in pre_a.data.iter().chain(&pre_out.data) {
                    margin = margin.min(v.as_f64().abs());
                }
            }
            cur = next;
        }
        Ok(margin)
    }

    /// Convert parameters to another scalar type (f32 <-> f64).
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let mut m = Model::<U>::zeroed(
            self.input_shape.clone(),
            self.classes.clone(),
            self.specs(),
        )
        .expect("architecture already validated");
        let params: Vec<U> = self
            .param_vector()
            .iter()
            .map(|v| U::from_f64(v.as_f64()))
            .collect();
        m.load_param_vector(&params).expect("same param count");
        m
    }
}

/// `-ln p_y` computed stably via log-sum-exp.
fn cross_entropy_from_logits<T: Scalar>(logits: &[T], y_index: usize) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let sum = logits
        .iter()
        .fold(T::zero(), |acc, &z| acc + (z - max).exp());
    max + sum.ln() - logits[y_index]
}
