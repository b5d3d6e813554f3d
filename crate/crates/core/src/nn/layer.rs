//! Layer definitions: architecture specs, parameters, and per-layer
//! forward/backward passes.

use super::{Scalar, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("bad architecture: {0}")]
    BadArchitecture(String),
    #[error("class {0} is not in the model's class set")]
    UnknownClass(crate::signal::SignalClass),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    BadTrainConfig(String),
    #[error("parameter vector length {got}, expected {expected}")]
    BadParamVector { got: usize, expected: usize },
}

/// Serializable architecture descriptor for one layer. Convolutions are
/// stride-1 with square kernels; pooling is fixed 2x2/stride-2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
    },
    /// conv-relu-conv plus identity skip, relu after the join.
    Residual {
        channels: usize,
        kernel: usize,
        padding: usize,
    },
    Relu,
    /// Smooth activation, used by tests that need a kink-free model.
    Softplus,
    MaxPool2,
    Flatten,
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Softmax,
}

impl LayerSpec {
    /// Output shape for a given input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, ModelError> {
        let bad = |msg: String| Err(ModelError::BadArchitecture(msg));
        match self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                padding,
            } => {
                let [c, h, w] = require_chw(input)?;
                if c != *in_channels {
                    return bad(format!("conv2d expects {in_channels} channels, input has {c}"));
                }
                let h_out = (h + 2 * padding).checked_sub(*kernel).map(|v| v + 1);
                let w_out = (w + 2 * padding).checked_sub(*kernel).map(|v| v + 1);
                match (h_out, w_out) {
                    (Some(h_out), Some(w_out)) if h_out > 0 && w_out > 0 => {
                        Ok(vec![*out_channels, h_out, w_out])
                    }
                    _ => bad(format!("conv2d kernel {kernel} too large for {h}x{w}")),
                }
            }
            LayerSpec::Residual { channels, kernel, padding } => {
                let [c, h, w] = require_chw(input)?;
                if c != *channels {
                    return bad(format!("residual expects {channels} channels, input has {c}"));
                }
                if 2 * padding + 1 != *kernel {
                    return bad("residual block must preserve spatial size".into());
                }
                Ok(vec![c, h, w])
            }
            LayerSpec::Relu | LayerSpec::Softplus | LayerSpec::Softmax => Ok(input.to_vec()),
            LayerSpec::MaxPool2 => {
                let [c, h, w] = require_chw(input)?;
                if h % 2 != 0 || w % 2 != 0 {
                    return bad(format!("maxpool2 needs even spatial dims, got {h}x{w}"));
                }
                Ok(vec![c, h / 2, w / 2])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense { in_features, out_features } => {
                if input != [*in_features] {
                    return bad(format!(
                        "dense expects [{in_features}], input shape is {input:?}"
                    ));
                }
                Ok(vec![*out_features])
            }
        }
    }

    /// Number of parameters this layer owns.
    pub fn param_count(&self) -> usize {
        match self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * in_channels * kernel * kernel + out_channels,
            LayerSpec::Residual { channels, kernel, .. } => {
                2 * (channels * channels * kernel * kernel + channels)
            }
            LayerSpec::Dense { in_features, out_features } => {
                out_features * in_features + out_features
            }
            _ => 0,
        }
    }
}

fn require_chw(shape: &[usize]) -> Result<[usize; 3], ModelError> {
    match shape {
        [c, h, w] => Ok([*c, *h, *w]),
        other => Err(ModelError::BadArchitecture(format!(
            "expected [C, H, W] input, got {other:?}"
        ))),
    }
}

/// Weights and bias of one convolution or dense transform.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineParams<T> {
    pub w: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Scalar> AffineParams<T> {
    fn he_uniform(w_len: usize, b_len: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / fan_in as f64).sqrt();
        let w = (0..w_len)
            .map(|_| T::from_f64(rng.random_range(-limit..limit)))
            .collect();
        AffineParams {
            w,
            b: vec![T::zero(); b_len],
        }
    }

    fn zeros(w_len: usize, b_len: usize) -> Self {
        AffineParams {
            w: vec![T::zero(); w_len],
            b: vec![T::zero(); b_len],
        }
    }
}

/// One instantiated layer: spec plus its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
        params: AffineParams<T>,
    },
    Residual {
        channels: usize,
        kernel: usize,
        padding: usize,
        a: AffineParams<T>,
        b: AffineParams<T>,
    },
    Relu,
    Softplus,
    MaxPool2,
    Flatten,
    Dense {
        in_features: usize,
        out_features: usize,
        params: AffineParams<T>,
    },
    Softmax,
}

/// Values a layer's forward pass saves for its backward pass.
#[derive(Debug, Clone)]
pub enum LayerCache<T> {
    None,
    Input(Tensor<T>),
    Pool {
        input_shape: Vec<usize>,
        argmax: Vec<usize>,
    },
    Residual {
        x: Tensor<T>,
        pre_a: Tensor<T>,
        mid: Tensor<T>,
        pre_out: Tensor<T>,
    },
    Probs(Vec<T>),
}

/// Parameter gradients of one layer, in the layer's canonical order.
#[derive(Debug, Clone)]
pub enum LayerGrad<T> {
    None,
    Affine { w: Vec<T>, b: Vec<T> },
    Residual { a: AffineParams<T>, b: AffineParams<T> },
}

impl<T: Scalar> Layer<T> {
    pub fn init(spec: &LayerSpec, rng: &mut ChaCha8Rng) -> Layer<T> {
        Self::build(spec, Some(rng))
    }

    pub fn zeroed(spec: &LayerSpec) -> Layer<T> {
        Self::build(spec, None)
    }

    fn build(spec: &LayerSpec, rng: Option<&mut ChaCha8Rng>) -> Layer<T> {
        match *spec {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                padding,
            } => {
                let w_len = out_channels * in_channels * kernel * kernel;
                let fan_in = in_channels * kernel * kernel;
                let params = match rng {
                    Some(rng) => AffineParams::he_uniform(w_len, out_channels, fan_in, rng),
                    None => AffineParams::zeros(w_len, out_channels),
                };
                Layer::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    padding,
                    params,
                }
            }
            LayerSpec::Residual { channels, kernel, padding } => {
                let w_len = channels * channels * kernel * kernel;
                let fan_in = channels * kernel * kernel;
                let (a, b) = match rng {
                    Some(rng) => (
                        AffineParams::he_uniform(w_len, channels, fan_in, rng),
                        AffineParams::he_uniform(w_len, channels, fan_in, rng),
                    ),
                    None => (
                        AffineParams::zeros(w_len, channels),
                        AffineParams::zeros(w_len, channels),
                    ),
                };
                Layer::Residual {
                    channels,
                    kernel,
                    padding,
                    a,
                    b,
                }
            }
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::Softplus => Layer::Softplus,
            LayerSpec::MaxPool2 => Layer::MaxPool2,
            LayerSpec::Flatten => Layer::Flatten,
            LayerSpec::Dense { in_features, out_features } => {
                let w_len = out_features * in_features;
                let params = match rng {
                    Some(rng) => AffineParams::he_uniform(w_len, out_features, in_features, rng),
                    None => AffineParams::zeros(w_len, out_features),
                };
                Layer::Dense {
                    in_features,
                    out_features,
                    params,
                }
            }
            LayerSpec::Softmax => Layer::Softmax,
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match *self {
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                padding,
                ..
            } => LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                padding,
            },
            Layer::Residual { channels, kernel, padding, .. } => LayerSpec::Residual {
                channels,
                kernel,
                padding,
            },
            Layer::Relu => LayerSpec::Relu,
            Layer::Softplus => LayerSpec::Softplus,
            Layer::MaxPool2 => LayerSpec::MaxPool2,
            Layer::Flatten => LayerSpec::Flatten,
            Layer::Dense { in_features, out_features, .. } => LayerSpec::Dense {
                in_features,
                out_features,
            },
            Layer::Softmax => LayerSpec::Softmax,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, LayerCache<T>), ModelError> {
        let out_shape = self.spec().output_shape(&x.shape)?;
        match self {
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                padding,
                params,
            } => {
                let y = conv2d_forward(
                    &x.data, x.shape[1], x.shape[2], *in_channels, *out_channels, *kernel,
                    *padding, params,
                );
                Ok((Tensor::new(out_shape, y), LayerCache::Input(x.clone())))
            }
            Layer::Residual { channels, kernel, padding, a, b } => {
                let (c, h, w) = (*channels, x.shape[1], x.shape[2]);
                let pre_a = conv2d_forward(&x.data, h, w, c, c, *kernel, *padding, a);
                let mid: Vec<T> = pre_a.iter().map(|&v| v.max(T::zero())).collect();
                let pre_b = conv2d_forward(&mid, h, w, c, c, *kernel, *padding, b);
                let pre_out: Vec<T> =
                    pre_b.iter().zip(&x.data).map(|(&u, &xi)| u + xi).collect();
                let y: Vec<T> = pre_out.iter().map(|&v| v.max(T::zero())).collect();
                let cache = LayerCache::Residual {
                    x: x.clone(),
                    pre_a: Tensor::new(out_shape.clone(), pre_a),
                    mid: Tensor::new(out_shape.clone(), mid),
                    pre_out: Tensor::new(out_shape.clone(), pre_out),
                };
                Ok((Tensor::new(out_shape, y), cache))
            }
            Layer::Relu => {
                let y = x.data.iter().map(|&v| v.max(T::zero())).collect();
                Ok((Tensor::new(out_shape, y), LayerCache::Input(x.clone())))
            }
            Layer::Softplus => {
                let y = x.data.iter().map(|&v| softplus(v)).collect();
                Ok((Tensor::new(out_shape, y), LayerCache::Input(x.clone())))
            }
            Layer::MaxPool2 => {
                let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
                let (ho, wo) = (h / 2, w / 2);
                let mut y = Vec::with_capacity(c * ho * wo);
                let mut argmax = Vec::with_capacity(c * ho * wo);
                for ch in 0..c {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let mut best_idx = (ch * h + oy * 2) * w + ox * 2;
                            let mut best = x.data[best_idx];
                            for dy in 0..2 {
                                for dx in 0..2 {
                                    let idx = (ch * h + oy * 2 + dy) * w + ox * 2 + dx;
                                    if x.data[idx] > best {
                                        best = x.data[idx];
                                        best_idx = idx;
                                    }
                                }
                            }
                            y.push(best);
                            argmax.push(best_idx);
                        }
                    }
                }
                Ok((
                    Tensor::new(out_shape, y),
                    LayerCache::Pool {
                        input_shape: x.shape.clone(),
                        argmax,
                    },
                ))
            }
            Layer::Flatten => Ok((
                Tensor::new(out_shape, x.data.clone()),
                LayerCache::Input(Tensor {
                    shape: x.shape.clone(),
                    data: Vec::new(),
                }),
            )),
            Layer::Dense { in_features, out_features, params } => {
                let mut y = params.b.clone();
                for o in 0..*out_features {
                    let row = &params.w[o * in_features..(o + 1) * in_features];
                    let mut acc = T::zero();
                    for (wv, xv) in row.iter().zip(&x.data) {
                        acc = acc + *wv * *xv;
                    }
                    y[o] = y[o] + acc;
                }
                Ok((Tensor::new(out_shape, y), LayerCache::Input(x.clone())))
            }
            Layer::Softmax => {
                let probs = softmax(&x.data);
                Ok((
                    Tensor::new(out_shape, probs.clone()),
                    LayerCache::Probs(probs),
                ))
            }
        }
    }

    pub fn backward(&self, cache: &LayerCache<T>, dy: &Tensor<T>) -> (LayerGrad<T>, Tensor<T>) {
        match (self, cache) {
            (
                Layer::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    padding,
                    params,
                },
                LayerCache::Input(x),
            ) => {
                let (dw, db, dx) = conv2d_backward(
                    &x.data, x.shape[1], x.shape[2], *in_channels, *out_channels, *kernel,
                    *padding, params, &dy.data, dy.shape[1], dy.shape[2],
                );
                (
                    LayerGrad::Affine { w: dw, b: db },
                    Tensor::new(x.shape.clone(), dx),
                )
            }
            (
                Layer::Residual { channels, kernel, padding, a, b },
                LayerCache::Residual { x, pre_a, mid, pre_out },
            ) => {
                let (c, h, w) = (*channels, x.shape[1], x.shape[2]);
                // relu after the join
                let d_pre_out: Vec<T> = dy
                    .data
                    .iter()
                    .zip(&pre_out.data)
                    .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                    .collect();
                // branch conv_b, input mid
                let (dwb, dbb, d_mid) = conv2d_backward(
                    &mid.data, h, w, c, c, *kernel, *padding, b, &d_pre_out, h, w,
                );
                // relu between the convs
                let d_pre_a: Vec<T> = d_mid
                    .iter()
                    .zip(&pre_a.data)
                    .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                    .collect();
                let (dwa, dba, dx_branch) = conv2d_backward(
                    &x.data, h, w, c, c, *kernel, *padding, a, &d_pre_a, h, w,
                );
                // skip connection adds d_pre_out straight through
                let dx: Vec<T> = dx_branch
                    .iter()
                    .zip(&d_pre_out)
                    .map(|(&p, &s)| p + s)
                    .collect();
                (
                    LayerGrad::Residual {
                        a: AffineParams { w: dwa, b: dba },
                        b: AffineParams { w: dwb, b: dbb },
                    },
                    Tensor::new(x.shape.clone(), dx),
                )
            }
            (Layer::Relu, LayerCache::Input(x)) => {
                let dx = dy
                    .data
                    .iter()
                    .zip(&x.data)
                    .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                    .collect();
                (LayerGrad::None, Tensor::new(x.shape.clone(), dx))
            }
            (Layer::Softplus, LayerCache::Input(x)) => {
                let dx = dy
                    .data
                    .iter()
                    .zip(&x.data)
                    .map(|(&g, &v)| g * sigmoid(v))
                    .collect();
                (LayerGrad::None, Tensor::new(x.shape.clone(), dx))
            }
            (Layer::MaxPool2, LayerCache::Pool { input_shape, argmax }) => {
                let mut dx = vec![T::zero(); input_shape.iter().product()];
                for (&idx, &g) in argmax.iter().zip(&dy.data) {
                    dx[idx] = dx[idx] + g;
                }
                (LayerGrad::None, Tensor::new(input_shape.clone(), dx))
            }
            (Layer::Flatten, LayerCache::Input(shape_only)) => (
                LayerGrad::None,
                Tensor::new(shape_only.shape.clone(), dy.data.clone()),
            ),
            (Layer::Dense { in_features, out_features, params }, LayerCache::Input(x)) => {
                let mut dw = vec![T::zero(); out_features * in_features];
                let mut dx = vec![T::zero(); *in_features];
                for o in 0..*out_features {
                    let g = dy.data[o];
                    let row = &params.w[o * in_features..(o + 1) * in_features];
                    for f in 0..*in_features {
                        dw[o * in_features + f] = g * x.data[f];
                        dx[f] = dx[f] + row[f] * g;
                    }
                }
                (
                    LayerGrad::Affine { w: dw, b: dy.data.clone() },
                    Tensor::new(x.shape.clone(), dx),
                )
            }
            (Layer::Softmax, LayerCache::Probs(p)) => {
                // dx_i = p_i * (dy_i - sum_j dy_j p_j)
                let dot = dy
                    .data
                    .iter()
                    .zip(p)
                    .fold(T::zero(), |acc, (&g, &pi)| acc + g * pi);
                let dx = dy
                    .data
                    .iter()
                    .zip(p)
                    .map(|(&g, &pi)| pi * (g - dot))
                    .collect();
                (LayerGrad::None, Tensor::new(dy.shape.clone(), dx))
            }
            _ => unreachable!("layer/cache mismatch"),
        }
    }

    pub fn visit_params(&self, f: &mut impl FnMut(&[T])) {
        match self {
            Layer::Conv2d { params, .. } | Layer::Dense { params, .. } => {
                f(&params.w);
                f(&params.b);
            }
            Layer::Residual { a, b, .. } => {
                f(&a.w);
                f(&a.b);
                f(&b.w);
                f(&b.b);
            }
            _ => {}
        }
    }

    pub fn visit_params_mut(&mut self, f: &mut impl FnMut(&mut [T])) {
        match self {
            Layer::Conv2d { params, .. } | Layer::Dense { params, .. } => {
                f(&mut params.w);
                f(&mut params.b);
            }
            Layer::Residual { a, b, .. } => {
                f(&mut a.w);
                f(&mut a.b);
                f(&mut b.w);
                f(&mut b.b);
            }
            _ => {}
        }
    }
}

impl<T: Scalar> LayerGrad<T> {
    pub fn visit(&self, f: &mut impl FnMut(&[T])) {
        match self {
            LayerGrad::None => {}
            LayerGrad::Affine { w, b } => {
                f(w);
                f(b);
            }
            LayerGrad::Residual { a, b } => {
                f(&a.w);
                f(&a.b);
                f(&b.w);
                f(&b.b);
            }
        }
    }
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum = exps.iter().fold(T::zero(), |a, &b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

fn softplus<T: Scalar>(x: T) -> T {
    // max(x, 0) + ln(1 + exp(-|x|))
    x.max(T::zero()) + (T::one() + (-x.abs()).exp()).ln()
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[allow(clippy::too_many_arguments)]
fn conv2d_forward<T: Scalar>(
    x: &[T],
    h: usize,
    w: usize,
    cin: usize,
    cout: usize,
    k: usize,
    pad: usize,
    params: &AffineParams<T>,
) -> Vec<T> {
    let ho = h + 2 * pad - k + 1;
    let wo = w + 2 * pad - k + 1;
    let mut y = vec![T::zero(); cout * ho * wo];
    for o in 0..cout {
        let y_base = o * ho * wo;
        y[y_base..y_base + ho * wo].fill(params.b[o]);
        for i in 0..cin {
            let x_base = i * h * w;
            let w_base = (o * cin + i) * k * k;
            for ky in 0..k {
                for kx in 0..k {
                    let wv = params.w[w_base + ky * k + kx];
                    for oy in 0..ho {
                        let iy = (oy + ky).wrapping_sub(pad);
                        if iy >= h {
                            continue;
                        }
                        let row_y = y_base + oy * wo;
                        let row_x = x_base + iy * w;
                        for ox in 0..wo {
                            let ix = (ox + kx).wrapping_sub(pad);
                            if ix >= w {
                                continue;
                            }
                            y[row_y + ox] = y[row_y + ox] + wv * x[row_x + ix];
                        }
                    }
                }
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn conv2d_backward<T: Scalar>(
    x: &[T],
    h: usize,
    w: usize,
    cin: usize,
    cout: usize,
    k: usize,
    pad: usize,
    params: &AffineParams<T>,
    dy: &[T],
    ho: usize,
    wo: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut dw = vec![T::zero(); cout * cin * k * k];
    let mut db = vec![T::zero(); cout];
    let mut dx = vec![T::zero(); cin * h * w];
    for o in 0..cout {
        let y_base = o * ho * wo;
        for v in &dy[y_base..y_base + ho * wo] {
            db[o] = db[o] + *v;
        }
        for i in 0..cin {
            let x_base = i * h * w;
            let w_base = (o * cin + i) * k * k;
            for ky in 0..k {
                for kx in 0..k {
                    let wv = params.w[w_base + ky * k + kx];
                    let mut acc = T::zero();
                    for oy in 0..ho {
                        let iy = (oy + ky).wrapping_sub(pad);
                        if iy >= h {
                            continue;
                        }
                        let row_y = y_base + oy * wo;
                        let row_x = x_base + iy * w;
                        for ox in 0..wo {
                            let ix = (ox + kx).wrapping_sub(pad);
                            if ix >= w {
                                continue;
                            }
                            let g = dy[row_y + ox];
                            acc = acc + g * x[row_x + ix];
                            dx[row_x + ix] = dx[row_x + ix] + wv * g;
                        }
                    }
                    dw[w_base + ky * k + kx] = acc;
                }
            }
        }
    }
    (dw, db, dx)
}
