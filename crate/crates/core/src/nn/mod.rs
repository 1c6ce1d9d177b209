//! Minimal neural-network core: dense, convolutional, pooling, and LSTM layers
//! with exact backpropagation, checked against central finite differences.
//!
//! Everything is double precision and deterministic: weight initialization is
//! driven by a recorded seed, training-time dropout draws from a caller-owned
//! RNG, and weights live in a `BTreeMap` so serialization order is stable.

mod io;
mod layers;
mod loss;
mod lstm;
mod optim;
mod tensor;

pub use io::{load_model, save_model};
pub use loss::bce_loss;
pub use lstm::{lstm_step, LstmWeights};
pub use optim::{optimizer_step, OptState, Optimizer};
pub use tensor::Tensor;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },
    #[error("invalid layer spec: {0}")]
    InvalidSpec(String),
    #[error("stale cache: forward pass does not match this model")]
    StaleCache,
    #[error("training forward pass with dropout requires an RNG")]
    MissingRng,
    #[error("model io: {0}")]
    Io(String),
    #[error("model file parse: {0}")]
    Parse(String),
}

/// One layer of a feedforward stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        input: usize,
        output: usize,
    },
    Conv1D {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    Conv2D {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    MaxPool2D {
        size: usize,
    },
    Relu,
    Sigmoid,
    Tanh,
    Flatten,
    Lstm {
        input_dim: usize,
        units: usize,
    },
    Dropout {
        rate: f64,
    },
}

impl LayerSpec {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |msg: String| Err(NnError::InvalidSpec(msg));
        match *self {
            LayerSpec::Dense { input, output } => {
                if input == 0 || output == 0 {
                    return bad(format!("dense {}x{} has a zero dimension", input, output));
                }
            }
            LayerSpec::Conv1D {
                in_channels,
                out_channels,
                kernel,
                stride,
            }
            | LayerSpec::Conv2D {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => {
                if in_channels == 0 || out_channels == 0 || kernel == 0 {
                    return bad("conv dimensions must be positive".into());
                }
                if stride == 0 {
                    return bad("conv stride must be >= 1".into());
                }
            }
            LayerSpec::MaxPool2D { size } => {
                if size == 0 {
                    return bad("pool size must be >= 1".into());
                }
            }
            LayerSpec::Lstm { input_dim, units } => {
                if input_dim == 0 || units == 0 {
                    return bad("lstm dimensions must be positive".into());
                }
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return bad(format!("dropout rate {} outside [0,1)", rate));
                }
            }
            LayerSpec::Relu | LayerSpec::Sigmoid | LayerSpec::Tanh | LayerSpec::Flatten => {}
        }
        Ok(())
    }

    /// Output shape for a given input shape, or an error if the layer cannot
    /// consume it (wrong rank, channel mismatch, or a collapsed spatial dim).
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        let mismatch = |msg: String| Err(NnError::ShapeMismatch { context: msg });
        match *self {
            LayerSpec::Dense { input: d_in, output } => {
                if input != [d_in] {
                    return mismatch(format!("dense expects [{}], got {:?}", d_in, input));
                }
                Ok(vec![output])
            }
            LayerSpec::Conv1D {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => {
                if input.len() != 2 || input[0] != in_channels {
                    return mismatch(format!(
                        "conv1d expects [{}, len], got {:?}",
                        in_channels, input
                    ));
                }
                let len = input[1];
                if len < kernel {
                    return mismatch(format!("conv1d kernel {} exceeds length {}", kernel, len));
                }
                Ok(vec![out_channels, (len - kernel) / stride + 1])
            }
            LayerSpec::Conv2D {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => {
                if input.len() != 3 || input[0] != in_channels {
                    return mismatch(format!(
                        "conv2d expects [{}, h, w], got {:?}",
                        in_channels, input
                    ));
                }
                let (h, w) = (input[1], input[2]);
                if h < kernel || w < kernel {
                    return mismatch(format!("conv2d kernel {} exceeds input {}x{}", kernel, h, w));
                }
                Ok(vec![
                    out_channels,
                    (h - kernel) / stride + 1,
                    (w - kernel) / stride + 1,
                ])
            }
            LayerSpec::MaxPool2D { size } => {
                if input.len() != 3 {
                    return mismatch(format!("maxpool expects [c, h, w], got {:?}", input));
                }
                let (h, w) = (input[1], input[2]);
                if h < size || w < size {
                    return mismatch(format!("pool size {} exceeds input {}x{}", size, h, w));
                }
                Ok(vec![input[0], (h - size) / size + 1, (w - size) / size + 1])
            }
            LayerSpec::Lstm { input_dim, units } => {
                if input.len() != 2 || input[0] != input_dim {
                    return mismatch(format!(
                        "lstm expects [{}, steps], got {:?}",
                        input_dim, input
                    ));
                }
                if input[1] == 0 {
                    return mismatch("lstm needs at least one step".into());
                }
                Ok(vec![units])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Relu | LayerSpec::Sigmoid | LayerSpec::Tanh | LayerSpec::Dropout { .. } => {
                Ok(input.to_vec())
            }
        }
    }

    /// Number of trainable parameters this layer contributes.
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { input, output } => output * input + output,
            LayerSpec::Conv1D {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * in_channels * kernel + out_channels,
            LayerSpec::Conv2D {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * in_channels * kernel * kernel + out_channels,
            LayerSpec::Lstm { input_dim, units } => {
                4 * (units * input_dim + units * units + units)
            }
            _ => 0,
        }
    }
}

/// A layer stack plus its named weights and the seed the weights came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub layers: Vec<LayerSpec>,
    pub weights: BTreeMap<String, Tensor>,
    pub rng_seed: u64,
    pub metadata: BTreeMap<String, String>,
}

impl ModelState {
    /// Builds a model with deterministic initialization from `seed`.
    ///
    /// Dense and conv weights are uniform in ±sqrt(6/(fan_in+fan_out)) with
    /// zero biases; LSTM weights use the same rule per matrix and the forget
    /// gate bias block starts at 1.0.
    pub fn new(layers: Vec<LayerSpec>, seed: u64) -> Result<Self, NnError> {
        for spec in &layers {
            spec.validate()?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = BTreeMap::new();
        let uniform = |n: usize, bound: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * bound).collect()
        };
        for (idx, spec) in layers.iter().enumerate() {
            match *spec {
                LayerSpec::Dense { input, output } => {
                    let bound = (6.0 / (input + output) as f64).sqrt();
                    let w = uniform(output * input, bound, &mut rng);
                    weights.insert(wname(idx, "w"), Tensor::new(vec![output, input], w)?);
                    weights.insert(wname(idx, "b"), Tensor::zeros(vec![output]));
                }
                LayerSpec::Conv1D {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => {
                    let fan_in = in_channels * kernel;
                    let fan_out = out_channels * kernel;
                    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    let w = uniform(out_channels * in_channels * kernel, bound, &mut rng);
                    weights.insert(
                        wname(idx, "w"),
                        Tensor::new(vec![out_channels, in_channels, kernel], w)?,
                    );
                    weights.insert(wname(idx, "b"), Tensor::zeros(vec![out_channels]));
                }
                LayerSpec::Conv2D {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => {
                    let fan_in = in_channels * kernel * kernel;
                    let fan_out = out_channels * kernel * kernel;
                    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    let w = uniform(out_channels * in_channels * kernel * kernel, bound, &mut rng);
                    weights.insert(
                        wname(idx, "w"),
                        Tensor::new(vec![out_channels, in_channels, kernel, kernel], w)?,
                    );
                    weights.insert(wname(idx, "b"), Tensor::zeros(vec![out_channels]));
                }
                LayerSpec::Lstm { input_dim, units } => {
                    let bound_ih = (6.0 / (input_dim + units) as f64).sqrt();
                    let bound_hh = (6.0 / (2 * units) as f64).sqrt();
                    let w_ih = uniform(4 * units * input_dim, bound_ih, &mut rng);
                    let w_hh = uniform(4 * units * units, bound_hh, &mut rng);
                    weights.insert(
                        wname(idx, "w_ih"),
                        Tensor::new(vec![4 * units, input_dim], w_ih)?,
                    );
                    weights.insert(
                        wname(idx, "w_hh"),
                        Tensor::new(vec![4 * units, units], w_hh)?,
                    );
                    // Gate order i, f, g, o: bias block [units..2*units) is the
                    // forget gate, initialized to 1.0.
                    let mut bias = vec![0.0; 4 * units];
                    bias[units..2 * units].iter_mut().for_each(|b| *b = 1.0);
                    weights.insert(wname(idx, "b"), Tensor::new(vec![4 * units], bias)?);
                }
                _ => {}
            }
        }
        Ok(Self {
            layers,
            weights,
            rng_seed: seed,
            metadata: BTreeMap::new(),
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// Output shape for a given input shape, walking every layer.
    pub fn output_shape(&self, mut shape: Vec<usize>) -> Result<Vec<usize>, NnError> {
        for spec in &self.layers {
            shape = spec.output_shape(&shape)?;
        }
        Ok(shape)
    }

    fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        format!("{:?}", self.layers).hash(&mut h);
        h.finish()
    }
}

fn wname(layer: usize, part: &str) -> String {
    format!("l{:02}.{}", layer, part)
}

/// Per-layer values saved by the forward pass for use in backprop.
#[derive(Debug, Clone)]
enum LayerCache {
    Dense { input: Tensor },
    Conv1D { input: Tensor },
    Conv2D { input: Tensor },
    MaxPool2D { input_shape: Vec<usize>, argmax: Vec<usize> },
    Relu { input: Tensor },
    Sigmoid { output: Tensor },
    Tanh { output: Tensor },
    Flatten { input_shape: Vec<usize> },
    Lstm(Box<lstm::LstmCache>),
    Dropout { mask: Option<Vec<f64>> },
}

/// Activations recorded by [`forward`], consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct Cache {
    items: Vec<LayerCache>,
    fingerprint: u64,
}

/// Runs the model on one sample. Dropout is active only when `training` is
/// true, in which case layers with a positive rate draw their masks from
/// `rng`. The cache is always recorded.
pub fn forward(
    model: &ModelState,
    input: &Tensor,
    training: bool,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(Tensor, Cache), NnError> {
    let mut x = input.clone();
    let mut items = Vec::with_capacity(model.layers.len());
    for (idx, spec) in model.layers.iter().enumerate() {
        // Validates rank/length agreement before touching data.
        let out_shape = spec.output_shape(x.shape()).map_err(|e| match e {
            NnError::ShapeMismatch { context } => NnError::ShapeMismatch {
                context: format!("layer {}: {}", idx, context),
            },
            other => other,
        })?;
        match *spec {
            LayerSpec::Dense { .. } => {
                let w = &model.weights[&wname(idx, "w")];
                let b = &model.weights[&wname(idx, "b")];
                let y = layers::dense_forward(w, b, &x);
                items.push(LayerCache::Dense { input: x });
                x = y;
            }
            LayerSpec::Conv1D { stride, .. } => {
                let w = &model.weights[&wname(idx, "w")];
                let b = &model.weights[&wname(idx, "b")];
                let y = layers::conv1d_forward(w, b, &x, stride, &out_shape);
                items.push(LayerCache::Conv1D { input: x });
                x = y;
            }
            LayerSpec::Conv2D { stride, .. } => {
                let w = &model.weights[&wname(idx, "w")];
                let b = &model.weights[&wname(idx, "b")];
                let y = layers::conv2d_forward(w, b, &x, stride, &out_shape);
                items.push(LayerCache::Conv2D { input: x });
                x = y;
            }
            LayerSpec::MaxPool2D { size } => {
                let (y, argmax) = layers::maxpool2d_forward(&x, size, &out_shape);
                items.push(LayerCache::MaxPool2D {
                    input_shape: x.shape().to_vec(),
                    argmax,
                });
                x = y;
            }
            LayerSpec::Relu => {
                let y = layers::relu_forward(&x);
                items.push(LayerCache::Relu { input: x });
                x = y;
            }
            LayerSpec::Sigmoid => {
                let y = layers::sigmoid_forward(&x);
                items.push(LayerCache::Sigmoid { output: y.clone() });
                x = y;
            }
            LayerSpec::Tanh => {
                let y = layers::tanh_forward(&x);
                items.push(LayerCache::Tanh { output: y.clone() });
                x = y;
            }
            LayerSpec::Flatten => {
                let shape = x.shape().to_vec();
                x = x.reshaped(out_shape)?;
                items.push(LayerCache::Flatten { input_shape: shape });
            }
            LayerSpec::Lstm { units, .. } => {
                let w = LstmWeights {
                    w_ih: &model.weights[&wname(idx, "w_ih")],
                    w_hh: &model.weights[&wname(idx, "w_hh")],
                    bias: &model.weights[&wname(idx, "b")],
                    units,
                };
                let (y, cache) = lstm::lstm_forward(&x, &w);
                items.push(LayerCache::Lstm(Box::new(cache)));
                x = y;
            }
            LayerSpec::Dropout { rate } => {
                if training && rate > 0.0 {
                    let rng = rng.as_deref_mut().ok_or(NnError::MissingRng)?;
                    let scale = 1.0 / (1.0 - rate);
                    let mask: Vec<f64> = (0..x.numel())
                        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { scale })
                        .collect();
                    for (v, m) in x.data_mut().iter_mut().zip(&mask) {
                        *v *= m;
                    }
                    items.push(LayerCache::Dropout { mask: Some(mask) });
                } else {
                    items.push(LayerCache::Dropout { mask: None });
                }
            }
        }
    }
    Ok((
        x,
        Cache {
            items,
            fingerprint: model.fingerprint(),
        },
    ))
}

/// Backpropagates `loss_grad` (gradient of the loss w.r.t. the model output)
/// through the cached forward pass, returning a gradient for every weight.
pub fn backward(
    model: &ModelState,
    cache: &Cache,
    loss_grad: &Tensor,
) -> Result<BTreeMap<String, Tensor>, NnError> {
    if cache.fingerprint != model.fingerprint() || cache.items.len() != model.layers.len() {
        return Err(NnError::StaleCache);
    }
    let mut grads: BTreeMap<String, Tensor> = BTreeMap::new();
    let mut dy = loss_grad.clone();
    for (idx, spec) in model.layers.iter().enumerate().rev() {
        let item = &cache.items[idx];
        match (spec, item) {
            (LayerSpec::Dense { .. }, LayerCache::Dense { input }) => {
                let w = &model.weights[&wname(idx, "w")];
                let (dw, db, dx) = layers::dense_backward(w, input, &dy);
                grads.insert(wname(idx, "w"), dw);
                grads.insert(wname(idx, "b"), db);
                dy = dx;
            }
            (LayerSpec::Conv1D { stride, .. }, LayerCache::Conv1D { input }) => {
                let w = &model.weights[&wname(idx, "w")];
                let (dw, db, dx) = layers::conv1d_backward(w, input, &dy, *stride);
                grads.insert(wname(idx, "w"), dw);
                grads.insert(wname(idx, "b"), db);
                dy = dx;
            }
            (LayerSpec::Conv2D { stride, .. }, LayerCache::Conv2D { input }) => {
                let w = &model.weights[&wname(idx, "w")];
                let (dw, db, dx) = layers::conv2d_backward(w, input, &dy, *stride);
                grads.insert(wname(idx, "w"), dw);
                grads.insert(wname(idx, "b"), db);
                dy = dx;
            }
            (LayerSpec::MaxPool2D { .. }, LayerCache::MaxPool2D { input_shape, argmax }) => {
                dy = layers::maxpool2d_backward(input_shape, argmax, &dy);
            }
            (LayerSpec::Relu, LayerCache::Relu { input }) => {
                dy = layers::relu_backward(input, &dy);
            }
            (LayerSpec::Sigmoid, LayerCache::Sigmoid { output }) => {
                dy = layers::sigmoid_backward(output, &dy);
            }
            (LayerSpec::Tanh, LayerCache::Tanh { output }) => {
                dy = layers::tanh_backward(output, &dy);
            }
            (LayerSpec::Flatten, LayerCache::Flatten { input_shape }) => {
                dy = dy.reshaped(input_shape.clone())?;
            }
            (LayerSpec::Lstm { units, .. }, LayerCache::Lstm(lc)) => {
                let w = LstmWeights {
                    w_ih: &model.weights[&wname(idx, "w_ih")],
                    w_hh: &model.weights[&wname(idx, "w_hh")],
                    bias: &model.weights[&wname(idx, "b")],
                    units: *units,
                };
                let (dw_ih, dw_hh, db, dx) = lstm::lstm_backward(&w, lc, &dy);
                grads.insert(wname(idx, "w_ih"), dw_ih);
                grads.insert(wname(idx, "w_hh"), dw_hh);
                grads.insert(wname(idx, "b"), db);
                dy = dx;
            }
            (LayerSpec::Dropout { .. }, LayerCache::Dropout { mask }) => {
                if let Some(mask) = mask {
                    for (g, m) in dy.data_mut().iter_mut().zip(mask) {
                        *g *= m;
                    }
                }
            }
            _ => return Err(NnError::StaleCache),
        }
    }
    Ok(grads)
}

/// Per-layer result of a finite-difference gradient check.
#[derive(Debug, Clone)]
pub struct LayerGradCheck {
    pub name: String,
    pub max_rel_err: f64,
}

/// Result of [`grad_check`].
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub per_weight: Vec<LayerGradCheck>,
    pub max_rel_err: f64,
}

/// Compares analytic gradients against central finite differences of the
/// binary cross-entropy loss, per weight tensor. The model must end in a
/// single-probability output. Dropout runs in deterministic (disabled) mode.
pub fn grad_check(
    model: &ModelState,
    input: &Tensor,
    label: f64,
    eps: f64,
) -> Result<GradCheckReport, NnError> {
    let scalar_loss = |m: &ModelState| -> Result<f64, NnError> {
        let (out, _) = forward(m, input, false, None)?;
        Ok(bce_loss(out.data()[0], label).0)
    };

    let (out, cache) = forward(model, input, false, None)?;
    if out.numel() != 1 {
        return Err(NnError::ShapeMismatch {
            context: format!("grad_check needs scalar output, got {:?}", out.shape()),
        });
    }
    let (_, dloss) = bce_loss(out.data()[0], label);
    let analytic = backward(model, &cache, &Tensor::scalar(dloss))?;

    let mut per_weight = Vec::new();
    let mut overall: f64 = 0.0;
    for (name, grad) in &analytic {
        let mut worst: f64 = 0.0;
        for i in 0..grad.numel() {
            let mut probe = model.clone();
            let base = probe.weights[name].data()[i];
            probe.weights.get_mut(name).unwrap().data_mut()[i] = base + eps;
            let plus = scalar_loss(&probe)?;
            probe.weights.get_mut(name).unwrap().data_mut()[i] = base - eps;
            let minus = scalar_loss(&probe)?;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad.data()[i];
            let denom = a.abs().max(numeric.abs());
            let rel = if denom < 1e-10 {
                0.0
            } else {
                (a - numeric).abs() / denom
            };
            worst = worst.max(rel);
        }
        overall = overall.max(worst);
        per_weight.push(LayerGradCheck {
            name: name.clone(),
            max_rel_err: worst,
        });
    }
    Ok(GradCheckReport {
        per_weight,
        max_rel_err: overall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set_weight(model: &mut ModelState, name: &str, values: &[f64]) {
        let t = model.weights.get_mut(name).unwrap();
        assert_eq!(t.numel(), values.len());
        t.data_mut().copy_from_slice(values);
    }

    #[test]
    fn dense_identity_passthrough() {
        let mut model = ModelState::new(
            vec![LayerSpec::Dense { input: 2, output: 2 }],
            0,
        )
        .unwrap();
        set_weight(&mut model, "l00.w", &[1.0, 0.0, 0.0, 1.0]);
        set_weight(&mut model, "l00.b", &[0.0, 0.0]);
        let x = Tensor::from_vec(vec![3.0, 4.0]);
        let (y, _) = forward(&model, &x, false, None).unwrap();
        assert_eq!(y.data(), &[3.0, 4.0]);
    }

    #[test]
    fn relu_clamps_negatives() {
        let model = ModelState::new(vec![LayerSpec::Relu], 0).unwrap();
        let x = Tensor::from_vec(vec![-1.0, 0.0, 2.0]);
        let (y, _) = forward(&model, &x, false, None).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn conv1d_hand_computed() {
        // kernel [1, 0, -1] over [1, 2, 4, 8] -> [1-4, 2-8]
        let mut model = ModelState::new(
            vec![LayerSpec::Conv1D {
                in_channels: 1,
                out_channels: 1,
                kernel: 3,
                stride: 1,
            }],
            0,
        )
        .unwrap();
        set_weight(&mut model, "l00.w", &[1.0, 0.0, -1.0]);
        set_weight(&mut model, "l00.b", &[0.0]);
        let x = Tensor::new(vec![1, 4], vec![1.0, 2.0, 4.0, 8.0]).unwrap();
        let (y, _) = forward(&model, &x, false, None).unwrap();
        assert_eq!(y.shape(), &[1, 2]);
        assert_eq!(y.data(), &[-3.0, -6.0]);
    }

    #[test]
    fn conv_output_shape_matches_naive_oracle() {
        // floor((n - k)/stride) + 1 against a naively counted sweep.
        for (n, k, s) in [(30usize, 5usize, 1usize), (30, 5, 2), (64, 5, 2), (15, 5, 1)] {
            let mut count = 0;
            let mut pos = 0;
            while pos + k <= n {
                count += 1;
                pos += s;
            }
            let spec = LayerSpec::Conv1D {
                in_channels: 1,
                out_channels: 1,
                kernel: k,
                stride: s,
            };
            let out = spec.output_shape(&[1, n]).unwrap();
            assert_eq!(out[1], count, "n={} k={} s={}", n, k, s);
            assert_eq!(out[1], (n - k) / s + 1);
        }
    }

    #[test]
    fn shape_mismatch_reports_layer() {
        let model = ModelState::new(
            vec![LayerSpec::Dense { input: 3, output: 2 }],
            0,
        )
        .unwrap();
        let x = Tensor::from_vec(vec![1.0, 2.0]);
        let err = forward(&model, &x, false, None).unwrap_err();
        assert!(matches!(err, NnError::ShapeMismatch { .. }));
        assert!(err.to_string().contains("layer 0"));
    }

    #[test]
    fn zero_loss_grad_gives_zero_grads() {
        let model = ModelState::new(
            vec![
                LayerSpec::Dense { input: 3, output: 4 },
                LayerSpec::Tanh,
                LayerSpec::Dense { input: 4, output: 1 },
                LayerSpec::Sigmoid,
            ],
            7,
        )
        .unwrap();
        let x = Tensor::from_vec(vec![0.3, -0.2, 0.9]);
        let (_, cache) = forward(&model, &x, false, None).unwrap();
        let grads = backward(&model, &cache, &Tensor::scalar(0.0)).unwrap();
        for g in grads.values() {
            assert!(g.data().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn dense_single_weight_grad_is_input_times_delta() {
        // y = w*x (1x1 dense, no activation); dL/dw = x * dL/dy.
        let mut model = ModelState::new(
            vec![LayerSpec::Dense { input: 1, output: 1 }],
            0,
        )
        .unwrap();
        set_weight(&mut model, "l00.w", &[2.0]);
        set_weight(&mut model, "l00.b", &[0.0]);
        let x = Tensor::from_vec(vec![1.5]);
        let (_, cache) = forward(&model, &x, false, None).unwrap();
        let grads = backward(&model, &cache, &Tensor::scalar(0.25)).unwrap();
        assert!((grads["l00.w"].data()[0] - 1.5 * 0.25).abs() < 1e-15);
        assert!((grads["l00.b"].data()[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn stale_cache_rejected() {
        let model_a = ModelState::new(
            vec![LayerSpec::Dense { input: 2, output: 1 }, LayerSpec::Sigmoid],
            0,
        )
        .unwrap();
        let model_b = ModelState::new(
            vec![LayerSpec::Dense { input: 2, output: 1 }, LayerSpec::Tanh],
            0,
        )
        .unwrap();
        let x = Tensor::from_vec(vec![0.1, 0.2]);
        let (_, cache) = forward(&model_a, &x, false, None).unwrap();
        let err = backward(&model_b, &cache, &Tensor::scalar(1.0)).unwrap_err();
        assert!(matches!(err, NnError::StaleCache));
    }

    #[test]
    fn maxpool_picks_block_maxima() {
        let model = ModelState::new(vec![LayerSpec::MaxPool2D { size: 2 }], 0).unwrap();
        let x = Tensor::new(
            vec![1, 4, 4],
            vec![
                1.0, 2.0, 5.0, 1.0, //
                3.0, 0.0, 1.0, 1.0, //
                9.0, 1.0, 0.0, 2.0, //
                1.0, 1.0, 4.0, 0.0,
            ],
        )
        .unwrap();
        let (y, _) = forward(&model, &x, false, None).unwrap();
        assert_eq!(y.data(), &[3.0, 5.0, 9.0, 4.0]);
    }

    #[test]
    fn maxpool_gradient_sum_preserved_through_conv() {
        // Conv(1->1, identity-ish) + pool: sum of routed grads equals the
        // incoming grad sum because each pooled cell forwards exactly once.
        let mut model = ModelState::new(
            vec![
                LayerSpec::Conv2D {
                    in_channels: 1,
                    out_channels: 1,
                    kernel: 1,
                    stride: 1,
                },
                LayerSpec::MaxPool2D { size: 2 },
            ],
            0,
        )
        .unwrap();
        set_weight(&mut model, "l00.w", &[1.0]);
        set_weight(&mut model, "l00.b", &[0.0]);
        let x = Tensor::new(
            vec![1, 4, 4],
            (0..16).map(|i| ((i * 7) % 13) as f64).collect(),
        )
        .unwrap();
        let (_, cache) = forward(&model, &x, false, None).unwrap();
        let dy = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let grads = backward(&model, &cache, &dy).unwrap();
        // The conv bias gradient accumulates every routed element: must equal
        // the incoming sum 1+2+3+4.
        assert!((grads["l00.b"].data()[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn dropout_inference_is_identity_and_training_needs_rng() {
        let model = ModelState::new(vec![LayerSpec::Dropout { rate: 0.5 }], 0).unwrap();
        let x = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        let (y, _) = forward(&model, &x, false, None).unwrap();
        assert_eq!(y.data(), x.data());
        let err = forward(&model, &x, true, None).unwrap_err();
        assert!(matches!(err, NnError::MissingRng));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (y, _) = forward(&model, &x, true, Some(&mut rng)).unwrap();
        for (orig, v) in x.data().iter().zip(y.data()) {
            assert!(*v == 0.0 || (*v - orig * 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn param_counts_match_closed_forms() {
        assert_eq!(
            LayerSpec::Lstm { input_dim: 1, units: 10 }.param_count(),
            4 * (10 + 100 + 10)
        );
        assert_eq!(
            LayerSpec::Dense { input: 10, output: 1 }.param_count(),
            11
        );
        assert_eq!(
            LayerSpec::Conv2D {
                in_channels: 16,
                out_channels: 32,
                kernel: 3,
                stride: 1
            }
            .param_count(),
            32 * 16 * 9 + 32
        );
    }

    #[test]
    fn grad_check_every_layer_kind() {
        // One small model per layer type; analytic vs central differences.
        let cases: Vec<(&str, Vec<LayerSpec>, Vec<usize>)> = vec![
            (
                "dense",
                vec![
                    LayerSpec::Dense { input: 3, output: 4 },
                    LayerSpec::Relu,
                    LayerSpec::Dense { input: 4, output: 1 },
                    LayerSpec::Sigmoid,
                ],
                vec![3],
            ),
            (
                "conv1d",
                vec![
                    LayerSpec::Conv1D {
                        in_channels: 2,
                        out_channels: 3,
                        kernel: 3,
                        stride: 2,
                    },
                    LayerSpec::Tanh,
                    LayerSpec::Flatten,
                    LayerSpec::Dense { input: 3 * 4, output: 1 },
                    LayerSpec::Sigmoid,
                ],
                vec![2, 9],
            ),
            (
                "conv2d_pool",
                vec![
                    LayerSpec::Conv2D {
                        in_channels: 1,
                        out_channels: 2,
                        kernel: 3,
                        stride: 1,
                    },
                    LayerSpec::Relu,
                    LayerSpec::MaxPool2D { size: 2 },
                    LayerSpec::Flatten,
                    LayerSpec::Dense { input: 2 * 3 * 3, output: 1 },
                    LayerSpec::Sigmoid,
                ],
                vec![1, 8, 8],
            ),
            (
                "lstm",
                vec![
                    LayerSpec::Lstm { input_dim: 2, units: 5 },
                    LayerSpec::Dense { input: 5, output: 1 },
                    LayerSpec::Sigmoid,
                ],
                vec![2, 7],
            ),
            (
                "dropout_disabled",
                vec![
                    LayerSpec::Dense { input: 4, output: 6 },
                    LayerSpec::Dropout { rate: 0.5 },
                    LayerSpec::Relu,
                    LayerSpec::Dense { input: 6, output: 1 },
                    LayerSpec::Sigmoid,
                ],
                vec![4],
            ),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for (name, layers, in_shape) in cases {
            let model = ModelState::new(layers, 11).unwrap();
            let n: usize = in_shape.iter().product();
            let data: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let input = Tensor::new(in_shape, data).unwrap();
            let report = grad_check(&model, &input, 1.0, 1e-5).unwrap();
            assert!(
                report.max_rel_err < 1e-4,
                "{}: max rel err {}",
                name,
                report.max_rel_err
            );
        }
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = ModelState::new(
            vec![LayerSpec::Dense { input: 8, output: 4 }, LayerSpec::Sigmoid],
            42,
        )
        .unwrap();
        let b = ModelState::new(
            vec![LayerSpec::Dense { input: 8, output: 4 }, LayerSpec::Sigmoid],
            42,
        )
        .unwrap();
        let c = ModelState::new(
            vec![LayerSpec::Dense { input: 8, output: 4 }, LayerSpec::Sigmoid],
            43,
        )
        .unwrap();
        assert_eq!(a.weights, b.weights);
        assert_ne!(a.weights, c.weights);
    }
}
