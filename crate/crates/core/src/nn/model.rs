//! The M1 model: two Conv1D blocks on the client, one linear layer on the
//! server, softmax and loss back on the client.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::ops;
use super::NnError;
use crate::optim::{adam_step, sgd_step, AdamHyper, AdamState};
use crate::tensor::{ShapeError, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

/// Architecture description: the layer graph, the split point, and the
/// per-layer hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub input_len: usize,
    pub conv1: ConvSpec,
    pub pool1: (usize, usize),
    pub conv2: ConvSpec,
    pub pool2: (usize, usize),
    pub leaky_slope: f32,
    pub classes: usize,
    /// Index of the last client-side hidden layer in the layer graph.
    pub split_index: usize,
    /// Total depth counting conv blocks and the linear layer.
    pub depth: usize,
}

impl ModelSpec {
    /// The model used throughout: Conv1D(1→8, k=5, pad=2) → LeakyReLU →
    /// MaxPool(2,2) → Conv1D(8→8, k=5, pad=2) → LeakyReLU → MaxPool(2,2)
    /// → flatten (256 features) → Linear(256→5) → Softmax.
    pub fn m1() -> Self {
        ModelSpec {
            input_len: 128,
            conv1: ConvSpec {
                in_channels: 1,
                out_channels: 8,
                kernel: 5,
                stride: 1,
                padding: 2,
            },
            pool1: (2, 2),
            conv2: ConvSpec {
                in_channels: 8,
                out_channels: 8,
                kernel: 5,
                stride: 1,
                padding: 2,
            },
            pool2: (2, 2),
            leaky_slope: 0.01,
            classes: 5,
            split_index: 2,
            depth: 3,
        }
    }

    fn conv_out(t: usize, c: &ConvSpec) -> usize {
        (t + 2 * c.padding - c.kernel) / c.stride + 1
    }

    fn pool_out(t: usize, (w, s): (usize, usize)) -> usize {
        (t - w) / s + 1
    }

    /// Time length after the second pooling stage.
    pub fn split_time(&self) -> usize {
        let t1 = Self::conv_out(self.input_len, &self.conv1);
        let p1 = Self::pool_out(t1, self.pool1);
        let t2 = Self::conv_out(p1, &self.conv2);
        Self::pool_out(t2, self.pool2)
    }

    /// Flattened feature count of the split-layer activation map.
    pub fn split_features(&self) -> usize {
        self.conv2.out_channels * self.split_time()
    }

    pub fn split_channels(&self) -> usize {
        self.conv2.out_channels
    }
}

fn uniform_init(rng: &mut ChaCha20Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f32).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len)
        .map(|_| (rng.gen::<f32>() * 2.0 - 1.0) * bound)
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Draw all model parameters from one seeded stream, in layer order, so the
/// client, the server and a local run can share initialization by seed alone.
pub fn init_all_params(spec: &ModelSpec, seed: u64) -> ([Tensor; 4], (Tensor, Tensor)) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let c1 = &spec.conv1;
    let w1 = uniform_init(
        &mut rng,
        &[c1.out_channels, c1.in_channels, c1.kernel],
        c1.in_channels * c1.kernel,
    );
    let b1 = uniform_init(&mut rng, &[c1.out_channels], c1.in_channels * c1.kernel);
    let c2 = &spec.conv2;
    let w2 = uniform_init(
        &mut rng,
        &[c2.out_channels, c2.in_channels, c2.kernel],
        c2.in_channels * c2.kernel,
    );
    let b2 = uniform_init(&mut rng, &[c2.out_channels], c2.in_channels * c2.kernel);
    let f = spec.split_features();
    let wl = uniform_init(&mut rng, &[spec.classes, f], f);
    let bl = uniform_init(&mut rng, &[spec.classes], f);
    ([w1, b1, w2, b2], (wl, bl))
}

struct ForwardCache {
    input: Tensor,
    z1: Tensor,
    pool1_arg: Vec<u32>,
    pool1_in_shape: Vec<usize>,
    p1: Tensor,
    z2: Tensor,
    pool2_arg: Vec<u32>,
    pool2_in_shape: Vec<usize>,
}

/// The client's half of the network: the convolutional stack up to the split
/// layer, plus Adam state for its four parameter tensors.
pub struct ClientModel {
    pub spec: ModelSpec,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    adam: [AdamState; 4],
    hyper: AdamHyper,
    cache: Option<ForwardCache>,
}

impl ClientModel {
    pub fn init(spec: ModelSpec, seed: u64) -> Self {
        let ([w1, b1, w2, b2], _) = init_all_params(&spec, seed);
        Self::from_params(spec, w1, b1, w2, b2)
    }

    pub fn from_params(spec: ModelSpec, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Self {
        let adam = [
            AdamState::new(w1.len()),
            AdamState::new(b1.len()),
            AdamState::new(w2.len()),
            AdamState::new(b2.len()),
        ];
        ClientModel {
            spec,
            w1,
            b1,
            w2,
            b2,
            adam,
            hyper: AdamHyper::default(),
            cache: None,
        }
    }

    pub fn zeroed(spec: ModelSpec) -> Self {
        let c1 = spec.conv1;
        let c2 = spec.conv2;
        Self::from_params(
            spec,
            Tensor::zeros(&[c1.out_channels, c1.in_channels, c1.kernel]),
            Tensor::zeros(&[c1.out_channels]),
            Tensor::zeros(&[c2.out_channels, c2.in_channels, c2.kernel]),
            Tensor::zeros(&[c2.out_channels]),
        )
    }

    /// Forward to the split layer, keeping the intermediates needed by
    /// [`ClientModel::backward`]. Output shape `[n, split_features]`.
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let s = &self.spec;
        if x.shape().len() != 3 || x.dim(1) != s.conv1.in_channels || x.dim(2) != s.input_len {
            return Err(ShapeError::Axis {
                op: "client_forward",
                axis: 2,
                name: "time",
                expected: s.input_len,
                got: x.shape().last().copied().unwrap_or(0),
            }
            .into());
        }
        let z1 = ops::conv1d_forward(x, &self.w1, &self.b1, s.conv1.stride, s.conv1.padding)?;
        let r1 = ops::leaky_relu_forward(&z1, s.leaky_slope);
        let (p1, pool1_arg) = ops::maxpool1d_forward(&r1, s.pool1.0, s.pool1.1)?;
        let z2 = ops::conv1d_forward(&p1, &self.w2, &self.b2, s.conv2.stride, s.conv2.padding)?;
        let r2 = ops::leaky_relu_forward(&z2, s.leaky_slope);
        let (p2, pool2_arg) = ops::maxpool1d_forward(&r2, s.pool2.0, s.pool2.1)?;
        let n = x.dim(0);
        let features = s.split_features();
        let a = p2.reshape(&[n, features])?;
        self.cache = Some(ForwardCache {
            input: x.clone(),
            z1,
            pool1_in_shape: r1.shape().to_vec(),
            pool1_arg,
            p1,
            z2,
            pool2_in_shape: r2.shape().to_vec(),
            pool2_arg,
        });
        Ok(a)
    }

    /// Forward without caching, for inference.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let s = &self.spec;
        let z1 = ops::conv1d_forward(x, &self.w1, &self.b1, s.conv1.stride, s.conv1.padding)?;
        let r1 = ops::leaky_relu_forward(&z1, s.leaky_slope);
        let (p1, _) = ops::maxpool1d_forward(&r1, s.pool1.0, s.pool1.1)?;
        let z2 = ops::conv1d_forward(&p1, &self.w2, &self.b2, s.conv2.stride, s.conv2.padding)?;
        let r2 = ops::leaky_relu_forward(&z2, s.leaky_slope);
        let (p2, _) = ops::maxpool1d_forward(&r2, s.pool2.0, s.pool2.1)?;
        let n = x.dim(0);
        p2.reshape(&[n, s.split_features()]).map_err(Into::into)
    }

    /// Backpropagate from the split-layer gradient and apply one Adam step to
    /// every client parameter.
    pub fn backward_and_step(&mut self, grad_split: &Tensor, eta: f32) -> Result<(), NnError> {
        let s = self.spec.clone();
        let cache = self.cache.take().ok_or(NnError::MissingCache {
            layer: "client_model",
        })?;
        let n = grad_split.dim(0);
        let g = grad_split
            .clone()
            .reshape(&[n, s.split_channels(), s.split_time()])?;
        let g = ops::maxpool1d_backward(&g, &cache.pool2_arg, &cache.pool2_in_shape);
        let g = ops::leaky_relu_backward(&g, &cache.z2, s.leaky_slope);
        let (g, gw2, gb2) =
            ops::conv1d_backward(&g, &cache.p1, &self.w2, s.conv2.stride, s.conv2.padding)?;
        let g = ops::maxpool1d_backward(&g, &cache.pool1_arg, &cache.pool1_in_shape);
        let g = ops::leaky_relu_backward(&g, &cache.z1, s.leaky_slope);
        let (_, gw1, gb1) =
            ops::conv1d_backward(&g, &cache.input, &self.w1, s.conv1.stride, s.conv1.padding)?;
        adam_step(
            self.w1.data_mut(),
            gw1.data(),
            &mut self.adam[0],
            eta,
            self.hyper,
        );
        adam_step(
            self.b1.data_mut(),
            gb1.data(),
            &mut self.adam[1],
            eta,
            self.hyper,
        );
        adam_step(
            self.w2.data_mut(),
            gw2.data(),
            &mut self.adam[2],
            eta,
            self.hyper,
        );
        adam_step(
            self.b2.data_mut(),
            gb2.data(),
            &mut self.adam[3],
            eta,
            self.hyper,
        );
        Ok(())
    }

    /// All parameters flattened in a fixed order, for trajectory comparisons.
    pub fn flat_params(&self) -> Vec<f32> {
        let mut out = Vec::new();
        for t in [&self.w1, &self.b1, &self.w2, &self.b2] {
            out.extend_from_slice(t.data());
        }
        out
    }
}

/// Optimizer driving the linear head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ServerOpt {
    #[default]
    Sgd,
    Adam,
}

/// The server's half: one linear layer mapping split features to class
/// logits, updated by plain gradient descent (or Adam when configured).
pub struct LinearHead {
    pub weight: Tensor,
    pub bias: Tensor,
    opt: ServerOpt,
    adam_w: AdamState,
    adam_b: AdamState,
    hyper: AdamHyper,
    cache: Option<Tensor>,
}

impl LinearHead {
    pub fn init(spec: &ModelSpec, seed: u64, opt: ServerOpt) -> Self {
        let (_, (w, b)) = init_all_params(spec, seed);
        Self::from_params(w, b, opt)
    }

    pub fn from_params(weight: Tensor, bias: Tensor, opt: ServerOpt) -> Self {
        let adam_w = AdamState::new(weight.len());
        let adam_b = AdamState::new(bias.len());
        LinearHead {
            weight,
            bias,
            opt,
            adam_w,
            adam_b,
            hyper: AdamHyper::default(),
            cache: None,
        }
    }

    /// Forward pass caching the input for the weight gradient.
    pub fn forward(&mut self, a: &Tensor) -> Result<Tensor, NnError> {
        let out = ops::linear_forward(a, &self.weight, &self.bias)?;
        self.cache = Some(a.clone());
        Ok(out)
    }

    pub fn infer(&self, a: &Tensor) -> Result<Tensor, NnError> {
        ops::linear_forward(a, &self.weight, &self.bias)
    }

    /// Weight/bias gradients from the cached input: `(gᵀ·a, Σ_batch g)`.
    pub fn grads_from_cache(&self, grad_out: &Tensor) -> Result<(Tensor, Tensor), NnError> {
        let a = self.cache.as_ref().ok_or(NnError::MissingCache {
            layer: "linear_head",
        })?;
        let (gw, gb, _) = ops::linear_backward(grad_out, a, &self.weight)?;
        Ok((gw, gb))
    }

    /// Batch sum of the output gradient, used when the input stays encrypted.
    pub fn bias_grad(&self, grad_out: &Tensor) -> Tensor {
        let (n, fout) = (grad_out.dim(0), grad_out.dim(1));
        let mut gb = Tensor::zeros(&[fout]);
        for bi in 0..n {
            for j in 0..fout {
                gb.data_mut()[j] += grad_out.data()[bi * fout + j];
            }
        }
        gb
    }

    /// Gradient with respect to the layer input, using current (pre-update)
    /// weights: `g·w`.
    pub fn input_grad(&self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let (n, fout) = (grad_out.dim(0), grad_out.dim(1));
        let fin = self.weight.dim(1);
        if fout != self.weight.dim(0) {
            return Err(ShapeError::Axis {
                op: "input_grad",
                axis: 1,
                name: "out_features",
                expected: self.weight.dim(0),
                got: fout,
            }
            .into());
        }
        let mut ga = Tensor::zeros(&[n, fin]);
        let gd = grad_out.data();
        let wd = self.weight.data();
        let gad = ga.data_mut();
        for bi in 0..n {
            for j in 0..fout {
                let g = gd[bi * fout + j];
                for i in 0..fin {
                    gad[bi * fin + i] += g * wd[j * fin + i];
                }
            }
        }
        Ok(ga)
    }

    pub fn apply_grads(&mut self, gw: &Tensor, gb: &Tensor, eta: f32) {
        match self.opt {
            ServerOpt::Sgd => {
                sgd_step(self.weight.data_mut(), gw.data(), eta);
                sgd_step(self.bias.data_mut(), gb.data(), eta);
            }
            ServerOpt::Adam => {
                adam_step(
                    self.weight.data_mut(),
                    gw.data(),
                    &mut self.adam_w,
                    eta,
                    self.hyper,
                );
                adam_step(
                    self.bias.data_mut(),
                    gb.data(),
                    &mut self.adam_b,
                    eta,
                    self.hyper,
                );
            }
        }
    }

    pub fn flat_params(&self) -> Vec<f32> {
        let mut out = Vec::new();
        out.extend_from_slice(self.weight.data());
        out.extend_from_slice(self.bias.data());
        out
    }
}

/// Unsplit model for local training: the client stack and the linear head in
/// one place, stepped with exactly the same operation order as a split run.
pub struct LocalModel {
    pub client: ClientModel,
    pub head: LinearHead,
}

impl LocalModel {
    pub fn init(spec: ModelSpec, seed: u64, server_opt: ServerOpt) -> Self {
        let head = LinearHead::init(&spec, seed, server_opt);
        let client = ClientModel::init(spec, seed);
        LocalModel { client, head }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let a = self.client.forward(x)?;
        self.head.forward(&a)
    }

    /// Full pipeline for inference: `[n,1,T] → logits [n,classes]`.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let a = self.client.infer(x)?;
        self.head.infer(&a)
    }

    /// Mirror of one split-mode training step after the loss gradient is
    /// known: head grads → head update → split gradient → client update.
    pub fn backward_and_step(&mut self, grad_logits: &Tensor, eta: f32) -> Result<(), NnError> {
        let (gw, gb) = self.head.grads_from_cache(grad_logits)?;
        let ga = self.head.input_grad(grad_logits)?;
        self.head.apply_grads(&gw, &gb, eta);
        self.client.backward_and_step(&ga, eta)
    }

    pub fn flat_params(&self) -> Vec<f32> {
        let mut out = self.client.flat_params();
        out.extend(self.head.flat_params());
        out
    }
}
