use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layers::{backward_stack, forward_stack, Layer, Pass, Tape};
use super::ops::Window;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Weight initialization scheme for convolution and dense kernels. Biases start at zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Normal(f64),
    GlorotUniform,
}

/// Human-readable row describing one numbered layer of a built network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub index: usize,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub filters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stride: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub padding: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dropout: Option<f64>,
    /// `[channels, height, width]` after this layer.
    pub output: [usize; 3],
}

/// A feed-forward stack of layers with flat parameter and buffer storage.
#[derive(Clone, Debug)]
pub struct Network {
    layers: Vec<Layer>,
    params: Vec<f64>,
    buffers: Vec<f64>,
    input: [usize; 3],
    output: [usize; 3],
    regularized: Vec<(usize, usize)>,
    summary: Vec<LayerSummary>,
}

impl Network {
    pub fn input_shape(&self) -> [usize; 3] {
        self.input
    }

    pub fn output_shape(&self) -> [usize; 3] {
        self.output
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[f64] {
        &self.buffers
    }

    pub fn summary(&self) -> &[LayerSummary] {
        &self.summary
    }

    /// Parameter ranges (start, len) of convolution and dense kernels and biases.
    pub fn regularized_ranges(&self) -> &[(usize, usize)] {
        &self.regularized
    }

    pub fn zero_grads(&self) -> Vec<f64> {
        vec![0.0; self.params.len()]
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let [_, c, h, w] = x.shape();
        if [c, h, w] != self.input || x.batch() == 0 {
            return Err(Error::shape(format!(
                "network expects [n, {}, {}, {}] input, got {:?}",
                self.input[0],
                self.input[1],
                self.input[2],
                x.shape()
            )));
        }
        Ok(())
    }

    /// Inference-mode forward pass that records a tape for backpropagation.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tape)> {
        self.check_input(x)?;
        let mut buffers = self.buffers.clone();
        let mut pass = Pass {
            training: false,
            buffers: &mut buffers,
            rng: None,
        };
        Ok(forward_stack(&self.layers, &self.params, x.clone(), &mut pass))
    }

    /// Training-mode forward pass: batch statistics, running-stat updates, active dropout.
    pub fn forward_train(&mut self, x: &Tensor, rng: &mut ChaCha8Rng) -> Result<(Tensor, Tape)> {
        self.check_input(x)?;
        let mut pass = Pass {
            training: true,
            buffers: &mut self.buffers,
            rng: Some(rng),
        };
        Ok(forward_stack(&self.layers, &self.params, x.clone(), &mut pass))
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.forward(x).map(|(y, _)| y)
    }

    /// Backpropagates `grad_out` through a recorded pass and returns the input gradient.
    /// Parameter gradients are accumulated into `grads` when given.
    pub fn backward(&self, tape: &Tape, grad_out: &Tensor, grads: Option<&mut [f64]>) -> Tensor {
        if let Some(g) = &grads {
            assert_eq!(g.len(), self.params.len(), "gradient buffer size");
        }
        backward_stack(&self.layers, &self.params, tape, grad_out.clone(), grads)
    }

    /// Replaces parameters and buffers, e.g. from a checkpoint.
    pub fn load_state(&mut self, params: Vec<f64>, buffers: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() || buffers.len() != self.buffers.len() {
            return Err(Error::format(
                "weights",
                format!(
                    "expected {} params / {} buffers, found {} / {}",
                    self.params.len(),
                    self.buffers.len(),
                    params.len(),
                    buffers.len()
                ),
            ));
        }
        self.params = params;
        self.buffers = buffers;
        Ok(())
    }

    /// SHA-256 over the little-endian bytes of all parameters then all buffers.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for v in self.params.iter().chain(&self.buffers) {
            hasher.update(v.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

/// Incrementally assembles a [`Network`], tracking shapes so that an
/// architecture that collapses the feature map fails at build time.
#[derive(Debug)]
pub struct NetworkBuilder {
    layers: Vec<Layer>,
    params: Vec<f64>,
    buffers: Vec<f64>,
    param_count: usize,
    buffer_count: usize,
    allocate: bool,
    input: [usize; 3],
    shape: [usize; 3],
    init: Init,
    rng: ChaCha8Rng,
    regularized: Vec<(usize, usize)>,
    summary: Vec<LayerSummary>,
    next_index: usize,
}

impl NetworkBuilder {
    pub fn new(input: [usize; 3], init: Init, seed: u64) -> Self {
        NetworkBuilder {
            layers: Vec::new(),
            params: Vec::new(),
            buffers: Vec::new(),
            param_count: 0,
            buffer_count: 0,
            allocate: true,
            input,
            shape: input,
            init,
            rng: ChaCha8Rng::seed_from_u64(seed),
            regularized: Vec::new(),
            summary: Vec::new(),
            next_index: 1,
        }
    }

    /// Builder that only tracks shapes and counts, without allocating weights.
    pub fn dry_run(input: [usize; 3]) -> Self {
        NetworkBuilder {
            allocate: false,
            ..NetworkBuilder::new(input, Init::Normal(0.0), 0)
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn summary(&self) -> &[LayerSummary] {
        &self.summary
    }

    fn collapse(&self, detail: String) -> Error {
        Error::IncompatibleResolution {
            resolution: self.input[1],
            layer: self.next_index,
            detail,
        }
    }

    fn alloc_params(&mut self, n: usize, fill: impl FnMut(&mut ChaCha8Rng) -> f64) -> usize {
        let off = self.param_count;
        self.param_count += n;
        if self.allocate {
            let mut fill = fill;
            for _ in 0..n {
                let v = fill(&mut self.rng);
                self.params.push(v);
            }
        }
        off
    }

    fn alloc_buffers(&mut self, n: usize, value: f64) -> usize {
        let off = self.buffer_count;
        self.buffer_count += n;
        if self.allocate {
            self.buffers.extend(std::iter::repeat(value).take(n));
        }
        off
    }

    fn alloc_kernel(&mut self, n: usize, fan_in: usize, fan_out: usize) -> usize {
        match self.init {
            Init::Normal(std) => {
                let dist = Normal::new(0.0, std.max(f64::MIN_POSITIVE)).expect("finite std");
                self.alloc_params(n, |rng| if std == 0.0 { 0.0 } else { dist.sample(rng) })
            }
            Init::GlorotUniform => {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                self.alloc_params(n, |rng| rng.gen_range(-limit..limit))
            }
        }
    }

    fn push(&mut self, layer: Layer, shape: [usize; 3], row: Option<LayerSummary>) {
        self.layers.push(layer);
        self.shape = shape;
        if let Some(mut row) = row {
            row.index = self.next_index;
            row.output = shape;
            self.summary.push(row);
            self.next_index += 1;
        }
    }

    fn row(kind: &str) -> LayerSummary {
        LayerSummary {
            index: 0,
            kind: kind.to_string(),
            filters: None,
            size: None,
            stride: None,
            padding: None,
            dropout: None,
            output: [0; 3],
        }
    }

    pub fn conv(&mut self, out_c: usize, kernel: usize, stride: usize, pad: usize) -> Result<&mut Self> {
        let [c, h, w] = self.shape;
        let win = Window::new(c, h, w, kernel, stride, pad)
            .filter(|w| w.out_h > 0 && w.out_w > 0)
            .ok_or_else(|| self.collapse(format!("{kernel}x{kernel} convolution on a {h}x{w} feature map")))?;
        let k = c * kernel * kernel;
        let weight = self.alloc_kernel(out_c * k, k, out_c * kernel * kernel);
        let bias = self.alloc_params(out_c, |_| 0.0);
        self.regularized.push((weight, out_c * k));
        self.regularized.push((bias, out_c));
        let row = LayerSummary {
            filters: Some(out_c),
            size: Some(kernel),
            stride: Some(stride),
            padding: Some(pad),
            ..Self::row("Conv2D")
        };
        self.push(
            Layer::Conv2d { in_c: c, out_c, kernel, stride, pad, weight, bias },
            [out_c, win.out_h, win.out_w],
            Some(row),
        );
        Ok(self)
    }

    pub fn conv_transpose(&mut self, out_c: usize, kernel: usize, stride: usize, pad: usize, out_pad: usize) -> Result<&mut Self> {
        let [c, h, w] = self.shape;
        if out_pad >= stride {
            return Err(Error::invalid("output padding must be smaller than the stride"));
        }
        let oh = ((h - 1) * stride + kernel + out_pad)
            .checked_sub(2 * pad)
            .filter(|&v| v > 0)
            .ok_or_else(|| self.collapse("transposed convolution produces an empty map".into()))?;
        let ow = ((w - 1) * stride + kernel + out_pad).saturating_sub(2 * pad);
        let k = out_c * kernel * kernel;
        let weight = self.alloc_kernel(c * k, c * kernel * kernel, k);
        let bias = self.alloc_params(out_c, |_| 0.0);
        self.regularized.push((weight, c * k));
        self.regularized.push((bias, out_c));
        let row = LayerSummary {
            filters: Some(out_c),
            size: Some(kernel),
            stride: Some(stride),
            padding: Some(pad),
            ..Self::row("Conv2DTranspose")
        };
        self.push(
            Layer::ConvTranspose2d { in_c: c, out_c, kernel, stride, pad, out_pad, weight, bias },
            [out_c, oh, ow],
            Some(row),
        );
        Ok(self)
    }

    pub fn reflection_pad(&mut self, pad: usize) -> Result<&mut Self> {
        let [c, h, w] = self.shape;
        if pad >= h || pad >= w {
            return Err(self.collapse(format!("reflection pad {pad} on a {h}x{w} feature map")));
        }
        let row = LayerSummary {
            padding: Some(pad),
            ..Self::row("ReflectionPad2D")
        };
        self.push(Layer::ReflectionPad(pad), [c, h + 2 * pad, w + 2 * pad], Some(row));
        Ok(self)
    }

    pub fn instance_norm(&mut self) -> &mut Self {
        let s = self.shape;
        self.push(Layer::InstanceNorm { eps: 1e-5 }, s, Some(Self::row("InstanceNormalization")));
        self
    }

    /// Batch normalization over channels (or features after flatten).
    pub fn batch_norm(&mut self) -> &mut Self {
        let s = self.shape;
        let channels = s[0];
        let gamma = self.alloc_params(channels, |_| 1.0);
        let beta = self.alloc_params(channels, |_| 0.0);
        let running_mean = self.alloc_buffers(channels, 0.0);
        let running_var = self.alloc_buffers(channels, 1.0);
        self.push(
            Layer::BatchNorm { channels, eps: 1e-3, momentum: 0.99, gamma, beta, running_mean, running_var },
            s,
            Some(Self::row("Batch Normalization")),
        );
        self
    }

    pub fn relu(&mut self) -> &mut Self {
        let s = self.shape;
        self.push(Layer::Relu, s, None);
        self
    }

    pub fn leaky_relu(&mut self, slope: f64) -> &mut Self {
        let s = self.shape;
        self.push(Layer::LeakyRelu(slope), s, None);
        self
    }

    pub fn tanh(&mut self) -> &mut Self {
        let s = self.shape;
        self.push(Layer::Tanh, s, None);
        self
    }

    pub fn max_pool(&mut self, kernel: usize, stride: usize) -> Result<&mut Self> {
        let [c, h, w] = self.shape;
        if h < kernel || w < kernel {
            return Err(self.collapse(format!("{kernel}x{kernel} pooling on a {h}x{w} feature map")));
        }
        let shape = [c, (h - kernel) / stride + 1, (w - kernel) / stride + 1];
        let row = LayerSummary {
            size: Some(kernel),
            stride: Some(stride),
            ..Self::row("MaxPooling2D")
        };
        self.push(Layer::MaxPool { kernel, stride }, shape, Some(row));
        Ok(self)
    }

    pub fn flatten(&mut self) -> &mut Self {
        let [c, h, w] = self.shape;
        self.push(Layer::Flatten, [c * h * w, 1, 1], Some(Self::row("Flatten")));
        self
    }

    pub fn dense(&mut self, outputs: usize) -> Result<&mut Self> {
        let [c, h, w] = self.shape;
        if h != 1 || w != 1 {
            return Err(Error::invalid("dense layer needs a flattened input"));
        }
        let weight = self.alloc_kernel(outputs * c, c, outputs);
        let bias = self.alloc_params(outputs, |_| 0.0);
        self.regularized.push((weight, outputs * c));
        self.regularized.push((bias, outputs));
        let row = LayerSummary {
            size: Some(outputs),
            ..Self::row("Dense")
        };
        self.push(Layer::Dense { inputs: c, outputs, weight, bias }, [outputs, 1, 1], Some(row));
        Ok(self)
    }

    pub fn dropout(&mut self, p: f64) -> &mut Self {
        let s = self.shape;
        let row = LayerSummary {
            dropout: Some(p),
            ..Self::row("Dropout")
        };
        self.push(Layer::Dropout(p), s, Some(row));
        self
    }

    /// Adds `x + body(x)`; `body` must preserve the feature-map shape.
    pub fn residual(&mut self, body: impl FnOnce(&mut Self) -> Result<()>) -> Result<&mut Self> {
        let before = self.shape;
        let outer = std::mem::take(&mut self.layers);
        let result = body(self);
        let inner = std::mem::replace(&mut self.layers, outer);
        result?;
        if self.shape != before {
            return Err(Error::shape(format!(
                "residual body maps {before:?} to {:?}",
                self.shape
            )));
        }
        self.layers.push(Layer::Residual(inner));
        Ok(self)
    }

    pub fn build(self) -> Network {
        assert!(self.allocate, "dry-run builders cannot produce a network");
        Network {
            layers: self.layers,
            params: self.params,
            buffers: self.buffers,
            input: self.input,
            output: self.shape,
            regularized: self.regularized,
            summary: self.summary,
        }
    }
}
