use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::ops::{col2im, gemm, im2col, Window};
use super::tensor::Tensor;

/// One layer of a [`Network`](super::Network). Parametric layers hold
/// offsets into the network's flat parameter (and buffer) vectors.
#[derive(Clone, Debug)]
pub enum Layer {
    Conv2d {
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        weight: usize,
        bias: usize,
    },
    /// Weights laid out `[in_c, out_c, k, k]`.
    ConvTranspose2d {
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        out_pad: usize,
        weight: usize,
        bias: usize,
    },
    ReflectionPad(usize),
    InstanceNorm {
        eps: f64,
    },
    BatchNorm {
        channels: usize,
        eps: f64,
        momentum: f64,
        gamma: usize,
        beta: usize,
        running_mean: usize,
        running_var: usize,
    },
    Relu,
    LeakyRelu(f64),
    Tanh,
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    Flatten,
    Dense {
        inputs: usize,
        outputs: usize,
        weight: usize,
        bias: usize,
    },
    Dropout(f64),
    /// `y = x + body(x)`.
    Residual(Vec<Layer>),
}

/// Per-layer state saved by the forward pass for the backward pass.
#[derive(Debug)]
pub(crate) enum Cache {
    None,
    Input(Tensor),
    Output(Tensor),
    Norm { xhat: Vec<f64>, inv_std: Vec<f64> },
    FrozenNorm { scale: Vec<f64>, xhat: Vec<f64> },
    Pool { argmax: Vec<usize>, in_shape: [usize; 4] },
    Shape([usize; 4]),
    Mask(Vec<f64>),
    Residual(Tape),
}

/// Recorded forward pass of a layer stack, consumed by backward.
#[derive(Debug, Default)]
pub struct Tape {
    pub(crate) caches: Vec<Cache>,
}

pub(crate) struct Pass<'a> {
    pub training: bool,
    pub buffers: &'a mut [f64],
    pub rng: Option<&'a mut ChaCha8Rng>,
}

fn conv_window(x: [usize; 4], kernel: usize, stride: usize, pad: usize) -> Window {
    Window::new(x[1], x[2], x[3], kernel, stride, pad).expect("shape validated at build time")
}

pub(crate) fn forward_stack(layers: &[Layer], params: &[f64], x: Tensor, pass: &mut Pass<'_>) -> (Tensor, Tape) {
    let mut caches = Vec::with_capacity(layers.len());
    let mut cur = x;
    for layer in layers {
        let (out, cache) = layer.forward(params, cur, pass);
        caches.push(cache);
        cur = out;
    }
    (cur, Tape { caches })
}

pub(crate) fn backward_stack(
    layers: &[Layer],
    params: &[f64],
    tape: &Tape,
    grad: Tensor,
    mut grads: Option<&mut [f64]>,
) -> Tensor {
    let mut g = grad;
    for (layer, cache) in layers.iter().zip(&tape.caches).rev() {
        g = layer.backward(params, cache, g, grads.as_deref_mut());
    }
    g
}

impl Layer {
    fn forward(&self, params: &[f64], x: Tensor, pass: &mut Pass<'_>) -> (Tensor, Cache) {
        match *self {
            Layer::Conv2d { in_c, out_c, kernel, stride, pad, weight, bias } => {
                let s = x.shape();
                debug_assert_eq!(s[1], in_c);
                let win = conv_window(s, kernel, stride, pad);
                let (k, p) = (win.rows(), win.cols());
                let w = &params[weight..weight + out_c * k];
                let b = &params[bias..bias + out_c];
                let mut out = Tensor::zeros([s[0], out_c, win.out_h, win.out_w]);
                let mut cols = vec![0.0; k * p];
                for n in 0..s[0] {
                    im2col(x.item(n), &win, &mut cols);
                    let y = out.item_mut(n);
                    gemm(out_c, k, p, w, false, &cols, false, y, false);
                    for (oc, row) in y.chunks_mut(p).enumerate() {
                        row.iter_mut().for_each(|v| *v += b[oc]);
                    }
                }
                (out, Cache::Input(x))
            }
            Layer::ConvTranspose2d { in_c, out_c, kernel, stride, pad, out_pad, weight, bias } => {
                let s = x.shape();
                debug_assert_eq!(s[1], in_c);
                let oh = (s[2] - 1) * stride + kernel + out_pad - 2 * pad;
                let ow = (s[3] - 1) * stride + kernel + out_pad - 2 * pad;
                let win = Window::new(out_c, oh, ow, kernel, stride, pad).expect("validated");
                let (k, p) = (win.rows(), win.cols());
                debug_assert_eq!(p, s[2] * s[3]);
                let w = &params[weight..weight + in_c * k];
                let b = &params[bias..bias + out_c];
                let mut out = Tensor::zeros([s[0], out_c, oh, ow]);
                let mut cols = vec![0.0; k * p];
                for n in 0..s[0] {
                    gemm(k, in_c, p, w, true, x.item(n), false, &mut cols, false);
                    let y = out.item_mut(n);
                    col2im(&cols, &win, y);
                    for (oc, plane) in y.chunks_mut(oh * ow).enumerate() {
                        plane.iter_mut().for_each(|v| *v += b[oc]);
                    }
                }
                (out, Cache::Input(x))
            }
            Layer::ReflectionPad(pad) => {
                let [n, c, h, w] = x.shape();
                let (ph, pw) = (h + 2 * pad, w + 2 * pad);
                let mut out = Tensor::zeros([n, c, ph, pw]);
                let src = x.data();
                let dst = out.data_mut();
                for plane in 0..n * c {
                    for i in 0..ph {
                        let si = reflect(i as isize - pad as isize, h);
                        for j in 0..pw {
                            let sj = reflect(j as isize - pad as isize, w);
                            dst[plane * ph * pw + i * pw + j] = src[plane * h * w + si * w + sj];
                        }
                    }
                }
                (out, Cache::Shape(x.shape()))
            }
            Layer::InstanceNorm { eps } => {
                let [n, c, h, w] = x.shape();
                let group = h * w;
                let mut out = x;
                let mut inv_std = Vec::with_capacity(n * c);
                for chunk in out.data_mut().chunks_mut(group) {
                    let mean = chunk.iter().sum::<f64>() / group as f64;
                    let var = chunk.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / group as f64;
                    let is = 1.0 / (var + eps).sqrt();
                    chunk.iter_mut().for_each(|v| *v = (*v - mean) * is);
                    inv_std.push(is);
                }
                let xhat = out.data().to_vec();
                (out, Cache::Norm { xhat, inv_std })
            }
            Layer::BatchNorm { channels, eps, momentum, gamma, beta, running_mean, running_var } => {
                let [n, c, h, w] = x.shape();
                debug_assert_eq!(c, channels);
                let spatial = h * w;
                let count = (n * spatial) as f64;
                let mut out = x;
                if pass.training {
                    let mut xhat = vec![0.0; out.len()];
                    let mut inv_std = vec![0.0; c];
                    for ch in 0..c {
                        let idx = |b: usize, s: usize| (b * c + ch) * spatial + s;
                        let mut mean = 0.0;
                        for b in 0..n {
                            for s in 0..spatial {
                                mean += out.data()[idx(b, s)];
                            }
                        }
                        mean /= count;
                        let mut var = 0.0;
                        for b in 0..n {
                            for s in 0..spatial {
                                let d = out.data()[idx(b, s)] - mean;
                                var += d * d;
                            }
                        }
                        var /= count;
                        let is = 1.0 / (var + eps).sqrt();
                        inv_std[ch] = is;
                        let (g, bt) = (params[gamma + ch], params[beta + ch]);
                        for b in 0..n {
                            for s in 0..spatial {
                                let i = idx(b, s);
                                let xh = (out.data()[i] - mean) * is;
                                xhat[i] = xh;
                                out.data_mut()[i] = g * xh + bt;
                            }
                        }
                        let rm = &mut pass.buffers[running_mean + ch];
                        *rm = momentum * *rm + (1.0 - momentum) * mean;
                        let rv = &mut pass.buffers[running_var + ch];
                        *rv = momentum * *rv + (1.0 - momentum) * var;
                    }
                    (out, Cache::Norm { xhat, inv_std })
                } else {
                    let mut scale = vec![0.0; c];
                    let mut xhat = vec![0.0; out.len()];
                    for ch in 0..c {
                        let is = 1.0 / (pass.buffers[running_var + ch] + eps).sqrt();
                        let mean = pass.buffers[running_mean + ch];
                        let (g, bt) = (params[gamma + ch], params[beta + ch]);
                        scale[ch] = g * is;
                        for b in 0..n {
                            let start = (b * c + ch) * spatial;
                            for i in start..start + spatial {
                                let xh = (out.data()[i] - mean) * is;
                                xhat[i] = xh;
                                out.data_mut()[i] = g * xh + bt;
                            }
                        }
                    }
                    (out, Cache::FrozenNorm { scale, xhat })
                }
            }
            Layer::Relu => {
                let out = x.map(|v| v.max(0.0));
                (out, Cache::Input(x))
            }
            Layer::LeakyRelu(slope) => {
                let out = x.map(|v| if v > 0.0 { v } else { slope * v });
                (out, Cache::Input(x))
            }
            Layer::Tanh => {
                let out = x.map(f64::tanh);
                (out.clone(), Cache::Output(out))
            }
            Layer::MaxPool { kernel, stride } => {
                let [n, c, h, w] = x.shape();
                let oh = (h - kernel) / stride + 1;
                let ow = (w - kernel) / stride + 1;
                let mut out = Tensor::zeros([n, c, oh, ow]);
                let mut argmax = vec![0; n * c * oh * ow];
                let src = x.data();
                for plane in 0..n * c {
                    let base = plane * h * w;
                    for i in 0..oh {
                        for j in 0..ow {
                            let mut best = f64::NEG_INFINITY;
                            let mut best_idx = base;
                            for ki in 0..kernel {
                                for kj in 0..kernel {
                                    let idx = base + (i * stride + ki) * w + j * stride + kj;
                                    if src[idx] > best {
                                        best = src[idx];
                                        best_idx = idx;
                                    }
                                }
                            }
                            let o = plane * oh * ow + i * ow + j;
                            out.data_mut()[o] = best;
                            argmax[o] = best_idx;
                        }
                    }
                }
                (out, Cache::Pool { argmax, in_shape: x.shape() })
            }
            Layer::Flatten => {
                let s = x.shape();
                let out = x.reshape([s[0], s[1] * s[2] * s[3], 1, 1]).expect("same size");
                (out, Cache::Shape(s))
            }
            Layer::Dense { inputs, outputs, weight, bias } => {
                let n = x.batch();
                debug_assert_eq!(x.item_len(), inputs);
                let w = &params[weight..weight + outputs * inputs];
                let b = &params[bias..bias + outputs];
                let mut out = Tensor::zeros([n, outputs, 1, 1]);
                gemm(n, inputs, outputs, x.data(), false, w, true, out.data_mut(), false);
                for row in out.data_mut().chunks_mut(outputs) {
                    row.iter_mut().zip(b).for_each(|(v, bb)| *v += bb);
                }
                (out, Cache::Input(x))
            }
            Layer::Dropout(p) => match (pass.training, pass.rng.as_deref_mut()) {
                (true, Some(rng)) if p > 0.0 => {
                    let keep = 1.0 / (1.0 - p);
                    let mask: Vec<f64> = (0..x.len())
                        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
                        .collect();
                    let mut out = x;
                    out.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                    (out, Cache::Mask(mask))
                }
                _ => (x, Cache::None),
            },
            Layer::Residual(ref body) => {
                let (fx, tape) = forward_stack(body, params, x.clone(), pass);
                let mut out = x;
                out.add_assign(&fx).expect("residual body preserves shape");
                (out, Cache::Residual(tape))
            }
        }
    }

    fn backward(&self, params: &[f64], cache: &Cache, grad: Tensor, grads: Option<&mut [f64]>) -> Tensor {
        match (self, cache) {
            (&Layer::Conv2d { in_c: _, out_c, kernel, stride, pad, weight, bias }, Cache::Input(x)) => {
                let s = x.shape();
                let win = conv_window(s, kernel, stride, pad);
                let (k, p) = (win.rows(), win.cols());
                let w = &params[weight..weight + out_c * k];
                let mut dx = Tensor::zeros(s);
                let mut cols = vec![0.0; k * p];
                let mut dcols = vec![0.0; k * p];
                let mut grads = grads;
                for n in 0..s[0] {
                    let gy = grad.item(n);
                    if let Some(g) = grads.as_deref_mut() {
                        im2col(x.item(n), &win, &mut cols);
                        gemm(out_c, p, k, gy, false, &cols, true, &mut g[weight..weight + out_c * k], true);
                        for (oc, row) in gy.chunks(p).enumerate() {
                            g[bias + oc] += row.iter().sum::<f64>();
                        }
                    }
                    gemm(k, out_c, p, w, true, gy, false, &mut dcols, false);
                    col2im(&dcols, &win, dx.item_mut(n));
                }
                dx
            }
            (&Layer::ConvTranspose2d { in_c, out_c, kernel, stride, pad, out_pad: _, weight, bias }, Cache::Input(x)) => {
                let s = x.shape();
                let gs = grad.shape();
                let win = Window::new(out_c, gs[2], gs[3], kernel, stride, pad).expect("validated");
                let (k, p) = (win.rows(), win.cols());
                let w = &params[weight..weight + in_c * k];
                let mut dx = Tensor::zeros(s);
                let mut cols = vec![0.0; k * p];
                let mut grads = grads;
                for n in 0..s[0] {
                    im2col(grad.item(n), &win, &mut cols);
                    gemm(in_c, k, p, w, false, &cols, false, dx.item_mut(n), false);
                    if let Some(g) = grads.as_deref_mut() {
                        gemm(in_c, p, k, x.item(n), false, &cols, true, &mut g[weight..weight + in_c * k], true);
                        for (oc, plane) in grad.item(n).chunks(gs[2] * gs[3]).enumerate() {
                            g[bias + oc] += plane.iter().sum::<f64>();
                        }
                    }
                }
                dx
            }
            (&Layer::ReflectionPad(pad), Cache::Shape(s)) => {
                let [n, c, h, w] = *s;
                let (ph, pw) = (h + 2 * pad, w + 2 * pad);
                let mut dx = Tensor::zeros(*s);
                let src = grad.data();
                let dst = dx.data_mut();
                for plane in 0..n * c {
                    for i in 0..ph {
                        let si = reflect(i as isize - pad as isize, h);
                        for j in 0..pw {
                            let sj = reflect(j as isize - pad as isize, w);
                            dst[plane * h * w + si * w + sj] += src[plane * ph * pw + i * pw + j];
                        }
                    }
                }
                dx
            }
            (Layer::InstanceNorm { .. }, Cache::Norm { xhat, inv_std }) => {
                let [_, _, h, w] = grad.shape();
                let group = h * w;
                let mut dx = grad;
                for ((dy, xh), &is) in dx.data_mut().chunks_mut(group).zip(xhat.chunks(group)).zip(inv_std) {
                    norm_backward(dy, xh, is);
                }
                dx
            }
            (&Layer::BatchNorm { channels: _, gamma, beta, .. }, Cache::Norm { xhat, inv_std }) => {
                let [n, c, h, w] = grad.shape();
                let spatial = h * w;
                let count = (n * spatial) as f64;
                let mut dx = grad;
                let mut grads = grads;
                for ch in 0..c {
                    let idx = |b: usize, s: usize| (b * c + ch) * spatial + s;
                    let (mut sum_dy, mut sum_dy_xh) = (0.0, 0.0);
                    for b in 0..n {
                        for s in 0..spatial {
                            let i = idx(b, s);
                            sum_dy += dx.data()[i];
                            sum_dy_xh += dx.data()[i] * xhat[i];
                        }
                    }
                    if let Some(g) = grads.as_deref_mut() {
                        g[gamma + ch] += sum_dy_xh;
                        g[beta + ch] += sum_dy;
                    }
                    let gm = params[gamma + ch];
                    let k = gm * inv_std[ch] / count;
                    for b in 0..n {
                        for s in 0..spatial {
                            let i = idx(b, s);
                            let dy = dx.data()[i];
                            dx.data_mut()[i] = k * (count * dy - sum_dy - xhat[i] * sum_dy_xh);
                        }
                    }
                }
                dx
            }
            (&Layer::BatchNorm { gamma, beta, .. }, Cache::FrozenNorm { scale, xhat }) => {
                // Running statistics are constants here, so the map is affine per channel.
                let [n, c, h, w] = grad.shape();
                let spatial = h * w;
                let mut dx = grad;
                let mut grads = grads;
                for b in 0..n {
                    for (ch, &sc) in scale.iter().enumerate().take(c) {
                        let start = (b * c + ch) * spatial;
                        if let Some(g) = grads.as_deref_mut() {
                            for i in start..start + spatial {
                                g[gamma + ch] += dx.data()[i] * xhat[i];
                                g[beta + ch] += dx.data()[i];
                            }
                        }
                        dx.data_mut()[start..start + spatial].iter_mut().for_each(|v| *v *= sc);
                    }
                }
                dx
            }
            (Layer::Relu, Cache::Input(x)) => grad
                .zip_map(x, |g, v| if v > 0.0 { g } else { 0.0 })
                .expect("same shape"),
            (&Layer::LeakyRelu(slope), Cache::Input(x)) => grad
                .zip_map(x, |g, v| if v > 0.0 { g } else { slope * g })
                .expect("same shape"),
            (Layer::Tanh, Cache::Output(y)) => grad.zip_map(y, |g, t| g * (1.0 - t * t)).expect("same shape"),
            (Layer::MaxPool { .. }, Cache::Pool { argmax, in_shape }) => {
                let mut dx = Tensor::zeros(*in_shape);
                for (g, &i) in grad.data().iter().zip(argmax) {
                    dx.data_mut()[i] += g;
                }
                dx
            }
            (Layer::Flatten, Cache::Shape(s)) => grad.reshape(*s).expect("same size"),
            (&Layer::Dense { inputs, outputs, weight, bias }, Cache::Input(x)) => {
                let n = x.batch();
                let w = &params[weight..weight + outputs * inputs];
                if let Some(g) = grads {
                    gemm(outputs, n, inputs, grad.data(), true, x.data(), false, &mut g[weight..weight + outputs * inputs], true);
                    for row in grad.data().chunks(outputs) {
                        for (o, v) in row.iter().enumerate() {
                            g[bias + o] += v;
                        }
                    }
                }
                let mut dx = Tensor::zeros(x.shape());
                gemm(n, outputs, inputs, grad.data(), false, w, false, dx.data_mut(), false);
                dx
            }
            (Layer::Dropout(_), Cache::Mask(mask)) => {
                let mut dx = grad;
                dx.data_mut().iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
                dx
            }
            (Layer::Dropout(_), Cache::None) => grad,
            (Layer::Residual(body), Cache::Residual(tape)) => {
                let mut dx = backward_stack(body, params, tape, grad.clone(), grads);
                dx.add_assign(&grad).expect("same shape");
                dx
            }
            (layer, cache) => unreachable!("cache {cache:?} does not belong to layer {layer:?}"),
        }
    }
}

/// In-place gradient of `(x - mean) * inv_std` over one normalization group.
fn norm_backward(dy: &mut [f64], xhat: &[f64], inv_std: f64) {
    let count = dy.len() as f64;
    let sum_dy: f64 = dy.iter().sum();
    let sum_dy_xh: f64 = dy.iter().zip(xhat).map(|(a, b)| a * b).sum();
    for (d, &xh) in dy.iter_mut().zip(xhat) {
        *d = inv_std / count * (count * *d - sum_dy - xh * sum_dy_xh);
    }
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}
