use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Spatial padding rule for [`Layer::Conv2D`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Zero padding so that `out = ceil(in / stride)`.
    Same,
    /// No padding.
    Valid,
}

/// One layer of a feed-forward network.
///
/// Per-sample activations are laid out row-major; convolutional layers use
/// `[height, width, channels]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// `y = x·W + b` with `W: [in, out]`, `b: [out]`.
    Dense { weights: Tensor, bias: Tensor },
    /// 2-D convolution with `kernel: [kh, kw, cin, cout]`, `bias: [cout]`.
    Conv2D {
        kernel: Tensor,
        bias: Tensor,
        stride: usize,
        padding: Padding,
    },
    LeakyReLU { slope: f64 },
    ReLU,
    Flatten,
    /// Max pooling over `size × size` windows, no padding.
    MaxPool2D { size: usize, stride: usize },
    /// Softmax over a rank-1 per-sample vector.
    Softmax,
}

/// Geometry of a convolution or pooling window, resolved for one input shape.
#[derive(Debug, Clone, Copy)]
struct Window {
    h: usize,
    w: usize,
    c: usize,
    oh: usize,
    ow: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad_top: usize,
    pad_left: usize,
}

impl Window {
    #[inline]
    fn source(&self, o: usize, k: usize, pad: usize, limit: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - pad as isize;
        (pos >= 0 && (pos as usize) < limit).then_some(pos as usize)
    }
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "Dense",
            Layer::Conv2D { .. } => "Conv2D",
            Layer::LeakyReLU { .. } => "LeakyReLU",
            Layer::ReLU => "ReLU",
            Layer::Flatten => "Flatten",
            Layer::MaxPool2D { .. } => "MaxPool2D",
            Layer::Softmax => "Softmax",
        }
    }

    /// Parameter tensors in storage order (weights or kernel first, then bias).
    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Dense { weights, bias } => vec![weights, bias],
            Layer::Conv2D { kernel, bias, .. } => vec![kernel, bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Dense { weights, bias } => vec![weights, bias],
            Layer::Conv2D { kernel, bias, .. } => vec![kernel, bias],
            _ => Vec::new(),
        }
    }

    fn err(&self, index: usize, msg: impl Into<String>) -> Error {
        Error::Layer {
            layer: index,
            kind: self.kind(),
            msg: msg.into(),
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Dense { weights, bias } => {
                let ws = weights.shape();
                if ws.len() != 2 || bias.shape() != [ws[1]] {
                    return Err(self.err(index, format!(
                        "weights {:?} / bias {:?} are not [in, out] / [out]",
                        ws,
                        bias.shape()
                    )));
                }
                if input.len() != 1 || input[0] != ws[0] {
                    return Err(self.err(index, format!(
                        "expects input [{}], got {input:?}",
                        ws[0]
                    )));
                }
                Ok(vec![ws[1]])
            }
            Layer::Conv2D { .. } | Layer::MaxPool2D { .. } => {
                let win = self.window(index, input)?;
                let c = match self {
                    Layer::Conv2D { kernel, .. } => kernel.shape()[3],
                    _ => win.c,
                };
                Ok(vec![win.oh, win.ow, c])
            }
            Layer::LeakyReLU { slope } => {
                if !(*slope > 0.0 && *slope < 1.0) {
                    return Err(self.err(index, format!("slope {slope} outside (0, 1)")));
                }
                Ok(input.to_vec())
            }
            Layer::ReLU => Ok(input.to_vec()),
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Softmax => {
                if input.len() != 1 {
                    return Err(self.err(index, format!("expects rank-1 input, got {input:?}")));
                }
                Ok(input.to_vec())
            }
        }
    }

    fn window(&self, index: usize, input: &[usize]) -> Result<Window> {
        if input.len() != 3 {
            return Err(self.err(index, format!("expects [h, w, c] input, got {input:?}")));
        }
        let (h, w, c) = (input[0], input[1], input[2]);
        match self {
            Layer::Conv2D {
                kernel,
                bias,
                stride,
                padding,
            } => {
                let ks = kernel.shape();
                if ks.len() != 4 || bias.shape() != [ks[3]] {
                    return Err(self.err(index, format!(
                        "kernel {:?} / bias {:?} are not [kh, kw, cin, cout] / [cout]",
                        ks,
                        bias.shape()
                    )));
                }
                if ks[2] != c {
                    return Err(self.err(index, format!(
                        "kernel expects {} input channels, got {c}",
                        ks[2]
                    )));
                }
                if *stride == 0 {
                    return Err(self.err(index, "stride must be >= 1"));
                }
                let (kh, kw) = (ks[0], ks[1]);
                let (oh, ow, pad_top, pad_left) = match padding {
                    Padding::Same => {
                        let oh = h.div_ceil(*stride);
                        let ow = w.div_ceil(*stride);
                        let ph = ((oh - 1) * stride + kh).saturating_sub(h);
                        let pw = ((ow - 1) * stride + kw).saturating_sub(w);
                        (oh, ow, ph / 2, pw / 2)
                    }
                    Padding::Valid => {
                        if kh > h || kw > w {
                            return Err(self.err(index, format!(
                                "kernel {kh}x{kw} larger than input {h}x{w}"
                            )));
                        }
                        ((h - kh) / stride + 1, (w - kw) / stride + 1, 0, 0)
                    }
                };
                Ok(Window {
                    h,
                    w,
                    c,
                    oh,
                    ow,
                    kh,
                    kw,
                    stride: *stride,
                    pad_top,
                    pad_left,
                })
            }
            Layer::MaxPool2D { size, stride } => {
                if *size == 0 || *stride == 0 {
                    return Err(self.err(index, "pool size and stride must be >= 1"));
                }
                if *size > h || *size > w {
                    return Err(self.err(index, format!("pool {size} larger than input {h}x{w}")));
                }
                Ok(Window {
                    h,
                    w,
                    c,
                    oh: (h - size) / stride + 1,
                    ow: (w - size) / stride + 1,
                    kh: *size,
                    kw: *size,
                    stride: *stride,
                    pad_top: 0,
                    pad_left: 0,
                })
            }
            _ => unreachable!("window() called on {}", self.kind()),
        }
    }

    /// Forward pass for `n` samples packed contiguously in `input`.
    pub(crate) fn forward(
        &self,
        index: usize,
        input: &[f64],
        n: usize,
        in_shape: &[usize],
    ) -> Result<Vec<f64>> {
        match self {
            Layer::Dense { weights, bias } => {
                let (din, dout) = (weights.shape()[0], weights.shape()[1]);
                let w = weights.data();
                let mut out = Vec::with_capacity(n * dout);
                for x in input.chunks_exact(din) {
                    let start = out.len();
                    out.extend_from_slice(bias.data());
                    let row = &mut out[start..];
                    for (k, &xk) in x.iter().enumerate() {
                        if xk == 0.0 {
                            continue;
                        }
                        let wk = &w[k * dout..(k + 1) * dout];
                        for (o, &wv) in row.iter_mut().zip(wk) {
                            *o += xk * wv;
                        }
                    }
                }
                Ok(out)
            }
            Layer::Conv2D { kernel, bias, .. } => {
                let win = self.window(index, in_shape)?;
                let cout = kernel.shape()[3];
                let k = kernel.data();
                let plane = win.h * win.w * win.c;
                let mut out = vec![0.0; n * win.oh * win.ow * cout];
                for b in 0..n {
                    let x = &input[b * plane..(b + 1) * plane];
                    for oy in 0..win.oh {
                        for ox in 0..win.ow {
                            let base = ((b * win.oh + oy) * win.ow + ox) * cout;
                            let acc = &mut out[base..base + cout];
                            acc.copy_from_slice(bias.data());
                            for ky in 0..win.kh {
                                let Some(iy) = win.source(oy, ky, win.pad_top, win.h) else {
                                    continue;
                                };
                                for kx in 0..win.kw {
                                    let Some(ix) = win.source(ox, kx, win.pad_left, win.w) else {
                                        continue;
                                    };
                                    for ci in 0..win.c {
                                        let xv = x[(iy * win.w + ix) * win.c + ci];
                                        if xv == 0.0 {
                                            continue;
                                        }
                                        let kb = ((ky * win.kw + kx) * win.c + ci) * cout;
                                        for (a, &kv) in acc.iter_mut().zip(&k[kb..kb + cout]) {
                                            *a += xv * kv;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                Ok(out)
            }
            Layer::LeakyReLU { slope } => Ok(input
                .iter()
                .map(|&v| if v > 0.0 { v } else { slope * v })
                .collect()),
            Layer::ReLU => Ok(input.iter().map(|&v| v.max(0.0)).collect()),
            Layer::Flatten => Ok(input.to_vec()),
            Layer::MaxPool2D { .. } => {
                let win = self.window(index, in_shape)?;
                let plane = win.h * win.w * win.c;
                let mut out = Vec::with_capacity(n * win.oh * win.ow * win.c);
                for b in 0..n {
                    let x = &input[b * plane..(b + 1) * plane];
                    for oy in 0..win.oh {
                        for ox in 0..win.ow {
                            for c in 0..win.c {
                                out.push(x[max_pool_argmax(&win, x, oy, ox, c)]);
                            }
                        }
                    }
                }
                Ok(out)
            }
            Layer::Softmax => {
                let d = in_shape[0];
                let mut out = Vec::with_capacity(input.len());
                for x in input.chunks_exact(d) {
                    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let start = out.len();
                    out.extend(x.iter().map(|&v| (v - m).exp()));
                    let s: f64 = out[start..].iter().sum();
                    for v in &mut out[start..] {
                        *v /= s;
                    }
                }
                Ok(out)
            }
        }
    }

    /// Backward pass. Accumulates parameter gradients into `grads` (one per
    /// parameter tensor of this layer) and returns the gradient with respect
    /// to the layer input.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward(
        &self,
        index: usize,
        input: &[f64],
        output: &[f64],
        grad_out: &[f64],
        n: usize,
        in_shape: &[usize],
        grads: &mut [Tensor],
    ) -> Result<Vec<f64>> {
        match self {
            Layer::Dense { weights, .. } => {
                let (din, dout) = (weights.shape()[0], weights.shape()[1]);
                let w = weights.data();
                let mut gin = vec![0.0; n * din];
                let (gw, gb) = grads.split_at_mut(1);
                let gw = gw[0].data_mut();
                let gb = gb[0].data_mut();
                for b in 0..n {
                    let x = &input[b * din..(b + 1) * din];
                    let g = &grad_out[b * dout..(b + 1) * dout];
                    for (acc, &gv) in gb.iter_mut().zip(g) {
                        *acc += gv;
                    }
                    let gi = &mut gin[b * din..(b + 1) * din];
                    for k in 0..din {
                        let wk = &w[k * dout..(k + 1) * dout];
                        let gwk = &mut gw[k * dout..(k + 1) * dout];
                        let xk = x[k];
                        let mut dot = 0.0;
                        for j in 0..dout {
                            gwk[j] += xk * g[j];
                            dot += wk[j] * g[j];
                        }
                        gi[k] = dot;
                    }
                }
                Ok(gin)
            }
            Layer::Conv2D { kernel, .. } => {
                let win = self.window(index, in_shape)?;
                let cout = kernel.shape()[3];
                let k = kernel.data();
                let plane = win.h * win.w * win.c;
                let mut gin = vec![0.0; n * plane];
                let (gk, gb) = grads.split_at_mut(1);
                let gk = gk[0].data_mut();
                let gb = gb[0].data_mut();
                for b in 0..n {
                    let x = &input[b * plane..(b + 1) * plane];
                    let gx = &mut gin[b * plane..(b + 1) * plane];
                    for oy in 0..win.oh {
                        for ox in 0..win.ow {
                            let base = ((b * win.oh + oy) * win.ow + ox) * cout;
                            let g = &grad_out[base..base + cout];
                            for (acc, &gv) in gb.iter_mut().zip(g) {
                                *acc += gv;
                            }
                            for ky in 0..win.kh {
                                let Some(iy) = win.source(oy, ky, win.pad_top, win.h) else {
                                    continue;
                                };
                                for kx in 0..win.kw {
                                    let Some(ix) = win.source(ox, kx, win.pad_left, win.w) else {
                                        continue;
                                    };
                                    for ci in 0..win.c {
                                        let xi = (iy * win.w + ix) * win.c + ci;
                                        let kb = ((ky * win.kw + kx) * win.c + ci) * cout;
                                        let xv = x[xi];
                                        let mut dot = 0.0;
                                        for co in 0..cout {
                                            gk[kb + co] += xv * g[co];
                                            dot += k[kb + co] * g[co];
                                        }
                                        gx[xi] += dot;
                                    }
                                }
                            }
                        }
                    }
                }
                Ok(gin)
            }
            Layer::LeakyReLU { slope } => Ok(input
                .iter()
                .zip(grad_out)
                .map(|(&x, &g)| if x > 0.0 { g } else { slope * g })
                .collect()),
            Layer::ReLU => Ok(input
                .iter()
                .zip(grad_out)
                .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                .collect()),
            Layer::Flatten => Ok(grad_out.to_vec()),
            Layer::MaxPool2D { .. } => {
                let win = self.window(index, in_shape)?;
                let plane = win.h * win.w * win.c;
                let mut gin = vec![0.0; n * plane];
                let mut gi = grad_out.iter();
                for b in 0..n {
                    let x = &input[b * plane..(b + 1) * plane];
                    for oy in 0..win.oh {
                        for ox in 0..win.ow {
                            for c in 0..win.c {
                                let src = max_pool_argmax(&win, x, oy, ox, c);
                                gin[b * plane + src] += gi.next().copied().unwrap_or(0.0);
                            }
                        }
                    }
                }
                Ok(gin)
            }
            Layer::Softmax => {
                let d = in_shape[0];
                let mut gin = Vec::with_capacity(output.len());
                for (y, g) in output.chunks_exact(d).zip(grad_out.chunks_exact(d)) {
                    let dot: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
                    gin.extend(y.iter().zip(g).map(|(&yv, &gv)| yv * (gv - dot)));
                }
                Ok(gin)
            }
        }
    }
}

/// Flat index (within one sample) of the maximum in a pooling window; ties
/// go to the first position in scan order.
fn max_pool_argmax(win: &Window, x: &[f64], oy: usize, ox: usize, c: usize) -> usize {
    let mut best = usize::MAX;
    let mut best_v = f64::NEG_INFINITY;
    for ky in 0..win.kh {
        for kx in 0..win.kw {
            let iy = oy * win.stride + ky;
            let ix = ox * win.stride + kx;
            let i = (iy * win.w + ix) * win.c + c;
            if best == usize::MAX || x[i] > best_v {
                best = i;
                best_v = x[i];
            }
        }
    }
    best
}
