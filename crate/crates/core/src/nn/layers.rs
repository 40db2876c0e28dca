//! Layer kinds with exact reverse-mode gradients.

use serde::{Deserialize, Serialize};

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Architecture descriptor of one layer. Per-sample shapes are `[d]` for
/// vectors and `[h, w, c]` for images.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { inputs: usize, outputs: usize },
    Conv2d { in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize },
    ConvTranspose2d { in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize },
    LeakyRelu { slope: f64 },
    Relu,
    MeanPool2,
    Reshape { shape: Vec<usize> },
    Flatten,
    ChannelSoftmax,
}

impl LayerSpec {
    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = |what: &str| Err(Error::Dimension(format!("{what}: input shape {input:?} for {self:?}")));
        match self {
            LayerSpec::Dense { inputs, outputs } => {
                if input != [*inputs] {
                    return bad("dense expects a vector of its input width");
                }
                Ok(vec![*outputs])
            }
            LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, padding } => {
                if input.len() != 3 || input[2] != *in_channels || *stride == 0 {
                    return bad("conv expects an image with matching channels");
                }
                let (h, w) = (input[0] + 2 * padding, input[1] + 2 * padding);
                if h < *kernel || w < *kernel {
                    return bad("kernel larger than padded input");
                }
                Ok(vec![(h - kernel) / stride + 1, (w - kernel) / stride + 1, *out_channels])
            }
            LayerSpec::ConvTranspose2d { in_channels, out_channels, kernel, stride, padding } => {
                if input.len() != 3 || input[2] != *in_channels || *stride == 0 {
                    return bad("transposed conv expects an image with matching channels");
                }
                let full = |n: usize| (n - 1) * stride + kernel;
                if full(input[0]) <= 2 * padding || full(input[1]) <= 2 * padding {
                    return bad("padding removes the whole output");
                }
                Ok(vec![full(input[0]) - 2 * padding, full(input[1]) - 2 * padding, *out_channels])
            }
            LayerSpec::LeakyRelu { .. } | LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::MeanPool2 => {
                if input.len() != 3 || input[0] % 2 != 0 || input[1] % 2 != 0 {
                    return bad("mean pool expects an image with even sides");
                }
                Ok(vec![input[0] / 2, input[1] / 2, input[2]])
            }
            LayerSpec::Reshape { shape } => {
                if shape.iter().product::<usize>() != input.iter().product::<usize>() {
                    return bad("reshape changes the element count");
                }
                Ok(shape.clone())
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::ChannelSoftmax => Ok(input.to_vec()),
        }
    }

    /// Shapes of the trainable parameter tensors (weights then bias).
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => vec![vec![inputs, outputs], vec![outputs]],
            LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
                vec![vec![kernel, kernel, in_channels, out_channels], vec![out_channels]]
            }
            LayerSpec::ConvTranspose2d { in_channels, out_channels, kernel, .. } => {
                vec![vec![in_channels, kernel, kernel, out_channels], vec![out_channels]]
            }
            _ => Vec::new(),
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, .. } => inputs,
            LayerSpec::Conv2d { in_channels, kernel, .. } => kernel * kernel * in_channels,
            LayerSpec::ConvTranspose2d { in_channels, kernel, stride, .. } => {
                (kernel * kernel * in_channels / (stride * stride)).max(1)
            }
            _ => 1,
        }
    }
}

/// Values a layer keeps from its forward pass for the backward pass.
#[derive(Clone, Debug)]
pub(crate) enum Cache {
    /// Layer input (dense, transposed conv, activations).
    Input(Tensor),
    /// im2col matrix and input shape (conv).
    Columns(Vec<f64>, Vec<usize>),
    /// Layer output (softmax).
    Output(Tensor),
    /// Input shape only (pooling, reshapes).
    Shape(Vec<usize>),
}

#[derive(Clone, Debug)]
pub struct Layer {
    pub(crate) spec: LayerSpec,
    pub(crate) params: Vec<Vec<f64>>,
    pub(crate) grads: Vec<Vec<f64>>,
}

/// Gradients are scratch space and do not take part in equality.
impl PartialEq for Layer {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.params == other.params
    }
}

impl Layer {
    /// Weights uniform in `+-sqrt(6 / fan_in)`, zero bias.
    pub fn new(spec: LayerSpec, rng: &mut Rng) -> Self {
        let shapes = spec.param_shapes();
        let bound = (6.0 / spec.fan_in() as f64).sqrt();
        let params: Vec<Vec<f64>> = shapes
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let n = s.iter().product();
                if i == 0 {
                    (0..n).map(|_| rng.uniform_in(-bound, bound)).collect()
                } else {
                    vec![0.0; n]
                }
            })
            .collect();
        let grads = params.iter().map(|p| vec![0.0; p.len()]).collect();
        Self { spec, params, grads }
    }

    pub(crate) fn with_params(spec: LayerSpec, params: Vec<Vec<f64>>) -> Result<Self> {
        let shapes = spec.param_shapes();
        if shapes.len() != params.len()
            || shapes.iter().zip(&params).any(|(s, p)| s.iter().product::<usize>() != p.len())
        {
            return Err(Error::Format(format!("parameter sizes do not match {spec:?}")));
        }
        let grads = params.iter().map(|p| vec![0.0; p.len()]).collect();
        Ok(Self { spec, params, grads })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Vec<f64>] {
        &self.params
    }

    pub(crate) fn forward(&self, x: &Tensor) -> Result<(Tensor, Cache)> {
        let n = x.batch();
        let out_sample = self.spec.output_shape(x.sample_shape())?;
        let mut out_shape = vec![n];
        out_shape.extend_from_slice(&out_sample);
        match self.spec {
            LayerSpec::Dense { inputs, outputs } => {
                let mut y = vec![0.0; n * outputs];
                for row in y.chunks_mut(outputs) {
                    row.copy_from_slice(&self.params[1]);
                }
                gemm(n, inputs, outputs, x.data(), false, &self.params[0], false, &mut y, true);
                Ok((Tensor::from_vec(&out_shape, y)?, Cache::Input(x.clone())))
            }
            LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, padding } => {
                let g = Geometry::new(x.sample_shape(), &out_sample, kernel, stride, padding);
                let cols = im2col(x.data(), n, &g, in_channels);
                let rows = n * g.gh * g.gw;
                let kk = kernel * kernel * in_channels;
                let mut y = vec![0.0; rows * out_channels];
                for row in y.chunks_mut(out_channels) {
                    row.copy_from_slice(&self.params[1]);
                }
                gemm(rows, kk, out_channels, &cols, false, &self.params[0], false, &mut y, true);
                Ok((Tensor::from_vec(&out_shape, y)?, Cache::Columns(cols, x.shape().to_vec())))
            }
            LayerSpec::ConvTranspose2d { in_channels, out_channels, kernel, stride, padding } => {
                let g = Geometry::new(&out_sample, x.sample_shape(), kernel, stride, padding);
                let rows = n * g.gh * g.gw;
                let kk = kernel * kernel * out_channels;
                let mut cols = vec![0.0; rows * kk];
                gemm(rows, in_channels, kk, x.data(), false, &self.params[0], false, &mut cols, false);
                let mut y = vec![0.0; out_shape.iter().product()];
                col2im(&cols, &mut y, n, &g, out_channels);
                for px in y.chunks_mut(out_channels) {
                    for (v, b) in px.iter_mut().zip(&self.params[1]) {
                        *v += b;
                    }
                }
                Ok((Tensor::from_vec(&out_shape, y)?, Cache::Input(x.clone())))
            }
            LayerSpec::LeakyRelu { slope } => {
                let y = x.data().iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect();
                Ok((Tensor::from_vec(&out_shape, y)?, Cache::Input(x.clone())))
            }
            LayerSpec::Relu => {
                let y = x.data().iter().map(|&v| v.max(0.0)).collect();
                Ok((Tensor::from_vec(&out_shape, y)?, Cache::Input(x.clone())))
            }
            LayerSpec::MeanPool2 => {
                let s = x.sample_shape();
                let (h, w, c) = (s[0], s[1], s[2]);
                let (oh, ow) = (h / 2, w / 2);
                let mut y = vec![0.0; n * oh * ow * c];
                let xd = x.data();
                for b in 0..n {
                    for i in 0..oh {
                        for j in 0..ow {
                            let o = ((b * oh + i) * ow + j) * c;
                            for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                                let src = ((b * h + 2 * i + di) * w + 2 * j + dj) * c;
                                for ch in 0..c {
                                    y[o + ch] += 0.25 * xd[src + ch];
                                }
                            }
                        }
                    }
                }
                Ok((Tensor::from_vec(&out_shape, y)?, Cache::Shape(x.shape().to_vec())))
            }
            LayerSpec::Reshape { .. } | LayerSpec::Flatten => {
                Ok((x.clone().reshaped(&out_shape)?, Cache::Shape(x.shape().to_vec())))
            }
            LayerSpec::ChannelSoftmax => {
                let c = *x.shape().last().unwrap();
                let mut y = x.data().to_vec();
                for px in y.chunks_mut(c) {
                    let mx = px.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0;
                    for v in px.iter_mut() {
                        *v = (*v - mx).exp();
                        sum += *v;
                    }
                    for v in px.iter_mut() {
                        *v /= sum;
                    }
                }
                let y = Tensor::from_vec(&out_shape, y)?;
                Ok((y.clone(), Cache::Output(y)))
            }
        }
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub(crate) fn backward(&mut self, cache: Cache, dy: &Tensor) -> Result<Tensor> {
        let n = dy.batch();
        match (&self.spec, cache) {
            (&LayerSpec::Dense { inputs, outputs }, Cache::Input(x)) => {
                gemm(inputs, n, outputs, x.data(), true, dy.data(), false, &mut self.grads[0], true);
                for row in dy.data().chunks(outputs) {
                    for (g, v) in self.grads[1].iter_mut().zip(row) {
                        *g += v;
                    }
                }
                let mut dx = vec![0.0; n * inputs];
                gemm(n, outputs, inputs, dy.data(), false, &self.params[0], true, &mut dx, false);
                Tensor::from_vec(x.shape(), dx)
            }
            (&LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, padding }, Cache::Columns(cols, xs)) => {
                let g = Geometry::new(&xs[1..], dy.sample_shape(), kernel, stride, padding);
                let rows = n * g.gh * g.gw;
                let kk = kernel * kernel * in_channels;
                gemm(kk, rows, out_channels, &cols, true, dy.data(), false, &mut self.grads[0], true);
                for row in dy.data().chunks(out_channels) {
                    for (gb, v) in self.grads[1].iter_mut().zip(row) {
                        *gb += v;
                    }
                }
                let mut dcols = vec![0.0; rows * kk];
                gemm(rows, out_channels, kk, dy.data(), false, &self.params[0], true, &mut dcols, false);
                let mut dx = vec![0.0; xs.iter().product()];
                col2im(&dcols, &mut dx, n, &g, in_channels);
                Tensor::from_vec(&xs, dx)
            }
            (&LayerSpec::ConvTranspose2d { in_channels, out_channels, kernel, stride, padding }, Cache::Input(x)) => {
                let g = Geometry::new(dy.sample_shape(), x.sample_shape(), kernel, stride, padding);
                let rows = n * g.gh * g.gw;
                let kk = kernel * kernel * out_channels;
                let dcols = im2col(dy.data(), n, &g, out_channels);
                gemm(in_channels, rows, kk, x.data(), true, &dcols, false, &mut self.grads[0], true);
                for px in dy.data().chunks(out_channels) {
                    for (gb, v) in self.grads[1].iter_mut().zip(px) {
                        *gb += v;
                    }
                }
                let mut dx = vec![0.0; x.len()];
                gemm(rows, kk, in_channels, &dcols, false, &self.params[0], true, &mut dx, false);
                Tensor::from_vec(x.shape(), dx)
            }
            (&LayerSpec::LeakyRelu { slope }, Cache::Input(x)) => {
                let dx = x
                    .data()
                    .iter()
                    .zip(dy.data())
                    .map(|(&v, &d)| if v > 0.0 { d } else { slope * d })
                    .collect();
                Tensor::from_vec(x.shape(), dx)
            }
            (LayerSpec::Relu, Cache::Input(x)) => {
                let dx = x
                    .data()
                    .iter()
                    .zip(dy.data())
                    .map(|(&v, &d)| if v > 0.0 { d } else { 0.0 })
                    .collect();
                Tensor::from_vec(x.shape(), dx)
            }
            (LayerSpec::MeanPool2, Cache::Shape(xs)) => {
                let (h, w, c) = (xs[1], xs[2], xs[3]);
                let (oh, ow) = (h / 2, w / 2);
                let mut dx = vec![0.0; xs.iter().product()];
                let d = dy.data();
                for b in 0..n {
                    for i in 0..oh {
                        for j in 0..ow {
                            let o = ((b * oh + i) * ow + j) * c;
                            for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                                let dst = ((b * h + 2 * i + di) * w + 2 * j + dj) * c;
                                for ch in 0..c {
                                    dx[dst + ch] = 0.25 * d[o + ch];
                                }
                            }
                        }
                    }
                }
                Tensor::from_vec(&xs, dx)
            }
            (LayerSpec::Reshape { .. } | LayerSpec::Flatten, Cache::Shape(xs)) => dy.clone().reshaped(&xs),
            (LayerSpec::ChannelSoftmax, Cache::Output(y)) => {
                let c = *y.shape().last().unwrap();
                let mut dx = vec![0.0; y.len()];
                for ((o, yy), dd) in dx.chunks_mut(c).zip(y.data().chunks(c)).zip(dy.data().chunks(c)) {
                    let dot: f64 = yy.iter().zip(dd).map(|(a, b)| a * b).sum();
                    for k in 0..c {
                        o[k] = yy[k] * (dd[k] - dot);
                    }
                }
                Tensor::from_vec(y.shape(), dx)
            }
            (spec, _) => Err(Error::State(format!("cache does not belong to {spec:?}"))),
        }
    }
}

/// Sliding-window geometry: an image of `h x w` read at a `gh x gw` grid of
/// window origins `g * stride - padding`.
struct Geometry {
    h: usize,
    w: usize,
    gh: usize,
    gw: usize,
    k: usize,
    s: usize,
    p: usize,
}

impl Geometry {
    fn new(image: &[usize], grid: &[usize], k: usize, s: usize, p: usize) -> Self {
        Self {
            h: image[0],
            w: image[1],
            gh: grid[0],
            gw: grid[1],
            k,
            s,
            p,
        }
    }

    /// Image coordinate of window `g`, tap `t`, if inside the image.
    #[inline]
    fn coord(&self, g: usize, t: usize, limit: usize) -> Option<usize> {
        let v = (g * self.s + t).checked_sub(self.p)?;
        (v < limit).then_some(v)
    }
}

/// `cols[(b, gy, gx), (ky, kx, c)] = img[b, gy*s + ky - p, gx*s + kx - p, c]`.
fn im2col(img: &[f64], n: usize, g: &Geometry, c: usize) -> Vec<f64> {
    let kk = g.k * g.k * c;
    let mut cols = vec![0.0; n * g.gh * g.gw * kk];
    for b in 0..n {
        for gy in 0..g.gh {
            for gx in 0..g.gw {
                let row = ((b * g.gh + gy) * g.gw + gx) * kk;
                for ky in 0..g.k {
                    let Some(y) = g.coord(gy, ky, g.h) else { continue };
                    for kx in 0..g.k {
                        let Some(x) = g.coord(gx, kx, g.w) else { continue };
                        let src = ((b * g.h + y) * g.w + x) * c;
                        let dst = row + (ky * g.k + kx) * c;
                        cols[dst..dst + c].copy_from_slice(&img[src..src + c]);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-adds columns back into the image.
fn col2im(cols: &[f64], img: &mut [f64], n: usize, g: &Geometry, c: usize) {
    let kk = g.k * g.k * c;
    for b in 0..n {
        for gy in 0..g.gh {
            for gx in 0..g.gw {
                let row = ((b * g.gh + gy) * g.gw + gx) * kk;
                for ky in 0..g.k {
                    let Some(y) = g.coord(gy, ky, g.h) else { continue };
                    for kx in 0..g.k {
                        let Some(x) = g.coord(gx, kx, g.w) else { continue };
                        let dst = ((b * g.h + y) * g.w + x) * c;
                        let src = row + (ky * g.k + kx) * c;
                        for (d, s) in img[dst..dst + c].iter_mut().zip(&cols[src..src + c]) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(cin: usize, cout: usize, k: usize, s: usize, p: usize) -> LayerSpec {
        LayerSpec::Conv2d { in_channels: cin, out_channels: cout, kernel: k, stride: s, padding: p }
    }

    #[test]
    fn identity_kernel_copies_input() {
        let layer = Layer::with_params(conv(1, 1, 1, 1, 0), vec![vec![1.0], vec![0.0]]).unwrap();
        let x = Tensor::from_vec(&[1, 2, 3, 1], (0..6).map(f64::from).collect()).unwrap();
        assert_eq!(layer.forward(&x).unwrap().0.data(), x.data());
    }

    #[test]
    fn ones_kernel_sums_windows() {
        let layer = Layer::with_params(conv(1, 1, 2, 1, 0), vec![vec![1.0; 4], vec![0.0]]).unwrap();
        let x = Tensor::from_vec(&[1, 3, 3, 1], vec![1.0; 9]).unwrap();
        let (y, _) = layer.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2, 1]);
        assert_eq!(y.data(), &[4.0; 4]);
    }

    #[test]
    fn conv_matches_nested_loops() {
        let mut rng = Rng::new(3);
        let (cin, cout, k, s, p) = (2, 3, 3, 2, 1);
        let layer = Layer::new(conv(cin, cout, k, s, p), &mut rng);
        let (h, w) = (7, 6);
        let x = Tensor::from_vec(&[2, h, w, cin], (0..2 * h * w * cin).map(|_| rng.normal()).collect()).unwrap();
        let (y, _) = layer.forward(&x).unwrap();
        let ys = y.shape().to_vec();
        let wt = &layer.params[0];
        for b in 0..2 {
            for i in 0..ys[1] {
                for j in 0..ys[2] {
                    for co in 0..cout {
                        let mut acc = layer.params[1][co];
                        for ky in 0..k {
                            for kx in 0..k {
                                for ci in 0..cin {
                                    let yy = (i * s + ky) as isize - p as isize;
                                    let xx = (j * s + kx) as isize - p as isize;
                                    if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                                        continue;
                                    }
                                    let xv = x.data()[((b * h + yy as usize) * w + xx as usize) * cin + ci];
                                    acc += wt[((ky * k + kx) * cin + ci) * cout + co] * xv;
                                }
                            }
                        }
                        let got = y.data()[((b * ys[1] + i) * ys[2] + j) * cout + co];
                        assert!((got - acc).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn transposed_conv_doubles_resolution() {
        let spec = LayerSpec::ConvTranspose2d { in_channels: 4, out_channels: 3, kernel: 4, stride: 2, padding: 1 };
        assert_eq!(spec.output_shape(&[8, 8, 4]).unwrap(), vec![16, 16, 3]);
        let c = conv(3, 8, 4, 2, 1);
        assert_eq!(c.output_shape(&[32, 32, 3]).unwrap(), vec![16, 16, 8]);
        assert!(c.output_shape(&[32, 32, 2]).is_err());
    }

    #[test]
    fn softmax_sums_to_one() {
        let layer = Layer::with_params(LayerSpec::ChannelSoftmax, vec![]).unwrap();
        let mut rng = Rng::new(1);
        let x = Tensor::from_vec(&[2, 4, 4, 3], (0..96).map(|_| 30.0 * rng.normal()).collect()).unwrap();
        let (y, _) = layer.forward(&x).unwrap();
        for px in y.data().chunks(3) {
            assert!((px.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
