use serde::{Deserialize, Serialize};

use super::layers::{Cache, Layer, LayerSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::micro::{CHANNELS, DEFAULT_SIZE};
use crate::rng::Rng;

/// Ordered layer stack with cached activations for one backward pass.
#[derive(Clone, Debug)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    caches: Vec<Option<Cache>>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.input_shape == other.input_shape && self.layers == other.layers
    }
}

/// Serializable architecture: per-sample input shape and layer specs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// Per-sample output shape, checking every layer boundary.
    pub fn output_shape(&self) -> Result<Vec<usize>> {
        let mut shape = self.input_shape.clone();
        for spec in &self.layers {
            shape = spec.output_shape(&shape)?;
        }
        Ok(shape)
    }

    /// Generator: dense(latent -> 8x8xw1), leaky ReLU, transposed conv to
    /// 16x16xw2, leaky ReLU, transposed conv to 32x32x3, channel softmax.
    pub fn generator(latent: usize, w1: usize, w2: usize) -> Self {
        let s = DEFAULT_SIZE / 4;
        Self {
            input_shape: vec![latent],
            layers: vec![
                LayerSpec::Dense { inputs: latent, outputs: s * s * w1 },
                LayerSpec::Reshape { shape: vec![s, s, w1] },
                LayerSpec::LeakyRelu { slope: 0.2 },
                LayerSpec::ConvTranspose2d { in_channels: w1, out_channels: w2, kernel: 4, stride: 2, padding: 1 },
                LayerSpec::LeakyRelu { slope: 0.2 },
                LayerSpec::ConvTranspose2d { in_channels: w2, out_channels: CHANNELS, kernel: 4, stride: 2, padding: 1 },
                LayerSpec::ChannelSoftmax,
            ],
        }
    }

    /// Wasserstein critic: two stride-2 convolutions with leaky ReLU and a
    /// linear output.
    pub fn critic(w1: usize, w2: usize) -> Self {
        let s = DEFAULT_SIZE / 4;
        Self {
            input_shape: vec![DEFAULT_SIZE, DEFAULT_SIZE, CHANNELS],
            layers: vec![
                LayerSpec::Conv2d { in_channels: CHANNELS, out_channels: w1, kernel: 4, stride: 2, padding: 1 },
                LayerSpec::LeakyRelu { slope: 0.2 },
                LayerSpec::Conv2d { in_channels: w1, out_channels: w2, kernel: 4, stride: 2, padding: 1 },
                LayerSpec::LeakyRelu { slope: 0.2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { inputs: s * s * w2, outputs: 1 },
            ],
        }
    }

    /// Property regressor: two (3x3 conv, ReLU, 2x2 mean pool) stages, a
    /// hidden dense layer and two outputs.
    pub fn regressor(w1: usize, w2: usize, hidden: usize) -> Self {
        let s = DEFAULT_SIZE / 4;
        Self {
            input_shape: vec![DEFAULT_SIZE, DEFAULT_SIZE, CHANNELS],
            layers: vec![
                LayerSpec::Conv2d { in_channels: CHANNELS, out_channels: w1, kernel: 3, stride: 1, padding: 1 },
                LayerSpec::Relu,
                LayerSpec::MeanPool2,
                LayerSpec::Conv2d { in_channels: w1, out_channels: w2, kernel: 3, stride: 1, padding: 1 },
                LayerSpec::Relu,
                LayerSpec::MeanPool2,
                LayerSpec::Flatten,
                LayerSpec::Dense { inputs: s * s * w2, outputs: hidden },
                LayerSpec::Relu,
                LayerSpec::Dense { inputs: hidden, outputs: 2 },
            ],
        }
    }
}

impl Network {
    pub fn new(arch: &Architecture, rng: &mut Rng) -> Result<Self> {
        arch.output_shape()?;
        let layers = arch.layers.iter().map(|s| Layer::new(s.clone(), rng)).collect();
        Ok(Self::from_layers(arch.input_shape.clone(), layers))
    }

    pub(crate) fn from_parts(arch: &Architecture, params: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        arch.output_shape()?;
        if params.len() != arch.layers.len() {
            return Err(Error::Format("parameter groups do not match the layer count".into()));
        }
        let layers = arch
            .layers
            .iter()
            .zip(params)
            .map(|(s, p)| Layer::with_params(s.clone(), p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_layers(arch.input_shape.clone(), layers))
    }

    fn from_layers(input_shape: Vec<usize>, layers: Vec<Layer>) -> Self {
        let caches = vec![None; layers.len()];
        Self {
            input_shape,
            layers,
            caches,
        }
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_shape: self.input_shape.clone(),
            layers: self.layers.iter().map(|l| l.spec.clone()).collect(),
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().flat_map(|l| &l.params).map(Vec::len).sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.sample_shape() != self.input_shape.as_slice() {
            return Err(Error::Dimension(format!(
                "network expects samples of shape {:?}, got {:?}",
                self.input_shape,
                x.sample_shape()
            )));
        }
        Ok(())
    }

    /// Forward pass without caching; usable on shared references.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(&h)?.0;
        }
        Ok(h)
    }

    /// Forward pass keeping what the next [`Network::backward`] needs.
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = x.clone();
        for (layer, cache) in self.layers.iter().zip(self.caches.iter_mut()) {
            let (y, c) = layer.forward(&h)?;
            *cache = Some(c);
            h = y;
        }
        if !h.all_finite() {
            return Err(Error::Divergence {
                step: 0,
                term: "network output".into(),
            });
        }
        Ok(h)
    }

    /// Accumulates parameter gradients of `sum(dy * output)` and returns the
    /// input gradient. Consumes the forward cache.
    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let mut g = dy.clone();
        for (layer, cache) in self.layers.iter_mut().zip(self.caches.iter_mut()).rev() {
            let c = cache
                .take()
                .ok_or_else(|| Error::Usage("backward called without a cached forward pass".into()))?;
            g = layer.backward(c, &g)?;
        }
        Ok(g)
    }

    pub fn zero_grad(&mut self) {
        for l in &mut self.layers {
            for g in &mut l.grads {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    /// Parameter and gradient slices in layer order.
    pub fn params_and_grads(&mut self) -> Vec<(&mut [f64], &[f64])> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params.iter_mut().zip(l.grads.iter()))
            .map(|(p, g)| (p.as_mut_slice(), g.as_slice()))
            .collect()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.params.iter()).map(Vec::as_slice).collect()
    }

    pub fn grads(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.grads.iter()).map(Vec::as_slice).collect()
    }

    /// Mutable access to one parameter value, addressed by flat index in
    /// [`Network::params`] order.
    pub fn param_mut(&mut self, group: usize, index: usize) -> &mut f64 {
        let mut k = group;
        for l in &mut self.layers {
            if k < l.params.len() {
                return &mut l.params[k][index];
            }
            k -= l.params.len();
        }
        panic!("parameter group {group} out of range");
    }

    /// Clamp every parameter to `[-bound, bound]`.
    pub fn clip(&mut self, bound: f64) {
        for l in &mut self.layers {
            for p in &mut l.params {
                for v in p.iter_mut() {
                    *v = v.clamp(-bound, bound);
                }
            }
        }
    }
}
