use rand::Rng;

use super::activation::{Activation, ActivationKind};
use super::conv::{Conv2d, ConvTranspose2d};
use super::dense::Dense;
use super::layer::{Layer, LayerSpec, Mode, Param};
use super::norm::BatchNorm;
use super::pool::MaxPool2d;
use super::reshape::{ChannelMean, Flatten, Reshape};
use super::tensor::Tensor;
use crate::error::Result;

/// Instantiates a layer, drawing fresh weights from `rng`.
pub fn build_layer<R: Rng + ?Sized>(spec: &LayerSpec, rng: &mut R) -> Box<dyn Layer> {
    match *spec {
        LayerSpec::Conv2D {
            in_channels,
            filters,
            kernel,
            stride,
            padding,
        } => Box::new(Conv2d::new(in_channels, filters, kernel, stride, padding, rng)),
        LayerSpec::TConv2D {
            in_channels,
            filters,
            kernel,
            stride,
            padding,
            output_padding,
        } => Box::new(ConvTranspose2d::new(
            in_channels,
            filters,
            kernel,
            stride,
            padding,
            output_padding,
            rng,
        )),
        LayerSpec::MaxPool2D { pool, stride } => Box::new(MaxPool2d::new(pool, stride)),
        LayerSpec::Dense { inputs, outputs } => Box::new(Dense::new(inputs, outputs, rng)),
        LayerSpec::ReLU => Box::new(Activation::relu()),
        LayerSpec::LeakyReLU { slope } => Box::new(Activation::new(ActivationKind::LeakyRelu { slope })),
        LayerSpec::ClippedReLU { lo, hi } => Box::new(Activation::new(ActivationKind::ClippedRelu { lo, hi })),
        LayerSpec::BatchNorm { channels, momentum, eps } => Box::new(BatchNorm::with_params(channels, momentum, eps)),
        LayerSpec::Flatten => Box::new(Flatten::new()),
        LayerSpec::Reshape { ref target } => Box::new(Reshape::new(target.clone())),
        LayerSpec::ChannelMean => Box::new(ChannelMean::new()),
    }
}

/// A chain of layers run in order.
pub struct Sequential {
    layers: Vec<Box<dyn Layer>>,
}

impl Sequential {
    pub fn new(layers: Vec<Box<dyn Layer>>) -> Self {
        Self { layers }
    }

    pub fn from_specs<R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Self {
        Self::new(specs.iter().map(|s| build_layer(s, rng)).collect())
    }

    pub fn layers(&self) -> &[Box<dyn Layer>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Box<dyn Layer>] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec()).collect()
    }

    /// Per-sample shape after every layer, starting from `input`.
    pub fn shape_trace(&self, input: &[usize]) -> Result<Vec<(LayerSpec, Vec<usize>)>> {
        let mut shape = input.to_vec();
        let mut trace = Vec::with_capacity(self.layers.len());
        for spec in self.specs() {
            shape = spec.output_shape(&shape)?;
            trace.push((spec, shape.clone()));
        }
        Ok(trace)
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut iter = self.layers.iter_mut();
        let Some(first) = iter.next() else {
            return Ok(x.clone());
        };
        let mut h = first.forward(x, mode)?;
        for layer in iter {
            h = layer.forward(&h, mode)?;
        }
        Ok(h)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mut g = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }
}

impl std::fmt::Debug for Sequential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.specs()).finish()
    }
}
