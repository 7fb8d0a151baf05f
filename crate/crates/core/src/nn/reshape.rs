use super::layer::{batch_shape, check_input, Layer, LayerSpec, Mode};
use super::tensor::{expect_shape, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Default)]
pub struct Flatten {
    cache: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for Flatten {
    fn spec(&self) -> LayerSpec {
        LayerSpec::Flatten
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let out = check_input("flatten", &self.spec(), x)?;
        if mode == Mode::Train {
            self.cache = Some(x.shape().to_vec());
        }
        x.clone().reshape(batch_shape(x.batch(), &out))
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let shape = self.cache.take().ok_or(Error::NoForwardCache("flatten"))?;
        grad.clone().reshape(shape)
    }
}

#[derive(Debug)]
pub struct Reshape {
    pub target: Vec<usize>,
    cache: Option<Vec<usize>>,
}

impl Reshape {
    pub fn new(target: Vec<usize>) -> Self {
        Self { target, cache: None }
    }
}

impl Layer for Reshape {
    fn spec(&self) -> LayerSpec {
        LayerSpec::Reshape {
            target: self.target.clone(),
        }
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let out = check_input("reshape", &self.spec(), x)?;
        if mode == Mode::Train {
            self.cache = Some(x.shape().to_vec());
        }
        x.clone().reshape(batch_shape(x.batch(), &out))
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let shape = self.cache.take().ok_or(Error::NoForwardCache("reshape"))?;
        grad.clone().reshape(shape)
    }
}

/// Averages all channels into one; a 1x1 convolution with fixed weights `1/C`.
#[derive(Debug, Default)]
pub struct ChannelMean {
    cache: Option<Vec<usize>>,
}

impl ChannelMean {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for ChannelMean {
    fn spec(&self) -> LayerSpec {
        LayerSpec::ChannelMean
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let out = check_input("channel mean", &self.spec(), x)?;
        let c = x.shape()[3];
        let y = x.data().chunks_exact(c).map(|px| px.iter().sum::<f64>() / c as f64).collect();
        if mode == Mode::Train {
            self.cache = Some(x.shape().to_vec());
        }
        Tensor::new(batch_shape(x.batch(), &out), y)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let shape = self.cache.take().ok_or(Error::NoForwardCache("channel mean"))?;
        let c = shape[3];
        expect_shape("channel mean backward", &[shape[0], shape[1], shape[2], 1], grad.shape())?;
        let scale = 1.0 / c as f64;
        let dx = grad.data().iter().flat_map(|&g| std::iter::repeat_n(g * scale, c)).collect();
        Tensor::new(shape, dx)
    }
}
