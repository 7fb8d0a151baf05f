use super::layer::{Layer, LayerSpec, Mode};
use super::tensor::{expect_shape, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ActivationKind {
    Relu,
    LeakyRelu { slope: f64 },
    ClippedRelu { lo: f64, hi: f64 },
}

impl ActivationKind {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::LeakyRelu { slope } => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            ActivationKind::ClippedRelu { lo, hi } => x.max(lo).min(hi),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            ActivationKind::Relu => (x > 0.0) as u8 as f64,
            ActivationKind::LeakyRelu { slope } => {
                if x >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            ActivationKind::ClippedRelu { lo, hi } => (x > lo && x < hi) as u8 as f64,
        }
    }
}

#[derive(Debug)]
pub struct Activation {
    pub kind: ActivationKind,
    cache: Option<Tensor>,
}

impl Activation {
    pub fn new(kind: ActivationKind) -> Self {
        Self { kind, cache: None }
    }

    pub fn relu() -> Self {
        Self::new(ActivationKind::Relu)
    }

    pub fn leaky(slope: f64) -> Self {
        Self::new(ActivationKind::LeakyRelu { slope })
    }

    /// Clamp to `[0, 1]`.
    pub fn clipped() -> Self {
        Self::new(ActivationKind::ClippedRelu { lo: 0.0, hi: 1.0 })
    }
}

impl Layer for Activation {
    fn spec(&self) -> LayerSpec {
        match self.kind {
            ActivationKind::Relu => LayerSpec::ReLU,
            ActivationKind::LeakyRelu { slope } => LayerSpec::LeakyReLU { slope },
            ActivationKind::ClippedRelu { lo, hi } => LayerSpec::ClippedReLU { lo, hi },
        }
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let kind = self.kind;
        self.cache = (mode == Mode::Train).then(|| x.clone());
        Ok(x.map(|v| kind.apply(v)))
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let x = self.cache.take().ok_or(Error::NoForwardCache("activation"))?;
        expect_shape("activation backward", x.shape(), grad.shape())?;
        let kind = self.kind;
        let data = x.data().iter().zip(grad.data()).map(|(&v, &g)| g * kind.derivative(v)).collect();
        Tensor::new(x.shape().to_vec(), data)
    }
}
