use rand::Rng;

use super::gemm::gemm;
use super::layer::{check_input, Layer, LayerSpec, Mode, Param};
use super::tensor::{expect_shape, Tensor};
use crate::error::{Error, Result};

/// Fully connected layer, `y = x W + b` with `W` stored `inputs x outputs`.
#[derive(Debug)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Param,
    pub bias: Param,
    cache: Option<Tensor>,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            inputs,
            outputs,
            weight: Param::glorot_uniform(inputs * outputs, inputs, outputs, rng),
            bias: Param::zeros(outputs),
            cache: None,
        }
    }
}

impl Layer for Dense {
    fn spec(&self) -> LayerSpec {
        LayerSpec::Dense {
            inputs: self.inputs,
            outputs: self.outputs,
        }
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        check_input("dense", &self.spec(), x)?;
        let n = x.batch();
        let mut y = vec![0.0; n * self.outputs];
        for row in y.chunks_exact_mut(self.outputs) {
            row.copy_from_slice(&self.bias.value);
        }
        gemm(n, self.inputs, self.outputs, x.data(), false, &self.weight.value, false, 1.0, &mut y);
        self.cache = (mode == Mode::Train).then(|| x.clone());
        Tensor::new(vec![n, self.outputs], y)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let x = self.cache.take().ok_or(Error::NoForwardCache("dense"))?;
        let n = x.batch();
        expect_shape("dense backward", &[n, self.outputs], grad.shape())?;
        gemm(self.inputs, n, self.outputs, x.data(), true, grad.data(), false, 1.0, &mut self.weight.grad);
        for row in grad.data().chunks_exact(self.outputs) {
            for (g, d) in self.bias.grad.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = vec![0.0; n * self.inputs];
        gemm(n, self.outputs, self.inputs, grad.data(), false, &self.weight.value, true, 0.0, &mut dx);
        Tensor::new(vec![n, self.inputs], dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn identity_weights() {
        let mut d = Dense::new(3, 3, &mut rng::stream(0, &[]));
        d.weight.value = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let x = Tensor::new(vec![2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap();
        assert_eq!(d.forward(&x, Mode::Eval).unwrap(), x);
    }

    #[test]
    fn head_shapes() {
        let mut r = rng::stream(0, &[]);
        let x = Tensor::zeros(vec![4, 144]);
        assert_eq!(Dense::new(144, 10, &mut r).forward(&x, Mode::Eval).unwrap().shape(), &[4, 10]);
        let z = Tensor::zeros(vec![4, 10]);
        assert_eq!(Dense::new(10, 144, &mut r).forward(&z, Mode::Eval).unwrap().shape(), &[4, 144]);
        assert!(Dense::new(10, 144, &mut r).forward(&x, Mode::Eval).is_err());
    }
}
