use super::layer::{batch_shape, check_input, Layer, LayerSpec, Mode};
use super::tensor::{expect_shape, Tensor};
use crate::error::{Error, Result};

#[derive(Debug)]
pub struct MaxPool2d {
    pub pool: usize,
    pub stride: usize,
    /// Input shape and the flat input index chosen for every output.
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new(pool: usize, stride: usize) -> Self {
        Self {
            pool,
            stride,
            cache: None,
        }
    }
}

impl Layer for MaxPool2d {
    fn spec(&self) -> LayerSpec {
        LayerSpec::MaxPool2D {
            pool: self.pool,
            stride: self.stride,
        }
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let out = check_input("maxpool2d", &self.spec(), x)?;
        let (n, h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (oh, ow) = (out[0], out[1]);
        let data = x.data();
        let mut y = Vec::with_capacity(n * oh * ow * c);
        let mut argmax = Vec::with_capacity(n * oh * ow * c);
        for b in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for ch in 0..c {
                        let mut best = usize::MAX;
                        let mut best_val = f64::NEG_INFINITY;
                        for py in 0..self.pool {
                            for px in 0..self.pool {
                                let idx = ((b * h + oy * self.stride + py) * w + ox * self.stride + px) * c + ch;
                                // first maximum wins ties
                                if best == usize::MAX || data[idx] > best_val {
                                    best = idx;
                                    best_val = data[idx];
                                }
                            }
                        }
                        y.push(best_val);
                        argmax.push(best);
                    }
                }
            }
        }
        if mode == Mode::Train {
            self.cache = Some((x.shape().to_vec(), argmax));
        }
        Tensor::new(batch_shape(n, &out), y)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let (in_shape, argmax) = self.cache.take().ok_or(Error::NoForwardCache("maxpool2d"))?;
        let out = self.spec().output_shape(&in_shape[1..])?;
        expect_shape("maxpool2d backward", &batch_shape(in_shape[0], &out), grad.shape())?;
        let mut dx = Tensor::zeros(in_shape);
        let d = dx.data_mut();
        for (&idx, g) in argmax.iter().zip(grad.data()) {
            d[idx] += g;
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_window_maxima() {
        let x = Tensor::new(vec![1, 4, 4, 1], (1..=16).map(|v| v as f64).collect()).unwrap();
        let y = MaxPool2d::new(2, 2).forward(&x, Mode::Eval).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2, 1]);
        assert_eq!(y.data(), &[6.0, 8.0, 14.0, 16.0]);
    }

    #[test]
    fn odd_input_drops_last_row() {
        let x = Tensor::new(vec![1, 17, 17, 16], vec![0.25; 17 * 17 * 16]).unwrap();
        let y = MaxPool2d::new(2, 2).forward(&x, Mode::Eval).unwrap();
        assert_eq!(y.shape(), &[1, 8, 8, 16]);
        assert!(y.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn gradient_routes_to_argmax() {
        let x = Tensor::new(vec![1, 2, 2, 1], vec![1.0, 5.0, 3.0, 2.0]).unwrap();
        let mut p = MaxPool2d::new(2, 2);
        p.forward(&x, Mode::Train).unwrap();
        let dx = p.backward(&Tensor::new(vec![1, 1, 1, 1], vec![7.0]).unwrap()).unwrap();
        assert_eq!(dx.data(), &[0.0, 7.0, 0.0, 0.0]);
        assert!(p.backward(&Tensor::new(vec![1, 1, 1, 1], vec![7.0]).unwrap()).is_err());
    }
}
