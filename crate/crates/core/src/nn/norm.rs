use super::layer::{check_input, round_f32, Layer, LayerSpec, Mode, Param};
use super::tensor::{expect_shape, Tensor};
use crate::error::{Error, Result};

/// Per-channel batch normalisation over every axis but the last.
///
/// Training mode normalises with the batch mean and biased variance and
/// folds them into running estimates (unbiased variance); evaluation mode
/// uses the running estimates.
#[derive(Debug)]
pub struct BatchNorm {
    pub channels: usize,
    pub momentum: f64,
    pub eps: f64,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    cache: Option<Cache>,
}

#[derive(Debug)]
struct Cache {
    shape: Vec<usize>,
    x_hat: Vec<f64>,
    inv_std: Vec<f64>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self::with_params(channels, 0.1, 1e-5)
    }

    pub fn with_params(channels: usize, momentum: f64, eps: f64) -> Self {
        Self {
            channels,
            momentum,
            eps,
            gamma: Param {
                value: vec![1.0; channels],
                grad: vec![0.0; channels],
            },
            beta: Param::zeros(channels),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            cache: None,
        }
    }
}

impl Layer for BatchNorm {
    fn spec(&self) -> LayerSpec {
        LayerSpec::BatchNorm {
            channels: self.channels,
            momentum: self.momentum,
            eps: self.eps,
        }
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        check_input("batch norm", &self.spec(), x)?;
        let c = self.channels;
        let data = x.data();
        let count = data.len() / c;

        let (mean, var) = match mode {
            Mode::Eval => (self.running_mean.clone(), self.running_var.clone()),
            Mode::Train => {
                if x.batch() < 2 {
                    return Err(Error::invalid("batch norm needs at least 2 samples in training mode"));
                }
                let mut mean = vec![0.0; c];
                for row in data.chunks_exact(c) {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= count as f64);
                let mut var = vec![0.0; c];
                for row in data.chunks_exact(c) {
                    for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= count as f64);

                let unbias = count as f64 / (count - 1) as f64;
                for ch in 0..c {
                    self.running_mean[ch] =
                        round_f32((1.0 - self.momentum) * self.running_mean[ch] + self.momentum * mean[ch]);
                    self.running_var[ch] =
                        round_f32((1.0 - self.momentum) * self.running_var[ch] + self.momentum * var[ch] * unbias);
                }
                (mean, var)
            }
        };

        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut x_hat = Vec::with_capacity(data.len());
        let mut y = Vec::with_capacity(data.len());
        for row in data.chunks_exact(c) {
            for ch in 0..c {
                let h = (row[ch] - mean[ch]) * inv_std[ch];
                x_hat.push(h);
                y.push(self.gamma.value[ch] * h + self.beta.value[ch]);
            }
        }
        if mode == Mode::Train {
            self.cache = Some(Cache {
                shape: x.shape().to_vec(),
                x_hat,
                inv_std,
            });
        }
        Tensor::new(x.shape().to_vec(), y)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or(Error::NoForwardCache("batch norm"))?;
        expect_shape("batch norm backward", &cache.shape, grad.shape())?;
        let c = self.channels;
        let g = grad.data();
        let count = (g.len() / c) as f64;

        let mut sum_dy = vec![0.0; c];
        let mut sum_dy_xhat = vec![0.0; c];
        for (grow, hrow) in g.chunks_exact(c).zip(cache.x_hat.chunks_exact(c)) {
            for ch in 0..c {
                sum_dy[ch] += grow[ch];
                sum_dy_xhat[ch] += grow[ch] * hrow[ch];
            }
        }
        for ch in 0..c {
            self.beta.grad[ch] += sum_dy[ch];
            self.gamma.grad[ch] += sum_dy_xhat[ch];
        }

        let mut dx = Vec::with_capacity(g.len());
        for (grow, hrow) in g.chunks_exact(c).zip(cache.x_hat.chunks_exact(c)) {
            for ch in 0..c {
                let scale = self.gamma.value[ch] * cache.inv_std[ch] / count;
                dx.push(scale * (count * grow[ch] - sum_dy[ch] - hrow[ch] * sum_dy_xhat[ch]));
            }
        }
        Tensor::new(cache.shape, dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn buffers(&self) -> Vec<&Vec<f64>> {
        vec![&self.running_mean, &self.running_var]
    }

    fn buffers_mut(&mut self) -> Vec<&mut Vec<f64>> {
        vec![&mut self.running_mean, &mut self.running_var]
    }
}
