use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Training mode uses batch statistics in batch norm and caches activations
/// for the backward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A trainable array and its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn zeros(n: usize) -> Self {
        Self {
            value: vec![0.0; n],
            grad: vec![0.0; n],
        }
    }

    /// Glorot-uniform draw, bound `sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot_uniform<R: Rng + ?Sized>(
        n: usize,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let value = (0..n)
            .map(|_| round_f32(rng.random_range(-bound..bound)))
            .collect();
        Self {
            value,
            grad: vec![0.0; n],
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Parameters are kept at single precision so checkpoints round-trip
/// exactly; arithmetic runs in f64.
pub fn round_f32(x: f64) -> f64 {
    x as f32 as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2D {
        in_channels: usize,
        filters: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    TConv2D {
        in_channels: usize,
        filters: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
    },
    MaxPool2D {
        pool: usize,
        stride: usize,
    },
    Dense {
        inputs: usize,
        outputs: usize,
    },
    #[serde(rename = "relu")]
    ReLU,
    #[serde(rename = "leaky_relu")]
    LeakyReLU { slope: f64 },
    #[serde(rename = "clipped_relu")]
    ClippedReLU { lo: f64, hi: f64 },
    BatchNorm {
        channels: usize,
        momentum: f64,
        eps: f64,
    },
    Flatten,
    Reshape { target: Vec<usize> },
    /// Fixed 1x1 convolution averaging all channels into one.
    ChannelMean,
}

fn spatial(context: &'static str, input: &[usize]) -> Result<(usize, usize, usize)> {
    match *input {
        [h, w, c] => Ok((h, w, c)),
        _ => Err(Error::ShapeMismatch {
            context,
            expected: vec![0, 0, 0],
            actual: input.to_vec(),
        }),
    }
}

impl LayerSpec {
    /// Per-sample output shape (no batch dimension) for `input`.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Conv2D {
                in_channels,
                filters,
                kernel,
                stride,
                padding,
            } => {
                let (h, w, c) = spatial("conv2d", input)?;
                if c != in_channels {
                    return Err(Error::ShapeMismatch {
                        context: "conv2d channels",
                        expected: vec![h, w, in_channels],
                        actual: input.to_vec(),
                    });
                }
                if stride == 0 || kernel == 0 || kernel > h + 2 * padding || kernel > w + 2 * padding {
                    return Err(Error::invalid(format!(
                        "conv2d kernel {kernel} (stride {stride}) does not fit {h}x{w} with padding {padding}"
                    )));
                }
                Ok(vec![
                    (h + 2 * padding - kernel) / stride + 1,
                    (w + 2 * padding - kernel) / stride + 1,
                    filters,
                ])
            }
            LayerSpec::TConv2D {
                in_channels,
                filters,
                kernel,
                stride,
                padding,
                output_padding,
            } => {
                let (h, w, c) = spatial("tconv2d", input)?;
                if c != in_channels {
                    return Err(Error::ShapeMismatch {
                        context: "tconv2d channels",
                        expected: vec![h, w, in_channels],
                        actual: input.to_vec(),
                    });
                }
                let out = |n: usize| ((n - 1) * stride + kernel + output_padding).checked_sub(2 * padding);
                match (out(h), out(w)) {
                    (Some(ho), Some(wo)) if stride > 0 && kernel > 0 && ho > 0 && wo > 0 && output_padding < stride.max(1) => {
                        Ok(vec![ho, wo, filters])
                    }
                    _ => Err(Error::invalid(format!(
                        "tconv2d k={kernel} s={stride} p={padding} op={output_padding} has no valid output for {h}x{w}"
                    ))),
                }
            }
            LayerSpec::MaxPool2D { pool, stride } => {
                let (h, w, c) = spatial("maxpool2d", input)?;
                if pool == 0 || stride == 0 || pool > h || pool > w {
                    return Err(Error::invalid(format!("pool {pool} does not fit {h}x{w}")));
                }
                Ok(vec![(h - pool) / stride + 1, (w - pool) / stride + 1, c])
            }
            LayerSpec::Dense { inputs, outputs } => {
                if input != [inputs] {
                    return Err(Error::ShapeMismatch {
                        context: "dense",
                        expected: vec![inputs],
                        actual: input.to_vec(),
                    });
                }
                Ok(vec![outputs])
            }
            LayerSpec::ReLU | LayerSpec::LeakyReLU { .. } | LayerSpec::ClippedReLU { .. } => Ok(input.to_vec()),
            LayerSpec::BatchNorm { channels, .. } => {
                if input.last() != Some(&channels) {
                    return Err(Error::ShapeMismatch {
                        context: "batch norm channels",
                        expected: vec![channels],
                        actual: input.to_vec(),
                    });
                }
                Ok(input.to_vec())
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Reshape { ref target } => {
                if target.iter().product::<usize>() != input.iter().product::<usize>() {
                    return Err(Error::ShapeMismatch {
                        context: "reshape",
                        expected: target.clone(),
                        actual: input.to_vec(),
                    });
                }
                Ok(target.clone())
            }
            LayerSpec::ChannelMean => {
                let (h, w, _) = spatial("channel mean", input)?;
                Ok(vec![h, w, 1])
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            LayerSpec::Conv2D { .. } => "Conv2D",
            LayerSpec::TConv2D { .. } => "TConv2D",
            LayerSpec::MaxPool2D { .. } => "MaxPool",
            LayerSpec::Dense { .. } => "Dense",
            LayerSpec::ReLU => "ReLU",
            LayerSpec::LeakyReLU { .. } => "Leaky ReLU",
            LayerSpec::ClippedReLU { .. } => "Clipped ReLU",
            LayerSpec::BatchNorm { .. } => "Batch Norm",
            LayerSpec::Flatten => "Flatten",
            LayerSpec::Reshape { .. } => "Reshape",
            LayerSpec::ChannelMean => "Channel Mean",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(
            self,
            LayerSpec::Conv2D { .. } | LayerSpec::TConv2D { .. } | LayerSpec::Dense { .. } | LayerSpec::BatchNorm { .. }
        )
    }
}

/// One stage of a sequential network.
///
/// `forward` caches what `backward` needs; `backward` consumes that cache,
/// adds parameter gradients into [`Param::grad`] and returns the gradient
/// with respect to the layer input.
pub trait Layer: Send + Sync {
    fn spec(&self) -> LayerSpec;
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor>;
    fn backward(&mut self, grad: &Tensor) -> Result<Tensor>;

    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }

    /// Non-trainable state saved with checkpoints (batch-norm running stats).
    fn buffers(&self) -> Vec<&Vec<f64>> {
        Vec::new()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Vec<f64>> {
        Vec::new()
    }
}

pub(crate) fn batch_shape(batch: usize, item: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(item.len() + 1);
    s.push(batch);
    s.extend_from_slice(item);
    s
}

pub(crate) fn check_input(context: &'static str, spec: &LayerSpec, x: &Tensor) -> Result<Vec<usize>> {
    if x.shape().len() < 2 {
        return Err(Error::ShapeMismatch {
            context,
            expected: vec![0, 0],
            actual: x.shape().to_vec(),
        });
    }
    spec.output_shape(&x.shape()[1..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_shapes() {
        let conv = LayerSpec::Conv2D { in_channels: 1, filters: 16, kernel: 3, stride: 1, padding: 1 };
        assert_eq!(conv.output_shape(&[17, 17, 1]).unwrap(), vec![17, 17, 16]);
        assert!(conv.output_shape(&[17, 17, 2]).is_err());
    }

    #[test]
    fn tconv_shapes() {
        let t1 = LayerSpec::TConv2D { in_channels: 9, filters: 16, kernel: 3, stride: 2, padding: 1, output_padding: 1 };
        assert_eq!(t1.output_shape(&[4, 4, 9]).unwrap(), vec![8, 8, 16]);
        let t2 = LayerSpec::TConv2D { in_channels: 16, filters: 1, kernel: 5, stride: 2, padding: 1, output_padding: 0 };
        assert_eq!(t2.output_shape(&[8, 8, 16]).unwrap(), vec![17, 17, 1]);
    }

    #[test]
    fn pool_shape() {
        let p = LayerSpec::MaxPool2D { pool: 2, stride: 2 };
        assert_eq!(p.output_shape(&[17, 17, 16]).unwrap(), vec![8, 8, 16]);
        assert_eq!(p.output_shape(&[2, 2, 8]).unwrap(), vec![1, 1, 8]);
    }

    #[test]
    fn spec_json_round_trip() {
        let specs = vec![
            LayerSpec::LeakyReLU { slope: 0.01 },
            LayerSpec::Reshape { target: vec![4, 4, 9] },
            LayerSpec::ReLU,
            LayerSpec::Dense { inputs: 144, outputs: 10 },
        ];
        let json = serde_json::to_string(&specs).unwrap();
        assert!(json.contains("\"kind\":\"leaky_relu\""));
        let back: Vec<LayerSpec> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, specs);
    }
}
