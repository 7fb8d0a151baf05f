//! The two convolutional autoencoders.
//!
//! CAE-A (17x17 input) is a shallow ReLU network with a linear output.
//! CAE-B (16x16 input) is deeper, uses leaky ReLUs and batch norm and ends in
//! a clipped ReLU, so it works on patches mapped into `[0, 1]`.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::checkpoint::{read_checkpoint, write_checkpoint};
use crate::nn::{LayerSpec, Mode, Param, Sequential, Tensor};
use crate::patches::Patch;
use crate::rng;

pub const LATENT_DIM: usize = 10;
const LEAK: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    CaeA,
    CaeB,
}

/// Value range a network reads and writes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueDomain {
    /// Normalised patches, `[-1, 1]`.
    Signed,
    /// `[0, 1]`.
    Unit,
}

impl ValueDomain {
    /// Maps a normalised (`[-1, 1]`) value into this domain.
    pub fn from_signed(self, x: f64) -> f64 {
        match self {
            ValueDomain::Signed => x,
            ValueDomain::Unit => (x + 1.0) / 2.0,
        }
    }

    /// Inverse of [`ValueDomain::from_signed`].
    pub fn to_signed(self, x: f64) -> f64 {
        match self {
            ValueDomain::Signed => x,
            ValueDomain::Unit => 2.0 * x - 1.0,
        }
    }

    /// Maps a value of this domain into `[0, 1]`.
    pub fn to_unit(self, x: f64) -> f64 {
        match self {
            ValueDomain::Signed => (x + 1.0) / 2.0,
            ValueDomain::Unit => x,
        }
    }
}

impl Arch {
    pub const ALL: [Arch; 2] = [Arch::CaeA, Arch::CaeB];

    pub fn name(self) -> &'static str {
        match self {
            Arch::CaeA => "cae-a",
            Arch::CaeB => "cae-b",
        }
    }

    pub fn input_size(self) -> usize {
        match self {
            Arch::CaeA => 17,
            Arch::CaeB => 16,
        }
    }

    pub fn domain(self) -> ValueDomain {
        match self {
            Arch::CaeA => ValueDomain::Signed,
            Arch::CaeB => ValueDomain::Unit,
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "cae-a" | "a" => Ok(Arch::CaeA),
            "cae-b" | "b" => Ok(Arch::CaeB),
            other => Err(Error::invalid(format!("unknown architecture `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Arch,
    pub latent_dim: usize,
    pub input_size: usize,
}

impl ModelSpec {
    pub fn new(arch: Arch) -> Self {
        Self {
            arch,
            latent_dim: LATENT_DIM,
            input_size: arch.input_size(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim != LATENT_DIM || self.input_size != self.arch.input_size() {
            return Err(Error::invalid(format!(
                "{} expects a {}x{} input and a {LATENT_DIM}-dim latent, got {}x{} / {}",
                self.arch,
                self.arch.input_size(),
                self.arch.input_size(),
                self.input_size,
                self.input_size,
                self.latent_dim
            )));
        }
        Ok(())
    }

    pub fn encoder_specs(&self) -> Vec<LayerSpec> {
        let conv = |in_channels, filters| LayerSpec::Conv2D {
            in_channels,
            filters,
            kernel: 3,
            stride: 1,
            padding: 1,
        };
        let pool = LayerSpec::MaxPool2D { pool: 2, stride: 2 };
        match self.arch {
            Arch::CaeA => vec![
                conv(1, 16),
                LayerSpec::ReLU,
                pool.clone(),
                conv(16, 9),
                LayerSpec::ReLU,
                pool,
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: 144,
                    outputs: self.latent_dim,
                },
            ],
            Arch::CaeB => {
                let mut layers = Vec::new();
                let mut channels = 1;
                for filters in [32, 24, 16, 8] {
                    layers.push(conv(channels, filters));
                    layers.push(LayerSpec::LeakyReLU { slope: LEAK });
                    layers.push(pool.clone());
                    channels = filters;
                }
                layers.push(LayerSpec::Flatten);
                layers.push(LayerSpec::Dense {
                    inputs: 8,
                    outputs: self.latent_dim,
                });
                layers
            }
        }
    }

    pub fn decoder_specs(&self) -> Vec<LayerSpec> {
        let tconv = |in_channels, filters, kernel, stride, output_padding| LayerSpec::TConv2D {
            in_channels,
            filters,
            kernel,
            stride,
            padding: 1,
            output_padding,
        };
        match self.arch {
            Arch::CaeA => vec![
                LayerSpec::Dense {
                    inputs: self.latent_dim,
                    outputs: 144,
                },
                LayerSpec::Reshape { target: vec![4, 4, 9] },
                tconv(9, 16, 3, 2, 1),
                LayerSpec::ReLU,
                tconv(16, 1, 5, 2, 0),
            ],
            Arch::CaeB => vec![
                LayerSpec::Dense {
                    inputs: self.latent_dim,
                    outputs: 96,
                },
                LayerSpec::Reshape { target: vec![2, 2, 24] },
                tconv(24, 24, 3, 2, 1),
                LayerSpec::LeakyReLU { slope: LEAK },
                tconv(24, 16, 3, 2, 1),
                LayerSpec::BatchNorm {
                    channels: 16,
                    momentum: 0.1,
                    eps: 1e-5,
                },
                LayerSpec::LeakyReLU { slope: LEAK },
                tconv(16, 8, 3, 2, 1),
                LayerSpec::LeakyReLU { slope: LEAK },
                tconv(8, 4, 3, 1, 0),
                LayerSpec::ClippedReLU { lo: 0.0, hi: 1.0 },
                LayerSpec::ChannelMean,
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    model: ModelSpec,
    encoder: Vec<LayerSpec>,
    decoder: Vec<LayerSpec>,
}

const CHECKPOINT_FORMAT: &str = "stmforge-cae";

pub struct Autoencoder {
    spec: ModelSpec,
    pub encoder: Sequential,
    pub decoder: Sequential,
}

/// Fresh network with weights drawn from a stream keyed by `seed`.
pub fn build_model(spec: ModelSpec, seed: u64) -> Result<Autoencoder> {
    spec.validate()?;
    let mut enc_rng = rng::stream(seed, &[rng::tag("init"), rng::tag("encoder")]);
    let mut dec_rng = rng::stream(seed, &[rng::tag("init"), rng::tag("decoder")]);
    Ok(Autoencoder {
        spec,
        encoder: Sequential::from_specs(&spec.encoder_specs(), &mut enc_rng),
        decoder: Sequential::from_specs(&spec.decoder_specs(), &mut dec_rng),
    })
}

impl Autoencoder {
    pub fn spec(&self) -> ModelSpec {
        self.spec
    }

    pub fn arch(&self) -> Arch {
        self.spec.arch
    }

    /// Batch tensor `[N, P, P, 1]` of patches mapped into the network's domain.
    pub fn input_tensor<'a>(&self, patches: impl IntoIterator<Item = &'a Patch>) -> Result<Tensor> {
        let size = self.spec.input_size;
        let domain = self.arch().domain();
        let mut data = Vec::new();
        let mut n = 0;
        for p in patches {
            self.check_patch(p.size, p.values.len())?;
            data.extend(p.values.iter().map(|&v| domain.from_signed(v as f64)));
            n += 1;
        }
        if n == 0 {
            return Err(Error::invalid("no patches given"));
        }
        Tensor::new(vec![n, size, size, 1], data)
    }

    fn check_patch(&self, size: usize, len: usize) -> Result<()> {
        let want = self.spec.input_size;
        if size != want || len != want * want {
            return Err(Error::ShapeMismatch {
                context: "autoencoder input",
                expected: vec![want, want],
                actual: vec![size, len / size.max(1)],
            });
        }
        Ok(())
    }

    pub fn encode_batch(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        self.encoder.forward(x, mode)
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let z = self.encoder.forward(x, mode)?;
        self.decoder.forward(&z, mode)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let dz = self.decoder.backward(grad)?;
        self.encoder.backward(&dz)
    }

    /// Latent vector of one patch (values in the network's domain).
    pub fn encode(&mut self, patch: &[f64]) -> Result<Vec<f64>> {
        let size = self.spec.input_size;
        self.check_patch(size, patch.len())?;
        let x = Tensor::new(vec![1, size, size, 1], patch.to_vec())?;
        Ok(self.encoder.forward(&x, Mode::Eval)?.into_data())
    }

    /// Reconstruction of one patch (values in the network's domain).
    pub fn reconstruct(&mut self, patch: &[f64]) -> Result<Vec<f64>> {
        let size = self.spec.input_size;
        self.check_patch(size, patch.len())?;
        let x = Tensor::new(vec![1, size, size, 1], patch.to_vec())?;
        Ok(self.forward(&x, Mode::Eval)?.into_data())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.encoder.params_mut();
        p.extend(self.decoder.params_mut());
        p
    }

    pub fn zero_grad(&mut self) {
        self.encoder.zero_grad();
        self.decoder.zero_grad();
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count()
    }

    /// Layer label and per-sample output shape through encoder then decoder.
    pub fn shape_trace(&self) -> Result<Vec<(LayerSpec, Vec<usize>)>> {
        let size = self.spec.input_size;
        let mut trace = self.encoder.shape_trace(&[size, size, 1])?;
        let latent = trace.last().map(|t| t.1.clone()).unwrap_or_default();
        trace.extend(self.decoder.shape_trace(&latent)?);
        Ok(trace)
    }

    fn blobs(&self) -> Vec<&[f64]> {
        self.encoder
            .layers()
            .iter()
            .chain(self.decoder.layers())
            .flat_map(|l| {
                let mut b: Vec<&[f64]> = l.params().into_iter().map(|p| p.value.as_slice()).collect();
                b.extend(l.buffers().into_iter().map(|v| v.as_slice()));
                b
            })
            .collect()
    }

    pub fn write_checkpoint<W: Write>(&self, w: W) -> Result<()> {
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.to_string(),
            model: self.spec,
            encoder: self.encoder.specs(),
            decoder: self.decoder.specs(),
        };
        write_checkpoint(w, &header, &self.blobs())
    }

    pub fn read_checkpoint<R: Read>(r: R) -> Result<Self> {
        let (header, blobs): (CheckpointHeader, _) = read_checkpoint(r)?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(Error::format("checkpoint", format!("unknown format `{}`", header.format)));
        }
        let mut model = build_model(header.model, 0)?;
        if model.encoder.specs() != header.encoder || model.decoder.specs() != header.decoder {
            return Err(Error::format("checkpoint", "layer list does not match the architecture"));
        }
        let mut blobs = blobs.into_iter();
        for layer in model.encoder.layers_mut().iter_mut().chain(model.decoder.layers_mut()) {
            for p in layer.params_mut() {
                fill_blob(&mut p.value, blobs.next())?;
            }
            for b in layer.buffers_mut() {
                fill_blob(b, blobs.next())?;
            }
        }
        if blobs.next().is_some() {
            return Err(Error::format("checkpoint", "trailing blobs"));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_checkpoint(BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_checkpoint(BufReader::new(f))
    }
}

fn fill_blob(dst: &mut Vec<f64>, blob: Option<Vec<f64>>) -> Result<()> {
    let blob = blob.ok_or_else(|| Error::format("checkpoint", "missing blob"))?;
    if blob.len() != dst.len() {
        return Err(Error::format(
            "checkpoint",
            format!("blob holds {} values, layer expects {}", blob.len(), dst.len()),
        ));
    }
    *dst = blob;
    Ok(())
}

impl fmt::Debug for Autoencoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Autoencoder")
            .field("spec", &self.spec)
            .field("params", &self.param_count())
            .finish()
    }
}
