//! 2D convolution and its transpose, both lowered to a single GEMM over the
//! whole batch via im2col.
//!
//! Weights are laid out as a `(k*k*C_img) x C_pos` matrix where `C_img` is the
//! channel count on the "image" side of the im2col geometry: the input of a
//! convolution, the output of a transposed convolution. With that layout a
//! transposed convolution is exactly the adjoint of the convolution that
//! shares its weights.

use rand::Rng;

use super::gemm::gemm;
use super::layer::{batch_shape, check_input, Layer, LayerSpec, Mode, Param};
use super::tensor::{expect_shape, Tensor};
use crate::error::{Error, Result};

/// Sliding-window geometry between an image `h x w x channels` and a grid
/// of `out_h x out_w` window positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Geometry {
    pub batch: usize,
    pub h: usize,
    pub w: usize,
    pub channels: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Geometry {
    fn row_len(&self) -> usize {
        self.kernel * self.kernel * self.channels
    }

    fn positions(&self) -> usize {
        self.batch * self.out_h * self.out_w
    }

    /// Image coordinate touched by window `o`, kernel tap `k`.
    #[inline]
    fn coord(&self, o: usize, k: usize, limit: usize) -> Option<usize> {
        (o * self.stride + k)
            .checked_sub(self.padding)
            .filter(|&i| i < limit)
    }
}

pub(crate) fn im2col(g: &Geometry, image: &[f64]) -> Vec<f64> {
    let c = g.channels;
    let row_len = g.row_len();
    let mut cols = vec![0.0; g.positions() * row_len];
    for n in 0..g.batch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let row = ((n * g.out_h + oy) * g.out_w + ox) * row_len;
                for ky in 0..g.kernel {
                    let Some(iy) = g.coord(oy, ky, g.h) else { continue };
                    for kx in 0..g.kernel {
                        let Some(ix) = g.coord(ox, kx, g.w) else { continue };
                        let src = ((n * g.h + iy) * g.w + ix) * c;
                        let dst = row + (ky * g.kernel + kx) * c;
                        cols[dst..dst + c].copy_from_slice(&image[src..src + c]);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters window rows back, summing overlaps.
pub(crate) fn col2im(g: &Geometry, cols: &[f64]) -> Vec<f64> {
    let c = g.channels;
    let row_len = g.row_len();
    let mut image = vec![0.0; g.batch * g.h * g.w * c];
    for n in 0..g.batch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let row = ((n * g.out_h + oy) * g.out_w + ox) * row_len;
                for ky in 0..g.kernel {
                    let Some(iy) = g.coord(oy, ky, g.h) else { continue };
                    for kx in 0..g.kernel {
                        let Some(ix) = g.coord(ox, kx, g.w) else { continue };
                        let dst = ((n * g.h + iy) * g.w + ix) * c;
                        let src = row + (ky * g.kernel + kx) * c;
                        for (d, s) in image[dst..dst + c].iter_mut().zip(&cols[src..src + c]) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
    image
}

fn add_bias(out: &mut [f64], bias: &[f64]) {
    for row in out.chunks_exact_mut(bias.len()) {
        for (o, b) in row.iter_mut().zip(bias) {
            *o += b;
        }
    }
}

fn accumulate_bias_grad(grad: &[f64], bias_grad: &mut [f64]) {
    for row in grad.chunks_exact(bias_grad.len()) {
        for (g, d) in bias_grad.iter_mut().zip(row) {
            *g += d;
        }
    }
}

#[derive(Debug)]
pub struct Conv2d {
    pub in_channels: usize,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub weight: Param,
    pub bias: Param,
    cache: Option<(Geometry, Vec<f64>)>,
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        filters: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = kernel * kernel * in_channels;
        Self {
            in_channels,
            filters,
            kernel,
            stride,
            padding,
            weight: Param::glorot_uniform(fan_in * filters, fan_in, kernel * kernel * filters, rng),
            bias: Param::zeros(filters),
            cache: None,
        }
    }
}

impl Layer for Conv2d {
    fn spec(&self) -> LayerSpec {
        LayerSpec::Conv2D {
            in_channels: self.in_channels,
            filters: self.filters,
            kernel: self.kernel,
            stride: self.stride,
            padding: self.padding,
        }
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let out = check_input("conv2d", &self.spec(), x)?;
        let s = x.shape();
        let g = Geometry {
            batch: s[0],
            h: s[1],
            w: s[2],
            channels: s[3],
            out_h: out[0],
            out_w: out[1],
            kernel: self.kernel,
            stride: self.stride,
            padding: self.padding,
        };
        let cols = im2col(&g, x.data());
        let mut y = vec![0.0; g.positions() * self.filters];
        gemm(g.positions(), g.row_len(), self.filters, &cols, false, &self.weight.value, false, 0.0, &mut y);
        add_bias(&mut y, &self.bias.value);
        self.cache = (mode == Mode::Train).then_some((g, cols));
        Tensor::new(batch_shape(g.batch, &out), y)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let (g, cols) = self.cache.take().ok_or(Error::NoForwardCache("conv2d"))?;
        expect_shape("conv2d backward", &[g.batch, g.out_h, g.out_w, self.filters], grad.shape())?;
        let (m, kk, f) = (g.positions(), g.row_len(), self.filters);
        gemm(kk, m, f, &cols, true, grad.data(), false, 1.0, &mut self.weight.grad);
        accumulate_bias_grad(grad.data(), &mut self.bias.grad);
        let mut dcols = vec![0.0; m * kk];
        gemm(m, f, kk, grad.data(), false, &self.weight.value, true, 0.0, &mut dcols);
        Tensor::new(vec![g.batch, g.h, g.w, g.channels], col2im(&g, &dcols))
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[derive(Debug)]
pub struct ConvTranspose2d {
    pub in_channels: usize,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub output_padding: usize,
    /// `(k*k*filters) x in_channels`
    pub weight: Param,
    pub bias: Param,
    cache: Option<(Geometry, Vec<f64>)>,
}

impl ConvTranspose2d {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        filters: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = kernel * kernel * in_channels;
        Self {
            in_channels,
            filters,
            kernel,
            stride,
            padding,
            output_padding,
            weight: Param::glorot_uniform(
                kernel * kernel * filters * in_channels,
                fan_in,
                kernel * kernel * filters,
                rng,
            ),
            bias: Param::zeros(filters),
            cache: None,
        }
    }
}

impl Layer for ConvTranspose2d {
    fn spec(&self) -> LayerSpec {
        LayerSpec::TConv2D {
            in_channels: self.in_channels,
            filters: self.filters,
            kernel: self.kernel,
            stride: self.stride,
            padding: self.padding,
            output_padding: self.output_padding,
        }
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let out = check_input("tconv2d", &self.spec(), x)?;
        let s = x.shape();
        // the input grid plays the role of window positions
        let g = Geometry {
            batch: s[0],
            h: out[0],
            w: out[1],
            channels: self.filters,
            out_h: s[1],
            out_w: s[2],
            kernel: self.kernel,
            stride: self.stride,
            padding: self.padding,
        };
        let (m, kk, cin) = (g.positions(), g.row_len(), self.in_channels);
        let mut cols = vec![0.0; m * kk];
        gemm(m, cin, kk, x.data(), false, &self.weight.value, true, 0.0, &mut cols);
        let mut y = col2im(&g, &cols);
        add_bias(&mut y, &self.bias.value);
        self.cache = (mode == Mode::Train).then(|| (g, x.data().to_vec()));
        Tensor::new(batch_shape(g.batch, &out), y)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let (g, input) = self.cache.take().ok_or(Error::NoForwardCache("tconv2d"))?;
        expect_shape("tconv2d backward", &[g.batch, g.h, g.w, self.filters], grad.shape())?;
        let (m, kk, cin) = (g.positions(), g.row_len(), self.in_channels);
        accumulate_bias_grad(grad.data(), &mut self.bias.grad);
        let dcols = im2col(&g, grad.data());
        gemm(kk, m, cin, &dcols, true, &input, false, 1.0, &mut self.weight.grad);
        let mut dx = vec![0.0; m * cin];
        gemm(m, kk, cin, &dcols, false, &self.weight.value, false, 0.0, &mut dx);
        Tensor::new(vec![g.batch, g.out_h, g.out_w, cin], dx)
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

    fn ones(shape: Vec<usize>) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, vec![1.0; n]).unwrap()
    }

    #[test]
    fn identity_kernel() {
        let mut conv = Conv2d::new(1, 1, 1, 1, 0, &mut rng::stream(0, &[]));
        conv.weight.value = vec![1.0];
        let x = Tensor::new(vec![1, 3, 3, 1], (0..9).map(|i| i as f64).collect()).unwrap();
        assert_eq!(conv.forward(&x, Mode::Eval).unwrap(), x);

        let mut t = ConvTranspose2d::new(1, 1, 1, 1, 0, 0, &mut rng::stream(0, &[]));
        t.weight.value = vec![1.0];
        assert_eq!(t.forward(&x, Mode::Eval).unwrap(), x);
    }

    #[test]
    fn all_ones_sum() {
        let mut conv = Conv2d::new(1, 1, 3, 1, 0, &mut rng::stream(0, &[]));
        conv.weight.value = vec![1.0; 9];
        let y = conv.forward(&ones(vec![1, 3, 3, 1]), Mode::Eval).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn output_shapes() {
        let mut r = rng::stream(1, &[]);
        let mut conv = Conv2d::new(1, 16, 3, 1, 1, &mut r);
        assert_eq!(conv.forward(&ones(vec![2, 17, 17, 1]), Mode::Eval).unwrap().shape(), &[2, 17, 17, 16]);
        let mut t1 = ConvTranspose2d::new(9, 16, 3, 2, 1, 1, &mut r);
        assert_eq!(t1.forward(&ones(vec![1, 4, 4, 9]), Mode::Eval).unwrap().shape(), &[1, 8, 8, 16]);
        let mut t2 = ConvTranspose2d::new(16, 1, 5, 2, 1, 0, &mut r);
        assert_eq!(t2.forward(&ones(vec![1, 8, 8, 16]), Mode::Eval).unwrap().shape(), &[1, 17, 17, 1]);
    }

    #[test]
    fn tconv_scatter_by_hand() {
        // 1-channel, k=2, s=2: every input pixel stamps a scaled 2x2 kernel
        let mut t = ConvTranspose2d::new(1, 1, 2, 2, 0, 0, &mut rng::stream(0, &[]));
        t.weight.value = vec![1.0, 2.0, 3.0, 4.0];
        let x = Tensor::new(vec![1, 1, 2, 1], vec![1.0, 10.0]).unwrap();
        let y = t.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y.shape(), &[1, 2, 4, 1]);
        assert_eq!(y.data(), &[1.0, 2.0, 10.0, 20.0, 3.0, 4.0, 30.0, 40.0]);
    }

    #[test]
    fn channel_mismatch_is_reported() {
        let mut conv = Conv2d::new(2, 4, 3, 1, 1, &mut rng::stream(0, &[]));
        let err = conv.forward(&ones(vec![1, 5, 5, 3]), Mode::Eval).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }), "{err}");
    }

    #[test]
    fn backward_requires_forward() {
        let mut conv = Conv2d::new(1, 1, 3, 1, 1, &mut rng::stream(0, &[]));
        assert!(matches!(conv.backward(&ones(vec![1, 3, 3, 1])), Err(Error::NoForwardCache(_))));
        let mut t = ConvTranspose2d::new(1, 1, 3, 2, 1, 1, &mut rng::stream(0, &[]));
        assert!(t.backward(&ones(vec![1, 4, 4, 1])).is_err());
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = Geometry { batch: 2, h: 7, w: 6, channels: 3, out_h: 4, out_w: 3, kernel: 3, stride: 2, padding: 1 };
        let mut r = rng::stream(5, &[]);
        let x: Vec<f64> = (0..2 * 7 * 6 * 3).map(|_| r.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..g.positions() * g.row_len()).map(|_| r.random_range(-1.0..1.0)).collect();
        let lhs: f64 = im2col(&g, &x).iter().zip(&c).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&col2im(&g, &c)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }
}
