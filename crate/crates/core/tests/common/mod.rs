#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use stmforge::nn::{build_layer, Conv2d, ConvTranspose2d, Layer, LayerSpec, Mode, Tensor};
use stmforge::rng;

pub const FD_STEP: f64 = 1e-4;
pub const FD_TOLERANCE: f64 = 1e-4;
pub const GRAD_SEEDS: u64 = 20;

/// How test inputs are drawn so finite differences never straddle a kink.
#[derive(Clone, Copy, Debug)]
pub enum Inputs {
    Smooth,
    /// At least `margin` away from each listed kink.
    AvoidKinks(&'static [f64], f64),
    /// Pairwise distinct, separated by at least 0.01.
    Distinct,
}

pub struct GradCase {
    pub name: &'static str,
    pub spec: LayerSpec,
    pub shape: Vec<usize>,
    pub inputs: Inputs,
}

pub fn grad_cases() -> Vec<GradCase> {
    use LayerSpec::*;
    let case = |name, spec, shape: &[usize], inputs| GradCase {
        name,
        spec,
        shape: shape.to_vec(),
        inputs,
    };
    vec![
        case(
            "conv2d same",
            Conv2D { in_channels: 3, filters: 4, kernel: 3, stride: 1, padding: 1 },
            &[2, 6, 6, 3],
            Inputs::Smooth,
        ),
        case(
            "conv2d strided",
            Conv2D { in_channels: 2, filters: 3, kernel: 3, stride: 2, padding: 1 },
            &[2, 7, 7, 2],
            Inputs::Smooth,
        ),
        case(
            "tconv2d k3 s2",
            TConv2D { in_channels: 3, filters: 2, kernel: 3, stride: 2, padding: 1, output_padding: 1 },
            &[2, 4, 4, 3],
            Inputs::Smooth,
        ),
        case(
            "tconv2d k5 s2",
            TConv2D { in_channels: 2, filters: 1, kernel: 5, stride: 2, padding: 1, output_padding: 0 },
            &[2, 4, 4, 2],
            Inputs::Smooth,
        ),
        case(
            "tconv2d k3 s1",
            TConv2D { in_channels: 3, filters: 4, kernel: 3, stride: 1, padding: 1, output_padding: 0 },
            &[2, 4, 4, 3],
            Inputs::Smooth,
        ),
        case("maxpool2d", MaxPool2D { pool: 2, stride: 2 }, &[2, 5, 5, 3], Inputs::Distinct),
        case("dense", Dense { inputs: 7, outputs: 5 }, &[3, 7], Inputs::Smooth),
        case("relu", ReLU, &[2, 4, 4, 2], Inputs::AvoidKinks(&[0.0], 0.05)),
        case("leaky_relu", LeakyReLU { slope: 0.01 }, &[2, 4, 4, 2], Inputs::AvoidKinks(&[0.0], 0.05)),
        case(
            "clipped_relu",
            ClippedReLU { lo: 0.0, hi: 1.0 },
            &[2, 4, 4, 2],
            Inputs::AvoidKinks(&[0.0, 1.0], 0.05),
        ),
        case(
            "batch_norm",
            BatchNorm { channels: 3, momentum: 0.1, eps: 1e-5 },
            &[4, 3, 3, 3],
            Inputs::Smooth,
        ),
        case("flatten", Flatten, &[2, 3, 3, 2], Inputs::Smooth),
        case("reshape", Reshape { target: vec![2, 2, 3] }, &[2, 12], Inputs::Smooth),
        case("channel_mean", ChannelMean, &[2, 3, 3, 4], Inputs::Smooth),
    ]
}

fn draw_inputs<R: Rng>(kind: Inputs, n: usize, r: &mut R) -> Vec<f64> {
    match kind {
        Inputs::Smooth => (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
        Inputs::AvoidKinks(kinks, margin) => (0..n)
            .map(|_| loop {
                let x: f64 = r.random_range(-0.5..1.5);
                if kinks.iter().all(|k| (x - k).abs() >= margin) {
                    break x;
                }
            })
            .collect(),
        Inputs::Distinct => {
            let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - 0.5).collect();
            v.shuffle(r);
            v
        }
    }
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-12 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn weighted_sum(layer: &mut dyn Layer, x: &Tensor, w: &[f64]) -> f64 {
    let y = layer.forward(x, Mode::Train).expect("forward");
    y.data().iter().zip(w).map(|(a, b)| a * b).sum()
}

/// Largest relative error between analytic and central-difference gradients
/// of `sum(w * layer(x))`, over the input and every parameter tensor.
pub fn grad_check(case: &GradCase, seed: u64) -> f64 {
    let mut r = rng::stream(seed, &[rng::tag(case.name)]);
    let mut layer = build_layer(&case.spec, &mut r);
    // Random biases too, so nothing is trivially zero.
    for p in layer.params_mut() {
        p.value.iter_mut().for_each(|v| *v = r.random_range(-1.0..1.0));
    }
    let n: usize = case.shape.iter().product();
    let x = Tensor::new(case.shape.clone(), draw_inputs(case.inputs, n, &mut r)).unwrap();
    let out_len = layer.forward(&x, Mode::Train).unwrap().len();
    let w: Vec<f64> = (0..out_len).map(|_| r.sample(StandardNormal)).collect();

    for p in layer.params_mut() {
        p.zero_grad();
    }
    let y = layer.forward(&x, Mode::Train).unwrap();
    let dy = Tensor::new(y.shape().to_vec(), w.clone()).unwrap();
    let dx = layer.backward(&dy).unwrap();

    let mut numeric = vec![0.0; n];
    for i in 0..n {
        let mut xp = x.clone();
        xp.data_mut()[i] += FD_STEP;
        let mut xm = x.clone();
        xm.data_mut()[i] -= FD_STEP;
        numeric[i] = (weighted_sum(layer.as_mut(), &xp, &w) - weighted_sum(layer.as_mut(), &xm, &w)) / (2.0 * FD_STEP);
    }
    let mut worst = rel_error(dx.data(), &numeric);

    let analytic: Vec<Vec<f64>> = layer.params().iter().map(|p| p.grad.clone()).collect();
    for (pi, grad) in analytic.iter().enumerate() {
        let mut numeric = vec![0.0; grad.len()];
        for (k, slot) in numeric.iter_mut().enumerate() {
            let orig = layer.params()[pi].value[k];
            layer.params_mut()[pi].value[k] = orig + FD_STEP;
            let plus = weighted_sum(layer.as_mut(), &x, &w);
            layer.params_mut()[pi].value[k] = orig - FD_STEP;
            let minus = weighted_sum(layer.as_mut(), &x, &w);
            layer.params_mut()[pi].value[k] = orig;
            *slot = (plus - minus) / (2.0 * FD_STEP);
        }
        worst = worst.max(rel_error(grad, &numeric));
    }
    worst
}

/// Relative gap in `<conv(x), y> = <x, tconv(y)>` for a convolution and a
/// transposed convolution sharing one weight array (biases zero).
pub fn adjoint_gap(seed: u64, size: usize, kernel: usize, stride: usize, padding: usize, cin: usize, cout: usize) -> f64 {
    let mut r = rng::stream(seed, &[rng::tag("adjoint")]);
    let mut conv = Conv2d::new(cin, cout, kernel, stride, padding, &mut r);
    let out = (size + 2 * padding - kernel) / stride + 1;
    let output_padding = size - ((out - 1) * stride + kernel - 2 * padding);
    let mut tconv = ConvTranspose2d::new(cout, cin, kernel, stride, padding, output_padding, &mut r);
    conv.weight.value = (0..conv.weight.value.len()).map(|_| r.random_range(-1.0..1.0)).collect();
    tconv.weight.value = conv.weight.value.clone();

    let batch = 2;
    let x = Tensor::new(
        vec![batch, size, size, cin],
        (0..batch * size * size * cin).map(|_| r.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let y = Tensor::new(
        vec![batch, out, out, cout],
        (0..batch * out * out * cout).map(|_| r.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let cx = conv.forward(&x, Mode::Eval).unwrap();
    let ty = tconv.forward(&y, Mode::Eval).unwrap();
    assert_eq!(ty.shape(), x.shape());
    let lhs = cx.dot(&y);
    let rhs = x.dot(&ty);
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs())
}

/// Convolution geometries used by the two autoencoders.
pub const ADJOINT_CASES: [(usize, usize, usize, usize, usize, usize); 4] = [
    (17, 5, 2, 1, 1, 16),
    (7, 3, 2, 1, 3, 2),
    (8, 3, 2, 1, 16, 24),
    (6, 3, 1, 1, 4, 8),
];
