//! Pixel-wise MSE and Gaussian-window SSIM.

use crate::error::{Error, Result};

pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_RADIUS: usize = 5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_pair(a: &[f64], b: &[f64], context: &'static str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            context,
            expected: vec![a.len()],
            actual: vec![b.len()],
        });
    }
    if a.is_empty() {
        return Err(Error::invalid(format!("{context}: empty input")));
    }
    Ok(())
}

pub fn mse_metric(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, "mse")?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

/// Normalised 1-D Gaussian taps for offsets `-SSIM_RADIUS..=SSIM_RADIUS`.
pub fn gaussian_taps() -> [f64; 2 * SSIM_RADIUS + 1] {
    let mut w = [0.0; 2 * SSIM_RADIUS + 1];
    for (i, t) in w.iter_mut().enumerate() {
        let x = i as f64 - SSIM_RADIUS as f64;
        *t = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|t| *t /= sum);
    w
}

/// Half-sample symmetric reflection of `i` into `0..n` (`d c b a | a b c d`).
pub fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Separable Gaussian filter with reflected borders.
fn blur(img: &[f64], rows: usize, cols: usize, taps: &[f64]) -> Vec<f64> {
    let r = SSIM_RADIUS as isize;
    let mut tmp = vec![0.0; img.len()];
    for y in 0..rows {
        let row = &img[y * cols..(y + 1) * cols];
        for x in 0..cols {
            tmp[y * cols + x] = taps
                .iter()
                .enumerate()
                .map(|(k, w)| w * row[reflect(x as isize + k as isize - r, cols)])
                .sum();
        }
    }
    let mut out = vec![0.0; img.len()];
    for y in 0..rows {
        for x in 0..cols {
            out[y * cols + x] = taps
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[reflect(y as isize + k as isize - r, rows) * cols + x])
                .sum();
        }
    }
    out
}

/// Mean SSIM of two square images whose values lie in `[0, 1]`.
pub fn ssim_metric(a: &[f64], b: &[f64], size: usize) -> Result<f64> {
    check_pair(a, b, "ssim")?;
    if size * size != a.len() {
        return Err(Error::ShapeMismatch {
            context: "ssim",
            expected: vec![size, size],
            actual: vec![a.len()],
        });
    }
    let taps = gaussian_taps();
    let products = |f: fn(f64, f64) -> f64| -> Vec<f64> { a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect() };
    let mu_a = blur(a, size, size, &taps);
    let mu_b = blur(b, size, size, &taps);
    let e_aa = blur(&products(|x, _| x * x), size, size, &taps);
    let e_bb = blur(&products(|_, y| y * y), size, size, &taps);
    let e_ab = blur(&products(|x, y| x * y), size, size, &taps);

    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let total: f64 = (0..a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / a.len() as f64)
}
