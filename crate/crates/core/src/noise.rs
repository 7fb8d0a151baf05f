//! Image noise: shot (Poisson), thermal (Gaussian), scan-line striations,
//! and atom position/brightness jitter.
//!
//! Each stage draws from its own stream keyed by `(seed, stage)`, so a stage
//! gives the same result regardless of which other stages ran before it.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::sim::{ProjectedAtom, SimImage};

/// Rows averaged into one striation offset.
pub const STRIATION_WINDOW: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Std-dev of additive thermal noise, in intensity units.
    pub gaussian_strength: f64,
    /// Shot noise level; counts are scaled by `255 / poisson_strength`.
    pub poisson_strength: f64,
    /// Amplitude of row-correlated offsets, in intensity units.
    pub striation_strength: f64,
    /// Std-dev of atom position jitter, in pre-spread image units.
    pub pos_jitter: f64,
    /// Std-dev of the multiplicative brightness jitter.
    pub brightness_jitter: f64,
    pub seed: u64,
}

impl NoiseParams {
    pub fn none() -> Self {
        Self {
            gaussian_strength: 0.0,
            poisson_strength: 0.0,
            striation_strength: 0.0,
            pos_jitter: 0.0,
            brightness_jitter: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("gaussian_strength", self.gaussian_strength),
            ("poisson_strength", self.poisson_strength),
            ("striation_strength", self.striation_strength),
            ("pos_jitter", self.pos_jitter),
            ("brightness_jitter", self.brightness_jitter),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {value}")));
            }
        }
        Ok(())
    }
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            gaussian_strength: 0.05,
            poisson_strength: 1.0,
            striation_strength: 0.03,
            pos_jitter: 0.02,
            brightness_jitter: 0.05,
            seed: 0,
        }
    }
}

fn map_pixels(img: &SimImage, mut f: impl FnMut(usize, f64) -> f64) -> SimImage {
    let pixels = img
        .pixels
        .iter()
        .enumerate()
        .map(|(i, &p)| f(i, p as f64).clamp(0.0, 1.0) as f32)
        .collect();
    SimImage {
        size: img.size,
        pixels,
        meta: img.meta.clone(),
    }
}

pub fn jitter_atoms(atoms: &[ProjectedAtom], params: &NoiseParams) -> Vec<ProjectedAtom> {
    if params.pos_jitter == 0.0 && params.brightness_jitter == 0.0 {
        return atoms.to_vec();
    }
    let mut rng = rng::stream(params.seed, &[rng::tag("jitter")]);
    atoms
        .iter()
        .map(|a| {
            let du: f64 = rng.sample(StandardNormal);
            let dv: f64 = rng.sample(StandardNormal);
            let db: f64 = rng.sample(StandardNormal);
            ProjectedAtom {
                u: a.u + params.pos_jitter * du,
                v: a.v + params.pos_jitter * dv,
                dist: a.dist,
                brightness: a.brightness * (1.0 + params.brightness_jitter * db).max(0.0),
            }
        })
        .collect()
}

pub fn gaussian_noise(img: &SimImage, params: &NoiseParams) -> SimImage {
    if params.gaussian_strength == 0.0 {
        return img.clone();
    }
    let mut rng = rng::stream(params.seed, &[rng::tag("gaussian")]);
    let normal = Normal::new(0.0, params.gaussian_strength).expect("validated std-dev");
    map_pixels(img, |_, p| p + normal.sample(&mut rng))
}

pub fn poisson_noise(img: &SimImage, params: &NoiseParams) -> SimImage {
    if params.poisson_strength == 0.0 {
        return img.clone();
    }
    let scale = 255.0 / params.poisson_strength;
    let mut rng = rng::stream(params.seed, &[rng::tag("poisson")]);
    map_pixels(img, |_, p| {
        let lambda = p * scale;
        if lambda > 0.0 {
            let count: f64 = Poisson::new(lambda).expect("positive rate").sample(&mut rng);
            count / scale
        } else {
            0.0
        }
    })
}

/// Row offsets: a moving average of [`STRIATION_WINDOW`] unit normals,
/// rescaled to unit variance, times `strength`.
pub fn striation_offsets(rows: usize, strength: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, &[rng::tag("striation")]);
    let raw: Vec<f64> = (0..rows + STRIATION_WINDOW - 1)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let norm = strength / (STRIATION_WINDOW as f64).sqrt();
    raw.windows(STRIATION_WINDOW)
        .map(|w| w.iter().sum::<f64>() * norm)
        .collect()
}

pub fn striation_noise(img: &SimImage, params: &NoiseParams) -> SimImage {
    if params.striation_strength == 0.0 {
        return img.clone();
    }
    let offsets = striation_offsets(img.size, params.striation_strength, params.seed);
    map_pixels(img, |i, p| p + offsets[i / img.size])
}

/// Poisson, then Gaussian, then striations; records `params` in the metadata.
pub fn apply_noise_pipeline(img: &SimImage, params: &NoiseParams) -> SimImage {
    let mut out = striation_noise(&gaussian_noise(&poisson_noise(img, params), params), params);
    out.meta.noise = Some(*params);
    out
}
