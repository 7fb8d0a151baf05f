//! Reconstruction quality metrics and latent-space projection.

pub mod metrics;
pub mod pca;

pub use metrics::{mse_metric, ssim_metric};
pub use pca::{pca_project, PcaProjection};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Autoencoder, ValueDomain};
use crate::nn::Mode;
use crate::patches::Patch;
use crate::sim::LatticeType;

const EVAL_CHUNK: usize = 256;

/// Anything that maps normalised patches to normalised reconstructions.
pub trait Reconstruct {
    /// Reconstructions in the `[-1, 1]` domain, one per patch, in order.
    fn reconstruct_patches(&mut self, patches: &[Patch]) -> Result<Vec<Vec<f64>>>;
}

impl Reconstruct for Autoencoder {
    fn reconstruct_patches(&mut self, patches: &[Patch]) -> Result<Vec<Vec<f64>>> {
        let domain = self.arch().domain();
        let mut out = Vec::with_capacity(patches.len());
        for group in patches.chunks(EVAL_CHUNK) {
            let x = self.input_tensor(group)?;
            let y = self.forward(&x, Mode::Eval)?;
            let item = y.item_len();
            out.extend(
                y.data()
                    .chunks(item)
                    .map(|r| r.iter().map(|&v| domain.to_signed(v)).collect()),
            );
        }
        Ok(out)
    }
}

/// Returns its input unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct Identity;

impl Reconstruct for Identity {
    fn reconstruct_patches(&mut self, patches: &[Patch]) -> Result<Vec<Vec<f64>>> {
        Ok(patches.iter().map(|p| p.values.iter().map(|&v| v as f64).collect()).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub lattice: LatticeType,
    pub config: String,
    pub avg_mse: f64,
    pub avg_ssim: f64,
}

/// Per-patch `(mse, ssim)` of `recon` against `patches`. MSE is taken on the
/// normalised values, SSIM after mapping both sides to `[0, 1]`.
pub fn score_reconstructions(patches: &[Patch], recon: &[Vec<f64>]) -> Result<Vec<(f64, f64)>> {
    if recon.len() != patches.len() {
        return Err(Error::ShapeMismatch {
            context: "reconstructions",
            expected: vec![patches.len()],
            actual: vec![recon.len()],
        });
    }
    let to_unit = |v: &[f64]| v.iter().map(|&x| ValueDomain::Signed.to_unit(x)).collect::<Vec<_>>();
    patches
        .par_iter()
        .zip(recon.par_iter())
        .map(|(p, r)| {
            let orig: Vec<f64> = p.values.iter().map(|&v| v as f64).collect();
            let mse = mse_metric(&orig, r)?;
            let ssim = ssim_metric(&to_unit(&orig), &to_unit(r), p.size)?;
            Ok((mse, ssim))
        })
        .collect()
}

pub fn patch_scores(net: &mut impl Reconstruct, patches: &[Patch]) -> Result<Vec<(f64, f64)>> {
    score_reconstructions(patches, &net.reconstruct_patches(patches)?)
}

/// Mean MSE and SSIM over `patches`; sums run in patch order.
pub fn evaluate(
    net: &mut impl Reconstruct,
    patches: &[Patch],
    lattice: LatticeType,
    config: &str,
) -> Result<MetricRecord> {
    if patches.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty patch set"));
    }
    let scores = patch_scores(net, patches)?;
    let n = scores.len() as f64;
    Ok(MetricRecord {
        lattice,
        config: config.to_string(),
        avg_mse: scores.iter().map(|s| s.0).sum::<f64>() / n,
        avg_ssim: scores.iter().map(|s| s.1).sum::<f64>() / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patches::PatchSource;
    use crate::rng;
    use rand::Rng;

    fn patches(n: usize, size: usize, seed: u64) -> Vec<Patch> {
        let mut r = rng::stream(seed, &[]);
        (0..n)
            .map(|i| Patch {
                size,
                values: (0..size * size).map(|_| r.random_range(-1.0f32..=1.0)).collect(),
                source: PatchSource {
                    image_id: 0,
                    row: i as u32,
                    col: 0,
                },
            })
            .collect()
    }

    /// Shifts every value by a constant.
    struct Offset(f64);

    impl Reconstruct for Offset {
        fn reconstruct_patches(&mut self, patches: &[Patch]) -> Result<Vec<Vec<f64>>> {
            Ok(patches.iter().map(|p| p.values.iter().map(|&v| v as f64 + self.0).collect()).collect())
        }
    }

    #[test]
    fn identity_is_perfect() {
        let rec = evaluate(&mut Identity, &patches(20, 17, 1), LatticeType::Fcc, "Baseline").unwrap();
        assert_eq!(rec.avg_mse, 0.0);
        assert_eq!(rec.avg_ssim, 1.0);
        assert_eq!(rec.config, "Baseline");
    }

    #[test]
    fn constant_offset_mse() {
        let rec = evaluate(&mut Offset(0.1), &patches(5, 16, 2), LatticeType::Hex1, "x").unwrap();
        assert!((rec.avg_mse - 0.01).abs() < 1e-12);
        assert!(rec.avg_ssim < 1.0);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(evaluate(&mut Identity, &[], LatticeType::Bcc, "x").is_err());
    }

    #[test]
    fn permutation_invariant() {
        let ps = patches(12, 17, 3);
        let mut rev = ps.clone();
        rev.reverse();
        let a = evaluate(&mut Offset(0.05), &ps, LatticeType::Bcc, "x").unwrap();
        let b = evaluate(&mut Offset(0.05), &rev, LatticeType::Bcc, "x").unwrap();
        assert!((a.avg_mse - b.avg_mse).abs() < 1e-12);
        assert!((a.avg_ssim - b.avg_ssim).abs() < 1e-12);
    }
}
