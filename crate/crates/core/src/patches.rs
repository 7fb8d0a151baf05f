//! Normalisation, strided patch extraction, dihedral augmentation and
//! train/validation splitting.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::sim::SimImage;

/// Where a patch was cut from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PatchSource {
    pub image_id: u32,
    pub row: u32,
    pub col: u32,
}

/// A square tile of normalised intensities, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub size: usize,
    pub values: Vec<f32>,
    pub source: PatchSource,
}

/// Maps the image extremes to -1 and +1.
pub fn normalize(values: &[f32]) -> Result<Vec<f32>> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v as f64), hi.max(v as f64))
        });
    if !(hi > lo) {
        return Err(Error::Degenerate(format!(
            "cannot normalise a constant image (min = max = {lo})"
        )));
    }
    let span = hi - lo;
    let sum = hi + lo;
    Ok(values
        .iter()
        .map(|&v| ((2.0 * v as f64 - sum) / span) as f32)
        .collect())
}

pub fn patch_count(image_size: usize, patch: usize, stride: usize) -> usize {
    if patch == 0 || patch > image_size || stride == 0 {
        return 0;
    }
    let per_axis = (image_size - patch) / stride + 1;
    per_axis * per_axis
}

/// Every `patch x patch` window whose top-left corner lies on the stride grid.
pub fn extract_patches(
    values: &[f32],
    image_size: usize,
    image_id: u32,
    patch: usize,
    stride: usize,
) -> Result<Vec<Patch>> {
    if values.len() != image_size * image_size {
        return Err(Error::ShapeMismatch {
            context: "extract_patches",
            expected: vec![image_size, image_size],
            actual: vec![values.len()],
        });
    }
    if patch == 0 || patch > image_size {
        return Err(Error::invalid(format!(
            "patch size {patch} does not fit a {image_size}x{image_size} image"
        )));
    }
    if stride == 0 {
        return Err(Error::invalid("stride must be at least 1"));
    }
    let offsets: Vec<usize> = (0..=image_size - patch).step_by(stride).collect();
    let mut out = Vec::with_capacity(offsets.len() * offsets.len());
    for &row in &offsets {
        for &col in &offsets {
            let mut tile = Vec::with_capacity(patch * patch);
            for r in row..row + patch {
                tile.extend_from_slice(&values[r * image_size + col..r * image_size + col + patch]);
            }
            out.push(Patch {
                size: patch,
                values: tile,
                source: PatchSource {
                    image_id,
                    row: row as u32,
                    col: col as u32,
                },
            });
        }
    }
    Ok(out)
}

/// An element of the square's symmetry group: counter-clockwise quarter
/// turns followed by optional horizontal and vertical mirrors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dihedral {
    pub quarter_turns: u8,
    pub flip_h: bool,
    pub flip_v: bool,
}

impl Dihedral {
    pub const IDENTITY: Dihedral = Dihedral {
        quarter_turns: 0,
        flip_h: false,
        flip_v: false,
    };

    /// The eight distinct group elements.
    pub fn elements() -> impl Iterator<Item = Dihedral> {
        (0..4u8).flat_map(|q| {
            [false, true].into_iter().map(move |f| Dihedral {
                quarter_turns: q,
                flip_h: f,
                flip_v: false,
            })
        })
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            quarter_turns: rng.random_range(0..4),
            flip_h: rng.random_bool(0.5),
            flip_v: rng.random_bool(0.5),
        }
    }

    /// Draw used for training sample `index` in `epoch`.
    pub fn for_sample(seed: u64, epoch: u64, index: u64) -> Self {
        Self::random(&mut rng::stream(seed, &[rng::tag("augment"), epoch, index]))
    }

    /// Source index in the input for output position `(r, c)`.
    fn source(&self, size: usize, r: usize, c: usize) -> (usize, usize) {
        let last = size - 1;
        // undo the flips, then the rotation
        let r = if self.flip_v { last - r } else { r };
        let c = if self.flip_h { last - c } else { c };
        let (mut r, mut c) = (r, c);
        for _ in 0..self.quarter_turns % 4 {
            // one ccw quarter turn maps input (r, c) to output (last - c, r)
            (r, c) = (c, last - r);
        }
        (r, c)
    }

    pub fn apply<T: Copy>(&self, values: &[T], size: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(values.len());
        for r in 0..size {
            for c in 0..size {
                let (sr, sc) = self.source(size, r, c);
                out.push(values[sr * size + sc]);
            }
        }
        out
    }

    /// The single element equal to applying `self` and then `next`.
    pub fn then(self, next: Dihedral) -> Dihedral {
        let probe: Vec<u32> = (0..9).collect();
        let target = next.apply(&self.apply(&probe, 3), 3);
        Dihedral::elements()
            .find(|g| g.apply(&probe, 3) == target)
            .expect("dihedral group is closed")
    }
}

pub fn augment(patch: &Patch, seed: u64) -> Patch {
    let g = Dihedral::random(&mut rng::stream(seed, &[rng::tag("augment")]));
    augment_with(patch, g)
}

pub fn augment_with(patch: &Patch, g: Dihedral) -> Patch {
    Patch {
        size: patch.size,
        values: g.apply(&patch.values, patch.size),
        source: patch.source,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Patch>,
    pub val: Vec<Patch>,
    pub split_fraction: f64,
    pub seed: u64,
}

/// Normalises each image, cuts patches and hands them to [`sample_and_split`].
pub fn build_dataset(
    images: &[SimImage],
    patch: usize,
    stride: usize,
    patches_per_image: usize,
    split_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    let per_image = images
        .iter()
        .enumerate()
        .map(|(id, img)| {
            let norm = normalize(&img.pixels)?;
            extract_patches(&norm, img.size, id as u32, patch, stride)
        })
        .collect::<Result<Vec<_>>>()?;
    sample_and_split(per_image, patches_per_image, split_fraction, seed)
}

/// Keeps `keep` of `patches`, chosen uniformly without replacement by a
/// stream keyed on `(seed, image)`. Survivors stay in their original order.
pub fn subsample_patches(patches: Vec<Patch>, keep: usize, seed: u64, image: u64) -> Result<Vec<Patch>> {
    if keep > patches.len() {
        return Err(Error::invalid(format!(
            "requested {keep} patches from image {image}, only {} available",
            patches.len()
        )));
    }
    let mut rng = rng::stream(seed, &[rng::tag("subsample"), image]);
    let mut chosen = index::sample(&mut rng, patches.len(), keep).into_vec();
    chosen.sort_unstable();
    let mut taken: Vec<Option<Patch>> = patches.into_iter().map(Some).collect();
    Ok(chosen
        .into_iter()
        .map(|k| taken[k].take().expect("indices are distinct"))
        .collect())
}

/// Draws `patches_per_image` patches per image without replacement, then
/// splits the pooled set by patch.
pub fn sample_and_split(
    per_image: Vec<Vec<Patch>>,
    patches_per_image: usize,
    split_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "split fraction must lie in (0, 1), got {split_fraction}"
        )));
    }
    let mut pooled = Vec::with_capacity(per_image.len() * patches_per_image);
    for (i, patches) in per_image.into_iter().enumerate() {
        pooled.extend(subsample_patches(patches, patches_per_image, seed, i as u64)?);
    }

    pooled.shuffle(&mut rng::stream(seed, &[rng::tag("split")]));
    let n_train = (pooled.len() as f64 * split_fraction).round() as usize;
    let val = pooled.split_off(n_train);
    Ok(DatasetSplit {
        train: pooled,
        val,
        split_fraction,
        seed,
    })
}
