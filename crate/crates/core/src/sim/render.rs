use super::{spread_for, ImageMeta, LatticeSpec, ProjectedAtom, RenderParams, SimImage, CANVAS};
use crate::error::Result;

/// Peak brightness of an atom at `dist` from the cutting plane.
pub fn peak_brightness(dist: f64, falloff: f64) -> f64 {
    (-dist * dist / (2.0 * falloff * falloff)).exp()
}

/// Splats atoms onto a `CANVAS x CANVAS` image.
///
/// Coordinates are scaled by the lattice spread and shifted so their
/// centroid lands on the canvas centre. Overlapping blobs combine by max.
/// Atoms outside the canvas are cropped.
pub fn render(atoms: &[ProjectedAtom], spec: &LatticeSpec, params: &RenderParams) -> Result<SimImage> {
    params.validate()?;
    let mut pixels = vec![0f64; CANVAS * CANVAS];
    let meta = ImageMeta {
        lattice: spec.clone(),
        render: *params,
        noise: None,
        empty: atoms.is_empty(),
    };
    if atoms.is_empty() {
        return Ok(SimImage {
            size: CANVAS,
            pixels: vec![0.0; CANVAS * CANVAS],
            meta,
        });
    }

    let spread = spread_for(spec.lattice);
    let n = atoms.len() as f64;
    let (cu, cv) = atoms
        .iter()
        .fold((0.0, 0.0), |(su, sv), a| (su + a.u * spread, sv + a.v * spread));
    let (cu, cv) = (cu / n, cv / n);
    let centre = (CANVAS / 2) as f64;

    let sigma = params.psf_sigma;
    let inv_two_var = 1.0 / (2.0 * sigma * sigma);
    let radius = (4.0 * sigma).ceil();
    let last = (CANVAS - 1) as f64;

    for atom in atoms {
        let peak = atom.brightness * peak_brightness(atom.dist, params.brightness_falloff);
        if !(peak > 0.0) {
            continue;
        }
        let col = centre + atom.u * spread - cu;
        let row = centre + atom.v * spread - cv;
        if col < -radius || row < -radius || col > last + radius || row > last + radius {
            continue;
        }
        let c0 = (col - radius).ceil().max(0.0) as usize;
        let c1 = (col + radius).floor().min(last) as usize;
        let r0 = (row - radius).ceil().max(0.0) as usize;
        let r1 = (row + radius).floor().min(last) as usize;
        for r in r0..=r1 {
            let dy = r as f64 - row;
            let line = &mut pixels[r * CANVAS..(r + 1) * CANVAS];
            for (c, px) in line.iter_mut().enumerate().take(c1 + 1).skip(c0) {
                let dx = c as f64 - col;
                let value = peak * (-(dx * dx + dy * dy) * inv_two_var).exp();
                if value > *px {
                    *px = value;
                }
            }
        }
    }

    Ok(SimImage {
        size: CANVAS,
        pixels: pixels.into_iter().map(|p| p.clamp(0.0, 1.0) as f32).collect(),
        meta,
    })
}
