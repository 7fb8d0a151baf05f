//! Lattice simulation: site generation, tilted-plane projection and rendering.
//!
//! A simulated image is produced in four steps:
//!
//! 1. lay out lattice sites in the x/y plane ([`grid`]),
//! 2. intersect them with a randomly tilted plane and project each site into
//!    2D in-plane coordinates, remembering its distance to the plane
//!    ([`projection`]),
//! 3. rotate the 2D pattern in-plane by a third random angle,
//! 4. scale by the per-lattice spread and splat Gaussian blobs whose peak
//!    brightness falls off with that distance ([`render`]).
//!
//! Noise is applied afterwards by [`crate::noise`].

pub mod grid;
pub mod projection;
pub mod render;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{self, NoiseParams};
use crate::rng;

pub use grid::{cubic_grid, hex1_grid, hex2_grid};
pub use projection::{plane_normal, project_to_plane, rotate2d, tilt_height, PlaneProjection};
pub use render::render;

/// Side length of every simulated image, in pixels.
pub const CANVAS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatticeType {
    SimpleCubic,
    Bcc,
    Fcc,
    Hex1,
    Hex2,
}

impl LatticeType {
    pub const ALL: [LatticeType; 5] = [
        LatticeType::SimpleCubic,
        LatticeType::Bcc,
        LatticeType::Fcc,
        LatticeType::Hex1,
        LatticeType::Hex2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LatticeType::SimpleCubic => "simple-cubic",
            LatticeType::Bcc => "bcc",
            LatticeType::Fcc => "fcc",
            LatticeType::Hex1 => "hex1",
            LatticeType::Hex2 => "hex2",
        }
    }

    pub fn is_cubic(self) -> bool {
        matches!(
            self,
            LatticeType::SimpleCubic | LatticeType::Bcc | LatticeType::Fcc
        )
    }
}

impl fmt::Display for LatticeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LatticeType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "simple-cubic" | "sc" | "cubic" => Ok(LatticeType::SimpleCubic),
            "bcc" => Ok(LatticeType::Bcc),
            "fcc" => Ok(LatticeType::Fcc),
            "hex1" | "hexagonal-1" => Ok(LatticeType::Hex1),
            "hex2" | "hexagonal-2" => Ok(LatticeType::Hex2),
            other => Err(Error::invalid(format!("unknown lattice type `{other}`"))),
        }
    }
}

/// Scale factor applied to projected coordinates before rendering.
pub fn spread_for(lattice: LatticeType) -> f64 {
    match lattice {
        LatticeType::SimpleCubic => 10.0,
        LatticeType::Bcc => 13.0,
        LatticeType::Fcc => 18.0,
        LatticeType::Hex1 => 14.0,
        LatticeType::Hex2 => 10.0,
    }
}

/// Raw orientation draws in `[0, 1)`, scaled to angles on access.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientationAngles {
    pub alpha_raw: f64,
    pub theta_raw: f64,
    pub phi_raw: f64,
}

impl OrientationAngles {
    pub fn new(alpha_raw: f64, theta_raw: f64, phi_raw: f64) -> Self {
        Self {
            alpha_raw,
            theta_raw,
            phi_raw,
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            alpha_raw: rng.random(),
            theta_raw: rng.random(),
            phi_raw: rng.random(),
        }
    }

    /// Tilt of the cutting plane, in `[0, pi/3]`.
    pub fn alpha(&self) -> f64 {
        self.alpha_raw * PI / 3.0
    }

    /// Azimuth of the tilt direction, in `[0, pi/3]`.
    pub fn theta(&self) -> f64 {
        self.theta_raw * PI / 3.0
    }

    /// In-plane rotation, in `[0, pi]`.
    pub fn phi(&self) -> f64 {
        self.phi_raw * PI
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub lattice: LatticeType,
    /// Lattice constant in image units.
    pub a: f64,
    pub angles: OrientationAngles,
    /// Half-width of the generated site block, in cells.
    pub extent: u32,
    pub seed: u64,
}

impl LatticeSpec {
    /// Draws orientation angles from a stream keyed by `seed`.
    pub fn random(lattice: LatticeType, a: f64, extent: u32, seed: u64) -> Result<Self> {
        let angles = OrientationAngles::random(&mut rng::stream(seed, &[rng::tag("angles")]));
        let spec = Self {
            lattice,
            a,
            angles,
            extent,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(Error::invalid(format!(
                "lattice constant must be positive, got {}",
                self.a
            )));
        }
        if self.extent < 1 {
            return Err(Error::invalid("lattice extent must be at least 1"));
        }
        let raw = [
            self.angles.alpha_raw,
            self.angles.theta_raw,
            self.angles.phi_raw,
        ];
        if raw.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::invalid(format!(
                "orientation draws must lie in [0, 1], got {raw:?}"
            )));
        }
        Ok(())
    }
}

/// Smallest extent whose scaled sites overfill the canvas for `lattice`.
pub fn default_extent(lattice: LatticeType, a: f64) -> u32 {
    // half-diagonal of the canvas plus a blob-width margin
    let reach = (CANVAS as f64) * std::f64::consts::FRAC_1_SQRT_2 + 12.0;
    (reach / (a * spread_for(lattice))).ceil() as u32 + 1
}

/// A lattice site ready for projection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AtomSite {
    pub x: f64,
    pub y: f64,
    /// Height of the tilt plane above `(x, y)`.
    pub z: f64,
    /// Basis height within the cell (zero for hexagonal sheets). Carried
    /// for reference; projection does not read it.
    pub z0: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectedAtom {
    pub u: f64,
    pub v: f64,
    /// Distance from the intersection plane, never negative.
    pub dist: f64,
    /// Brightness multiplier; 1 unless jittered.
    pub brightness: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderParams {
    /// Gaussian blob width in pixels.
    pub psf_sigma: f64,
    /// Distance at which peak brightness has fallen to `exp(-1/2)`.
    pub brightness_falloff: f64,
    /// Snap each site's height down to its lattice layer before projecting.
    pub use_floor: bool,
}

impl RenderParams {
    pub fn for_lattice_constant(a: f64) -> Self {
        Self {
            psf_sigma: 3.0,
            brightness_falloff: a / 2.0,
            use_floor: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.psf_sigma.is_finite() && self.psf_sigma > 0.0) {
            return Err(Error::invalid("psf_sigma must be positive"));
        }
        if !(self.brightness_falloff.is_finite() && self.brightness_falloff > 0.0) {
            return Err(Error::invalid("brightness_falloff must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub lattice: LatticeSpec,
    pub render: RenderParams,
    pub noise: Option<NoiseParams>,
    /// Set when no atom reached the renderer.
    pub empty: bool,
}

/// A square intensity image in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SimImage {
    pub size: usize,
    pub pixels: Vec<f32>,
    pub meta: ImageMeta,
}

impl SimImage {
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.size + col]
    }
}

/// Sites of `spec` with the tilt-plane height filled in.
pub fn lattice_sites(spec: &LatticeSpec) -> Result<Vec<AtomSite>> {
    spec.validate()?;
    let angles = &spec.angles;
    let site = |x: f64, y: f64, z0: f64| AtomSite {
        x,
        y,
        z: tilt_height(x, y, angles),
        z0,
    };
    let sites = match spec.lattice {
        LatticeType::Hex1 => hex1_grid(spec.a, spec.extent)?
            .into_iter()
            .map(|[x, y]| site(x, y, 0.0))
            .collect(),
        LatticeType::Hex2 => hex2_grid(spec.a, spec.extent)?
            .into_iter()
            .map(|[x, y]| site(x, y, 0.0))
            .collect(),
        cubic => cubic_grid(cubic, spec.a, spec.extent)?
            .into_iter()
            // the top face repeats the bottom one a period higher
            .filter(|p| p[2] < spec.a)
            .map(|[x, y, z0]| site(x, y, z0))
            .collect(),
    };
    Ok(sites)
}

/// Projects and rotates every site of `spec` into 2D.
pub fn project_lattice(spec: &LatticeSpec, use_floor: bool) -> Result<Vec<ProjectedAtom>> {
    let angles = spec.angles;
    Ok(lattice_sites(spec)?
        .iter()
        .map(|site| {
            let p = project_to_plane(site, &angles, use_floor);
            let (u, v) = rotate2d(p.proj_x, p.proj_y, angles.phi_raw);
            ProjectedAtom {
                u,
                v,
                dist: p.dist,
                brightness: 1.0,
            }
        })
        .collect())
}

/// Full clean-to-noisy pipeline for one image.
pub fn simulate(spec: &LatticeSpec, render_params: &RenderParams, noise_params: &NoiseParams) -> Result<SimImage> {
    render_params.validate()?;
    noise_params.validate()?;
    let atoms = project_lattice(spec, render_params.use_floor)?;
    let atoms = noise::jitter_atoms(&atoms, noise_params);
    let clean = render(&atoms, spec, render_params)?;
    Ok(noise::apply_noise_pipeline(&clean, noise_params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spread_table() {
        assert_eq!(spread_for(LatticeType::Fcc), 18.0);
        assert_eq!(spread_for(LatticeType::SimpleCubic), 10.0);
        assert_eq!(spread_for(LatticeType::Hex1), 14.0);
        assert_eq!(spread_for(LatticeType::Bcc), 13.0);
        assert_eq!(spread_for(LatticeType::Hex2), 10.0);
        for l in LatticeType::ALL {
            assert!(spread_for(l) > 0.0);
        }
    }

    #[test]
    fn lattice_names_round_trip() {
        for l in LatticeType::ALL {
            assert_eq!(l.name().parse::<LatticeType>().unwrap(), l);
        }
        assert!("diamond".parse::<LatticeType>().is_err());
    }

    #[test]
    fn angle_scaling() {
        let a = OrientationAngles::new(1.0, 0.5, 0.5);
        assert!((a.alpha() - PI / 3.0).abs() < 1e-15);
        assert!((a.theta() - PI / 6.0).abs() < 1e-15);
        assert!((a.phi() - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn spec_validation() {
        assert!(LatticeSpec::random(LatticeType::Hex1, 0.0, 3, 1).is_err());
        assert!(LatticeSpec::random(LatticeType::Hex1, -1.0, 3, 1).is_err());
        assert!(LatticeSpec::random(LatticeType::Hex1, 1.0, 0, 1).is_err());
        let s = LatticeSpec::random(LatticeType::Hex1, 1.0, 3, 1).unwrap();
        for r in [s.angles.alpha_raw, s.angles.theta_raw, s.angles.phi_raw] {
            assert!((0.0..1.0).contains(&r));
        }
    }

    #[test]
    fn zero_tilt_sites_sit_on_the_plane() {
        for lattice in LatticeType::ALL {
            let mut spec = LatticeSpec::random(lattice, 1.0, 4, 11).unwrap();
            spec.angles.alpha_raw = 0.0;
            let atoms = project_lattice(&spec, true).unwrap();
            assert!(!atoms.is_empty());
            assert!(atoms.iter().all(|a| a.dist == 0.0), "{lattice}");
        }
    }

    #[test]
    fn simulate_is_deterministic() {
        let spec = LatticeSpec::random(LatticeType::Fcc, 1.0, default_extent(LatticeType::Fcc, 1.0), 5).unwrap();
        let render = RenderParams::for_lattice_constant(1.0);
        let noise = NoiseParams {
            gaussian_strength: 0.05,
            poisson_strength: 1.0,
            striation_strength: 0.03,
            pos_jitter: 0.02,
            brightness_jitter: 0.05,
            seed: 9,
        };
        let a = simulate(&spec, &render, &noise).unwrap();
        let b = simulate(&spec, &render, &noise).unwrap();
        assert_eq!(a.pixels, b.pixels);
        assert!(a.pixels.iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p)));
    }

    #[test]
    fn default_extent_overfills_canvas() {
        for lattice in LatticeType::ALL {
            let extent = default_extent(lattice, 1.0);
            let spec = LatticeSpec::random(lattice, 1.0, extent, 3).unwrap();
            let img = render(
                &project_lattice(&spec, true).unwrap(),
                &spec,
                &RenderParams::for_lattice_constant(1.0),
            )
            .unwrap();
            // every 32x32 block of the canvas holds at least one bright atom
            for by in 0..8 {
                for bx in 0..8 {
                    let peak = (0..32)
                        .flat_map(|r| (0..32).map(move |c| (by * 32 + r, bx * 32 + c)))
                        .map(|(r, c)| img.get(r, c))
                        .fold(0.0f32, f32::max);
                    assert!(peak > 0.1, "{lattice}: block ({by},{bx}) is empty");
                }
            }
        }
    }
}
