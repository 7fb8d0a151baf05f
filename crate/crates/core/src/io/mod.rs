//! File formats: PGM, raw image arrays with JSON sidecars, patch archives.

pub mod archive;
pub mod image;
pub mod pgm;

pub use archive::{load_archive, save_archive, ArchiveImage, ArchiveManifest, PatchArchive};
pub use image::{read_pgm_values, read_sim_image, write_sim_image, ImageSidecar};
pub use pgm::{read_pgm, write_pgm, Gray8};
