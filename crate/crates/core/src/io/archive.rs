//! Patch archives: `STMP1`, patch size and count as little-endian `u32`,
//! then row-major little-endian `f32` values. Provenance lives in a JSON
//! manifest next to the archive.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::image::{read_f32s, write_f32s};
use crate::error::{Error, Result};
use crate::patches::{Patch, PatchSource};
use crate::sim::LatticeType;

pub const ARCHIVE_MAGIC: &[u8; 5] = b"STMP1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveImage {
    pub id: u32,
    pub file: String,
    pub lattice: Option<LatticeType>,
    pub image_seed: Option<u64>,
    pub noise_seed: Option<u64>,
    /// Patches taken from this image.
    pub patches: usize,
    /// Why the image contributed nothing, if it did not.
    pub skipped: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub patch_size: usize,
    pub stride: usize,
    pub count: usize,
    pub seed: u64,
    pub subsample: Option<usize>,
    pub images: Vec<ArchiveImage>,
    /// Provenance of every patch, in archive order.
    pub sources: Vec<PatchSource>,
}

impl ArchiveManifest {
    pub fn lattice_of(&self, image_id: u32) -> Option<LatticeType> {
        self.images.iter().find(|i| i.id == image_id).and_then(|i| i.lattice)
    }
}

pub fn manifest_path(archive: &Path) -> PathBuf {
    archive.with_extension("json")
}

pub fn write_patches<W: Write>(mut w: W, patch_size: usize, patches: &[Patch]) -> Result<()> {
    let io = |e| Error::io("<archive>", e);
    if let Some(p) = patches.iter().find(|p| p.size != patch_size || p.values.len() != patch_size * patch_size) {
        return Err(Error::ShapeMismatch {
            context: "archive patch",
            expected: vec![patch_size, patch_size],
            actual: vec![p.size, p.values.len()],
        });
    }
    w.write_all(ARCHIVE_MAGIC).map_err(io)?;
    w.write_all(&(patch_size as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(patches.len() as u32).to_le_bytes()).map_err(io)?;
    for p in patches {
        write_f32s(&mut w, &p.values).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Raw patch values and the patch size.
pub fn read_patches<R: Read>(mut r: R) -> Result<(usize, Vec<Vec<f32>>)> {
    let fail = |what: &str| Error::format("patch archive", what.to_string());
    let mut header = [0u8; 13];
    r.read_exact(&mut header).map_err(|_| fail("truncated header"))?;
    if &header[..5] != ARCHIVE_MAGIC {
        return Err(fail("missing STMP1 magic"));
    }
    let size = u32::from_le_bytes(header[5..9].try_into().expect("4 bytes")) as usize;
    let count = u32::from_le_bytes(header[9..13].try_into().expect("4 bytes")) as usize;
    if size == 0 {
        return Err(fail("zero patch size"));
    }
    let values = read_f32s(&mut r, size * size * count).map_err(|_| fail("fewer values than the header declares"))?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::io("<archive>", e))? != 0 {
        return Err(fail("trailing bytes after the last patch"));
    }
    Ok((size, values.chunks(size * size).map(|c| c.to_vec()).collect()))
}

pub fn save_archive(path: &Path, patches: &[Patch], manifest: &ArchiveManifest) -> Result<[PathBuf; 2]> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_patches(BufWriter::new(f), manifest.patch_size, patches).map_err(|e| relabel(e, path))?;
    let mpath = manifest_path(path);
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))?;
    Ok([path.to_path_buf(), mpath])
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchArchive {
    pub manifest: ArchiveManifest,
    pub patches: Vec<Patch>,
}

pub fn load_archive(path: &Path) -> Result<PatchArchive> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let (size, values) = read_patches(BufReader::new(f))?;
    let mpath = manifest_path(path);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: ArchiveManifest = serde_json::from_str(&text)?;
    if manifest.patch_size != size || manifest.count != values.len() || manifest.sources.len() != values.len() {
        return Err(Error::format(
            "patch archive",
            format!("{} disagrees with its manifest", path.display()),
        ));
    }
    let patches = values
        .into_iter()
        .zip(&manifest.sources)
        .map(|(values, &source)| Patch { size, values, source })
        .collect();
    Ok(PatchArchive { manifest, patches })
}

fn relabel(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patch(i: u32, size: usize) -> Patch {
        Patch {
            size,
            values: (0..size * size).map(|k| (k as f32 * 0.01 + i as f32).sin()).collect(),
            source: PatchSource {
                image_id: i % 2,
                row: 4 * i,
                col: 0,
            },
        }
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_patches(&mut buf, 2, &[patch(0, 2)]).unwrap();
        assert_eq!(&buf[..5], b"STMP1");
        assert_eq!(&buf[5..9], &2u32.to_le_bytes());
        assert_eq!(&buf[9..13], &1u32.to_le_bytes());
        assert_eq!(buf.len(), 13 + 4 * 4);
    }

    #[test]
    fn bytes_round_trip() {
        let ps: Vec<Patch> = (0..5).map(|i| patch(i, 17)).collect();
        let mut buf = Vec::new();
        write_patches(&mut buf, 17, &ps).unwrap();
        let (size, values) = read_patches(&buf[..]).unwrap();
        assert_eq!(size, 17);
        assert_eq!(values, ps.iter().map(|p| p.values.clone()).collect::<Vec<_>>());
    }

    #[test]
    fn corrupt_archives_rejected() {
        let mut buf = Vec::new();
        write_patches(&mut buf, 3, &[patch(0, 3), patch(1, 3)]).unwrap();
        assert!(read_patches(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_patches(&extra[..]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_patches(&bad[..]).is_err());
        assert!(write_patches(Vec::new(), 4, &[patch(0, 3)]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ps: Vec<Patch> = (0..4).map(|i| patch(i, 16)).collect();
        let manifest = ArchiveManifest {
            patch_size: 16,
            stride: 4,
            count: 4,
            seed: 9,
            subsample: None,
            images: vec![],
            sources: ps.iter().map(|p| p.source).collect(),
        };
        let path = dir.path().join("p.stmp");
        save_archive(&path, &ps, &manifest).unwrap();
        let back = load_archive(&path).unwrap();
        assert_eq!(back.patches, ps);
        assert_eq!(back.manifest, manifest);
    }
}
