//! Simulated images on disk: an 8-bit PGM for viewing, a raw little-endian
//! `.f32` array with the exact values, and a JSON sidecar with metadata.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pgm::{read_pgm, to_u8, write_pgm, Gray8};
use crate::error::{Error, Result};
use crate::sim::{ImageMeta, SimImage};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageSidecar {
    pub width: usize,
    pub height: usize,
    /// File name of the raw array, relative to the sidecar.
    pub data: String,
    pub meta: ImageMeta,
}

pub fn write_f32s<W: Write>(mut w: W, values: &[f32]) -> std::io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

pub fn read_f32s<R: Read>(mut r: R, count: usize) -> std::io::Result<Vec<f32>> {
    let mut bytes = vec![0u8; count * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn gray8(values: &[f32], width: usize, height: usize) -> Gray8 {
    Gray8 {
        width,
        height,
        pixels: values.iter().map(|&v| to_u8(v as f64)).collect(),
    }
}

/// Writes `<stem>.pgm`, `<stem>.f32` and `<stem>.json` into `dir`.
pub fn write_sim_image(dir: &Path, stem: &str, img: &SimImage) -> Result<Vec<PathBuf>> {
    let pgm = dir.join(format!("{stem}.pgm"));
    let raw = dir.join(format!("{stem}.f32"));
    let json = dir.join(format!("{stem}.json"));

    write_pgm(create(&pgm)?, &gray8(&img.pixels, img.size, img.size))?;
    write_f32s(create(&raw)?, &img.pixels).map_err(|e| Error::io(&raw, e))?;
    let sidecar = ImageSidecar {
        width: img.size,
        height: img.size,
        data: format!("{stem}.f32"),
        meta: img.meta.clone(),
    };
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
    Ok(vec![pgm, raw, json])
}

/// Loads an image through its JSON sidecar.
pub fn read_sim_image(sidecar_path: &Path) -> Result<SimImage> {
    let text = fs::read_to_string(sidecar_path).map_err(|e| Error::io(sidecar_path, e))?;
    let sidecar: ImageSidecar = serde_json::from_str(&text)?;
    if sidecar.width != sidecar.height || sidecar.width == 0 {
        return Err(Error::format(
            "image sidecar",
            format!("expected a non-empty square image, got {}x{}", sidecar.width, sidecar.height),
        ));
    }
    let raw = sidecar_path.with_file_name(&sidecar.data);
    let f = File::open(&raw).map_err(|e| Error::io(&raw, e))?;
    let pixels = read_f32s(BufReader::new(f), sidecar.width * sidecar.height).map_err(|e| Error::io(&raw, e))?;
    Ok(SimImage {
        size: sidecar.width,
        pixels,
        meta: sidecar.meta,
    })
}

/// Loads a square PGM as intensities in `[0, 1]`.
pub fn read_pgm_values(path: &Path) -> Result<(usize, Vec<f32>)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let img = read_pgm(BufReader::new(f))?;
    if img.width != img.height {
        return Err(Error::format("pgm", format!("{}: image is not square", path.display())));
    }
    Ok((img.width, img.pixels.iter().map(|&p| p as f32 / 255.0).collect()))
}
