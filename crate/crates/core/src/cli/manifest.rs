//! Run manifests: what ran, with which resolved options, producing which
//! files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::args::ConfigFile;
use crate::error::{Error, Result};

pub const TOOL: &str = "stmforge";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory when inside it.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Fully resolved options; loading this block as a config file replays
    /// the run.
    pub config: ConfigFile,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<Artifact>,
    pub artifacts: Vec<Artifact>,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn file_name(command: &str) -> String {
        format!("{command}.manifest.json")
    }

    pub fn write(&self, out: &Path) -> Result<PathBuf> {
        let path = out.join(Self::file_name(&self.command));
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Parses `text` if it looks like a manifest.
    pub fn parse(text: &str) -> Option<RunManifest> {
        serde_json::from_str::<RunManifest>(text).ok().filter(|m| m.tool == TOOL)
    }
}

pub fn sha256_file(path: &Path) -> Result<(u64, String)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok((bytes.len() as u64, hex::encode(Sha256::digest(&bytes))))
}

pub fn artifact(path: &Path, out: &Path) -> Result<Artifact> {
    let (bytes, sha256) = sha256_file(path)?;
    let shown = path.strip_prefix(out).unwrap_or(path);
    Ok(Artifact {
        path: shown.to_string_lossy().replace('\\', "/"),
        bytes,
        sha256,
    })
}
