//! On-disk formats: volume headers with raw payloads, OFF meshes, PGM
//! images, sweep manifests, run configs and reports. The byte layouts are
//! documented in `docs/formats.md`.

mod config;
mod manifest;
mod off;
mod pgm;
mod volume;

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::{Error, Result};

pub use config::{CompletionConfig, GridConfig, PhantomGridConfig, RunConfig, SegmentationConfig};
pub use manifest::{load_manifest, load_slices, save_manifest, SliceEntry, SweepManifest};
pub use off::{load_off, save_off};
pub use pgm::{
    intensity_from_level, intensity_to_level, read_intensity_pgm, read_label_pgm, read_pgm, read_validity_pgm,
    write_intensity_pgm, write_label_pgm, write_pgm, write_validity_pgm, Pgm,
};
pub use volume::{
    load_labels, load_scalar, load_sparse, raw_path, save_labels, save_scalar, save_sparse, DType, VolumeHeader,
    VolumeKind, VOLUME_FORMAT,
};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `bytes`, creating parent directories as needed.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Pretty-printed JSON with a trailing newline. Reals use the shortest
/// decimal form that parses back to the same `f64`.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(format!("json encoding: {e}")))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub(crate) fn parse_json(path: &Path, text: &str) -> Result<serde_json::Value> {
    serde_json::from_str(text).map_err(|e| Error::format(path, format!("invalid JSON: {e}")))
}
