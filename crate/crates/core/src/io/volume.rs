//! Volume files: a JSON header next to a raw little-endian payload.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{parse_json, read_bytes, read_string, write_bytes, write_json};
use crate::geometry::GridSpec;
use crate::volume::{LabelVolume, ScalarVolume, SparseVolume};
use crate::{Error, Result};

pub const VOLUME_FORMAT: &str = "icecontour-volume";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeKind {
    Scalar,
    Sparse,
    Labels,
}

impl VolumeKind {
    fn arrays(self) -> &'static [&'static str] {
        match self {
            VolumeKind::Scalar => &["intensity"],
            VolumeKind::Sparse => &["values", "occupancy"],
            VolumeKind::Labels => &["labels"],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    Float32,
    Float64,
    Uint8,
}

impl DType {
    fn size(self) -> usize {
        match self {
            DType::Float32 => 4,
            DType::Float64 => 8,
            DType::Uint8 => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeHeader {
    pub format: String,
    pub version: u32,
    pub kind: VolumeKind,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub dtype: DType,
    pub order: String,
    pub endianness: String,
    pub arrays: Vec<String>,
    /// Payload file name, relative to the header's directory.
    pub data: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slices_outside: Option<usize>,
}

/// Payload path for a header path: same stem, `.raw` extension.
pub fn raw_path(header: &Path) -> PathBuf {
    header.with_extension("raw")
}

fn header_for(path: &Path, kind: VolumeKind, grid: &GridSpec, dtype: DType) -> Result<VolumeHeader> {
    let data = raw_path(path)
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::validation(format!("{}: volume path needs a UTF-8 file name", path.display())))?
        .to_string();
    Ok(VolumeHeader {
        format: VOLUME_FORMAT.into(),
        version: VERSION,
        kind,
        dims: grid.dims,
        spacing: grid.spacing,
        origin: grid.origin,
        dtype,
        order: "x-fastest".into(),
        endianness: "little".into(),
        arrays: kind.arrays().iter().map(|s| s.to_string()).collect(),
        data,
        slices_outside: None,
    })
}

fn write_volume(path: &Path, header: &VolumeHeader, payload: &[u8]) -> Result<()> {
    write_bytes(&raw_path(path), payload)?;
    write_json(path, header)
}

/// Reads and checks the header, then the payload; returns the grid and one
/// byte slice per array.
fn read_volume(path: &Path, kind: VolumeKind) -> Result<(VolumeHeader, GridSpec, Vec<Vec<u8>>)> {
    let value = parse_json(path, &read_string(path)?)?;
    let header: VolumeHeader =
        serde_json::from_value(value).map_err(|e| Error::format(path, format!("bad volume header: {e}")))?;
    let bad = |msg: String| Error::format(path, msg);
    if header.format != VOLUME_FORMAT {
        return Err(bad(format!("format is '{}', expected '{VOLUME_FORMAT}'", header.format)));
    }
    if header.version != VERSION {
        return Err(bad(format!("unsupported version {}", header.version)));
    }
    if header.kind != kind {
        return Err(bad(format!("holds a {:?} volume, expected {:?}", header.kind, kind)));
    }
    if header.order != "x-fastest" || header.endianness != "little" {
        return Err(bad("only x-fastest little-endian payloads are supported".into()));
    }
    if header.arrays != kind.arrays() {
        return Err(bad(format!("arrays {:?} do not match kind (expected {:?})", header.arrays, kind.arrays())));
    }
    let dtype_ok = match kind {
        VolumeKind::Labels => header.dtype == DType::Uint8,
        _ => header.dtype != DType::Uint8,
    };
    if !dtype_ok {
        return Err(bad(format!("dtype {:?} is not valid for a {kind:?} volume", header.dtype)));
    }
    let grid = GridSpec::new(header.dims, header.spacing, header.origin).map_err(|e| bad(e.to_string()))?;

    let data_path = path.parent().unwrap_or(Path::new("")).join(&header.data);
    let payload = read_bytes(&data_path)?;
    let per_array = grid.len() * header.dtype.size();
    let expected = per_array * header.arrays.len();
    if payload.len() != expected {
        return Err(Error::format(
            &data_path,
            format!(
                "payload has {} bytes but the header implies {expected} ({:?} x {} {:?} array(s))",
                payload.len(),
                header.dims,
                header.arrays.len(),
                header.dtype
            ),
        ));
    }
    let arrays = payload.chunks(per_array).map(<[u8]>::to_vec).collect();
    Ok((header, grid, arrays))
}

fn encode_reals(values: &[f64], dtype: DType, out: &mut Vec<u8>) {
    match dtype {
        DType::Float32 => values.iter().for_each(|v| out.extend((*v as f32).to_le_bytes())),
        _ => values.iter().for_each(|v| out.extend(v.to_le_bytes())),
    }
}

fn decode_reals(bytes: &[u8], dtype: DType) -> Vec<f64> {
    match dtype {
        DType::Float32 => bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect(),
        _ => bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect(),
    }
}

/// Saves at `path` (the JSON header) plus the `.raw` payload beside it.
/// Reals are written as float64 so a load reproduces memory exactly.
pub fn save_scalar(path: &Path, vol: &ScalarVolume) -> Result<()> {
    let header = header_for(path, VolumeKind::Scalar, &vol.grid, DType::Float64)?;
    let mut payload = Vec::with_capacity(vol.data.len() * 8);
    encode_reals(&vol.data, DType::Float64, &mut payload);
    write_volume(path, &header, &payload)
}

pub fn load_scalar(path: &Path) -> Result<ScalarVolume> {
    let (header, grid, arrays) = read_volume(path, VolumeKind::Scalar)?;
    ScalarVolume::new(grid, decode_reals(&arrays[0], header.dtype)).map_err(|e| Error::format(path, e.to_string()))
}

pub fn save_sparse(path: &Path, vol: &SparseVolume) -> Result<()> {
    let mut header = header_for(path, VolumeKind::Sparse, &vol.grid, DType::Float64)?;
    header.slices_outside = Some(vol.slices_outside);
    let mut payload = Vec::with_capacity(vol.values.len() * 16);
    encode_reals(&vol.values, DType::Float64, &mut payload);
    encode_reals(&vol.occupancy, DType::Float64, &mut payload);
    write_volume(path, &header, &payload)
}

pub fn load_sparse(path: &Path) -> Result<SparseVolume> {
    let (header, grid, arrays) = read_volume(path, VolumeKind::Sparse)?;
    let mut vol = SparseVolume::new(grid, decode_reals(&arrays[0], header.dtype), decode_reals(&arrays[1], header.dtype))
        .map_err(|e| Error::format(path, e.to_string()))?;
    vol.slices_outside = header.slices_outside.unwrap_or(0);
    Ok(vol)
}

pub fn save_labels(path: &Path, vol: &LabelVolume) -> Result<()> {
    let header = header_for(path, VolumeKind::Labels, &vol.grid, DType::Uint8)?;
    write_volume(path, &header, &vol.classes)
}

pub fn load_labels(path: &Path) -> Result<LabelVolume> {
    let (_, grid, mut arrays) = read_volume(path, VolumeKind::Labels)?;
    LabelVolume::new(grid, arrays.remove(0)).map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::new([3, 4, 2], [0.5, 1.0, 2.0], [-1.0, 0.25, 3.0]).unwrap()
    }

    #[test]
    fn sparse_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.json");
        let g = grid();
        let values: Vec<f64> = (0..g.len()).map(|n| if n % 3 == 0 { 0.0 } else { (n as f64).sin() / 3.0 }).collect();
        let occupancy: Vec<f64> = (0..g.len()).map(|n| if n % 3 == 0 { 0.0 } else { 0.1 * n as f64 }).collect();
        let mut v = SparseVolume::new(g, values, occupancy).unwrap();
        v.slices_outside = 2;
        save_sparse(&path, &v).unwrap();
        assert_eq!(load_sparse(&path).unwrap(), v);
    }

    #[test]
    fn label_payload_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.json");
        let g = grid();
        let lab = LabelVolume::new(g, (0..g.len()).map(|n| (n % 7) as u8).collect()).unwrap();
        save_labels(&path, &lab).unwrap();
        let before = std::fs::read(raw_path(&path)).unwrap();
        let back = load_labels(&path).unwrap();
        save_labels(&path, &back).unwrap();
        assert_eq!(std::fs::read(raw_path(&path)).unwrap(), before);
        assert_eq!(back, lab);
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        save_scalar(&path, &ScalarVolume::filled(grid(), 0.5)).unwrap();
        let raw = raw_path(&path);
        let mut bytes = std::fs::read(&raw).unwrap();
        bytes.pop();
        std::fs::write(&raw, bytes).unwrap();
        let err = load_scalar(&path).unwrap_err();
        assert!(err.to_string().contains("payload has"), "{err}");
    }

    #[test]
    fn wrong_kind_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        save_scalar(&path, &ScalarVolume::filled(grid(), 0.5)).unwrap();
        assert!(load_labels(&path).is_err());
    }
}
