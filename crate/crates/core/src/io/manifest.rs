//! Sweep manifests: one JSON document listing every posed frame.
//!
//! Loading walks the document by hand so schema errors name the exact
//! location, e.g. `slices[3].pose`.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use super::pgm::{read_intensity_pgm, read_label_pgm, read_validity_pgm};
use super::{parse_json, read_string, write_json};
use crate::geometry::{GridSpec, Pose, PosedSlice, SliceGeometry};
use crate::{Error, Result, CLASS_NAMES};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SliceEntry {
    pub image: String,
    pub pose: [f64; 16],
    pub spacing: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validity: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepManifest {
    pub patient_id: String,
    pub classes: Vec<String>,
    /// Grid the sweep was simulated on, if known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    pub slices: Vec<SliceEntry>,
}

impl SweepManifest {
    pub fn new(patient_id: impl Into<String>, grid: Option<GridSpec>, slices: Vec<SliceEntry>) -> Self {
        SweepManifest {
            patient_id: patient_id.into(),
            classes: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
            grid,
            slices,
        }
    }
}

pub fn save_manifest(path: &Path, manifest: &SweepManifest) -> Result<()> {
    write_json(path, manifest)
}

fn get<'a>(obj: &'a Map<String, Value>, key: &str, at: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| Error::schema(join(at, key), "missing required field"))
}

fn join(at: &str, key: &str) -> String {
    if at.is_empty() {
        key.to_string()
    } else {
        format!("{at}.{key}")
    }
}

fn as_object<'a>(v: &'a Value, at: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| Error::schema(at, "expected an object"))
}

fn as_str<'a>(v: &'a Value, at: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| Error::schema(at, "expected a string"))
}

fn as_reals<const N: usize>(v: &Value, at: &str) -> Result<[f64; N]> {
    let arr = v.as_array().ok_or_else(|| Error::schema(at, format!("expected an array of {N} numbers")))?;
    if arr.len() != N {
        return Err(Error::schema(at, format!("expected {N} numbers, found {}", arr.len())));
    }
    let mut out = [0.0; N];
    for (i, x) in arr.iter().enumerate() {
        out[i] = x
            .as_f64()
            .ok_or_else(|| Error::schema(format!("{at}[{i}]"), "expected a number"))?;
    }
    Ok(out)
}

fn as_dims(v: &Value, at: &str) -> Result<[usize; 3]> {
    let r = as_reals::<3>(v, at)?;
    let mut out = [0; 3];
    for (i, x) in r.into_iter().enumerate() {
        if x < 1.0 || x.fract() != 0.0 {
            return Err(Error::schema(format!("{at}[{i}]"), "expected a positive integer"));
        }
        out[i] = x as usize;
    }
    Ok(out)
}

fn optional_str(obj: &Map<String, Value>, key: &str, at: &str) -> Result<Option<String>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => as_str(v, &join(at, key)).map(|s| Some(s.to_string())),
    }
}

fn check_file(base: &Path, rel: &str, at: &str) -> Result<()> {
    if base.join(rel).is_file() {
        Ok(())
    } else {
        Err(Error::schema(at, format!("referenced file '{rel}' does not exist")))
    }
}

/// Parses and validates a manifest; every referenced file must exist and
/// every pose must be a valid rigid transform.
pub fn load_manifest(path: &Path) -> Result<SweepManifest> {
    let doc = parse_json(path, &read_string(path)?)?;
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    let root = as_object(&doc, "<root>")?;

    let patient_id = as_str(get(root, "patient_id", "")?, "patient_id")?.to_string();
    let classes = match root.get("classes") {
        None => CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
        Some(v) => {
            let arr = v.as_array().ok_or_else(|| Error::schema("classes", "expected an array of names"))?;
            let names: Vec<String> = arr
                .iter()
                .enumerate()
                .map(|(i, n)| as_str(n, &format!("classes[{i}]")).map(str::to_string))
                .collect::<Result<_>>()?;
            if names != CLASS_NAMES {
                return Err(Error::schema("classes", format!("expected {CLASS_NAMES:?}")));
            }
            names
        }
    };
    let grid = match root.get("grid") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let g = as_object(v, "grid")?;
            let dims = as_dims(get(g, "dims", "grid")?, "grid.dims")?;
            let spacing = as_reals::<3>(get(g, "spacing", "grid")?, "grid.spacing")?;
            let origin = as_reals::<3>(get(g, "origin", "grid")?, "grid.origin")?;
            Some(GridSpec::new(dims, spacing, origin).map_err(|e| Error::schema("grid", e.to_string()))?)
        }
    };

    let list = get(root, "slices", "")?
        .as_array()
        .ok_or_else(|| Error::schema("slices", "expected an array"))?;
    if list.is_empty() {
        return Err(Error::schema("slices", "needs at least one slice"));
    }
    let mut slices = Vec::with_capacity(list.len());
    for (i, item) in list.iter().enumerate() {
        let at = format!("slices[{i}]");
        let obj = as_object(item, &at)?;
        let image = as_str(get(obj, "image", &at)?, &join(&at, "image"))?.to_string();
        check_file(&base, &image, &join(&at, "image"))?;
        let pose = as_reals::<16>(get(obj, "pose", &at)?, &join(&at, "pose"))?;
        Pose::from_row_major(&pose).map_err(|e| Error::schema(join(&at, "pose"), e.to_string()))?;
        let spacing = as_reals::<2>(get(obj, "spacing", &at)?, &join(&at, "spacing"))?;
        if spacing.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::schema(join(&at, "spacing"), "spacings must be positive"));
        }
        let validity = optional_str(obj, "validity", &at)?;
        if let Some(v) = &validity {
            check_file(&base, v, &join(&at, "validity"))?;
        }
        let labels = optional_str(obj, "labels", &at)?;
        if let Some(l) = &labels {
            check_file(&base, l, &join(&at, "labels"))?;
        }
        slices.push(SliceEntry {
            image,
            pose,
            spacing,
            validity,
            labels,
        });
    }
    Ok(SweepManifest {
        patient_id,
        classes,
        grid,
        slices,
    })
}

/// Reads every frame listed in `manifest`; relative paths resolve against
/// `base` (normally the manifest's directory).
pub fn load_slices(manifest: &SweepManifest, base: &Path) -> Result<Vec<PosedSlice>> {
    manifest
        .slices
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let at = format!("slices[{i}]");
            let resolve = |rel: &str| -> PathBuf { base.join(rel) };
            let (w, h, pixels) = read_intensity_pgm(&resolve(&e.image))?;
            let size_check = |(pw, ph): (usize, usize), key: &str| {
                if (pw, ph) == (w, h) {
                    Ok(())
                } else {
                    Err(Error::schema(
                        join(&at, key),
                        format!("is {pw}x{ph} but the image is {w}x{h}"),
                    ))
                }
            };
            let validity = match &e.validity {
                Some(p) => {
                    let (vw, vh, v) = read_validity_pgm(&resolve(p))?;
                    size_check((vw, vh), "validity")?;
                    v
                }
                None => vec![true; w * h],
            };
            let labels = match &e.labels {
                Some(p) => {
                    let (lw, lh, l) = read_label_pgm(&resolve(p))?;
                    size_check((lw, lh), "labels")?;
                    Some(l)
                }
                None => None,
            };
            let pose = Pose::from_row_major(&e.pose)?;
            let geom = SliceGeometry::new(w, h, e.spacing[0], e.spacing[1], pose)
                .map_err(|err| Error::schema(at.clone(), err.to_string()))?;
            PosedSlice::new(geom, pixels, validity, labels).map_err(|err| Error::schema(at.clone(), err.to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::write_intensity_pgm;

    const PIXELS: [f64; 4] = [-1.0, 0.25, -0.25, 1.0];

    fn write_sweep(dir: &Path, n: usize) -> PathBuf {
        let mut entries = Vec::new();
        for i in 0..n {
            let image = format!("img_{i}.pgm");
            write_intensity_pgm(&dir.join(&image), 2, 2, &PIXELS, 65535).unwrap();
            entries.push(SliceEntry {
                image,
                pose: Pose::translation(0.0, 0.0, i as f64).to_row_major(),
                spacing: [1.0, 1.0],
                validity: None,
                labels: None,
            });
        }
        let path = dir.join("manifest.json");
        save_manifest(&path, &SweepManifest::new("p1", None, entries)).unwrap();
        path
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_sweep(dir.path(), 3);
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.slices.len(), 3);
        let slices = load_slices(&m, dir.path()).unwrap();
        let expect: Vec<f64> = PIXELS
            .iter()
            .map(|&x| crate::io::intensity_from_level(crate::io::intensity_to_level(x, 65535), 65535))
            .collect();
        assert_eq!(slices[2].pixels(), expect.as_slice());
    }

    #[test]
    fn missing_pose_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_sweep(dir.path(), 5);
        let mut doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        doc["slices"][3].as_object_mut().unwrap().remove("pose");
        std::fs::write(&path, doc.to_string()).unwrap();
        match load_manifest(&path) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "slices[3].pose"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_pose_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_sweep(dir.path(), 2);
        let text = std::fs::read_to_string(&path).unwrap();
        let mut doc: Value = serde_json::from_str(&text).unwrap();
        doc["slices"][1]["pose"][0] = Value::from(2.0);
        std::fs::write(&path, doc.to_string()).unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(err.to_string().starts_with("slices[1].pose"), "{err}");

        std::fs::write(&path, &text).unwrap();
        std::fs::remove_file(dir.path().join("img_0.pgm")).unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(err.to_string().starts_with("slices[0].image"), "{err}");
    }
}
