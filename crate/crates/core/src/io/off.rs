//! Triangle meshes in OFF with the class id in a `# class_id N` comment.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Point3;

use super::{read_string, write_bytes};
use crate::mesh::Mesh;
use crate::{Error, Result};

/// Coordinates use Rust's shortest round-trip formatting, so loading gives
/// back the same `f64` values.
pub fn save_off(path: &Path, mesh: &Mesh) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "OFF\n# class_id {}", mesh.class_id);
    let _ = writeln!(s, "{} {} 0", mesh.vertices.len(), mesh.faces.len());
    for v in &mesh.vertices {
        let _ = writeln!(s, "{} {} {}", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    write_bytes(path, s.as_bytes())
}

pub fn load_off(path: &Path) -> Result<Mesh> {
    let text = read_string(path)?;
    let bad = |line: usize, msg: &str| Error::format(path, format!("line {line}: {msg}"));
    let mut class_id = None;
    let mut lines = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(id) = comment.trim().strip_prefix("class_id") {
                class_id = Some(id.trim().parse::<u8>().map_err(|_| bad(n + 1, "bad class_id"))?);
            }
            continue;
        }
        if !line.is_empty() {
            lines.push((n + 1, line));
        }
    }
    let mut it = lines.into_iter();
    match it.next() {
        Some((_, "OFF")) => {}
        _ => return Err(Error::format(path, "missing OFF magic")),
    }
    let (ln, counts) = it.next().ok_or_else(|| Error::format(path, "missing counts line"))?;
    let counts: Vec<usize> = counts
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad(ln, "bad count")))
        .collect::<Result<_>>()?;
    let [nv, nf, ..] = counts[..] else {
        return Err(bad(ln, "expected vertex and face counts"));
    };

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = it.next().ok_or_else(|| Error::format(path, "too few vertex lines"))?;
        let c: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(ln, "bad coordinate")))
            .collect::<Result<_>>()?;
        if c.len() != 3 {
            return Err(bad(ln, "vertex needs 3 coordinates"));
        }
        vertices.push(Point3::new(c[0], c[1], c[2]));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = it.next().ok_or_else(|| Error::format(path, "too few face lines"))?;
        let idx: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(ln, "bad index")))
            .collect::<Result<_>>()?;
        if idx.len() != 4 || idx[0] != 3 {
            return Err(bad(ln, "only triangles are supported"));
        }
        faces.push([idx[1], idx[2], idx[3]]);
    }
    if let Some((ln, _)) = it.next() {
        return Err(bad(ln, "trailing data after the last face"));
    }
    let class_id = class_id.ok_or_else(|| Error::format(path, "missing '# class_id N' comment"))?;
    Mesh::new(vertices, faces, class_id).map_err(|e| Error::format(path, e.to_string()))
}
