//! Inside/outside voxelization of watertight meshes by +x ray parity.
//!
//! Every voxel row (fixed `j`, `k`) casts one ray along +x. The ray's
//! (y, z) is nudged by a tiny fixed offset so that rays almost never pass
//! exactly through mesh edges or vertices; when one still does, a top-left
//! ownership rule assigns the hit to exactly one of the triangles sharing
//! that edge, so a closed surface is always crossed an even number of times.
//! A voxel is inside when an odd number of crossings lie strictly beyond its
//! centre, which makes box-shaped regions half-open: `[min, max)` per axis.

use crate::geometry::GridSpec;
use crate::mesh::Mesh;
use crate::volume::LabelVolume;
use crate::Result;

/// Ray offsets, as fractions of the voxel spacing along y and z.
const NUDGE: [f64; 2] = [3.1415926e-7, 2.7182818e-7];

/// Does the 2D edge `p -> q` own points lying exactly on it?
#[inline]
fn owns_edge(p: [f64; 2], q: [f64; 2]) -> bool {
    let d = [q[0] - p[0], q[1] - p[1]];
    d[0] > 0.0 || (d[0] == 0.0 && d[1] < 0.0)
}

#[inline]
fn edge_fn(p: [f64; 2], q: [f64; 2], x: [f64; 2]) -> f64 {
    (q[0] - p[0]) * (x[1] - p[1]) - (q[1] - p[1]) * (x[0] - p[0])
}

/// x coordinate where the line `(y, z) = yz` pierces the triangle, if it
/// does.
fn pierce(tri: [[f64; 3]; 3], yz: [f64; 2]) -> Option<f64> {
    let a = [tri[0][1], tri[0][2]];
    let mut b = [tri[1][1], tri[1][2]];
    let mut c = [tri[2][1], tri[2][2]];
    let xa = tri[0][0];
    let (mut xb, mut xc) = (tri[1][0], tri[2][0]);
    let area = edge_fn(a, b, c);
    if area == 0.0 {
        return None;
    }
    if area < 0.0 {
        std::mem::swap(&mut b, &mut c);
        std::mem::swap(&mut xb, &mut xc);
    }
    let area = area.abs();
    // Barycentric weight of each vertex is the edge function of the
    // opposite edge.
    let wa = edge_fn(b, c, yz);
    let wb = edge_fn(c, a, yz);
    let wc = edge_fn(a, b, yz);
    for (w, p, q) in [(wa, b, c), (wb, c, a), (wc, a, b)] {
        if w < 0.0 || (w == 0.0 && !owns_edge(p, q)) {
            return None;
        }
    }
    Some((wa * xa + wb * xb + wc * xc) / area)
}

/// Sorted x positions where the nudged +x ray of row `(j, k)` crosses the
/// mesh, for every row of `grid` (indexed `j + ny * k`).
pub fn row_crossings(mesh: &Mesh, grid: &GridSpec) -> Vec<Vec<f64>> {
    let [_, ny, nz] = grid.dims;
    let dy = NUDGE[0] * grid.spacing[1];
    let dz = NUDGE[1] * grid.spacing[2];
    let mut rows = vec![Vec::new(); ny * nz];
    for f in &mesh.faces {
        let tri = f.map(|i| {
            let v = mesh.vertices[i];
            [v.x, v.y, v.z]
        });
        let (mut ylo, mut yhi, mut zlo, mut zhi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for v in &tri {
            ylo = ylo.min(v[1]);
            yhi = yhi.max(v[1]);
            zlo = zlo.min(v[2]);
            zhi = zhi.max(v[2]);
        }
        let jr = index_range(ylo - dy, yhi - dy, grid.origin[1], grid.spacing[1], ny);
        let kr = index_range(zlo - dz, zhi - dz, grid.origin[2], grid.spacing[2], nz);
        for k in kr {
            let z = grid.origin[2] + k as f64 * grid.spacing[2] + dz;
            for j in jr.clone() {
                let y = grid.origin[1] + j as f64 * grid.spacing[1] + dy;
                if let Some(x) = pierce(tri, [y, z]) {
                    rows[j + ny * k].push(x);
                }
            }
        }
    }
    for r in &mut rows {
        r.sort_by(f64::total_cmp);
    }
    rows
}

/// Voxel indices whose centres can fall in `[lo, hi]`, padded by one.
fn index_range(lo: f64, hi: f64, origin: f64, spacing: f64, n: usize) -> std::ops::Range<usize> {
    let a = ((lo - origin) / spacing).floor() - 1.0;
    let b = ((hi - origin) / spacing).ceil() + 1.0;
    let a = a.max(0.0).min(n as f64) as usize;
    let b = (b + 1.0).max(0.0).min(n as f64) as usize;
    a..b.max(a)
}

/// Label volume with `mesh.class_id` at every voxel whose centre is inside
/// the surface. Errors if the mesh is not watertight.
pub fn voxelize_mesh(mesh: &Mesh, grid: &GridSpec) -> Result<LabelVolume> {
    let mut out = LabelVolume::background(*grid);
    paint(mesh, &mut out)?;
    Ok(out)
}

/// Voxelizes several meshes into one volume, painting in ascending
/// `class_id` order so later classes overwrite earlier ones.
pub fn voxelize_meshes(meshes: &[Mesh], grid: &GridSpec) -> Result<LabelVolume> {
    grid.validate()?;
    let mut order: Vec<&Mesh> = meshes.iter().collect();
    order.sort_by_key(|m| m.class_id);
    let mut out = LabelVolume::background(*grid);
    for m in order {
        paint(m, &mut out)?;
    }
    Ok(out)
}

fn paint(mesh: &Mesh, out: &mut LabelVolume) -> Result<()> {
    mesh.check_watertight()?;
    let grid = out.grid;
    let [nx, ny, _] = grid.dims;
    for (row, xs) in row_crossings(mesh, &grid).iter().enumerate() {
        if xs.is_empty() {
            continue;
        }
        let (j, k) = (row % ny, row / ny);
        // Walk voxels left to right; `beyond` counts crossings with x > centre.
        let mut next = 0usize;
        for i in 0..nx {
            let x = grid.origin[0] + i as f64 * grid.spacing[0];
            while next < xs.len() && xs[next] <= x {
                next += 1;
            }
            let beyond = xs.len() - next;
            if beyond % 2 == 1 {
                out.classes[grid.index(i, j, k)] = mesh.class_id;
            }
        }
    }
    Ok(())
}
