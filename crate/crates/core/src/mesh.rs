//! Triangle surface meshes, tessellated primitives, and closest-mesh
//! pairing against a library.

use std::collections::BTreeMap;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use crate::procrustes::{procrustes_align, SimilarityTransform};
use crate::{Error, Result, NUM_CLASSES};

/// A triangle mesh tagged with the structure it outlines.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point3<f64>>,
    pub faces: Vec<[usize; 3]>,
    pub class_id: u8,
}

impl Mesh {
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>, class_id: u8) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::validation(format!(
                "mesh needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if class_id == 0 || class_id as usize >= NUM_CLASSES {
            return Err(Error::validation(format!("mesh class id {class_id} out of range 1..6")));
        }
        if vertices.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::validation("mesh vertices must be finite"));
        }
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::validation(format!(
                    "face {fi} references a vertex beyond {}",
                    vertices.len()
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::validation(format!("face {fi} repeats a vertex index")));
            }
        }
        Ok(Mesh {
            vertices,
            faces,
            class_id,
        })
    }

    /// Errors with the first edge (in index order) not shared by exactly two
    /// faces.
    pub fn check_watertight(&self) -> Result<()> {
        let mut edges: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for f in &self.faces {
            for e in 0..3 {
                let (a, b) = (f[e], f[(e + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        match edges.iter().find(|(_, &n)| n != 2) {
            Some((&(a, b), &n)) => Err(Error::OpenEdge(a, b, n)),
            None => Ok(()),
        }
    }

    pub fn centroid(&self) -> Point3<f64> {
        let sum = self.vertices.iter().fold(Vector3::zeros(), |acc, v| acc + v.coords);
        Point3::from(sum / self.vertices.len() as f64)
    }

    /// Enclosed volume (divergence theorem); positive for outward-facing
    /// triangles.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let (a, b, c) = (self.vertices[f[0]].coords, self.vertices[f[1]].coords, self.vertices[f[2]].coords);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn transformed(&self, t: &SimilarityTransform) -> Mesh {
        Mesh {
            vertices: self.vertices.iter().map(|v| t.apply(v)).collect(),
            faces: self.faces.clone(),
            class_id: self.class_id,
        }
    }

    /// Unit icosphere refined `subdivisions` times, scaled per axis by
    /// `radii` and moved to `center`.
    pub fn ellipsoid(center: Point3<f64>, radii: [f64; 3], subdivisions: usize, class_id: u8) -> Result<Self> {
        let (unit, faces) = unit_icosphere(subdivisions);
        let vertices = unit
            .into_iter()
            .map(|v| center + Vector3::new(v.x * radii[0], v.y * radii[1], v.z * radii[2]))
            .collect();
        Mesh::new(vertices, faces, class_id)
    }

    pub fn icosphere(center: Point3<f64>, radius: f64, subdivisions: usize, class_id: u8) -> Result<Self> {
        Self::ellipsoid(center, [radius; 3], subdivisions, class_id)
    }

    /// Axis-aligned box with outward-facing triangles.
    pub fn cuboid(min: Point3<f64>, max: Point3<f64>, class_id: u8) -> Result<Self> {
        let corner = |i: usize| {
            Point3::new(
                if i & 1 == 0 { min.x } else { max.x },
                if i & 2 == 0 { min.y } else { max.y },
                if i & 4 == 0 { min.z } else { max.z },
            )
        };
        let vertices = (0..8).map(corner).collect();
        let quads = [
            [0, 2, 3, 1], // z = min
            [4, 5, 7, 6], // z = max
            [0, 1, 5, 4], // y = min
            [2, 6, 7, 3], // y = max
            [0, 4, 6, 2], // x = min
            [1, 3, 7, 5], // x = max
        ];
        let faces = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        Mesh::new(vertices, faces, class_id)
    }

    /// Closed cylinder from `start` to `end` with `segments` sides and a
    /// fan-triangulated cap at each end.
    pub fn cylinder(start: Point3<f64>, end: Point3<f64>, radius: f64, segments: usize, class_id: u8) -> Result<Self> {
        let axis = end - start;
        let length = axis.norm();
        if !(length > 0.0) || !(radius > 0.0) || segments < 3 {
            return Err(Error::validation(
                "cylinder needs positive length and radius and at least 3 segments",
            ));
        }
        let dir = axis / length;
        let helper = if dir.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let e1 = dir.cross(&helper).normalize();
        let e2 = dir.cross(&e1);

        let mut vertices = Vec::with_capacity(2 * segments + 2);
        for ring in [start, end] {
            for s in 0..segments {
                let phi = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
                vertices.push(ring + radius * (phi.cos() * e1 + phi.sin() * e2));
            }
        }
        let bottom = vertices.len();
        vertices.push(start);
        let top = vertices.len();
        vertices.push(end);

        let mut faces = Vec::with_capacity(4 * segments);
        for s in 0..segments {
            let n = (s + 1) % segments;
            let (a0, a1, b0, b1) = (s, n, segments + s, segments + n);
            faces.push([a0, a1, b1]);
            faces.push([a0, b1, b0]);
            faces.push([bottom, a1, a0]);
            faces.push([top, b0, b1]);
        }
        Mesh::new(vertices, faces, class_id)
    }
}

/// Vertices on the unit sphere and outward-facing faces.
fn unit_icosphere(subdivisions: usize) -> (Vec<Point3<f64>>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point3<f64>> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Point3::from(Vector3::new(x, y, z).normalize()))
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Point3<f64>>| -> usize {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let m = (verts[a].coords + verts[b].coords).normalize();
                verts.push(Point3::from(m));
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (vertices, faces)
}

/// Points centred on their centroid and scaled to unit RMS radius, plus the
/// original RMS radius.
fn normalize_cloud(points: &[Point3<f64>]) -> Result<(Vec<Point3<f64>>, f64)> {
    let n = points.len() as f64;
    let c = points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;
    let rms = (points.iter().map(|p| (p.coords - c).norm_squared()).sum::<f64>() / n).sqrt();
    if !(rms > 0.0) {
        return Err(Error::Degenerate("mesh vertices are all coincident".into()));
    }
    Ok((points.iter().map(|p| Point3::from((p.coords - c) / rms)).collect(), rms))
}

/// Nearest-neighbour lookups over a point set sorted by x.
struct SortedCloud {
    points: Vec<Point3<f64>>,
}

impl SortedCloud {
    fn new(points: &[Point3<f64>]) -> Self {
        let mut points = points.to_vec();
        points.sort_by(|a, b| a.x.total_cmp(&b.x));
        SortedCloud { points }
    }

    fn nearest_distance(&self, q: &Point3<f64>) -> f64 {
        let start = self.points.partition_point(|p| p.x < q.x);
        let mut best = f64::INFINITY;
        for p in self.points[start..].iter() {
            let dx = p.x - q.x;
            if dx * dx >= best {
                break;
            }
            best = best.min((p - q).norm_squared());
        }
        for p in self.points[..start].iter().rev() {
            let dx = q.x - p.x;
            if dx * dx >= best {
                break;
            }
            best = best.min((p - q).norm_squared());
        }
        best.sqrt()
    }
}

fn mean_nearest(from: &[Point3<f64>], to: &SortedCloud) -> f64 {
    from.iter().map(|p| to.nearest_distance(p)).sum::<f64>() / from.len() as f64
}

/// Symmetric mean nearest-vertex distance between two point clouds after
/// each is centred and scaled to unit RMS radius, expressed in the units of
/// `b` (multiplied by `b`'s RMS radius).
pub fn chamfer_distance(a: &[Point3<f64>], b: &[Point3<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::validation("cannot compare an empty mesh"));
    }
    let (na, _) = normalize_cloud(a)?;
    let (nb, scale_b) = normalize_cloud(b)?;
    let ta = SortedCloud::new(&na);
    let tb = SortedCloud::new(&nb);
    Ok(0.5 * (mean_nearest(&na, &tb) + mean_nearest(&nb, &ta)) * scale_b)
}

/// Shape dissimilarity of `a` relative to `b`, in `b`'s mm.
///
/// Meshes with the same vertex count are taken to share a template
/// correspondence and compared by the RMS residual of a scaled Procrustes
/// fit of `a` onto `b`. Otherwise the normalized [`chamfer_distance`] is
/// used.
pub fn mesh_distance(a: &Mesh, b: &Mesh) -> Result<f64> {
    if a.vertices.is_empty() || b.vertices.is_empty() {
        return Err(Error::validation("cannot compare an empty mesh"));
    }
    if a.vertices.len() == b.vertices.len() {
        let (_, rms) = procrustes_align(&a.vertices, &b.vertices, true)?;
        Ok(rms)
    } else {
        chamfer_distance(&a.vertices, &b.vertices)
    }
}

/// Library entry closest to `query` by [`mesh_distance`]; ties go to the
/// lowest index.
pub fn pair_mesh(query: &Mesh, library: &[Mesh]) -> Result<(usize, f64)> {
    if library.is_empty() {
        return Err(Error::validation("mesh library is empty"));
    }
    let distances: Vec<f64> = library
        .par_iter()
        .map(|candidate| mesh_distance(query, candidate))
        .collect::<Result<_>>()?;
    let mut best = (0, distances[0]);
    for (i, &d) in distances.iter().enumerate().skip(1) {
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation_about;

    #[test]
    fn primitives_are_watertight_and_outward() {
        let sphere = Mesh::icosphere(Point3::origin(), 2.0, 2, 1).unwrap();
        sphere.check_watertight().unwrap();
        assert!(sphere.signed_volume() > 0.0);

        let cube = Mesh::cuboid(Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 2.0, 3.0), 2).unwrap();
        cube.check_watertight().unwrap();
        assert!((cube.signed_volume() - 6.0).abs() < 1e-12);

        let tube = Mesh::cylinder(Point3::origin(), Point3::new(0.0, 0.0, 5.0), 1.0, 16, 3).unwrap();
        tube.check_watertight().unwrap();
        assert!(tube.signed_volume() > 0.0);
    }

    #[test]
    fn open_mesh_names_edge() {
        let mut cube = Mesh::cuboid(Point3::origin(), Point3::new(1.0, 1.0, 1.0), 1).unwrap();
        cube.faces.pop();
        match cube.check_watertight() {
            Err(Error::OpenEdge(_, _, 1)) => {}
            other => panic!("expected open edge, got {other:?}"),
        }
    }

    #[test]
    fn mesh_validation() {
        let v = vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)];
        assert!(Mesh::new(v.clone(), vec![[0, 1, 3]], 1).is_err());
        assert!(Mesh::new(v.clone(), vec![[0, 1, 1]], 1).is_err());
        assert!(Mesh::new(v.clone(), vec![[0, 1, 2]], 0).is_err());
        assert!(Mesh::new(v[..2].to_vec(), vec![], 1).is_err());
    }

    #[test]
    fn distance_to_self_and_similar_copy() {
        let m = Mesh::ellipsoid(Point3::new(1.0, 2.0, 3.0), [10.0, 8.0, 6.0], 2, 1).unwrap();
        assert!(mesh_distance(&m, &m).unwrap() < 1e-9);
        let t = SimilarityTransform::new(1.3, rotation_about(1, 0.7), Vector3::new(4.0, -3.0, 2.0)).unwrap();
        assert!(mesh_distance(&m, &m.transformed(&t)).unwrap() < 1e-9);
    }

    #[test]
    fn pairing_picks_lowest_index_on_ties() {
        let a = Mesh::ellipsoid(Point3::origin(), [10.0, 8.0, 6.0], 1, 1).unwrap();
        let b = Mesh::ellipsoid(Point3::origin(), [10.0, 10.0, 6.0], 1, 1).unwrap();
        let lib = vec![b.clone(), a.clone(), a.clone()];
        assert_eq!(pair_mesh(&a, &lib).unwrap().0, 1);
        assert!(pair_mesh(&a, &[]).is_err());
    }
}
