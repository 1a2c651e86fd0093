//! Independent reference implementations and random fixtures shared by the
//! integration tests and the acceptance suite.
//!
//! The oracles are deliberately naive: voxel loops instead of footprints,
//! all-pairs distances instead of transforms, linear scans instead of
//! pruning. They only share the coordinate maps (`slice_to_world`,
//! `world_to_continuous`) with the code under test.

#![allow(dead_code)]

use icecontour::geometry::{GridSpec, Pose, PosedSlice, SliceGeometry};
use icecontour::mesh::Mesh;
use icecontour::procrustes::procrustes_align;
use icecontour::volume::Interp;
use nalgebra::{Matrix3, Point3, UnitQuaternion, Vector3};
use rand::Rng;

/// Brute-force splat: for every valid pixel, visit every voxel and give it
/// the pixel's weight under `mode`. Returns `(values, occupancy, slices
/// that deposited nothing)`.
pub fn brute_splat(slices: &[PosedSlice], grid: &GridSpec, mode: Interp) -> (Vec<f64>, Vec<f64>, usize) {
    let [nx, ny, nz] = grid.dims;
    let mut values = vec![0.0; grid.len()];
    let mut occupancy = vec![0.0; grid.len()];
    let mut outside = 0;
    for s in slices {
        let g = s.geometry();
        let mut valid = 0;
        let mut total = 0.0;
        for v in 0..g.height() {
            for u in 0..g.width() {
                let p = v * g.width() + u;
                if !s.validity()[p] {
                    continue;
                }
                valid += 1;
                let c = grid.world_to_continuous(&g.slice_to_world(u as f64, v as f64));
                for k in 0..nz {
                    for j in 0..ny {
                        for i in 0..nx {
                            let w = match mode {
                                Interp::Nearest => {
                                    // Round half up, the documented voxel lookup rule.
                                    let hit = [i, j, k].iter().zip(&c).all(|(&n, &x)| (x + 0.5).floor() == n as f64);
                                    if hit {
                                        1.0
                                    } else {
                                        0.0
                                    }
                                }
                                Interp::Trilinear => tent(c[0] - i as f64) * tent(c[1] - j as f64) * tent(c[2] - k as f64),
                            };
                            if w > 0.0 {
                                let n = i + nx * (j + ny * k);
                                occupancy[n] += w;
                                values[n] += (w / occupancy[n]) * (s.pixels()[p] - values[n]);
                                total += w;
                            }
                        }
                    }
                }
            }
        }
        if valid > 0 && total == 0.0 {
            outside += 1;
        }
    }
    (values, occupancy, outside)
}

fn tent(d: f64) -> f64 {
    let w = 1.0 - d.abs();
    if w > 0.0 {
        w
    } else {
        0.0
    }
}

/// Dice by counting; 1 for two empty masks.
pub fn brute_dice(a: &[bool], b: &[bool]) -> f64 {
    let na = a.iter().filter(|&&x| x).count();
    let nb = b.iter().filter(|&&x| x).count();
    let both = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    if na + nb == 0 {
        1.0
    } else {
        2.0 * both as f64 / (na + nb) as f64
    }
}

/// Boundary voxels: foreground with a 6-neighbour that is background or
/// off the lattice, ignoring axes of extent 1.
pub fn brute_surface(mask: &[bool], dims: [usize; 3]) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    let inside = |p: [i64; 3]| -> bool {
        (0..3).all(|a| p[a] >= 0 && p[a] < dims[a] as i64)
            && mask[p[0] as usize + dims[0] * (p[1] as usize + dims[1] * p[2] as usize)]
    };
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let p = [i as i64, j as i64, k as i64];
                if !inside(p) {
                    continue;
                }
                let mut boundary = false;
                for a in (0..3).filter(|&a| dims[a] > 1) {
                    for d in [-1, 1] {
                        let mut q = p;
                        q[a] += d;
                        boundary |= !inside(q);
                    }
                }
                if boundary {
                    out.push([i, j, k]);
                }
            }
        }
    }
    out
}

/// ASSD from all pairwise surface distances; `None` if a surface is empty.
pub fn brute_assd(a: &[bool], b: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Option<f64> {
    let sa = brute_surface(a, dims);
    let sb = brute_surface(b, dims);
    if sa.is_empty() || sb.is_empty() {
        return None;
    }
    let dist = |p: &[usize; 3], q: &[usize; 3]| {
        (0..3)
            .map(|ax| {
                let d = (p[ax] as f64 - q[ax] as f64) * spacing[ax];
                d * d
            })
            .sum::<f64>()
            .sqrt()
    };
    let directed = |from: &[[usize; 3]], to: &[[usize; 3]]| {
        from.iter()
            .map(|p| to.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / from.len() as f64
    };
    Some(0.5 * (directed(&sa, &sb) + directed(&sb, &sa)))
}

/// Points centred and scaled to unit RMS radius, with that radius.
fn unit_rms(points: &[Point3<f64>]) -> (Vec<Vector3<f64>>, f64) {
    let n = points.len() as f64;
    let mut c = Vector3::zeros();
    for p in points {
        c += p.coords;
    }
    c /= n;
    let rms = (points.iter().map(|p| (p.coords - c).norm_squared()).sum::<f64>() / n).sqrt();
    (points.iter().map(|p| (p.coords - c) / rms).collect(), rms)
}

/// Chamfer distance with an all-pairs nearest-neighbour search.
pub fn brute_chamfer(a: &[Point3<f64>], b: &[Point3<f64>]) -> f64 {
    let (na, _) = unit_rms(a);
    let (nb, rb) = unit_rms(b);
    let directed = |from: &[Vector3<f64>], to: &[Vector3<f64>]| {
        from.iter()
            .map(|p| to.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / from.len() as f64
    };
    0.5 * (directed(&na, &nb) + directed(&nb, &na)) * rb
}

/// Shape distance of `a` relative to `b`: Procrustes residual when vertex
/// counts match, chamfer otherwise.
pub fn oracle_mesh_distance(a: &Mesh, b: &Mesh) -> f64 {
    if a.vertices.len() == b.vertices.len() {
        procrustes_align(&a.vertices, &b.vertices, true).unwrap().1
    } else {
        brute_chamfer(&a.vertices, &b.vertices)
    }
}

/// Sequential argmin, first minimum wins; also returns every distance.
pub fn exhaustive_argmin(query: &Mesh, library: &[Mesh]) -> (usize, Vec<f64>) {
    let d: Vec<f64> = library.iter().map(|m| oracle_mesh_distance(query, m)).collect();
    let mut best = 0;
    for i in 1..d.len() {
        if d[i] < d[best] {
            best = i;
        }
    }
    (best, d)
}

/// Central difference of `f` along coordinate `i`.
pub fn central_difference(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut p = x.to_vec();
    p[i] = x[i] + h;
    let up = f(&p);
    p[i] = x[i] - h;
    let down = f(&p);
    (up - down) / (2.0 * h)
}

pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Uniformly distributed rotation: a quaternion rejection-sampled from the
/// unit 4-ball, then normalized.
pub fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n2: f64 = q.iter().map(|x| x * x).sum();
        if n2 > 1e-6 && n2 <= 1.0 {
            let uq = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
            return *uq.to_rotation_matrix().matrix();
        }
    }
}

pub fn random_vector(rng: &mut impl Rng, half: f64) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-half..half),
        rng.random_range(-half..half),
        rng.random_range(-half..half),
    )
}

/// One of the tessellated primitives with random proportions, then a
/// random rotation, scale and offset.
pub fn random_mesh(rng: &mut impl Rng) -> Mesh {
    let o = Point3::origin();
    let class = rng.random_range(1..=6u8);
    let base = match rng.random_range(0..4) {
        0 => {
            let r = [rng.random_range(3.0..12.0), rng.random_range(3.0..12.0), rng.random_range(3.0..12.0)];
            Mesh::ellipsoid(o, r, rng.random_range(1..=2), class)
        }
        1 => Mesh::icosphere(o, rng.random_range(3.0..12.0), rng.random_range(1..=2), class),
        2 => {
            let h = random_vector(rng, 8.0).map(|x| x.abs() + 1.0);
            Mesh::cuboid(Point3::from(-h), Point3::from(h), class)
        }
        _ => {
            let len = rng.random_range(5.0..20.0);
            let segs = rng.random_range(6..16);
            Mesh::cylinder(o, Point3::new(0.0, 0.0, len), rng.random_range(1.5..6.0), segs, class)
        }
    }
    .unwrap();
    let rot = random_rotation(rng);
    let scale = rng.random_range(0.5..2.0);
    let t = random_vector(rng, 30.0);
    let v = base.vertices.iter().map(|p| Point3::from(scale * (rot * p.coords) + t)).collect();
    Mesh::new(v, base.faces, class).unwrap()
}

/// Union of a few random balls and boxes on a `dims` lattice.
pub fn random_mask(rng: &mut impl Rng, dims: [usize; 3]) -> Vec<bool> {
    let mut m = vec![false; dims[0] * dims[1] * dims[2]];
    let blobs = rng.random_range(0..4);
    for _ in 0..blobs {
        let c: [f64; 3] = std::array::from_fn(|a| rng.random_range(0.0..dims[a] as f64));
        let r: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.5..5.0));
        let ball = rng.random_bool(0.5);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let d = [i as f64 - c[0], j as f64 - c[1], k as f64 - c[2]];
                    let inside = if ball {
                        (0..3).map(|a| (d[a] / r[a]).powi(2)).sum::<f64>() <= 1.0
                    } else {
                        (0..3).all(|a| d[a].abs() <= r[a])
                    };
                    m[i + dims[0] * (j + dims[1] * k)] |= inside;
                }
            }
        }
    }
    // Sprinkle isolated voxels so surfaces are not all smooth.
    for _ in 0..rng.random_range(0..6) {
        let n = rng.random_range(0..m.len());
        m[n] = !m[n];
    }
    m
}

/// Random small grid with anisotropic spacing and a random origin.
pub fn random_grid(rng: &mut impl Rng, dims: [usize; 3]) -> GridSpec {
    let spacing: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.5..2.0));
    let origin: [f64; 3] = std::array::from_fn(|_| rng.random_range(-5.0..5.0));
    GridSpec::new(dims, spacing, origin).unwrap()
}

/// A small posed slice placed around `grid`. Half the time the pose is an
/// axis permutation with translation on the half-voxel lattice, so pixel
/// centres land exactly on voxel centres and cell boundaries.
pub fn random_slice(rng: &mut impl Rng, grid: &GridSpec) -> PosedSlice {
    let w = rng.random_range(1..=6);
    let h = rng.random_range(1..=6);
    let (lo, hi) = grid.bounds();
    let (pose, su, sv) = if rng.random_bool(0.5) {
        let perm = [[0, 1, 2], [1, 2, 0], [2, 0, 1], [0, 2, 1], [1, 0, 2], [2, 1, 0]][rng.random_range(0..6)];
        let mut r = Matrix3::zeros();
        for (col, &row) in perm.iter().enumerate() {
            r[(row, col)] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        }
        if r.determinant() < 0.0 {
            r.set_column(2, &(-r.column(2)));
        }
        let t = Vector3::from_fn(|a, _| {
            let steps = rng.random_range(-4..(2 * grid.dims[a] as i64 + 4));
            grid.origin[a] + steps as f64 * grid.spacing[a] / 2.0
        });
        let su = grid.spacing[perm[0]] / 2.0 * rng.random_range(1..=2) as f64;
        let sv = grid.spacing[perm[1]] / 2.0 * rng.random_range(1..=2) as f64;
        (Pose::from_parts(r, t).unwrap(), su, sv)
    } else {
        let r = random_rotation(rng);
        let t = Vector3::from_fn(|a, _| rng.random_range(lo[a] - 2.0..hi[a] + 2.0));
        (Pose::from_parts(r, t).unwrap(), rng.random_range(0.3..2.0), rng.random_range(0.3..2.0))
    };
    let geom = SliceGeometry::new(w, h, su, sv, pose).unwrap();
    let pixels = (0..w * h).map(|_| rng.random_range(-1.0..1.0)).collect();
    let validity = (0..w * h).map(|_| rng.random_bool(0.85)).collect();
    PosedSlice::new(geom, pixels, validity, None).unwrap()
}
