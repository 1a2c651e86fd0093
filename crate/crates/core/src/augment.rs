//! Seeded random similarity perturbations applied jointly to a sparse
//! volume and its label volume.
//!
//! A perturbation `T = (s, R, t)` acts about the grid centre `c`:
//! `y = c + s·R·(x − c) + t`. Resampling is a pull-back: each output voxel
//! `y` reads the input at `x = c + Rᵀ(y − c − t)/s`.

use nalgebra::{Matrix3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{rotation_about, GridSpec};
use crate::procrustes::SimilarityTransform;
use crate::volume::{trilinear_at, LabelVolume, SparseVolume};
use crate::{Error, Result};

/// Continuous coordinates this close to an integer are read as that voxel.
const SNAP: f64 = 1e-9;

/// Closed intervals for each perturbation component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationRanges {
    pub scale: [f64; 2],
    pub rotation_deg: [[f64; 2]; 3],
    pub translation_mm: [[f64; 2]; 3],
    pub seed: u64,
}

impl Default for PerturbationRanges {
    fn default() -> Self {
        PerturbationRanges {
            scale: [0.9, 1.1],
            rotation_deg: [[-10.0, 10.0]; 3],
            translation_mm: [[-5.0, 5.0]; 3],
            seed: 0,
        }
    }
}

impl PerturbationRanges {
    /// Ranges that always produce the identity.
    pub fn identity() -> Self {
        PerturbationRanges {
            scale: [1.0, 1.0],
            rotation_deg: [[0.0, 0.0]; 3],
            translation_mm: [[0.0, 0.0]; 3],
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("scale", self.scale),
            ("rotation_deg[0]", self.rotation_deg[0]),
            ("rotation_deg[1]", self.rotation_deg[1]),
            ("rotation_deg[2]", self.rotation_deg[2]),
            ("translation_mm[0]", self.translation_mm[0]),
            ("translation_mm[1]", self.translation_mm[1]),
            ("translation_mm[2]", self.translation_mm[2]),
        ];
        for (name, [lo, hi]) in named {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::validation(format!("{name} range [{lo}, {hi}] needs finite lo <= hi")));
            }
        }
        if self.scale[0] <= 0.0 {
            return Err(Error::validation(format!("scale range must be positive, got lo = {}", self.scale[0])));
        }
        Ok(())
    }

    /// Generator seeded from `self.seed`.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

#[inline]
fn uniform(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    // Always consume one draw so the stream position never depends on the ranges.
    let u: f64 = rng.random();
    if lo == hi {
        lo
    } else {
        lo + (hi - lo) * u
    }
}

/// Draws scale, rotations about x, y, z (degrees) and translations along
/// x, y, z in that order, each uniform on its range. `R = Rz·Ry·Rx`.
pub fn sample_perturbation(ranges: &PerturbationRanges, rng: &mut impl Rng) -> Result<SimilarityTransform> {
    ranges.validate()?;
    let scale = uniform(rng, ranges.scale);
    let angles: [f64; 3] = std::array::from_fn(|a| uniform(rng, ranges.rotation_deg[a]).to_radians());
    let t: [f64; 3] = std::array::from_fn(|a| uniform(rng, ranges.translation_mm[a]));
    let rotation: Matrix3<f64> = rotation_about(2, angles[2]) * rotation_about(1, angles[1]) * rotation_about(0, angles[0]);
    SimilarityTransform::new(scale, rotation, Vector3::from(t))
}

/// Input-grid continuous coordinate read by output voxel `(i, j, k)`.
fn pull_back(grid: &GridSpec, inv: &SimilarityTransform, c: &Point3<f64>, i: usize, j: usize, k: usize) -> [f64; 3] {
    let y = grid.voxel_center(i, j, k);
    let x = c + inv.apply(&Point3::from(y - c)).coords;
    let mut out = grid.world_to_continuous(&x);
    for v in &mut out {
        let r = v.round();
        if (*v - r).abs() <= SNAP {
            *v = r;
        }
    }
    out
}

fn lattice_point(grid: &GridSpec, x: &[f64; 3]) -> Option<usize> {
    let mut idx = [0usize; 3];
    for a in 0..3 {
        if x[a].fract() != 0.0 || x[a] < 0.0 || x[a] > (grid.dims[a] - 1) as f64 {
            return None;
        }
        idx[a] = x[a] as usize;
    }
    Some(grid.index(idx[0], idx[1], idx[2]))
}

/// Resamples `vol` and `lab` under `t` about the grid centre. Values and
/// occupancy are trilinear (values normalized by the interpolated
/// occupancy), labels are nearest. Positions that land exactly on an
/// input voxel copy it unchanged; positions outside the grid give value 0,
/// occupancy 0 and class 0.
pub fn apply_transform(
    vol: &SparseVolume,
    lab: &LabelVolume,
    t: &SimilarityTransform,
) -> Result<(SparseVolume, LabelVolume)> {
    if vol.grid != lab.grid {
        return Err(Error::validation("sparse volume and label volume are on different grids"));
    }
    let grid = vol.grid;
    let c = grid.center();
    // Pull-back is applied to offsets from the centre, so only the linear
    // part and translation of the inverse are needed.
    let inv = t.inverse();
    let weighted: Vec<f64> = vol.values.iter().zip(&vol.occupancy).map(|(v, o)| v * o).collect();

    let mut out = SparseVolume::empty(grid);
    let mut out_lab = LabelVolume::background(grid);
    for k in 0..grid.dims[2] {
        for j in 0..grid.dims[1] {
            for i in 0..grid.dims[0] {
                let n = grid.index(i, j, k);
                let x = pull_back(&grid, &inv, &c, i, j, k);
                if let Some([a, b, d]) = grid.nearest_voxel(&x) {
                    out_lab.classes[n] = lab.classes[grid.index(a, b, d)];
                }
                if let Some(src) = lattice_point(&grid, &x) {
                    out.values[n] = vol.values[src];
                    out.occupancy[n] = vol.occupancy[src];
                    continue;
                }
                let Some(occ) = trilinear_at(&grid, &vol.occupancy, &x) else {
                    continue;
                };
                if occ > 0.0 {
                    let num = trilinear_at(&grid, &weighted, &x).unwrap_or(0.0);
                    out.occupancy[n] = occ;
                    out.values[n] = num / occ;
                }
            }
        }
    }
    Ok((out, out_lab))
}
