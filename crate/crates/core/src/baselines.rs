//! Non-learned stand-ins for the completion and segmentation generators:
//! normalized-convolution densification and nearest-seed label
//! propagation.

use rayon::prelude::*;

use crate::edt::squared_edt;
use crate::geometry::GridSpec;
use crate::volume::{LabelVolume, ScalarVolume, SparseVolume};
use crate::{Error, Result, NUM_CLASSES};

/// Blurred certainty at or below this is treated as no data.
pub const MIN_CERTAINTY: f64 = 1e-8;

/// Hard stop for [`complete_volume`] when certainty cannot spread further.
const MAX_ITERATIONS: usize = 10_000;

fn kernel(sigma_vox: f64) -> Vec<f64> {
    let radius = (3.0 * sigma_vox).ceil() as usize;
    (0..=radius)
        .map(|d| (-(d as f64).powi(2) / (2.0 * sigma_vox * sigma_vox)).exp())
        .collect()
}

/// One 1D pass along `axis`. Taps falling outside the grid are dropped and
/// the remaining weights renormalized.
fn blur_axis(grid: &GridSpec, data: &[f64], axis: usize, half: &[f64]) -> Vec<f64> {
    let n = grid.dims[axis];
    let stride = match axis {
        0 => 1,
        1 => grid.dims[0],
        _ => grid.dims[0] * grid.dims[1],
    };
    let r = half.len() as isize - 1;
    (0..data.len())
        .into_par_iter()
        .map(|idx| {
            let pos = (idx / stride % n) as isize;
            let (mut acc, mut wsum) = (0.0, 0.0);
            for d in -r..=r {
                let p = pos + d;
                if p < 0 || p >= n as isize {
                    continue;
                }
                let w = half[d.unsigned_abs()];
                acc += w * data[(idx as isize + d * stride as isize) as usize];
                wsum += w;
            }
            acc / wsum
        })
        .collect()
}

/// Separable Gaussian blur (kernel truncated at 3σ per axis) with
/// renormalization at the grid border, so constant fields stay constant.
pub fn gaussian_blur(grid: &GridSpec, data: &[f64], sigma_mm: f64) -> Vec<f64> {
    let mut out = data.to_vec();
    for axis in 0..3 {
        if grid.dims[axis] < 2 {
            continue;
        }
        let half = kernel(sigma_mm / grid.spacing[axis]);
        out = blur_axis(grid, &out, axis, &half);
    }
    out
}

/// Densifies a sparse volume by normalized convolution.
///
/// Each iteration blurs `value·certainty` and `certainty`, divides where the
/// blurred certainty exceeds [`MIN_CERTAINTY`], and takes
/// `max(initial occupancy, blurred certainty)` as the next certainty.
/// Voxels with occupancy ≥ 1 are reset to their observed value every
/// iteration. Iteration continues past `iterations` until every voxel has
/// a value.
pub fn complete_volume(sv: &SparseVolume, sigma_mm: f64, iterations: usize) -> Result<ScalarVolume> {
    if !(sigma_mm > 0.0) || !sigma_mm.is_finite() {
        return Err(Error::validation(format!("sigma must be positive, got {sigma_mm}")));
    }
    if iterations == 0 {
        return Err(Error::validation("completion needs at least one iteration"));
    }
    if sv.occupancy.iter().all(|&o| o <= 0.0) {
        return Err(Error::validation("sparse volume has no observed voxels"));
    }
    let grid = sv.grid;
    let c0: Vec<f64> = sv.occupancy.iter().map(|&o| o.max(0.0)).collect();
    let mut values = sv.values.clone();
    let mut certainty = c0.clone();
    let mut dense = false;
    let mut done = 0usize;
    while done < iterations || !dense {
        if done == MAX_ITERATIONS {
            return Err(Error::Internal(format!("completion did not densify within {MAX_ITERATIONS} iterations")));
        }
        let weighted: Vec<f64> = values.iter().zip(&certainty).map(|(v, c)| v * c).collect();
        let num = gaussian_blur(&grid, &weighted, sigma_mm);
        let den = gaussian_blur(&grid, &certainty, sigma_mm);
        dense = true;
        for n in 0..grid.len() {
            if sv.occupancy[n] >= 1.0 {
                values[n] = sv.values[n];
                certainty[n] = c0[n];
            } else if den[n] > MIN_CERTAINTY {
                values[n] = num[n] / den[n];
                certainty[n] = c0[n].max(den[n]);
            } else {
                certainty[n] = c0[n];
                dense = false;
            }
        }
        done += 1;
    }
    log::debug!("completion converged to a dense volume after {done} iteration(s)");
    ScalarVolume::new(grid, values)
}

/// Nearest-seed segmentation.
///
/// Every observed voxel (occupancy > 0) is a seed of its class in
/// `seeds`, background included. Each voxel takes the class of the nearest
/// seed (Euclidean, mm) if it lies within `max_dist_mm`, else background.
/// Equidistant seeds of different classes resolve to the lowest class id.
pub fn segment_sparse(sv: &SparseVolume, seeds: &LabelVolume, max_dist_mm: f64) -> Result<LabelVolume> {
    if sv.grid != seeds.grid {
        return Err(Error::validation("seed labels and sparse volume are on different grids"));
    }
    if !(max_dist_mm >= 0.0) {
        return Err(Error::validation(format!("max distance must be non-negative, got {max_dist_mm}")));
    }
    let grid = sv.grid;
    let observed: Vec<bool> = sv.occupancy.iter().map(|&o| o > 0.0).collect();
    if !observed.iter().any(|&o| o) {
        return Err(Error::validation("no observed voxels to seed the segmentation"));
    }
    if let Some(n) = (0..grid.len()).find(|&n| !observed[n] && seeds.classes[n] != 0) {
        return Err(Error::validation(format!(
            "seed label {} at unobserved voxel {:?}",
            seeds.classes[n],
            grid.coords(n)
        )));
    }

    let limit = max_dist_mm * max_dist_mm;
    let mut best = vec![f64::INFINITY; grid.len()];
    let mut out = LabelVolume::background(grid);
    for class in 0..NUM_CLASSES as u8 {
        let sites: Vec<bool> = (0..grid.len()).map(|n| observed[n] && seeds.classes[n] == class).collect();
        if !sites.iter().any(|&s| s) {
            continue;
        }
        let d2 = squared_edt(grid.dims, grid.spacing, &sites);
        for n in 0..grid.len() {
            if d2[n] < best[n] {
                best[n] = d2[n];
                out.classes[n] = class;
            }
        }
    }
    for n in 0..grid.len() {
        if best[n] > limit {
            out.classes[n] = 0;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new([n; 3], [1.0; 3], [0.0; 3]).unwrap()
    }

    #[test]
    fn blur_keeps_constants() {
        let g = GridSpec::new([9, 4, 6], [1.0, 0.5, 2.0], [0.0; 3]).unwrap();
        let out = gaussian_blur(&g, &vec![0.25; g.len()], 1.5);
        assert!(out.iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn fully_observed_is_identity() {
        let g = grid(5);
        let values: Vec<f64> = (0..g.len()).map(|n| (n % 13) as f64 / 13.0).collect();
        let sv = SparseVolume::new(g, values.clone(), vec![1.0; g.len()]).unwrap();
        assert_eq!(complete_volume(&sv, 1.0, 3).unwrap().data, values);
    }

    #[test]
    fn single_voxel_fills_everything() {
        let g = grid(9);
        let mut sv = SparseVolume::empty(g);
        let centre = g.index(4, 4, 4);
        sv.values[centre] = 0.3;
        sv.occupancy[centre] = 1.0;
        let out = complete_volume(&sv, 1.0, 1).unwrap();
        assert!(out.data.iter().all(|&v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn stays_within_observed_range() {
        let g = grid(10);
        let mut sv = SparseVolume::empty(g);
        for (n, v) in [(g.index(1, 2, 3), -0.4), (g.index(8, 8, 1), 0.9), (g.index(5, 0, 9), 0.1)] {
            sv.values[n] = v;
            sv.occupancy[n] = 1.0;
        }
        let out = complete_volume(&sv, 1.5, 4).unwrap();
        assert!(out.data.iter().all(|&v| (-0.4 - 1e-12..=0.9 + 1e-12).contains(&v)));
    }

    #[test]
    fn empty_volume_rejected() {
        assert!(complete_volume(&SparseVolume::empty(grid(3)), 1.0, 1).is_err());
        assert!(segment_sparse(&SparseVolume::empty(grid(3)), &LabelVolume::background(grid(3)), 5.0).is_err());
    }

    #[test]
    fn voronoi_split() {
        let g = grid(11);
        let mut sv = SparseVolume::empty(g);
        let mut seeds = LabelVolume::background(g);
        for (i, c) in [(2, 1u8), (8, 2u8)] {
            let n = g.index(i, 5, 5);
            sv.occupancy[n] = 1.0;
            seeds.classes[n] = c;
        }
        let out = segment_sparse(&sv, &seeds, 100.0).unwrap();
        for n in 0..g.len() {
            let [i, ..] = g.coords(n);
            let expect = if i <= 5 { 1 } else { 2 };
            assert_eq!(out.classes[n], expect, "voxel {:?}", g.coords(n));
        }
    }

    #[test]
    fn beyond_radius_is_background() {
        let g = grid(9);
        let mut sv = SparseVolume::empty(g);
        let mut seeds = LabelVolume::background(g);
        let n = g.index(0, 0, 0);
        sv.occupancy[n] = 1.0;
        seeds.classes[n] = 3;
        let out = segment_sparse(&sv, &seeds, 2.0).unwrap();
        assert_eq!(out.classes[g.index(2, 0, 0)], 3);
        assert_eq!(out.classes[g.index(2, 1, 0)], 0);
    }

    #[test]
    fn seed_at_unobserved_voxel_rejected() {
        let g = grid(4);
        let mut sv = SparseVolume::empty(g);
        sv.occupancy[0] = 1.0;
        let mut seeds = LabelVolume::background(g);
        seeds.classes[5] = 1;
        assert!(segment_sparse(&sv, &seeds, 5.0).is_err());
    }
}
