//! Volumes on a [`GridSpec`]: assembling posed slices into a sparse volume,
//! sampling volumes on slice planes and projecting label maps onto slices.

use serde::{Deserialize, Serialize};

use crate::geometry::{GridSpec, PosedSlice, SliceGeometry};
use crate::{Error, Result, NUM_CLASSES};

/// Interpolation used when depositing into or reading from a grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Interp {
    #[default]
    Nearest,
    Trilinear,
}

impl std::str::FromStr for Interp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Interp::Nearest),
            "trilinear" => Ok(Interp::Trilinear),
            other => Err(Error::validation(format!(
                "unknown interpolation `{other}` (expected nearest or trilinear)"
            ))),
        }
    }
}

/// A dense real-valued volume (CT-like phantom, completed volume).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarVolume {
    pub grid: GridSpec,
    pub data: Vec<f64>,
}

impl ScalarVolume {
    pub fn new(grid: GridSpec, data: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if data.len() != grid.len() {
            return Err(Error::validation(format!(
                "volume has {} values but grid {:?} needs {}",
                data.len(),
                grid.dims,
                grid.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("volume contains non-finite values"));
        }
        Ok(ScalarVolume { grid, data })
    }

    pub fn filled(grid: GridSpec, value: f64) -> Self {
        ScalarVolume {
            data: vec![value; grid.len()],
            grid,
        }
    }

    pub fn sample(&self, geometry: &SliceGeometry, interp: Interp) -> Sampled {
        sample_grid(&self.grid, &self.data, geometry, interp)
    }
}

/// Slice intensities assembled on a grid, with the accumulated splat weight
/// per voxel. Voxels with zero occupancy hold exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseVolume {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub occupancy: Vec<f64>,
    /// Slices that had valid pixels but deposited nothing inside the grid.
    pub slices_outside: usize,
}

impl SparseVolume {
    pub fn new(grid: GridSpec, values: Vec<f64>, occupancy: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        let n = grid.len();
        if values.len() != n || occupancy.len() != n {
            return Err(Error::validation(format!(
                "sparse volume arrays must have {n} entries (values: {}, occupancy: {})",
                values.len(),
                occupancy.len()
            )));
        }
        for (v, o) in values.iter().zip(&occupancy) {
            if !v.is_finite() || !o.is_finite() || *o < 0.0 {
                return Err(Error::validation(
                    "sparse volume needs finite values and non-negative occupancy",
                ));
            }
            if *o == 0.0 && *v != 0.0 {
                return Err(Error::validation(
                    "sparse volume has a non-zero value at an unoccupied voxel",
                ));
            }
        }
        Ok(SparseVolume {
            grid,
            values,
            occupancy,
            slices_outside: 0,
        })
    }

    pub fn empty(grid: GridSpec) -> Self {
        SparseVolume {
            values: vec![0.0; grid.len()],
            occupancy: vec![0.0; grid.len()],
            grid,
            slices_outside: 0,
        }
    }

    pub fn occupied_voxels(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o > 0.0).count()
    }

    pub fn total_occupancy(&self) -> f64 {
        self.occupancy.iter().sum()
    }

    pub fn sample(&self, geometry: &SliceGeometry, interp: Interp) -> Sampled {
        sample_grid(&self.grid, &self.values, geometry, interp)
    }

    pub fn sample_occupancy(&self, geometry: &SliceGeometry, interp: Interp) -> Sampled {
        sample_grid(&self.grid, &self.occupancy, geometry, interp)
    }
}

/// Per-voxel class ids: 0 background, 1 LA, 2 LAA, 3 LIPV, 4 LSPV, 5 RIPV,
/// 6 RSPV.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelVolume {
    pub grid: GridSpec,
    pub classes: Vec<u8>,
}

impl LabelVolume {
    pub fn new(grid: GridSpec, classes: Vec<u8>) -> Result<Self> {
        grid.validate()?;
        if classes.len() != grid.len() {
            return Err(Error::validation(format!(
                "label volume has {} voxels but grid {:?} needs {}",
                classes.len(),
                grid.dims,
                grid.len()
            )));
        }
        check_class_ids(&classes)?;
        Ok(LabelVolume { grid, classes })
    }

    pub fn background(grid: GridSpec) -> Self {
        LabelVolume {
            classes: vec![0; grid.len()],
            grid,
        }
    }

    pub fn count(&self, class: u8) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }

    /// Class ids present, ascending.
    pub fn present_classes(&self) -> Vec<u8> {
        let mut seen = [false; NUM_CLASSES];
        for &c in &self.classes {
            seen[c as usize] = true;
        }
        (0..NUM_CLASSES as u8).filter(|&c| seen[c as usize]).collect()
    }

    /// The class map as reals, for sampling with [`sample_grid`].
    pub fn as_real(&self) -> Vec<f64> {
        self.classes.iter().map(|&c| c as f64).collect()
    }
}

/// A 2D class map on a slice's pixel lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceLabelMask {
    pub geometry: SliceGeometry,
    pub classes: Vec<u8>,
}

impl SliceLabelMask {
    pub fn new(geometry: SliceGeometry, classes: Vec<u8>) -> Result<Self> {
        if classes.len() != geometry.len() {
            return Err(Error::validation(format!(
                "mask has {} pixels but slice is {}x{}",
                classes.len(),
                geometry.width(),
                geometry.height()
            )));
        }
        check_class_ids(&classes)?;
        Ok(SliceLabelMask { geometry, classes })
    }
}

pub(crate) fn check_class_ids(classes: &[u8]) -> Result<()> {
    match classes.iter().find(|&&c| c as usize >= NUM_CLASSES) {
        Some(bad) => Err(Error::validation(format!("class id {bad} out of range 0..6"))),
        None => Ok(()),
    }
}

/// Smallest axis-aligned isotropic grid whose voxel centres span every
/// slice's extreme pixel centres, padded by `margin` mm on each side.
pub fn plan_grid(slices: &[PosedSlice], spacing: f64, margin: f64) -> Result<GridSpec> {
    if slices.is_empty() {
        return Err(Error::validation("cannot plan a grid for zero slices"));
    }
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::validation(format!("grid spacing must be positive, got {spacing}")));
    }
    if !(margin >= 0.0) || !margin.is_finite() {
        return Err(Error::validation(format!("grid margin must be non-negative, got {margin}")));
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for s in slices {
        for corner in s.geometry().corners() {
            for a in 0..3 {
                lo[a] = lo[a].min(corner[a]);
                hi[a] = hi[a].max(corner[a]);
            }
        }
    }
    let mut dims = [1usize; 3];
    let mut origin = [0.0; 3];
    for a in 0..3 {
        origin[a] = lo[a] - margin;
        let extent = hi[a] + margin - origin[a];
        // Tolerate rounding so an extent of exactly k spacings needs k + 1 voxels.
        dims[a] = (extent / spacing - 1e-9).ceil().max(0.0) as usize + 1;
    }
    GridSpec::new(dims, [spacing; 3], origin)
}

/// Running weighted mean per voxel. Depositing the same intensity any
/// number of times leaves the mean bit-identical to that intensity.
#[inline]
pub(crate) fn deposit(value: &mut f64, occupancy: &mut f64, weight: f64, intensity: f64) {
    *occupancy += weight;
    *value += (weight / *occupancy) * (intensity - *value);
}

/// Trilinear corner weights along one axis: `(index, weight)` pairs with
/// weight `1 - |c - index|`, zero weights dropped.
#[inline]
fn axis_weights(c: f64, n: usize) -> [(usize, f64); 2] {
    let base = c.floor();
    let mut out = [(usize::MAX, 0.0); 2];
    for (slot, idx) in [base, base + 1.0].into_iter().enumerate() {
        if idx >= 0.0 && idx < n as f64 {
            let w = 1.0 - (c - idx).abs();
            if w > 0.0 {
                out[slot] = (idx as usize, w);
            }
        }
    }
    out
}

/// Deposits every valid pixel of every slice into `grid`.
///
/// Accumulation order is slice order, then row-major pixel order, so the
/// result is reproducible bit for bit. Each voxel's value is the
/// weight-averaged intensity of the pixels that reached it; in nearest mode
/// each pixel gives weight 1 to its nearest voxel, in trilinear mode it
/// spreads unit weight over the 8 surrounding voxels (weight falling outside
/// the grid is dropped).
pub fn splat_slices(slices: &[PosedSlice], grid: &GridSpec, mode: Interp) -> Result<SparseVolume> {
    grid.validate()?;
    let mut vol = SparseVolume::empty(*grid);
    for slice in slices {
        let geom = slice.geometry();
        let mut had_valid = false;
        let mut deposited = false;
        for v in 0..geom.height() {
            for u in 0..geom.width() {
                let idx = v * geom.width() + u;
                if !slice.validity()[idx] {
                    continue;
                }
                had_valid = true;
                let intensity = slice.pixels()[idx];
                let c = grid.world_to_continuous(&geom.slice_to_world(u as f64, v as f64));
                match mode {
                    Interp::Nearest => {
                        if let Some([i, j, k]) = grid.nearest_voxel(&c) {
                            let n = grid.index(i, j, k);
                            deposit(&mut vol.values[n], &mut vol.occupancy[n], 1.0, intensity);
                            deposited = true;
                        }
                    }
                    Interp::Trilinear => {
                        let wx = axis_weights(c[0], grid.dims[0]);
                        let wy = axis_weights(c[1], grid.dims[1]);
                        let wz = axis_weights(c[2], grid.dims[2]);
                        for &(k, fz) in wz.iter().filter(|w| w.1 > 0.0) {
                            for &(j, fy) in wy.iter().filter(|w| w.1 > 0.0) {
                                for &(i, fx) in wx.iter().filter(|w| w.1 > 0.0) {
                                    let n = grid.index(i, j, k);
                                    let w = fx * fy * fz;
                                    deposit(&mut vol.values[n], &mut vol.occupancy[n], w, intensity);
                                    deposited = true;
                                }
                            }
                        }
                    }
                }
            }
        }
        if had_valid && !deposited {
            vol.slices_outside += 1;
        }
    }
    if vol.slices_outside > 0 {
        log::warn!("{} slice(s) fell entirely outside the grid", vol.slices_outside);
    }
    Ok(vol)
}

/// Nearest-voxel majority vote of the slices' per-pixel labels. Voxels
/// reached by no labelled pixel are background; vote ties go to the lower
/// class id.
pub fn splat_labels(slices: &[PosedSlice], grid: &GridSpec) -> Result<LabelVolume> {
    grid.validate()?;
    let mut votes = vec![[0u32; NUM_CLASSES]; grid.len()];
    for slice in slices {
        let Some(labels) = slice.labels() else {
            continue;
        };
        let geom = slice.geometry();
        for v in 0..geom.height() {
            for u in 0..geom.width() {
                let idx = v * geom.width() + u;
                if !slice.validity()[idx] {
                    continue;
                }
                let c = grid.world_to_continuous(&geom.slice_to_world(u as f64, v as f64));
                if let Some([i, j, k]) = grid.nearest_voxel(&c) {
                    votes[grid.index(i, j, k)][labels[idx] as usize] += 1;
                }
            }
        }
    }
    let classes = votes
        .iter()
        .map(|counts| {
            let mut best = 0usize;
            for c in 1..NUM_CLASSES {
                if counts[c] > counts[best] {
                    best = c;
                }
            }
            best as u8
        })
        .collect();
    Ok(LabelVolume {
        grid: *grid,
        classes,
    })
}

/// Values sampled on a slice lattice. Pixels whose centre falls outside the
/// grid read 0 and are flagged.
#[derive(Clone, Debug, PartialEq)]
pub struct Sampled {
    pub values: Vec<f64>,
    pub out_of_bounds: Vec<bool>,
}

/// Continuous coordinate inside the voxel cells of an axis of `n` voxels.
#[inline]
fn in_cells(c: f64, n: usize) -> bool {
    c >= -0.5 && c < n as f64 - 0.5
}

/// Trilinear read at continuous voxel coordinates. Points within half a
/// voxel of the outermost centres are clamped onto them; anything further
/// out is `None`.
pub fn trilinear_at(grid: &GridSpec, data: &[f64], c: &[f64; 3]) -> Option<f64> {
    let mut idx = [[0usize; 2]; 3];
    let mut frac = [0.0; 3];
    for a in 0..3 {
        let n = grid.dims[a];
        if !in_cells(c[a], n) {
            return None;
        }
        let cc = c[a].clamp(0.0, (n - 1) as f64);
        let mut i0 = cc.floor() as usize;
        if i0 + 1 >= n {
            i0 = n.saturating_sub(2);
        }
        let i1 = (i0 + 1).min(n - 1);
        idx[a] = [i0, i1];
        frac[a] = if i1 == i0 { 0.0 } else { cc - i0 as f64 };
    }
    let mut acc = 0.0;
    for (dz, wz) in [(0, 1.0 - frac[2]), (1, frac[2])] {
        if wz == 0.0 {
            continue;
        }
        for (dy, wy) in [(0, 1.0 - frac[1]), (1, frac[1])] {
            if wy == 0.0 {
                continue;
            }
            for (dx, wx) in [(0, 1.0 - frac[0]), (1, frac[0])] {
                if wx == 0.0 {
                    continue;
                }
                let n = grid.index(idx[0][dx], idx[1][dy], idx[2][dz]);
                acc += wx * wy * wz * data[n];
            }
        }
    }
    Some(acc)
}

/// Samples `data` (laid out on `grid`) at every pixel centre of `geometry`.
pub fn sample_grid(grid: &GridSpec, data: &[f64], geometry: &SliceGeometry, interp: Interp) -> Sampled {
    let n = geometry.len();
    let mut values = vec![0.0; n];
    let mut out_of_bounds = vec![false; n];
    for v in 0..geometry.height() {
        for u in 0..geometry.width() {
            let idx = v * geometry.width() + u;
            let c = grid.world_to_continuous(&geometry.slice_to_world(u as f64, v as f64));
            let sample = match interp {
                Interp::Nearest => grid.nearest_voxel(&c).map(|[i, j, k]| data[grid.index(i, j, k)]),
                Interp::Trilinear => trilinear_at(grid, data, &c),
            };
            match sample {
                Some(x) => values[idx] = x,
                None => out_of_bounds[idx] = true,
            }
        }
    }
    Sampled {
        values,
        out_of_bounds,
    }
}

/// Nearest-voxel class at every pixel centre; pixels outside the grid are
/// background. Class ids are never interpolated.
pub fn project_labels(labels: &LabelVolume, geometry: &SliceGeometry) -> SliceLabelMask {
    let grid = &labels.grid;
    let mut classes = vec![0u8; geometry.len()];
    for v in 0..geometry.height() {
        for u in 0..geometry.width() {
            let c = grid.world_to_continuous(&geometry.slice_to_world(u as f64, v as f64));
            if let Some([i, j, k]) = grid.nearest_voxel(&c) {
                classes[v * geometry.width() + u] = labels.classes[grid.index(i, j, k)];
            }
        }
    }
    SliceLabelMask {
        geometry: *geometry,
        classes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use nalgebra::Point3;

    fn unit_grid(n: usize) -> GridSpec {
        GridSpec::new([n; 3], [1.0; 3], [0.0; 3]).unwrap()
    }

    fn single_pixel(at: [f64; 3], value: f64) -> PosedSlice {
        let geom = SliceGeometry::new(1, 1, 1.0, 1.0, Pose::translation(at[0], at[1], at[2])).unwrap();
        PosedSlice::fully_valid(geom, vec![value]).unwrap()
    }

    #[test]
    fn plan_grid_single_slice() {
        let geom = SliceGeometry::new(10, 10, 1.0, 1.0, Pose::identity()).unwrap();
        let s = PosedSlice::fully_valid(geom, vec![0.0; 100]).unwrap();
        let g = plan_grid(std::slice::from_ref(&s), 1.0, 0.0).unwrap();
        assert_eq!(g.dims, [10, 10, 1]);
        assert_eq!(g.origin, [0.0; 3]);

        let g = plan_grid(&[s], 1.0, 2.0).unwrap();
        assert_eq!(g.origin, [-2.0; 3]);
        assert_eq!(g.dims, [14, 14, 5]);
        assert!(plan_grid(&[], 1.0, 0.0).is_err());
    }

    #[test]
    fn nearest_single_pixel() {
        let g = unit_grid(4);
        let vol = splat_slices(&[single_pixel([1.0, 2.0, 3.0], 0.25)], &g, Interp::Nearest).unwrap();
        let hit = g.index(1, 2, 3);
        for n in 0..g.len() {
            if n == hit {
                assert_eq!((vol.values[n], vol.occupancy[n]), (0.25, 1.0));
            } else {
                assert_eq!((vol.values[n], vol.occupancy[n]), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn trilinear_between_two_centres() {
        let g = unit_grid(4);
        let vol = splat_slices(&[single_pixel([1.5, 2.0, 3.0], -0.6)], &g, Interp::Trilinear).unwrap();
        let a = g.index(1, 2, 3);
        let b = g.index(2, 2, 3);
        assert_eq!(vol.occupancy[a], 0.5);
        assert_eq!(vol.occupancy[b], 0.5);
        assert_eq!(vol.values[a], -0.6);
        assert_eq!(vol.values[b], -0.6);
        assert_eq!(vol.occupied_voxels(), 2);
    }

    #[test]
    fn outside_slices_are_counted() {
        let g = unit_grid(4);
        let vol = splat_slices(&[single_pixel([40.0, 0.0, 0.0], 0.1)], &g, Interp::Nearest).unwrap();
        assert_eq!(vol.slices_outside, 1);
        assert_eq!(vol.occupied_voxels(), 0);
    }

    #[test]
    fn masked_pixels_contribute_nothing() {
        let g = unit_grid(4);
        let geom = SliceGeometry::new(2, 1, 1.0, 1.0, Pose::identity()).unwrap();
        let s = PosedSlice::new(geom, vec![0.5, 0.9], vec![true, false], None).unwrap();
        let vol = splat_slices(&[s], &g, Interp::Nearest).unwrap();
        assert_eq!(vol.total_occupancy(), 1.0);
        assert_eq!(vol.values[g.index(1, 0, 0)], 0.0);
    }

    #[test]
    fn overlapping_pixels_average() {
        let g = unit_grid(4);
        let slices = [single_pixel([1.0, 1.0, 1.0], 0.2), single_pixel([1.2, 0.9, 1.0], 0.6)];
        let vol = splat_slices(&slices, &g, Interp::Nearest).unwrap();
        let n = g.index(1, 1, 1);
        assert_eq!(vol.occupancy[n], 2.0);
        assert!((vol.values[n] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn sample_constant_volume() {
        let g = GridSpec::new([6, 5, 4], [1.0, 0.5, 2.0], [-1.0, 0.0, 3.0]).unwrap();
        let vol = ScalarVolume::filled(g, 0.3);
        let pose = Pose::translation(0.5, 0.7, 5.0).compose(&Pose::rotation_y(0.3));
        let geom = SliceGeometry::new(3, 3, 0.4, 0.4, pose).unwrap();
        for interp in [Interp::Nearest, Interp::Trilinear] {
            let s = vol.sample(&geom, interp);
            assert!(s.out_of_bounds.iter().all(|&o| !o));
            assert!(s.values.iter().all(|&v| (v - 0.3).abs() < 1e-15));
        }
    }

    #[test]
    fn axis_aligned_roundtrip_is_exact() {
        let g = unit_grid(6);
        let geom = SliceGeometry::new(5, 4, 1.0, 1.0, Pose::translation(1.0, 0.0, 2.0)).unwrap();
        let pixels: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let s = PosedSlice::fully_valid(geom, pixels.clone()).unwrap();
        let vol = splat_slices(&[s], &g, Interp::Nearest).unwrap();
        let back = vol.sample(&geom, Interp::Nearest);
        assert_eq!(back.values, pixels);
    }

    #[test]
    fn trilinear_reproduces_linear_ramp() {
        let g = GridSpec::new([5, 6, 7], [1.0, 2.0, 0.5], [0.0; 3]).unwrap();
        let ramp = |p: &Point3<f64>| 0.1 * p.x - 0.05 * p.y + 0.2 * p.z - 0.3;
        let data: Vec<f64> = (0..g.len())
            .map(|n| {
                let [i, j, k] = g.coords(n);
                ramp(&g.voxel_center(i, j, k))
            })
            .collect();
        let pose = Pose::translation(0.3, 1.1, 0.2).compose(&Pose::rotation_x(0.5));
        let geom = SliceGeometry::new(4, 4, 0.73, 0.61, pose).unwrap();
        let s = sample_grid(&g, &data, &geom, Interp::Trilinear);
        for v in 0..4 {
            for u in 0..4 {
                let p = geom.slice_to_world(u as f64, v as f64);
                assert!(!s.out_of_bounds[v * 4 + u]);
                assert!((s.values[v * 4 + u] - ramp(&p)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn out_of_grid_samples_are_flagged() {
        let g = unit_grid(3);
        let vol = ScalarVolume::filled(g, 1.0);
        let geom = SliceGeometry::new(5, 1, 1.0, 1.0, Pose::identity()).unwrap();
        let s = vol.sample(&geom, Interp::Nearest);
        assert_eq!(s.out_of_bounds, vec![false, false, false, true, true]);
        assert_eq!(s.values, vec![1.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn project_uniform_labels() {
        let g = unit_grid(4);
        let lab = LabelVolume::new(g, vec![1; g.len()]).unwrap();
        let geom = SliceGeometry::new(6, 2, 1.0, 1.0, Pose::translation(0.0, 1.0, 1.0)).unwrap();
        let mask = project_labels(&lab, &geom);
        assert_eq!(&mask.classes[..6], &[1, 1, 1, 1, 0, 0]);
        assert_eq!(project_labels(&lab, &geom), mask);
    }

    #[test]
    fn label_volume_rejects_bad_ids() {
        let g = unit_grid(2);
        assert!(LabelVolume::new(g, vec![7; 8]).is_err());
        assert!(LabelVolume::new(g, vec![0; 7]).is_err());
    }

    #[test]
    fn label_votes_break_ties_low() {
        let g = unit_grid(3);
        let geom = SliceGeometry::new(1, 1, 1.0, 1.0, Pose::translation(1.0, 1.0, 1.0)).unwrap();
        let a = PosedSlice::new(geom, vec![0.0], vec![true], Some(vec![4])).unwrap();
        let b = PosedSlice::new(geom, vec![0.0], vec![true], Some(vec![2])).unwrap();
        let lab = splat_labels(&[a, b], &g).unwrap();
        assert_eq!(lab.classes[g.index(1, 1, 1)], 2);
        assert_eq!(lab.count(0), g.len() - 1);
    }
}
