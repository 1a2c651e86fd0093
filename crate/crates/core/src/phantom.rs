//! Synthetic left-atrium phantom and a simulated rotational ICE sweep.
//!
//! Anatomy frame: +x is patient left, +y anterior, +z superior. The LA is
//! an ellipsoid centred on the grid centre; the appendage is an ellipsoidal
//! lobe; each pulmonary vein is a straight tube that starts 1 mm inside the
//! LA surface and runs outward along its anchor direction.
//!
//! The sweep rotates one imaging plane about a line through the grid
//! centre. The plane contains the rotation axis: image rows (`v`) run along
//! the axis and columns (`u`) across it. The fan sector has its apex on the
//! axis, `apex_offset_mm` below the grid centre, and opens toward +axis.
//! A plane and its half-turn rotation coincide, so `n` slices are spaced
//! `180°/n` apart.

use nalgebra::{Matrix3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::gaussian_blur;
use crate::geometry::{GridSpec, Pose, PosedSlice, SliceGeometry};
use crate::mesh::Mesh;
use crate::volume::{project_labels, sample_grid, Interp, LabelVolume, ScalarVolume};
use crate::{Error, Result, NUM_CLASSES};

/// Icosphere refinement used for the LA and LAA meshes.
const ELLIPSOID_SUBDIVISIONS: usize = 4;
const TUBE_SEGMENTS: usize = 32;
/// Tubes start this far inside the LA surface so they stay attached.
const TUBE_OVERLAP_MM: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lobe {
    /// Centre relative to the LA centre, mm.
    pub offset: [f64; 3],
    pub radii: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tube {
    pub class_id: u8,
    /// Direction from the LA centre; need not be normalized.
    pub direction: [f64; 3],
    pub radius: f64,
    pub length: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Noise {
    pub speckle_variance: f64,
    pub enabled: bool,
}

impl Default for Noise {
    fn default() -> Self {
        Noise {
            speckle_variance: 0.01,
            enabled: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomParams {
    pub la_radii: [f64; 3],
    pub laa: Option<Lobe>,
    pub veins: Vec<Tube>,
    /// Intensity per class id, background first.
    pub levels: [f64; NUM_CLASSES],
    /// Peak amplitude of the smooth background modulation.
    pub background_amplitude: f64,
    pub background_wavelength_mm: f64,
    pub blur_sigma_mm: f64,
    pub noise: Noise,
    /// Relative anatomy jitter drawn from `seed`; 0 keeps the shapes exact.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        let vein = |class_id, direction| Tube {
            class_id,
            direction,
            radius: 4.0,
            length: 14.0,
        };
        PhantomParams {
            la_radii: [18.0, 15.0, 13.0],
            laa: Some(Lobe {
                offset: [14.0, 10.0, 5.0],
                radii: [7.0, 5.0, 5.0],
            }),
            veins: vec![
                vein(3, [0.6, -0.6, -0.5]),
                vein(4, [0.6, -0.6, 0.5]),
                vein(5, [-0.6, -0.6, -0.5]),
                vein(6, [-0.6, -0.6, 0.5]),
            ],
            levels: [-0.2, 0.6, 0.45, 0.3, 0.35, 0.25, 0.4],
            background_amplitude: 0.05,
            background_wavelength_mm: 60.0,
            blur_sigma_mm: 3.5,
            noise: Noise::default(),
            jitter: 0.1,
            seed: 0,
        }
    }
}

impl PhantomParams {
    /// LA only, no jitter, no noise.
    pub fn la_only() -> Self {
        PhantomParams {
            laa: None,
            veins: Vec::new(),
            noise: Noise {
                enabled: false,
                ..Noise::default()
            },
            jitter: 0.0,
            ..PhantomParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(format!("{name} must be positive, got {v}")))
            }
        };
        for r in self.la_radii {
            positive("la_radii", r)?;
        }
        if let Some(l) = &self.laa {
            for r in l.radii {
                positive("laa.radii", r)?;
            }
        }
        for (i, t) in self.veins.iter().enumerate() {
            positive(&format!("veins[{i}].radius"), t.radius)?;
            positive(&format!("veins[{i}].length"), t.length)?;
            if !(3..NUM_CLASSES as u8).contains(&t.class_id) {
                return Err(Error::validation(format!("veins[{i}].class_id must be 3..6, got {}", t.class_id)));
            }
            if Vector3::from(t.direction).norm() == 0.0 {
                return Err(Error::validation(format!("veins[{i}].direction is zero")));
            }
        }
        for (i, &a) in self.levels.iter().enumerate() {
            if !(-1.0..=1.0).contains(&a) {
                return Err(Error::validation(format!("levels[{i}] = {a} is outside [-1, 1]")));
            }
            if self.levels[..i].contains(&a) {
                return Err(Error::validation(format!("levels[{i}] = {a} repeats an earlier level")));
            }
        }
        positive("blur_sigma_mm", self.blur_sigma_mm)?;
        positive("background_wavelength_mm", self.background_wavelength_mm)?;
        if !(self.background_amplitude >= 0.0) {
            return Err(Error::validation("background_amplitude must be non-negative"));
        }
        if !(self.noise.speckle_variance >= 0.0) {
            return Err(Error::validation("speckle_variance must be non-negative"));
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(Error::validation(format!("jitter must be in [0, 0.5), got {}", self.jitter)));
        }
        Ok(())
    }

    /// Anatomy after seed-driven jitter: radii, lengths and offsets scale by
    /// factors in `[1 − jitter, 1 + jitter]`, directions tilt by up to
    /// `jitter` radians per component.
    pub fn resolved(&self) -> PhantomParams {
        let mut p = self.clone();
        if self.jitter == 0.0 {
            return p;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let j = self.jitter;
        let factor = |rng: &mut ChaCha8Rng| 1.0 + rng.random_range(-j..=j);
        for r in &mut p.la_radii {
            *r *= factor(&mut rng);
        }
        if let Some(l) = &mut p.laa {
            for a in 0..3 {
                l.offset[a] *= factor(&mut rng);
                l.radii[a] *= factor(&mut rng);
            }
        }
        for t in &mut p.veins {
            t.radius *= factor(&mut rng);
            t.length *= factor(&mut rng);
            let d = Vector3::from(t.direction).normalize();
            for a in 0..3 {
                t.direction[a] = d[a] + rng.random_range(-j..=j);
            }
        }
        p
    }
}

/// Phantom volumes and the analytic surfaces they were painted from.
#[derive(Clone, Debug)]
pub struct Phantom {
    /// Anatomy after jitter.
    pub params: PhantomParams,
    pub ct: ScalarVolume,
    pub labels: LabelVolume,
    /// LA, LAA and vein meshes in class order.
    pub meshes: Vec<Mesh>,
}

enum Shape {
    Ellipsoid {
        center: Point3<f64>,
        radii: [f64; 3],
    },
    Tube {
        start: Point3<f64>,
        axis: Vector3<f64>,
        length: f64,
        radius: f64,
    },
}

impl Shape {
    fn contains(&self, p: &Point3<f64>) -> bool {
        match self {
            Shape::Ellipsoid { center, radii } => {
                let d = p - center;
                (d.x / radii[0]).powi(2) + (d.y / radii[1]).powi(2) + (d.z / radii[2]).powi(2) <= 1.0
            }
            Shape::Tube {
                start,
                axis,
                length,
                radius,
            } => {
                let d = p - start;
                let t = d.dot(axis);
                t >= 0.0 && t <= *length && (d - axis * t).norm_squared() <= radius * radius
            }
        }
    }

    /// Axis-aligned bounding box.
    fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        match self {
            Shape::Ellipsoid { center, radii } => (
                std::array::from_fn(|a| center[a] - radii[a]),
                std::array::from_fn(|a| center[a] + radii[a]),
            ),
            Shape::Tube {
                start,
                axis,
                length,
                radius,
            } => {
                let end = start + axis * *length;
                // Disc extent along axis a is radius·sqrt(1 − axis_a²).
                let ext: [f64; 3] = std::array::from_fn(|a| radius * (1.0 - axis[a] * axis[a]).max(0.0).sqrt());
                (
                    std::array::from_fn(|a| start[a].min(end[a]) - ext[a]),
                    std::array::from_fn(|a| start[a].max(end[a]) + ext[a]),
                )
            }
        }
    }
}

fn shapes(p: &PhantomParams, center: Point3<f64>) -> Vec<(u8, Shape)> {
    let mut out = vec![(
        1u8,
        Shape::Ellipsoid {
            center,
            radii: p.la_radii,
        },
    )];
    if let Some(l) = &p.laa {
        out.push((
            2,
            Shape::Ellipsoid {
                center: center + Vector3::from(l.offset),
                radii: l.radii,
            },
        ));
    }
    let r = p.la_radii;
    for t in &p.veins {
        let axis = Vector3::from(t.direction).normalize();
        // Distance from the centre to the LA surface along `axis`.
        let surface = 1.0 / ((axis.x / r[0]).powi(2) + (axis.y / r[1]).powi(2) + (axis.z / r[2]).powi(2)).sqrt();
        out.push((
            t.class_id,
            Shape::Tube {
                start: center + axis * (surface - TUBE_OVERLAP_MM),
                axis,
                length: t.length + TUBE_OVERLAP_MM,
                radius: t.radius,
            },
        ));
    }
    out.sort_by_key(|(c, _)| *c);
    out
}

/// Paints the anatomy into `grid` and renders the CT-like intensity
/// volume: per-class levels plus a smooth background modulation, blurred
/// and clamped to [−1, 1].
pub fn make_phantom(params: &PhantomParams, grid: &GridSpec) -> Result<Phantom> {
    params.validate()?;
    grid.validate()?;
    let p = params.resolved();
    let center = grid.center();
    let parts = shapes(&p, center);

    let (lo, hi) = grid.bounds();
    for (class, s) in &parts {
        let (a, b) = s.bounds();
        if (0..3).any(|ax| a[ax] < lo[ax] || b[ax] > hi[ax]) {
            return Err(Error::validation(format!(
                "class {class} spans {a:?}..{b:?}, outside the grid {:?}..{:?}",
                lo.coords.as_slice(),
                hi.coords.as_slice()
            )));
        }
    }

    let mut labels = LabelVolume::background(*grid);
    labels.classes.par_iter_mut().enumerate().for_each(|(n, c)| {
        let [i, j, k] = grid.coords(n);
        let x = grid.voxel_center(i, j, k);
        for (class, s) in &parts {
            if s.contains(&x) {
                *c = *class;
            }
        }
    });

    let wave = 2.0 * std::f64::consts::PI / p.background_wavelength_mm;
    let raw: Vec<f64> = (0..grid.len())
        .map(|n| {
            let [i, j, k] = grid.coords(n);
            let d = grid.voxel_center(i, j, k) - center;
            let modulation = (wave * d.x).sin() * (wave * d.y).cos() * (wave * d.z + 0.5).cos();
            p.levels[labels.classes[n] as usize] + p.background_amplitude * modulation
        })
        .collect();
    let ct = gaussian_blur(grid, &raw, p.blur_sigma_mm)
        .into_iter()
        .map(|v| v.clamp(-1.0, 1.0))
        .collect();

    let mut meshes = Vec::with_capacity(parts.len());
    for (class, s) in &parts {
        meshes.push(match s {
            Shape::Ellipsoid { center, radii } => Mesh::ellipsoid(*center, *radii, ELLIPSOID_SUBDIVISIONS, *class)?,
            Shape::Tube {
                start,
                axis,
                length,
                radius,
            } => Mesh::cylinder(*start, start + axis * *length, *radius, TUBE_SEGMENTS, *class)?,
        });
    }

    Ok(Phantom {
        params: p,
        ct: ScalarVolume::new(*grid, ct)?,
        labels,
        meshes,
    })
}

/// Acquisition geometry of a rotational sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepParams {
    pub n_slices: usize,
    /// Rotation axis: 0 = x, 1 = y, 2 = z. It passes through the grid centre.
    pub axis: usize,
    pub start_deg: f64,
    /// Distance of the fan apex below the grid centre along the axis.
    pub apex_offset_mm: f64,
    /// Full opening angle of the fan.
    pub fan_width_deg: f64,
    pub depth_mm: f64,
    /// Pixel spacing along both image axes; defaults to the grid spacing.
    pub pixel_spacing_mm: Option<f64>,
    pub interp: Interp,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            n_slices: 40,
            axis: 2,
            start_deg: 0.0,
            apex_offset_mm: 45.0,
            fan_width_deg: 80.0,
            depth_mm: 100.0,
            pixel_spacing_mm: None,
            interp: Interp::Nearest,
        }
    }
}

impl SweepParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_slices == 0 {
            return Err(Error::validation("a sweep needs at least one slice"));
        }
        if self.axis > 2 {
            return Err(Error::validation(format!("rotation axis must be 0, 1 or 2, got {}", self.axis)));
        }
        if !(self.fan_width_deg > 0.0 && self.fan_width_deg <= 360.0) {
            return Err(Error::validation("fan width must be in (0, 360] degrees"));
        }
        if !(self.depth_mm > 0.0) || !self.apex_offset_mm.is_finite() || !self.start_deg.is_finite() {
            return Err(Error::validation("fan depth must be positive and offsets finite"));
        }
        if let Some(s) = self.pixel_spacing_mm {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::validation(format!("pixel spacing must be positive, got {s}")));
            }
        }
        Ok(())
    }

    /// Rotation angle of slice `k`, radians.
    pub fn angle(&self, k: usize) -> f64 {
        (self.start_deg + k as f64 * 180.0 / self.n_slices as f64).to_radians()
    }
}

/// Orthonormal `(e1, e2)` with `e1 × e2` equal to the unit vector of `axis`.
fn axis_basis(axis: usize) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let e = |a: usize| Vector3::ith(a, 1.0);
    (e((axis + 1) % 3), e((axis + 2) % 3), e(axis))
}

/// Geometry of every slice of the sweep over `grid`.
pub fn sweep_geometries(grid: &GridSpec, sweep: &SweepParams) -> Result<Vec<SliceGeometry>> {
    sweep.validate()?;
    let h = sweep.pixel_spacing_mm.unwrap_or(grid.spacing[0]);
    let (e1, e2, ea) = axis_basis(sweep.axis);
    let center = grid.center();
    let (lo, hi) = grid.bounds();
    // Columns must reach every grid corner at any angle; rows span the grid along the axis.
    let half_diag = (0..3)
        .filter(|&a| a != sweep.axis)
        .map(|a| ((hi[a] - lo[a]) / 2.0).powi(2))
        .sum::<f64>()
        .sqrt();
    let width = 2 * (half_diag / h).ceil() as usize + 1;
    let along = hi[sweep.axis] - lo[sweep.axis];
    let height = (along / h - 1e-9).ceil() as usize + 1;
    let v0 = lo[sweep.axis] - center[sweep.axis];

    (0..sweep.n_slices)
        .map(|k| {
            let th = sweep.angle(k);
            let eu = e1 * th.cos() + e2 * th.sin();
            let normal = eu.cross(&ea);
            let rotation = Matrix3::from_columns(&[eu, ea, normal]);
            let origin = center + eu * (-((width - 1) as f64) / 2.0 * h) + ea * v0;
            let pose = Pose::from_parts(rotation, origin.coords)?;
            SliceGeometry::new(width, height, h, h, pose)
        })
        .collect()
}

/// Fan-sector membership of every pixel of `geom`.
pub fn fan_mask(geom: &SliceGeometry, grid: &GridSpec, sweep: &SweepParams) -> Vec<bool> {
    let (su, sv) = geom.spacing();
    let center = grid.center();
    let apex_v = {
        // Row coordinate of the apex, in mm from row 0.
        let origin = geom.slice_to_world(0.0, 0.0);
        let ea = Vector3::ith(sweep.axis, 1.0);
        (center - origin).dot(&ea) - sweep.apex_offset_mm
    };
    let mid_u = (geom.width() - 1) as f64 / 2.0 * su;
    let half = sweep.fan_width_deg.to_radians() / 2.0;
    let mut mask = vec![false; geom.len()];
    for v in 0..geom.height() {
        for u in 0..geom.width() {
            let du = u as f64 * su - mid_u;
            let dv = v as f64 * sv - apex_v;
            let r = du.hypot(dv);
            mask[v * geom.width() + u] = r <= sweep.depth_mm && (r == 0.0 || du.abs().atan2(dv) <= half);
        }
    }
    mask
}

/// Multiplies each valid pixel by `1 + η`, `η ~ N(0, variance)`, and clamps
/// to [−1, 1]. Invalid pixels consume no draws.
pub fn apply_speckle(pixels: &mut [f64], validity: &[bool], variance: f64, rng: &mut impl Rng) -> Result<()> {
    let normal = Normal::new(0.0, variance.sqrt()).map_err(|e| Error::validation(format!("speckle: {e}")))?;
    for (p, &ok) in pixels.iter_mut().zip(validity) {
        if ok {
            *p = (*p * (1.0 + normal.sample(rng))).clamp(-1.0, 1.0);
        }
    }
    Ok(())
}

/// Simulates the sweep. Pixels are sampled from the CT-like volume, the
/// fan mask and grid bounds set validity, speckle follows the phantom's
/// noise settings and per-slice labels are read from the label volume
/// (nearest). Slice `k` draws noise from stream `k` of a generator seeded
/// with `seed`, so slices are independent of evaluation order.
pub fn simulate_ice_sweep(phantom: &Phantom, sweep: &SweepParams, seed: u64) -> Result<Vec<PosedSlice>> {
    let grid = phantom.ct.grid;
    let noise = phantom.params.noise;
    let geoms = sweep_geometries(&grid, sweep)?;
    geoms
        .into_par_iter()
        .enumerate()
        .map(|(k, geom)| {
            let sampled = sample_grid(&grid, &phantom.ct.data, &geom, sweep.interp);
            let fan = fan_mask(&geom, &grid, sweep);
            let validity: Vec<bool> = fan.iter().zip(&sampled.out_of_bounds).map(|(&f, &o)| f && !o).collect();
            let mut pixels: Vec<f64> = sampled.values.iter().zip(&validity).map(|(&x, &ok)| if ok { x } else { 0.0 }).collect();
            if noise.enabled && noise.speckle_variance > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64);
                apply_speckle(&mut pixels, &validity, noise.speckle_variance, &mut rng)?;
            }
            let mut labels = project_labels(&phantom.labels, &geom).classes;
            for (l, &ok) in labels.iter_mut().zip(&validity) {
                if !ok {
                    *l = 0;
                }
            }
            PosedSlice::new(geom, pixels, validity, Some(labels))
        })
        .collect()
}
