//! Rigid poses, posed slices and regular voxel grids.
//!
//! Conventions used everywhere in the crate:
//!
//! - World coordinates are millimetres.
//! - A slice's local frame has `u` along image columns and `v` along image
//!   rows; the pose maps local millimetres `(u * spacing_u, v * spacing_v, 0)`
//!   to world millimetres. Pixel spacing is never folded into the pose.
//! - Integer pixel and voxel coordinates refer to centres, not corners.
//! - Grids are stored x-fastest: `index = i + nx * (j + ny * k)`.

use nalgebra::{Matrix3, Matrix4, Point3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance for accepting a matrix as a rotation.
pub const ORTHONORMAL_TOL: f64 = 1e-6;

/// A rigid 4x4 homogeneous transform from a local frame to world mm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    matrix: Matrix4<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            matrix: Matrix4::identity(),
        }
    }

    /// Validates `matrix` and snaps its rotation block back onto SO(3) with
    /// a polar decomposition.
    pub fn from_matrix(matrix: Matrix4<f64>) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("pose contains non-finite entries"));
        }
        let bottom = matrix.row(3);
        if bottom[0] != 0.0 || bottom[1] != 0.0 || bottom[2] != 0.0 || bottom[3] != 1.0 {
            return Err(Error::validation(format!(
                "pose bottom row must be (0, 0, 0, 1), got ({}, {}, {}, {})",
                bottom[0], bottom[1], bottom[2], bottom[3]
            )));
        }
        let rotation = polar_rotation(&matrix.fixed_view::<3, 3>(0, 0).into_owned())?;
        let translation = matrix.fixed_view::<3, 1>(0, 3).into_owned();
        Ok(Self::from_parts_unchecked(rotation, translation))
    }

    /// Builds a pose from 16 row-major reals.
    pub fn from_row_major(values: &[f64]) -> Result<Self> {
        if values.len() != 16 {
            return Err(Error::validation(format!(
                "pose needs 16 values, got {}",
                values.len()
            )));
        }
        Self::from_matrix(Matrix4::from_row_slice(values))
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = self.matrix[(r, c)];
            }
        }
        out
    }

    /// Rotation followed by translation. The rotation is validated like
    /// [`Pose::from_matrix`].
    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        Self::from_matrix(m)
    }

    pub(crate) fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        let mut matrix = Matrix4::identity();
        matrix.fixed_view_mut::<3, 3>(0, 0).copy_from(&rotation);
        matrix.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        Pose { matrix }
    }

    pub fn translation(x: f64, y: f64, z: f64) -> Self {
        Self::from_parts_unchecked(Matrix3::identity(), Vector3::new(x, y, z))
    }

    pub fn rotation_x(angle: f64) -> Self {
        Self::from_parts_unchecked(rotation_about(0, angle), Vector3::zeros())
    }

    pub fn rotation_y(angle: f64) -> Self {
        Self::from_parts_unchecked(rotation_about(1, angle), Vector3::zeros())
    }

    pub fn rotation_z(angle: f64) -> Self {
        Self::from_parts_unchecked(rotation_about(2, angle), Vector3::zeros())
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.matrix.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation_vector(&self) -> Vector3<f64> {
        self.matrix.fixed_view::<3, 1>(0, 3).into_owned()
    }

    /// `self * other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            matrix: self.matrix * other.matrix,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation().transpose();
        let t = -(rt * self.translation_vector());
        Self::from_parts_unchecked(rt, t)
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        let h = self.matrix * Vector4::new(p.x, p.y, p.z, 1.0);
        Point3::new(h.x, h.y, h.z)
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * v
    }
}

/// Elementary rotation about axis 0, 1 or 2.
pub fn rotation_about(axis: usize, angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    match axis {
        0 => Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
        1 => Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
        2 => Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
        _ => panic!("rotation axis must be 0, 1 or 2"),
    }
}

/// Largest absolute entry of `RᵀR − I`.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

/// Checks that `r` is a proper rotation within [`ORTHONORMAL_TOL`] and
/// returns the closest rotation in the Frobenius sense.
pub(crate) fn polar_rotation(r: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let err = orthonormality_error(r);
    if err > ORTHONORMAL_TOL {
        return Err(Error::validation(format!(
            "rotation block is not orthonormal (max |RᵀR − I| = {err:e})"
        )));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > ORTHONORMAL_TOL {
        return Err(Error::validation(format!(
            "rotation block must have determinant +1, got {det}"
        )));
    }
    // Already orthonormal to rounding: keep it, so snapping is idempotent.
    if err <= 8.0 * f64::EPSILON {
        return Ok(*r);
    }
    let svd = r.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Internal("SVD did not converge".into())),
    };
    Ok(u * v_t)
}

/// Placement and sampling lattice of a planar image, without pixel data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SliceGeometry {
    width: usize,
    height: usize,
    spacing_u: f64,
    spacing_v: f64,
    pose: Pose,
}

impl SliceGeometry {
    pub fn new(width: usize, height: usize, spacing_u: f64, spacing_v: f64, pose: Pose) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::validation(format!(
                "slice must be at least 1x1, got {width}x{height}"
            )));
        }
        if !(spacing_u > 0.0 && spacing_v > 0.0) || !spacing_u.is_finite() || !spacing_v.is_finite() {
            return Err(Error::validation(format!(
                "pixel spacing must be positive, got ({spacing_u}, {spacing_v})"
            )));
        }
        Ok(SliceGeometry {
            width,
            height,
            spacing_u,
            spacing_v,
            pose,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> (f64, f64) {
        (self.spacing_u, self.spacing_v)
    }

    pub fn pose(&self) -> &Pose {
        &self.pose
    }

    /// Unit normal of the slice plane in world coordinates.
    pub fn normal(&self) -> Vector3<f64> {
        self.pose.rotation().column(2).into_owned()
    }

    /// World position of (possibly fractional) pixel coordinates.
    pub fn slice_to_world(&self, u: f64, v: f64) -> Point3<f64> {
        self.pose
            .transform_point(&Point3::new(u * self.spacing_u, v * self.spacing_v, 0.0))
    }

    /// Inverse of [`slice_to_world`](Self::slice_to_world), plus the signed
    /// distance of `p` from the plane along [`normal`](Self::normal).
    pub fn world_to_slice(&self, p: &Point3<f64>) -> (f64, f64, f64) {
        let local = self.pose.rotation().transpose() * (p.coords - self.pose.translation_vector());
        (local.x / self.spacing_u, local.y / self.spacing_v, local.z)
    }

    /// World positions of the four extreme pixel centres.
    pub fn corners(&self) -> [Point3<f64>; 4] {
        let (u1, v1) = ((self.width - 1) as f64, (self.height - 1) as f64);
        [
            self.slice_to_world(0.0, 0.0),
            self.slice_to_world(u1, 0.0),
            self.slice_to_world(0.0, v1),
            self.slice_to_world(u1, v1),
        ]
    }
}

/// A 2D image with its rigid placement, fan validity mask and optional
/// per-pixel class labels. Storage is row-major (`v * width + u`).
#[derive(Clone, Debug, PartialEq)]
pub struct PosedSlice {
    geometry: SliceGeometry,
    pixels: Vec<f64>,
    validity: Vec<bool>,
    labels: Option<Vec<u8>>,
}

impl PosedSlice {
    pub fn new(
        geometry: SliceGeometry,
        pixels: Vec<f64>,
        validity: Vec<bool>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let n = geometry.len();
        if pixels.len() != n || validity.len() != n {
            return Err(Error::validation(format!(
                "slice arrays must have {n} entries (pixels: {}, validity: {})",
                pixels.len(),
                validity.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !(-1.0..=1.0).contains(*p)) {
            return Err(Error::validation(format!(
                "pixel intensity {bad} outside [-1, 1]"
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::validation(format!(
                    "slice labels must have {n} entries, got {}",
                    labels.len()
                )));
            }
            if let Some(bad) = labels.iter().find(|&&c| c as usize >= crate::NUM_CLASSES) {
                return Err(Error::validation(format!("class id {bad} out of range 0..6")));
            }
        }
        Ok(PosedSlice {
            geometry,
            pixels,
            validity,
            labels,
        })
    }

    /// A slice with every pixel valid and no labels.
    pub fn fully_valid(geometry: SliceGeometry, pixels: Vec<f64>) -> Result<Self> {
        let n = geometry.len();
        Self::new(geometry, pixels, vec![true; n], None)
    }

    pub fn geometry(&self) -> &SliceGeometry {
        &self.geometry
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn validity(&self) -> &[bool] {
        &self.validity
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn slice_to_world(&self, u: f64, v: f64) -> Point3<f64> {
        self.geometry.slice_to_world(u, v)
    }

    pub fn world_to_slice(&self, p: &Point3<f64>) -> (f64, f64, f64) {
        self.geometry.world_to_slice(p)
    }
}

/// A regular axis-aligned lattice of voxel centres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// World position of the centre of voxel (0, 0, 0).
    pub origin: [f64; 3],
}

impl GridSpec {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        let grid = GridSpec {
            dims,
            spacing,
            origin,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// A cubic grid of `n³` voxels with isotropic `spacing`, centred on the
    /// world origin.
    pub fn centered_cube(n: usize, spacing: f64) -> Result<Self> {
        let half = (n as f64 - 1.0) * spacing / 2.0;
        Self::new([n; 3], [spacing; 3], [-half; 3])
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::validation(format!(
                "grid dims must be positive, got {:?}",
                self.dims
            )));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::validation(format!(
                "grid spacing must be positive, got {:?}",
                self.spacing
            )));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::validation("grid origin must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let i = index % self.dims[0];
        let rest = index / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Point3<f64> {
        Point3::new(
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        )
    }

    /// Continuous voxel coordinates of a world point.
    #[inline]
    pub fn world_to_continuous(&self, p: &Point3<f64>) -> [f64; 3] {
        [
            (p.x - self.origin[0]) / self.spacing[0],
            (p.y - self.origin[1]) / self.spacing[1],
            (p.z - self.origin[2]) / self.spacing[2],
        ]
    }

    /// Nearest voxel to continuous coordinates, if inside the grid. Ties at
    /// exact half-way points round up.
    #[inline]
    pub fn nearest_voxel(&self, c: &[f64; 3]) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let r = (c[a] + 0.5).floor();
            if !(r >= 0.0 && r < self.dims[a] as f64) {
                return None;
            }
            out[a] = r as usize;
        }
        Some(out)
    }

    /// World centre of the grid box.
    pub fn center(&self) -> Point3<f64> {
        self.voxel_center(0, 0, 0)
            + Vector3::new(
                (self.dims[0] - 1) as f64 * self.spacing[0] / 2.0,
                (self.dims[1] - 1) as f64 * self.spacing[1] / 2.0,
                (self.dims[2] - 1) as f64 * self.spacing[2] / 2.0,
            )
    }

    /// World-space extremes of the voxel centres.
    pub fn bounds(&self) -> (Point3<f64>, Point3<f64>) {
        (
            self.voxel_center(0, 0, 0),
            self.voxel_center(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1),
        )
    }

    pub fn same_lattice(&self, other: &GridSpec) -> bool {
        self == other
    }
}
