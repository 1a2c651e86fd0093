//! Closed-form least-squares similarity alignment of corresponded points.

use nalgebra::{Matrix3, Point3, Vector3};

use crate::geometry::{orthonormality_error, ORTHONORMAL_TOL};
use crate::{Error, Result};

/// `x ↦ scale · rotation · x + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl SimilarityTransform {
    pub fn new(scale: f64, rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::validation(format!("scale must be positive, got {scale}")));
        }
        if orthonormality_error(&rotation) > ORTHONORMAL_TOL || (rotation.determinant() - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::validation("rotation must be orthonormal with determinant +1"));
        }
        if translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::validation("translation must be finite"));
        }
        Ok(SimilarityTransform {
            scale,
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        SimilarityTransform {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.scale == 1.0 && self.rotation == Matrix3::identity() && self.translation == Vector3::zeros()
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.scale * (self.rotation * p.coords) + self.translation)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        SimilarityTransform {
            scale: 1.0 / self.scale,
            rotation: rt,
            translation: -(rt * self.translation) / self.scale,
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &SimilarityTransform) -> Self {
        SimilarityTransform {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.scale * (self.rotation * other.translation) + self.translation,
        }
    }
}

fn centroid(points: &[Point3<f64>]) -> Vector3<f64> {
    points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / points.len() as f64
}

/// Singular values of the centred scatter matrix, descending.
fn spread(points: &[Point3<f64>], mean: &Vector3<f64>) -> [f64; 3] {
    let mut scatter = Matrix3::zeros();
    for p in points {
        let d = p.coords - mean;
        scatter += d * d.transpose();
    }
    let mut sv: Vec<f64> = scatter.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    [sv[0], sv[1], sv[2]]
}

fn check_spread(points: &[Point3<f64>], mean: &Vector3<f64>, which: &str) -> Result<()> {
    let [s0, s1, _] = spread(points, mean);
    if !(s0 > 0.0) || s1 <= 1e-12 * s0 {
        return Err(Error::Degenerate(format!(
            "{which} points are coincident or collinear"
        )));
    }
    Ok(())
}

/// Best similarity (or rigid, when `with_scale` is false) transform taking
/// `src[i]` onto `dst[i]` in the least-squares sense, and the RMS residual
/// of the fit.
///
/// The rotation comes from the SVD of the centred cross-covariance; when the
/// optimal orthogonal map would be a reflection, the direction of the
/// smallest singular value is flipped so the result is always a proper
/// rotation.
pub fn procrustes_align(
    src: &[Point3<f64>],
    dst: &[Point3<f64>],
    with_scale: bool,
) -> Result<(SimilarityTransform, f64)> {
    if src.len() != dst.len() {
        return Err(Error::validation(format!(
            "point sets differ in size ({} vs {})",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 corresponding points, got {}",
            src.len()
        )));
    }
    if src.iter().chain(dst).any(|p| p.iter().any(|c| !c.is_finite())) {
        return Err(Error::validation("points must be finite"));
    }
    let n = src.len() as f64;
    let mu_s = centroid(src);
    let mu_d = centroid(dst);
    check_spread(src, &mu_s, "source")?;
    check_spread(dst, &mu_d, "target")?;

    let mut cov = Matrix3::zeros();
    let mut var_src = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let xs = s.coords - mu_s;
        let xd = d.coords - mu_d;
        cov += xd * xs.transpose();
        var_src += xs.norm_squared();
    }
    cov /= n;
    var_src /= n;

    let svd = cov.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Internal("SVD did not converge".into())),
    };
    let sigma = svd.singular_values;
    let smallest = (0..3)
        .min_by(|&a, &b| sigma[a].total_cmp(&sigma[b]))
        .unwrap_or(2);
    let mut signs = Vector3::new(1.0, 1.0, 1.0);
    if (u.determinant() * v_t.determinant()) < 0.0 {
        signs[smallest] = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&signs) * v_t;
    let scale = if with_scale {
        sigma.component_mul(&signs).sum() / var_src
    } else {
        1.0
    };
    if !(scale > 0.0) {
        return Err(Error::Degenerate(
            "alignment collapsed to a non-positive scale".into(),
        ));
    }
    let translation = mu_d - scale * (rotation * mu_s);
    let transform = SimilarityTransform {
        scale,
        rotation,
        translation,
    };
    let sq: f64 = src
        .iter()
        .zip(dst)
        .map(|(s, d)| (transform.apply(s) - d).norm_squared())
        .sum();
    Ok((transform, (sq / n).sqrt()))
}
