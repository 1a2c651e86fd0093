//! Exact squared Euclidean distance transform on anisotropic 3D grids
//! (separable lower-envelope-of-parabolas method).

/// Squared distance in mm² from every voxel centre to the nearest site.
/// Voxels get `f64::INFINITY` when there are no sites at all.
///
/// `sites` is laid out x-fastest on a grid of `dims` with per-axis `spacing`.
pub fn squared_edt(dims: [usize; 3], spacing: [f64; 3], sites: &[bool]) -> Vec<f64> {
    let len = dims[0] * dims[1] * dims[2];
    assert_eq!(sites.len(), len, "site mask does not match grid dims");
    let mut dist: Vec<f64> = sites
        .iter()
        .map(|&s| if s { 0.0 } else { f64::INFINITY })
        .collect();
    if !sites.iter().any(|&s| s) {
        return dist;
    }

    let longest = dims.iter().copied().max().unwrap_or(1);
    let mut line = vec![0.0; longest];
    let mut out = vec![0.0; longest];
    let mut scratch = Envelope::with_capacity(longest);

    let strides = [1, dims[0], dims[0] * dims[1]];
    for axis in 0..3 {
        let n = dims[axis];
        if n == 1 {
            continue;
        }
        let stride = strides[axis];
        let s2 = spacing[axis] * spacing[axis];
        let (a, b) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for ob in 0..dims[b] {
            for oa in 0..dims[a] {
                let start = oa * strides[a] + ob * strides[b];
                for q in 0..n {
                    line[q] = dist[start + q * stride];
                }
                scratch.transform(&line[..n], s2, &mut out[..n]);
                for q in 0..n {
                    dist[start + q * stride] = out[q];
                }
            }
        }
    }
    dist
}

/// Euclidean distance in mm to the nearest site.
pub fn edt(dims: [usize; 3], spacing: [f64; 3], sites: &[bool]) -> Vec<f64> {
    squared_edt(dims, spacing, sites)
        .into_iter()
        .map(f64::sqrt)
        .collect()
}

struct Envelope {
    vertices: Vec<usize>,
    bounds: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Envelope {
            vertices: vec![0; n],
            bounds: vec![0.0; n + 1],
        }
    }

    /// One 1D pass: `out[q] = min_p s2 * (q - p)² + f[p]`.
    fn transform(&mut self, f: &[f64], s2: f64, out: &mut [f64]) {
        let n = f.len();
        let v = &mut self.vertices;
        let z = &mut self.bounds;
        let lift = |p: usize| f[p] + s2 * (p * p) as f64;

        let mut count = 0usize;
        for q in 0..n {
            if !f[q].is_finite() {
                continue;
            }
            let mut s = f64::NEG_INFINITY;
            while count > 0 {
                let p = v[count - 1];
                s = (lift(q) - lift(p)) / (2.0 * s2 * (q - p) as f64);
                if s <= z[count - 1] {
                    count -= 1;
                } else {
                    break;
                }
            }
            if count == 0 {
                s = f64::NEG_INFINITY;
            }
            v[count] = q;
            z[count] = s;
            count += 1;
        }

        if count == 0 {
            out.iter_mut().for_each(|o| *o = f64::INFINITY);
            return;
        }
        let mut k = 0usize;
        for (q, o) in out.iter_mut().enumerate() {
            while k + 1 < count && z[k + 1] < q as f64 {
                k += 1;
            }
            let p = v[k];
            let d = q as f64 - p as f64;
            *o = s2 * d * d + f[p];
        }
    }
}
