//! Spatial extent arithmetic for stacks of strided convolutions and
//! transposed convolutions. Only extents are tracked, not channel widths.
//! Works for any number of axes.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Deconv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer {
    pub kind: LayerKind,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Layer {
    pub const fn conv(kernel: usize, stride: usize, padding: usize) -> Self {
        Layer { kind: LayerKind::Conv, kernel, stride, padding }
    }

    pub const fn deconv(kernel: usize, stride: usize, padding: usize) -> Self {
        Layer { kind: LayerKind::Deconv, kernel, stride, padding }
    }

    /// Output extent along one axis, or `None` if it would be < 1.
    pub fn output(&self, n: usize) -> Option<usize> {
        let (n, k, s, p) = (n as i64, self.kernel as i64, self.stride as i64, self.padding as i64);
        let out = match self.kind {
            LayerKind::Conv => (n + 2 * p - k).div_euclid(s) + 1,
            LayerKind::Deconv => (n - 1) * s - 2 * p + k,
        };
        (out >= 1).then_some(out as usize)
    }
}

/// Extents after every layer; element `i` is the output of layer `i + 1`.
/// The error names the first layer (1-based) whose output would vanish.
pub fn stack_shapes(extents: &[usize], layers: &[Layer]) -> Result<Vec<Vec<usize>>> {
    if extents.is_empty() || extents.contains(&0) {
        return Err(Error::validation(format!("input extents must all be >= 1, got {extents:?}")));
    }
    for (i, l) in layers.iter().enumerate() {
        if l.kernel == 0 || l.stride == 0 {
            return Err(Error::Shape {
                layer: i + 1,
                message: "kernel and stride must be >= 1".into(),
            });
        }
    }
    let mut current = extents.to_vec();
    let mut out = Vec::with_capacity(layers.len());
    for (i, l) in layers.iter().enumerate() {
        let next: Option<Vec<usize>> = current.iter().map(|&n| l.output(n)).collect();
        current = next.ok_or_else(|| Error::Shape {
            layer: i + 1,
            message: format!("{:?} k{} s{} p{} maps extents {current:?} below 1", l.kind, l.kernel, l.stride, l.padding),
        })?;
        out.push(current.clone());
    }
    Ok(out)
}

/// Generator: 8 downsampling blocks then 8 upsampling blocks, all k4 s2 p1.
pub fn unet8() -> Vec<Layer> {
    let mut v = vec![Layer::conv(4, 2, 1); 8];
    v.extend(std::iter::repeat(Layer::deconv(4, 2, 1)).take(8));
    v
}

/// Patch discriminator: 3 downsampling blocks then a k3 s1 p1 convolution.
pub fn discriminator() -> Vec<Layer> {
    vec![Layer::conv(4, 2, 1), Layer::conv(4, 2, 1), Layer::conv(4, 2, 1), Layer::conv(3, 1, 1)]
}

pub fn preset(name: &str) -> Result<Vec<Layer>> {
    match name {
        "unet8" => Ok(unet8()),
        "disc" => Ok(discriminator()),
        other => Err(Error::validation(format!("unknown layer preset '{other}' (expected unet8 or disc)"))),
    }
}
