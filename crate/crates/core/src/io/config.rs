//! JSON run configuration. Every field is optional; omitted fields take
//! their defaults. Command-line flags override the file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_json, read_string};
use crate::augment::PerturbationRanges;
use crate::geometry::GridSpec;
use crate::losses::LossConfig;
use crate::phantom::{PhantomParams, SweepParams};
use crate::volume::Interp;
use crate::{Error, Result};

/// Grid planned around a sweep when the manifest carries none.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub spacing: f64,
    pub margin: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            spacing: 1.0,
            margin: 2.0,
        }
    }
}

/// Cubic grid the phantom is rendered on, centred at the world origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomGridConfig {
    pub dims: usize,
    pub spacing: f64,
}

impl Default for PhantomGridConfig {
    fn default() -> Self {
        PhantomGridConfig { dims: 64, spacing: 1.0 }
    }
}

impl PhantomGridConfig {
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::centered_cube(self.dims, self.spacing)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompletionConfig {
    pub sigma_mm: f64,
    pub iterations: usize,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        CompletionConfig {
            sigma_mm: 2.0,
            iterations: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    pub max_dist_mm: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig { max_dist_mm: 10.0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub grid: GridConfig,
    /// Splatting mode for `build-volume`.
    pub splat: Interp,
    pub losses: LossConfig,
    pub augmentation: PerturbationRanges,
    pub phantom: PhantomParams,
    pub phantom_grid: PhantomGridConfig,
    pub sweep: SweepParams,
    pub completion: CompletionConfig,
    pub segmentation: SegmentationConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let value = parse_json(path, &read_string(path)?)?;
        let cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| Error::format(path, format!("bad run config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grid.spacing > 0.0) || !(self.grid.margin >= 0.0) {
            return Err(Error::validation("grid.spacing must be > 0 and grid.margin >= 0"));
        }
        self.losses.validate()?;
        self.augmentation.validate()?;
        self.phantom.validate()?;
        self.phantom_grid.grid()?;
        self.sweep.validate()?;
        if !(self.completion.sigma_mm > 0.0) || self.completion.iterations == 0 {
            return Err(Error::validation("completion.sigma_mm must be > 0 and iterations >= 1"));
        }
        if !(self.segmentation.max_dist_mm >= 0.0) {
            return Err(Error::validation("segmentation.max_dist_mm must be >= 0"));
        }
        Ok(())
    }

    /// Resolved configuration as pretty JSON, for the run log.
    pub fn echo(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }
}
