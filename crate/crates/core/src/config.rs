//! Pipeline configuration, loadable from TOML.
//!
//! Every table and field is optional; missing values take the defaults.
//!
//! ```toml
//! mode = "image-rotate"
//! tol = 0.25
//! max_iter = 5
//!
//! [preprocess.smoothing]
//! mean_size = 15
//!
//! [trace]
//! gating_distance = 3.0
//!
//! [valleys]
//! min_separation = 80
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::read_to_string;
use crate::preprocess::PreprocessConfig;
use crate::projection::ValleyParams;
use crate::rotation::{Mode, ModeParams, TraceConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    pub preprocess: PreprocessConfig,
    pub trace: TraceConfig,
    pub valleys: ValleyParams,
    pub mode: Mode,
    /// Residual tilt (degrees) below which de-rotation stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        let m = ModeParams::default();
        Self {
            preprocess: PreprocessConfig::default(),
            trace: m.trace,
            valleys: m.valleys,
            mode: Mode::default(),
            tol: m.tol,
            max_iter: m.max_iter,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.trace.validate()?;
        if !(self.tol > 0.0) {
            return Err(Error::param("tol must be positive"));
        }
        if self.max_iter < 1 {
            return Err(Error::param("max_iter must be >= 1"));
        }
        if self.valleys.min_separation == Some(0) {
            return Err(Error::param("min_separation must be >= 1"));
        }
        Ok(())
    }

    pub fn mode_params(&self) -> ModeParams {
        ModeParams {
            trace: self.trace,
            valleys: self.valleys,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&read_to_string(path.as_ref())?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}
