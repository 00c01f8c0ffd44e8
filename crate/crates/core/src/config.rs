//! Run parameters and the run configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::ConflictParams;
use crate::io::TrackFormat;
use crate::pairing::PairingParams;
use crate::trajectory::ResampleParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Format(String),
    #[error("parameter {name} = {value} outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Use `fixed_threshold` as is.
    Fixed,
    /// Percentile of the residual stds of all fitted pedestrians.
    Percentile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CatalogFormat {
    Jsonl,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunParams {
    pub period: f64,
    pub smooth_window: f64,
    pub ped_radius: f64,
    pub speed_eps: f64,
    pub min_moving_duration: f64,
    pub min_ca_area: f64,
    pub a_thresh: f64,
    pub min_reaction_len: f64,
    pub horizon: f64,
    pub pc_window: f64,
    pub critical_pet: f64,
    pub percentile: f64,
    pub threshold_mode: ThresholdMode,
    pub fixed_threshold: f64,
    pub min_fit_samples: usize,
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams {
            period: 0.04,
            smooth_window: 0.52,
            ped_radius: 0.3,
            speed_eps: 0.1,
            min_moving_duration: 0.5,
            min_ca_area: 0.01,
            a_thresh: -0.4,
            min_reaction_len: 0.2,
            horizon: 10.0,
            pc_window: 4.0,
            critical_pet: 2.0,
            percentile: 0.95,
            threshold_mode: ThresholdMode::Fixed,
            fixed_threshold: 0.04,
            min_fit_samples: crate::motion::MIN_FIT_SAMPLES,
        }
    }
}

fn check(name: &'static str, value: f64, ok: bool, range: &'static str) -> Result<(), ConfigError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::OutOfRange { name, value, range })
    }
}

impl RunParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check("period", self.period, self.period > 0.0 && self.period <= 1.0, "(0, 1]")?;
        check(
            "smooth_window",
            self.smooth_window,
            self.smooth_window >= 0.0 && self.smooth_window <= 10.0,
            "[0, 10]",
        )?;
        check("ped_radius", self.ped_radius, self.ped_radius > 0.0 && self.ped_radius <= 2.0, "(0, 2]")?;
        check("speed_eps", self.speed_eps, self.speed_eps >= 0.0, "[0, inf)")?;
        check("min_moving_duration", self.min_moving_duration, self.min_moving_duration >= 0.0, "[0, inf)")?;
        check("min_ca_area", self.min_ca_area, self.min_ca_area >= 0.0, "[0, inf)")?;
        check("a_thresh", self.a_thresh, self.a_thresh < 0.0, "(-inf, 0)")?;
        check("min_reaction_len", self.min_reaction_len, self.min_reaction_len > 0.0, "(0, inf)")?;
        check("horizon", self.horizon, self.horizon > 0.0 && self.horizon <= 120.0, "(0, 120]")?;
        check("pc_window", self.pc_window, self.pc_window > 0.0, "(0, inf)")?;
        check(
            "critical_pet",
            self.critical_pet,
            self.critical_pet > 0.0 && self.critical_pet <= self.pc_window,
            "(0, pc_window]",
        )?;
        check("percentile", self.percentile, self.percentile > 0.0 && self.percentile < 1.0, "(0, 1)")?;
        check("fixed_threshold", self.fixed_threshold, self.fixed_threshold >= 0.0, "[0, inf)")?;
        check(
            "min_fit_samples",
            self.min_fit_samples as f64,
            self.min_fit_samples >= crate::motion::MIN_FIT_SAMPLES,
            "[10, inf)",
        )?;
        Ok(())
    }

    pub fn resample(&self) -> ResampleParams {
        ResampleParams {
            period: self.period,
            smooth_window: self.smooth_window,
            ped_radius: self.ped_radius,
        }
    }

    pub fn pairing(&self) -> PairingParams {
        PairingParams {
            speed_eps: self.speed_eps,
            min_duration: self.min_moving_duration,
        }
    }

    pub fn conflict(&self) -> ConflictParams {
        ConflictParams {
            min_area: self.min_ca_area,
            a_thresh: self.a_thresh,
            min_reaction_len: self.min_reaction_len,
            horizon: self.horizon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub trajectories: PathBuf,
    pub scene: PathBuf,
    pub output: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Formats {
    #[serde(default = "default_track_format")]
    pub trajectories: TrackFormat,
    #[serde(default = "default_catalog_format")]
    pub catalog: CatalogFormat,
}

fn default_track_format() -> TrackFormat {
    TrackFormat::Csv
}

fn default_catalog_format() -> CatalogFormat {
    CatalogFormat::Jsonl
}

impl Default for Formats {
    fn default() -> Self {
        Formats {
            trajectories: default_track_format(),
            catalog: default_catalog_format(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    #[serde(default)]
    pub params: RunParams,
    #[serde(default)]
    pub formats: Formats,
}

impl RunConfig {
    /// Parses and validates. Relative paths stay relative to the working
    /// directory; use [`RunConfig::load`] to resolve them against the file.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Format(e.to_string()))?;
        cfg.params.validate()?;
        Ok(cfg)
    }

    /// Loads a config file, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = RunConfig::from_toml_str(&text)?;
        if let Some(dir) = path.parent() {
            cfg.paths.resolve_against(dir);
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

impl Paths {
    pub fn resolve_against(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut self.trajectories);
        fix(&mut self.scene);
        fix(&mut self.output);
        if let Some(a) = self.annotations.as_mut() {
            fix(a);
        }
    }
}
