//! Pipeline tunables and their line-oriented `key = value` form.

use std::fmt::Write as _;

use thiserror::Error;

use crate::density::ScaleWeights;
use crate::gaze::{default_standard_size, FrameSize};
use crate::geometry::{ScaleBoundaries, SceneExtent};
use crate::saccade::ScaleGrids;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    Invalid {
        key: String,
        value: String,
        reason: String,
    },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<ConfigError>,
    },
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

pub(crate) fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse::<T>()
        .map_err(|e| invalid(key, value, e.to_string()))
}

fn parse_list<T: std::str::FromStr, const N: usize>(
    key: &str,
    value: &str,
) -> Result<[T; N], ConfigError>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = value
        .split(',')
        .map(|s| parse_num::<T>(key, s))
        .collect::<Result<_, _>>()?;
    let got = items.len();
    items.try_into().map_err(|_| {
        invalid(
            key,
            value,
            format!("expected {N} comma-separated values, got {got}"),
        )
    })
}

/// Iterates `key = value` pairs of a config text, skipping blanks and
/// `#` comments. Yields 1-based line numbers.
pub fn key_values(text: &str) -> impl Iterator<Item = Result<(usize, &str, &str), ConfigError>> {
    text.lines().enumerate().filter_map(|(n, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            return None;
        }
        Some(match line.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => Ok((n + 1, k.trim(), v.trim())),
            _ => Err(ConfigError::Syntax {
                line: n + 1,
                text: raw.to_string(),
            }),
        })
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Original pixels per density-map pixel.
    pub downsample: f64,
    pub boundaries: ScaleBoundaries,
    pub grids: ScaleGrids,
    /// Minimum expected object count for a cell to become a patch.
    pub threshold: f64,
    pub expansion: f64,
    pub alphas: ScaleWeights,
    pub count_scale: f64,
    pub nms_iou: f64,
    /// `None` derives the frame from the tiny grid and expansion.
    pub standard_size: Option<FrameSize>,
    pub workers: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            downsample: 32.0,
            boundaries: ScaleBoundaries::default(),
            grids: ScaleGrids::default(),
            threshold: 0.2,
            expansion: 1.2,
            alphas: ScaleWeights::default(),
            count_scale: 1000.0,
            nms_iou: 0.5,
            standard_size: None,
            workers: 1,
            seed: 0,
        }
    }
}

pub const KEYS: [&str; 11] = [
    "downsample",
    "boundaries",
    "grids",
    "threshold",
    "expansion",
    "alphas",
    "count_scale",
    "nms_iou",
    "standard_size",
    "workers",
    "seed",
];

impl PipelineConfig {
    /// Applies one setting, validating it against its owner's preconditions.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let positive_finite = |v: f64| v.is_finite() && v > 0.0;
        match key {
            "downsample" => {
                let v: f64 = parse_num(key, value)?;
                if !(v.is_finite() && v >= 1.0) {
                    return Err(invalid(key, value, "must be >= 1"));
                }
                self.downsample = v;
            }
            "boundaries" => {
                let v = parse_list::<f64, 3>(key, value)?;
                self.boundaries =
                    ScaleBoundaries::new(v).map_err(|e| invalid(key, value, e.to_string()))?;
            }
            "grids" => {
                let v = parse_list::<u32, 4>(key, value)?;
                self.grids =
                    ScaleGrids::from_sizes(v).map_err(|e| invalid(key, value, e.to_string()))?;
            }
            "threshold" => {
                let v: f64 = parse_num(key, value)?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(invalid(key, value, "must be >= 0"));
                }
                self.threshold = v;
            }
            "expansion" => {
                let v: f64 = parse_num(key, value)?;
                if !(v.is_finite() && v >= 1.0) {
                    return Err(invalid(key, value, "must be >= 1"));
                }
                self.expansion = v;
            }
            "alphas" => {
                let v = parse_list::<f64, 4>(key, value)?;
                self.alphas =
                    ScaleWeights::new(v).map_err(|e| invalid(key, value, e.to_string()))?;
            }
            "count_scale" => {
                let v: f64 = parse_num(key, value)?;
                if !positive_finite(v) {
                    return Err(invalid(key, value, "must be > 0"));
                }
                self.count_scale = v;
            }
            "nms_iou" => {
                let v: f64 = parse_num(key, value)?;
                if !(v > 0.0 && v <= 1.0) {
                    return Err(invalid(key, value, "must lie in (0, 1]"));
                }
                self.nms_iou = v;
            }
            "standard_size" => {
                self.standard_size = if value.trim() == "auto" {
                    None
                } else {
                    let (w, h) = value
                        .trim()
                        .split_once('x')
                        .ok_or_else(|| invalid(key, value, "expected WxH or auto"))?;
                    let size = FrameSize::new(parse_num(key, w)?, parse_num(key, h)?)
                        .ok_or_else(|| invalid(key, value, "must be positive"))?;
                    Some(size)
                };
            }
            "workers" => {
                let v: usize = parse_num(key, value)?;
                if v == 0 {
                    return Err(invalid(key, value, "must be >= 1"));
                }
                self.workers = v;
            }
            "seed" => self.seed = parse_num(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Layers a config file over `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for item in key_values(text) {
            let (line, k, v) = item?;
            self.set(k, v).map_err(|e| ConfigError::Line {
                line,
                source: Box::new(e),
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Effective configuration in the same `key = value` form it is read in.
    pub fn to_text(&self) -> String {
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut s = String::new();
        let _ = writeln!(s, "downsample = {}", self.downsample);
        let _ = writeln!(s, "boundaries = {}", list(&self.boundaries.values()));
        let grids = self.grids.sizes().map(|g| g.to_string()).join(",");
        let _ = writeln!(s, "grids = {grids}");
        let _ = writeln!(s, "threshold = {}", self.threshold);
        let _ = writeln!(s, "expansion = {}", self.expansion);
        let _ = writeln!(s, "alphas = {}", list(&self.alphas.0));
        let _ = writeln!(s, "count_scale = {}", self.count_scale);
        let _ = writeln!(s, "nms_iou = {}", self.nms_iou);
        match self.standard_size {
            Some(f) => {
                let _ = writeln!(s, "standard_size = {}x{}", f.width, f.height);
            }
            None => {
                let _ = writeln!(s, "standard_size = auto");
            }
        }
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }

    pub fn standard_size_for(&self, extent: SceneExtent) -> FrameSize {
        self.standard_size
            .unwrap_or_else(|| default_standard_size(extent, &self.grids, self.expansion))
    }
}
