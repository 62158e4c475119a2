//! Per-scale density rasters: ground-truth rendering, the scale-weighted
//! regression loss, and count-scale conversions.
//!
//! Every annotation becomes one truncated Gaussian of unit mass on the map of
//! its scale level. Integrating a map over a region therefore estimates how
//! many objects of that scale sit in the region.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{scale_bucket, BoundingBox, ScaleBoundaries, ScaleLevel, SceneExtent};
use crate::scene::Annotation;

#[derive(Debug, Error, PartialEq)]
pub enum DensityError {
    #[error("downsample factor must be finite and >= 1, got {0}")]
    Downsample(f64),
    #[error("density map must have at least one cell, got {width}x{height}")]
    EmptyMap { width: usize, height: usize },
    #[error("density map has {got} values, expected {expected}")]
    ValueCount { expected: usize, got: usize },
    #[error("density value at index {index} is negative or non-finite ({value})")]
    BadValue { index: usize, value: f64 },
    #[error("annotation {id} has its center outside the scene")]
    CenterOutside { id: u64 },
    #[error("density map geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("count-scale factor must be finite and positive, got {0}")]
    Factor(f64),
    #[error("loss weights must be finite and non-negative: {0:?}")]
    Weights([f64; 4]),
}

/// Row-major raster of non-negative densities (objects per map pixel).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap {
    width: usize,
    height: usize,
    downsample: f64,
    values: Vec<f64>,
}

impl DensityMap {
    pub fn zeros(width: usize, height: usize, downsample: f64) -> Result<Self, DensityError> {
        check_downsample(downsample)?;
        if width == 0 || height == 0 {
            return Err(DensityError::EmptyMap { width, height });
        }
        Ok(Self {
            width,
            height,
            downsample,
            values: vec![0.0; width * height],
        })
    }

    pub fn from_values(
        width: usize,
        height: usize,
        downsample: f64,
        values: Vec<f64>,
    ) -> Result<Self, DensityError> {
        let mut map = Self::zeros(width, height, downsample)?;
        if values.len() != width * height {
            return Err(DensityError::ValueCount {
                expected: width * height,
                got: values.len(),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(DensityError::BadValue { index, value });
        }
        map.values = values;
        Ok(map)
    }

    /// Map size for a scene: `ceil(extent / downsample)` on each axis.
    pub fn dims_for(extent: SceneExtent, downsample: f64) -> Result<(usize, usize), DensityError> {
        check_downsample(downsample)?;
        let w = (extent.width as f64 / downsample).ceil() as usize;
        let h = (extent.height as f64 / downsample).ceil() as usize;
        Ok((w.max(1), h.max(1)))
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn downsample(&self) -> f64 {
        self.downsample
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum()
    }

    fn same_geometry(&self, other: &DensityMap) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.downsample == other.downsample
    }

    fn map_values(&self, f: impl Fn(f64) -> f64) -> DensityMap {
        DensityMap {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }
}

fn check_downsample(d: f64) -> Result<(), DensityError> {
    if d.is_finite() && d >= 1.0 {
        Ok(())
    } else {
        Err(DensityError::Downsample(d))
    }
}

/// One density map per scale level, all with the same geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMapSet {
    maps: [DensityMap; 4],
}

impl DensityMapSet {
    pub fn new(maps: [DensityMap; 4]) -> Result<Self, DensityError> {
        let first = &maps[0];
        if let Some(bad) = maps[1..].iter().find(|m| !first.same_geometry(m)) {
            return Err(DensityError::GeometryMismatch(format!(
                "{}x{}@{} vs {}x{}@{}",
                first.width, first.height, first.downsample, bad.width, bad.height, bad.downsample
            )));
        }
        Ok(Self { maps })
    }

    pub fn zeros(width: usize, height: usize, downsample: f64) -> Result<Self, DensityError> {
        let m = DensityMap::zeros(width, height, downsample)?;
        Ok(Self {
            maps: [m.clone(), m.clone(), m.clone(), m],
        })
    }

    pub fn get(&self, scale: ScaleLevel) -> &DensityMap {
        &self.maps[scale.index()]
    }

    pub fn maps(&self) -> &[DensityMap; 4] {
        &self.maps
    }

    pub fn width(&self) -> usize {
        self.maps[0].width
    }

    pub fn height(&self) -> usize {
        self.maps[0].height
    }

    pub fn downsample(&self) -> f64 {
        self.maps[0].downsample
    }

    fn check_same_geometry(&self, other: &DensityMapSet) -> Result<(), DensityError> {
        let (a, b) = (&self.maps[0], &other.maps[0]);
        if a.same_geometry(b) {
            Ok(())
        } else {
            Err(DensityError::GeometryMismatch(format!(
                "{}x{}@{} vs {}x{}@{}",
                a.width, a.height, a.downsample, b.width, b.height, b.downsample
            )))
        }
    }
}

/// Gaussian width in original-image pixels: a third of the longest side,
/// floored, never below one pixel.
pub fn sigma_for(b: &BoundingBox) -> f64 {
    (b.max_side() / 3.0).floor().max(1.0)
}

pub const MIN_MAP_SIGMA: f64 = 1.0;

/// A Gaussian kernel truncated to a square window of half-width `radius`
/// and renormalized to unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStamp {
    /// Center in map-pixel coordinates (pixel `u` spans `[u, u+1)`).
    pub center: (f64, f64),
    pub sigma: f64,
    pub radius: usize,
    /// Map-pixel index of the top-left weight; may lie outside the raster.
    pub origin: (i64, i64),
    pub weights: Vec<f64>,
}

impl GaussianStamp {
    pub fn new(center: (f64, f64), sigma: f64) -> Self {
        let sigma = sigma.max(MIN_MAP_SIGMA);
        let radius = (3.0 * sigma).ceil() as usize;
        let side = 2 * radius + 1;
        let cu = center.0.floor() as i64;
        let cv = center.1.floor() as i64;
        let origin = (cu - radius as i64, cv - radius as i64);
        let inv = 1.0 / (2.0 * sigma * sigma);
        let mut weights = Vec::with_capacity(side * side);
        for dv in 0..side {
            let py = (origin.1 + dv as i64) as f64 + 0.5 - center.1;
            for du in 0..side {
                let px = (origin.0 + du as i64) as f64 + 0.5 - center.0;
                weights.push((-(px * px + py * py) * inv).exp());
            }
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Self {
            center,
            sigma,
            radius,
            origin,
            weights,
        }
    }

    /// Stamp for an annotation on a map with the given downsample factor.
    pub fn for_box(b: &BoundingBox, downsample: f64) -> Self {
        let (cx, cy) = b.center();
        Self::new(
            (cx / downsample, cy / downsample),
            sigma_for(b) / downsample,
        )
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    /// Adds the stamp into `acc`; weights outside the raster are dropped.
    pub fn splat(&self, acc: &mut [f64], width: usize, height: usize) {
        let side = self.side();
        for dv in 0..side {
            let y = self.origin.1 + dv as i64;
            if y < 0 || y >= height as i64 {
                continue;
            }
            let row = y as usize * width;
            for du in 0..side {
                let x = self.origin.0 + du as i64;
                if x < 0 || x >= width as i64 {
                    continue;
                }
                acc[row + x as usize] += self.weights[dv * side + du];
            }
        }
    }
}

/// Renders the ground-truth density set for a scene.
///
/// Stamps are computed in parallel and accumulated in input order, so the
/// output does not depend on the thread count. Values are rounded to `f32`
/// precision so rendered sets survive a DMAP round trip unchanged.
pub fn render_gt_density(
    annotations: &[Annotation],
    extent: SceneExtent,
    downsample: f64,
    boundaries: &ScaleBoundaries,
) -> Result<DensityMapSet, DensityError> {
    let (w, h) = DensityMap::dims_for(extent, downsample)?;
    let scene = extent.as_box();
    for a in annotations {
        let (cx, cy) = a.bbox.center();
        if !scene.contains_point(cx, cy) {
            return Err(DensityError::CenterOutside { id: a.id });
        }
    }

    let stamps: Vec<(ScaleLevel, GaussianStamp)> = annotations
        .par_iter()
        .map(|a| {
            (
                scale_bucket(&a.bbox, boundaries),
                GaussianStamp::for_box(&a.bbox, downsample),
            )
        })
        .collect();

    let mut acc: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; w * h]);
    for (scale, stamp) in &stamps {
        stamp.splat(&mut acc[scale.index()], w, h);
    }

    let maps = acc.map(|values| DensityMap {
        width: w,
        height: h,
        downsample,
        values: values.into_iter().map(|v| v as f32 as f64).collect(),
    });
    DensityMapSet::new(maps)
}

/// Per-scale loss weights, ordered tiny, small, middle, large.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleWeights(pub [f64; 4]);

impl Default for ScaleWeights {
    fn default() -> Self {
        Self([0.01, 0.1, 10.0, 100.0])
    }
}

impl ScaleWeights {
    pub fn new(w: [f64; 4]) -> Result<Self, DensityError> {
        if w.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(Self(w))
        } else {
            Err(DensityError::Weights(w))
        }
    }

    pub fn get(&self, scale: ScaleLevel) -> f64 {
        self.0[scale.index()]
    }
}

/// Weighted sum over scales of the per-pixel mean squared error.
pub fn scale_aware_loss(
    pred: &DensityMapSet,
    gt: &DensityMapSet,
    weights: &ScaleWeights,
) -> Result<f64, DensityError> {
    pred.check_same_geometry(gt)?;
    let loss = ScaleLevel::ALL
        .iter()
        .map(|&s| weights.get(s) * mean_squared_error(pred.get(s), gt.get(s)))
        .sum();
    Ok(loss)
}

fn mean_squared_error(a: &DensityMap, b: &DensityMap) -> f64 {
    let sum: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    sum / a.values.len() as f64
}

fn check_factor(factor: f64) -> Result<(), DensityError> {
    if factor.is_finite() && factor > 0.0 {
        Ok(())
    } else {
        Err(DensityError::Factor(factor))
    }
}

/// Multiplies densities by `factor` (e.g. the 1000x training scale).
pub fn apply_count_scale(map: &DensityMap, factor: f64) -> Result<DensityMap, DensityError> {
    check_factor(factor)?;
    Ok(map.map_values(|v| v * factor))
}

/// Inverse of [`apply_count_scale`].
pub fn remove_count_scale(map: &DensityMap, factor: f64) -> Result<DensityMap, DensityError> {
    check_factor(factor)?;
    Ok(map.map_values(|v| v / factor))
}

impl DensityMapSet {
    pub fn apply_count_scale(&self, factor: f64) -> Result<DensityMapSet, DensityError> {
        check_factor(factor)?;
        Ok(DensityMapSet {
            maps: std::array::from_fn(|i| self.maps[i].map_values(|v| v * factor)),
        })
    }

    pub fn remove_count_scale(&self, factor: f64) -> Result<DensityMapSet, DensityError> {
        check_factor(factor)?;
        Ok(DensityMapSet {
            maps: std::array::from_fn(|i| self.maps[i].map_values(|v| v / factor)),
        })
    }
}
