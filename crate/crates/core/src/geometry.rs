//! Boxes, scene extents and the size buckets shared by every stage.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("box has non-positive size {width}x{height}")]
    Degenerate { width: f64, height: f64 },
    #[error("box has non-finite coordinates")]
    NonFinite,
    #[error("scene extent must be positive, got {width}x{height}")]
    EmptyExtent { width: u64, height: u64 },
    #[error("scale boundaries must be positive and strictly increasing: {0:?}")]
    Boundaries([f64; 3]),
}

/// Axis-aligned box stored as top-left corner plus size.
///
/// Width and height are always positive. Whether the coordinates are in the
/// global scene frame or a patch frame is decided by the owning collection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, width: f64, height: f64) -> Result<Self, GeometryError> {
        if !(x.is_finite() && y.is_finite() && width.is_finite() && height.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if width <= 0.0 || height <= 0.0 {
            return Err(GeometryError::Degenerate { width, height });
        }
        Ok(Self {
            x,
            y,
            width,
            height,
        })
    }

    /// Builds a box from corner coordinates; `None` when the span is empty.
    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Option<Self> {
        Self::new(x0, y0, x1 - x0, y1 - y0).ok()
    }

    #[inline]
    pub fn right(&self) -> f64 {
        self.x + self.width
    }

    #[inline]
    pub fn bottom(&self) -> f64 {
        self.y + self.height
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    #[inline]
    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.width, self.y + 0.5 * self.height)
    }

    #[inline]
    pub fn max_side(&self) -> f64 {
        self.width.max(self.height)
    }

    /// Half-open containment test `[x, right) x [y, bottom)`.
    #[inline]
    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        px >= self.x && px < self.right() && py >= self.y && py < self.bottom()
    }

    pub fn contains(&self, other: &BoundingBox) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.right().min(other.right()) - self.x.max(other.x);
        let h = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn intersect(&self, other: &BoundingBox) -> Option<BoundingBox> {
        Self::from_corners(
            self.x.max(other.x),
            self.y.max(other.y),
            self.right().min(other.right()),
            self.bottom().min(other.bottom()),
        )
    }

    /// Grows (or shrinks) the box by `factor` about its center.
    pub fn scaled_about_center(&self, factor: f64) -> BoundingBox {
        let (cx, cy) = self.center();
        let w = self.width * factor;
        let h = self.height * factor;
        BoundingBox {
            x: cx - 0.5 * w,
            y: cy - 0.5 * h,
            width: w,
            height: h,
        }
    }

    pub fn clip_to(&self, extent: SceneExtent) -> Option<BoundingBox> {
        self.intersect(&extent.as_box())
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x, b.y, b.width, b.height]
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = GeometryError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Size of the full-resolution scene in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawExtent")]
pub struct SceneExtent {
    pub width: u64,
    pub height: u64,
}

#[derive(Deserialize)]
struct RawExtent {
    width: u64,
    height: u64,
}

impl TryFrom<RawExtent> for SceneExtent {
    type Error = GeometryError;

    fn try_from(r: RawExtent) -> Result<Self, Self::Error> {
        SceneExtent::new(r.width, r.height)
    }
}

impl SceneExtent {
    pub fn new(width: u64, height: u64) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::EmptyExtent { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn area(&self) -> u64 {
        self.width * self.height
    }

    pub fn as_box(&self) -> BoundingBox {
        BoundingBox {
            x: 0.0,
            y: 0.0,
            width: self.width as f64,
            height: self.height as f64,
        }
    }
}

impl fmt::Display for SceneExtent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Coarse object-size level used to route objects to density maps and grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleLevel {
    Tiny,
    Small,
    Middle,
    Large,
}

impl ScaleLevel {
    pub const ALL: [ScaleLevel; 4] = [
        ScaleLevel::Tiny,
        ScaleLevel::Small,
        ScaleLevel::Middle,
        ScaleLevel::Large,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ScaleLevel::Tiny => "tiny",
            ScaleLevel::Small => "small",
            ScaleLevel::Middle => "middle",
            ScaleLevel::Large => "large",
        }
    }
}

impl fmt::Display for ScaleLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Longest-side thresholds separating the four scale levels, in original pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleBoundaries([f64; 3]);

impl Default for ScaleBoundaries {
    fn default() -> Self {
        Self([800.0, 1600.0, 3200.0])
    }
}

impl ScaleBoundaries {
    pub fn new(bounds: [f64; 3]) -> Result<Self, GeometryError> {
        let ok = bounds.iter().all(|b| b.is_finite() && *b > 0.0)
            && bounds[0] < bounds[1]
            && bounds[1] < bounds[2];
        if !ok {
            return Err(GeometryError::Boundaries(bounds));
        }
        Ok(Self(bounds))
    }

    pub fn values(&self) -> [f64; 3] {
        self.0
    }
}

pub fn scale_bucket(b: &BoundingBox, boundaries: &ScaleBoundaries) -> ScaleLevel {
    let side = b.max_side();
    let [t0, t1, t2] = boundaries.0;
    if side < t0 {
        ScaleLevel::Tiny
    } else if side < t1 {
        ScaleLevel::Small
    } else if side < t2 {
        ScaleLevel::Middle
    } else {
        ScaleLevel::Large
    }
}

/// COCO-style area buckets used only for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSize {
    Small,
    Middle,
    Large,
}

impl EvalSize {
    pub const ALL: [EvalSize; 3] = [EvalSize::Small, EvalSize::Middle, EvalSize::Large];
}

pub const EVAL_SMALL_AREA: f64 = 96.0 * 96.0;
pub const EVAL_LARGE_AREA: f64 = 288.0 * 288.0;

pub fn eval_size_bucket(b: &BoundingBox) -> EvalSize {
    let area = b.area();
    if area < EVAL_SMALL_AREA {
        EvalSize::Small
    } else if area < EVAL_LARGE_AREA {
        EvalSize::Middle
    } else {
        EvalSize::Large
    }
}
