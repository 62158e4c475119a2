//! Mapping patch detections back to the scene and merging duplicates that
//! come from overlapping patches.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaze::{NormalizedPatch, PatchDetection, PatchResult};
use crate::geometry::{iou, BoundingBox, SceneExtent};

#[derive(Debug, Error, PartialEq)]
pub enum MergeError {
    #[error("NMS IoU threshold must lie in (0, 1], got {0}")]
    Threshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalDetection {
    pub bbox: BoundingBox,
    pub score: f64,
    pub category: u32,
    /// Index of the patch that produced the detection.
    pub source: usize,
}

pub fn to_global(det: &PatchDetection, patch: &NormalizedPatch) -> GlobalDetection {
    GlobalDetection {
        bbox: patch.box_to_global(&det.bbox),
        score: det.score,
        category: det.category,
        source: patch.id,
    }
}

/// Canonical ranking: score descending, then x, y and source ascending.
pub fn rank(a: &GlobalDetection, b: &GlobalDetection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.bbox.x.total_cmp(&b.bbox.x))
        .then(a.bbox.y.total_cmp(&b.bbox.y))
        .then(a.source.cmp(&b.source))
        .then(a.bbox.width.total_cmp(&b.bbox.width))
        .then(a.bbox.height.total_cmp(&b.bbox.height))
        .then(a.category.cmp(&b.category))
}

fn check_threshold(t: f64) -> Result<(), MergeError> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(MergeError::Threshold(t))
    }
}

/// Greedy per-category non-maximum suppression. A detection is dropped when
/// its IoU with an already kept box of the same category exceeds the
/// threshold. The result is in canonical rank order.
pub fn global_nms(
    dets: &[GlobalDetection],
    iou_threshold: f64,
) -> Result<Vec<GlobalDetection>, MergeError> {
    check_threshold(iou_threshold)?;
    let mut order: Vec<&GlobalDetection> = dets.iter().collect();
    order.sort_by(|a, b| rank(a, b));

    let mut kept: Vec<GlobalDetection> = Vec::new();
    // per-category lists of kept boxes
    let mut by_category: std::collections::BTreeMap<u32, Vec<BoundingBox>> = Default::default();
    for d in order {
        let same = by_category.entry(d.category).or_default();
        if same.iter().all(|k| iou(k, &d.bbox) <= iou_threshold) {
            same.push(d.bbox);
            kept.push(*d);
        }
    }
    Ok(kept)
}

/// Maps every patch detection to the scene, clips to the extent and merges.
pub fn merge_run(
    results: &[PatchResult],
    extent: SceneExtent,
    iou_threshold: f64,
) -> Result<Vec<GlobalDetection>, MergeError> {
    check_threshold(iou_threshold)?;
    let scene = extent.as_box();
    let global: Vec<GlobalDetection> = results
        .iter()
        .flat_map(|r| r.detections.iter().map(move |d| to_global(d, &r.patch)))
        .filter_map(|mut g| {
            g.bbox = g.bbox.intersect(&scene)?;
            Some(g)
        })
        .collect();
    global_nms(&global, iou_threshold)
}

/// Row of the final detections JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub bbox: BoundingBox,
    pub score: f64,
    #[serde(default)]
    pub category: u32,
}

impl From<&GlobalDetection> for DetectionRecord {
    fn from(d: &GlobalDetection) -> Self {
        Self {
            bbox: d.bbox,
            score: d.score,
            category: d.category,
        }
    }
}

impl DetectionRecord {
    /// Detections read from a file carry no patch identity; their position
    /// stands in for it.
    pub fn into_global(self, index: usize) -> GlobalDetection {
        GlobalDetection {
            bbox: self.bbox,
            score: self.score,
            category: self.category,
            source: index,
        }
    }
}

pub fn detections_to_json(dets: &[GlobalDetection]) -> String {
    let rows: Vec<DetectionRecord> = dets.iter().map(DetectionRecord::from).collect();
    serde_json::to_string_pretty(&rows).expect("detection serialization is infallible")
}

pub fn detections_from_json(text: &str) -> Result<Vec<GlobalDetection>, serde_json::Error> {
    let rows: Vec<DetectionRecord> = serde_json::from_str(text)?;
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(k, r)| r.into_global(k))
        .collect())
}
