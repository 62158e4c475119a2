//! Second stage: bring every selected patch to one standard resolution and
//! hand it to a detector.
//!
//! Tiny-scale patches are viewed at roughly native resolution while patches
//! for larger objects are downsampled, so every patch costs the detector the
//! same number of pixels. No pixels exist on this side of the boundary; a
//! [`NormalizedPatch`] is only the transform record that a detector adapter
//! uses to crop and resize the real image.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoundingBox, ScaleLevel, SceneExtent};
use crate::saccade::{Patch, ScaleGrids};
use crate::scene::Annotation;
use crate::seed;

/// Width and height of the detector's input frame, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameSize {
    pub width: u32,
    pub height: u32,
}

impl FrameSize {
    pub fn new(width: u32, height: u32) -> Option<Self> {
        (width > 0 && height > 0).then_some(Self { width, height })
    }

    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }
}

/// Tiny-scale cell size grown by `expansion`, rounded to even integers.
pub fn default_standard_size(extent: SceneExtent, grids: &ScaleGrids, expansion: f64) -> FrameSize {
    let g = grids.get(ScaleLevel::Tiny);
    let even = |len: u64, n: u32| -> u32 {
        let v = len as f64 / n as f64 * expansion;
        ((v / 2.0).round() as u32 * 2).max(2)
    };
    FrameSize {
        width: even(extent.width, g.cells_x),
        height: even(extent.height, g.cells_y),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedPatch {
    /// Position of the patch in the run's patch list.
    pub id: usize,
    pub patch: Patch,
    pub standard_size: FrameSize,
    /// Normalized pixels per original pixel.
    pub zoom: f64,
}

/// Chooses the uniform zoom that fits the patch region inside the standard
/// frame. For the usual near-square patches this is the width ratio.
pub fn normalize(id: usize, patch: Patch, standard_size: FrameSize) -> NormalizedPatch {
    let zw = standard_size.width as f64 / patch.region.width;
    let zh = standard_size.height as f64 / patch.region.height;
    NormalizedPatch {
        id,
        patch,
        standard_size,
        zoom: zw.min(zh),
    }
}

impl NormalizedPatch {
    pub fn region(&self) -> &BoundingBox {
        &self.patch.region
    }

    /// Extent of the occupied part of the normalized frame.
    pub fn frame(&self) -> BoundingBox {
        BoundingBox {
            x: 0.0,
            y: 0.0,
            width: self.patch.region.width * self.zoom,
            height: self.patch.region.height * self.zoom,
        }
    }

    pub fn point_to_frame(&self, x: f64, y: f64) -> (f64, f64) {
        let r = &self.patch.region;
        ((x - r.x) * self.zoom, (y - r.y) * self.zoom)
    }

    pub fn point_to_global(&self, x: f64, y: f64) -> (f64, f64) {
        let r = &self.patch.region;
        (x / self.zoom + r.x, y / self.zoom + r.y)
    }

    /// Global box to frame coordinates, without clipping.
    pub fn box_to_frame(&self, b: &BoundingBox) -> BoundingBox {
        let (x, y) = self.point_to_frame(b.x, b.y);
        BoundingBox {
            x,
            y,
            width: b.width * self.zoom,
            height: b.height * self.zoom,
        }
    }

    /// Frame box back to global coordinates.
    pub fn box_to_global(&self, b: &BoundingBox) -> BoundingBox {
        let (x, y) = self.point_to_global(b.x, b.y);
        BoundingBox {
            x,
            y,
            width: b.width / self.zoom,
            height: b.height / self.zoom,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchDetection {
    pub bbox: BoundingBox,
    pub score: f64,
    pub category: u32,
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("{0}")]
pub struct AdapterError(pub String);

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GazeError {
    #[error("worker count must be at least 1")]
    Workers,
    #[error("detector failed on patch {patch_id} ({scale} cell {cell:?}): {source}")]
    Adapter {
        patch_id: usize,
        scale: ScaleLevel,
        cell: (u32, u32),
        #[source]
        source: AdapterError,
    },
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

/// Boundary to any detector that works on megapixel-sized frames.
///
/// Implementations must return the same detections for the same patch and be
/// callable from several workers at once.
pub trait DetectorAdapter: Send + Sync {
    fn detect(&self, patch: &NormalizedPatch) -> Result<Vec<PatchDetection>, AdapterError>;

    /// Number of patches the adapter prefers per call to [`detect_batch`];
    /// `None` means one patch at a time.
    ///
    /// [`detect_batch`]: DetectorAdapter::detect_batch
    fn batch_size(&self) -> Option<usize> {
        None
    }

    fn detect_batch(
        &self,
        patches: &[NormalizedPatch],
    ) -> Vec<Result<Vec<PatchDetection>, AdapterError>> {
        patches.iter().map(|p| self.detect(p)).collect()
    }
}

impl<T: DetectorAdapter + ?Sized> DetectorAdapter for Arc<T> {
    fn detect(&self, patch: &NormalizedPatch) -> Result<Vec<PatchDetection>, AdapterError> {
        (**self).detect(patch)
    }

    fn batch_size(&self) -> Option<usize> {
        (**self).batch_size()
    }

    fn detect_batch(
        &self,
        patches: &[NormalizedPatch],
    ) -> Vec<Result<Vec<PatchDetection>, AdapterError>> {
        (**self).detect_batch(patches)
    }
}

impl<T: DetectorAdapter + ?Sized> DetectorAdapter for Box<T> {
    fn detect(&self, patch: &NormalizedPatch) -> Result<Vec<PatchDetection>, AdapterError> {
        (**self).detect(patch)
    }

    fn batch_size(&self) -> Option<usize> {
        (**self).batch_size()
    }

    fn detect_batch(
        &self,
        patches: &[NormalizedPatch],
    ) -> Vec<Result<Vec<PatchDetection>, AdapterError>> {
        (**self).detect_batch(patches)
    }
}

/// Answers from ground truth: every annotation whose center lies in the
/// patch, clipped to the patch. Fully visible objects score 1.0; clipped ones
/// score their visible area fraction.
#[derive(Debug, Clone)]
pub struct OracleDetector {
    annotations: Vec<Annotation>,
}

impl OracleDetector {
    pub fn new(ground_truth: &[Annotation]) -> Self {
        Self {
            annotations: ground_truth.to_vec(),
        }
    }
}

impl DetectorAdapter for OracleDetector {
    fn detect(&self, patch: &NormalizedPatch) -> Result<Vec<PatchDetection>, AdapterError> {
        let region = patch.region();
        let frame = patch.frame();
        let mut out = Vec::new();
        for a in &self.annotations {
            let (cx, cy) = a.bbox.center();
            if !region.contains_point(cx, cy) {
                continue;
            }
            let score = if region.contains(&a.bbox) {
                1.0
            } else {
                region.intersection_area(&a.bbox) / a.bbox.area()
            };
            if let Some(bbox) = patch.box_to_frame(&a.bbox).intersect(&frame) {
                out.push(PatchDetection {
                    bbox,
                    score,
                    category: a.category,
                });
            }
        }
        Ok(out)
    }
}

/// Oracle output perturbed by seeded jitter, misses and false positives.
///
/// The random stream for a patch is derived from the seed and the patch
/// geometry, so results do not depend on scheduling.
#[derive(Debug, Clone)]
pub struct NoisyDetector {
    oracle: OracleDetector,
    jitter: f64,
    miss_rate: f64,
    fp_rate: f64,
    seed: u64,
}

impl NoisyDetector {
    pub fn new(
        ground_truth: &[Annotation],
        jitter: f64,
        miss_rate: f64,
        fp_rate: f64,
        seed: u64,
    ) -> Result<Self, AdapterError> {
        if !(jitter.is_finite() && jitter >= 0.0) {
            return Err(AdapterError(format!("jitter must be >= 0, got {jitter}")));
        }
        for (name, r) in [("miss_rate", miss_rate), ("fp_rate", fp_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(AdapterError(format!("{name} must lie in [0, 1], got {r}")));
            }
        }
        Ok(Self {
            oracle: OracleDetector::new(ground_truth),
            jitter,
            miss_rate,
            fp_rate,
            seed,
        })
    }

    fn rng_for(&self, patch: &NormalizedPatch) -> ChaCha8Rng {
        let r = patch.region();
        let words = [
            patch.patch.scale as u64,
            r.x.to_bits(),
            r.y.to_bits(),
            r.width.to_bits(),
            r.height.to_bits(),
            patch.zoom.to_bits(),
        ];
        ChaCha8Rng::seed_from_u64(seed::combine(self.seed, &words))
    }
}

impl DetectorAdapter for NoisyDetector {
    fn detect(&self, patch: &NormalizedPatch) -> Result<Vec<PatchDetection>, AdapterError> {
        let clean = self.oracle.detect(patch)?;
        let mut rng = self.rng_for(patch);
        let frame = patch.frame();
        let noise = Normal::new(0.0, self.jitter.max(f64::MIN_POSITIVE))
            .map_err(|e| AdapterError(e.to_string()))?;
        let mut out = Vec::with_capacity(clean.len());
        for mut det in clean {
            // draw in a fixed pattern so a zero rate leaves the stream aligned
            let miss = rng.gen::<f64>() < self.miss_rate;
            let d: [f64; 4] = std::array::from_fn(|_| noise.sample(&mut rng));
            if miss {
                continue;
            }
            if self.jitter > 0.0 {
                let b = det.bbox;
                let moved = BoundingBox::from_corners(
                    b.x + d[0],
                    b.y + d[1],
                    b.right() + d[0] + d[2],
                    b.bottom() + d[1] + d[3],
                );
                match moved.and_then(|m| m.intersect(&frame)) {
                    Some(m) => det.bbox = m,
                    None => continue,
                }
            }
            out.push(det);
        }
        if rng.gen::<f64>() < self.fp_rate {
            let side = rng.gen_range(0.02..0.2) * frame.width.min(frame.height);
            let x = rng.gen_range(0.0..(frame.width - side).max(f64::MIN_POSITIVE));
            let y = rng.gen_range(0.0..(frame.height - side).max(f64::MIN_POSITIVE));
            if let Some(bbox) = BoundingBox::new(x, y, side, side)
                .ok()
                .and_then(|b| b.intersect(&frame))
            {
                out.push(PatchDetection {
                    bbox,
                    score: rng.gen_range(0.05..0.6),
                    category: 0,
                });
            }
        }
        Ok(out)
    }
}

/// Shared pixel ledger of a [`CostedDetector`].
#[derive(Debug, Default)]
pub struct PixelLedger {
    pixels: AtomicU64,
    patches: AtomicU64,
}

impl PixelLedger {
    pub fn pixels(&self) -> u64 {
        self.pixels.load(Ordering::Relaxed)
    }

    pub fn patches(&self) -> u64 {
        self.patches.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.pixels.store(0, Ordering::Relaxed);
        self.patches.store(0, Ordering::Relaxed);
    }
}

/// Forwards to an inner adapter while charging the standard frame area of
/// each patch to a ledger, optionally burning `cost_per_pixel` units of CPU
/// work per pixel to stand in for model inference.
pub struct CostedDetector<A> {
    inner: A,
    cost_per_pixel: f64,
    ledger: Arc<PixelLedger>,
}

impl<A: DetectorAdapter> CostedDetector<A> {
    pub fn new(inner: A, cost_per_pixel: f64) -> Self {
        Self {
            inner,
            cost_per_pixel: if cost_per_pixel.is_finite() {
                cost_per_pixel.max(0.0)
            } else {
                0.0
            },
            ledger: Arc::new(PixelLedger::default()),
        }
    }

    pub fn ledger(&self) -> Arc<PixelLedger> {
        Arc::clone(&self.ledger)
    }
}

fn burn(units: u64) -> u64 {
    let mut x = 0x2545_f491_4f6c_dd1du64;
    for _ in 0..units {
        x = std::hint::black_box(
            x.wrapping_mul(6_364_136_223_846_793_005)
                .wrapping_add(1_442_695_040_888_963_407),
        );
    }
    x
}

impl<A: DetectorAdapter> DetectorAdapter for CostedDetector<A> {
    fn detect(&self, patch: &NormalizedPatch) -> Result<Vec<PatchDetection>, AdapterError> {
        let px = patch.standard_size.area();
        self.ledger.pixels.fetch_add(px, Ordering::Relaxed);
        self.ledger.patches.fetch_add(1, Ordering::Relaxed);
        if self.cost_per_pixel > 0.0 {
            std::hint::black_box(burn((px as f64 * self.cost_per_pixel) as u64));
        }
        self.inner.detect(patch)
    }
}

/// One entry of the manifest handed to an external detector command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecPatchRecord {
    pub patch_id: usize,
    pub scale: ScaleLevel,
    pub region: BoundingBox,
    pub zoom: f64,
    pub standard_size: [u32; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecManifest {
    pub patches: Vec<ExecPatchRecord>,
}

/// One detection returned by an external detector command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecDetectionRecord {
    pub patch_id: usize,
    pub bbox: BoundingBox,
    pub score: f64,
    #[serde(default)]
    pub category: u32,
}

/// Runs an external program once per batch.
///
/// The command is run through `sh -c` with two extra arguments: the path of
/// the manifest JSON it must read and the path where it must write a JSON
/// array of detections in normalized-frame coordinates.
#[derive(Debug, Clone)]
pub struct ExecDetector {
    command: String,
    batch: usize,
}

impl ExecDetector {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            batch: usize::MAX,
        }
    }

    pub fn with_batch_size(mut self, batch: usize) -> Self {
        self.batch = batch.max(1);
        self
    }

    fn run(&self, patches: &[NormalizedPatch]) -> Result<Vec<Vec<PatchDetection>>, AdapterError> {
        let io = |e: std::io::Error| AdapterError(format!("exec adapter i/o: {e}"));
        let dir = tempfile::tempdir().map_err(io)?;
        let manifest_path = dir.path().join("patches.json");
        let output_path = dir.path().join("detections.json");
        let manifest = ExecManifest {
            patches: patches
                .iter()
                .map(|p| ExecPatchRecord {
                    patch_id: p.id,
                    scale: p.patch.scale,
                    region: p.patch.region,
                    zoom: p.zoom,
                    standard_size: [p.standard_size.width, p.standard_size.height],
                })
                .collect(),
        };
        let text = serde_json::to_vec_pretty(&manifest).map_err(|e| AdapterError(e.to_string()))?;
        std::fs::write(&manifest_path, text).map_err(io)?;

        let status = Command::new("sh")
            .arg("-c")
            .arg(format!("{} \"$1\" \"$2\"", self.command))
            .arg("sh")
            .arg(&manifest_path)
            .arg(&output_path)
            .status()
            .map_err(io)?;
        if !status.success() {
            return Err(AdapterError(format!(
                "detector command `{}` exited with {status}",
                self.command
            )));
        }
        parse_exec_output(&output_path, patches)
    }
}

fn parse_exec_output(
    path: &Path,
    patches: &[NormalizedPatch],
) -> Result<Vec<Vec<PatchDetection>>, AdapterError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AdapterError(format!("reading detector output: {e}")))?;
    let records: Vec<ExecDetectionRecord> = serde_json::from_str(&text)
        .map_err(|e| AdapterError(format!("malformed detector output: {e}")))?;
    let index: BTreeMap<usize, usize> =
        patches.iter().enumerate().map(|(k, p)| (p.id, k)).collect();
    let mut out = vec![Vec::new(); patches.len()];
    for r in records {
        let k = *index
            .get(&r.patch_id)
            .ok_or_else(|| AdapterError(format!("detection for unknown patch {}", r.patch_id)))?;
        if !(0.0..=1.0).contains(&r.score) {
            return Err(AdapterError(format!(
                "score {} outside [0, 1] for patch {}",
                r.score, r.patch_id
            )));
        }
        if let Some(bbox) = r.bbox.intersect(&patches[k].frame()) {
            out[k].push(PatchDetection {
                bbox,
                score: r.score,
                category: r.category,
            });
        }
    }
    Ok(out)
}

impl DetectorAdapter for ExecDetector {
    fn detect(&self, patch: &NormalizedPatch) -> Result<Vec<PatchDetection>, AdapterError> {
        Ok(self
            .run(std::slice::from_ref(patch))?
            .pop()
            .unwrap_or_default())
    }

    fn batch_size(&self) -> Option<usize> {
        Some(self.batch)
    }

    fn detect_batch(
        &self,
        patches: &[NormalizedPatch],
    ) -> Vec<Result<Vec<PatchDetection>, AdapterError>> {
        match self.run(patches) {
            Ok(per_patch) => per_patch.into_iter().map(Ok).collect(),
            Err(e) => patches.iter().map(|_| Err(e.clone())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchResult {
    pub patch: NormalizedPatch,
    pub detections: Vec<PatchDetection>,
}

/// Normalizes and detects every patch on a pool of `workers` threads.
///
/// Results come back in input order whatever the worker count. The first
/// failing patch (by position) is reported.
pub fn run_gaze<A: DetectorAdapter + ?Sized>(
    patches: &[Patch],
    adapter: &A,
    standard_size: FrameSize,
    workers: usize,
) -> Result<Vec<PatchResult>, GazeError> {
    if workers == 0 {
        return Err(GazeError::Workers);
    }
    let normalized: Vec<NormalizedPatch> = patches
        .iter()
        .enumerate()
        .map(|(id, p)| normalize(id, *p, standard_size))
        .collect();
    if normalized.is_empty() {
        return Ok(Vec::new());
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| GazeError::Pool(e.to_string()))?;
    let results: Vec<Result<Vec<PatchDetection>, AdapterError>> =
        pool.install(|| match adapter.batch_size() {
            Some(n) => normalized
                .par_chunks(n.max(1))
                .flat_map_iter(|chunk| adapter.detect_batch(chunk))
                .collect(),
            None => normalized.par_iter().map(|p| adapter.detect(p)).collect(),
        });

    normalized
        .into_iter()
        .zip(results)
        .map(|(patch, r)| match r {
            Ok(detections) => Ok(PatchResult { patch, detections }),
            Err(source) => Err(GazeError::Adapter {
                patch_id: patch.id,
                scale: patch.patch.scale,
                cell: patch.patch.cell,
                source,
            }),
        })
        .collect()
}

/// Normalized pixels submitted to the detector for a patch list.
pub fn pixel_budget(patch_count: usize, standard_size: FrameSize) -> u64 {
    patch_count as u64 * standard_size.area()
}
