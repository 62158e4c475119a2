//! End-to-end runs: density, patch selection, detection and merging, plus
//! the sliding-window baseline that skips selection.

use std::time::Instant;

use thiserror::Error;

use crate::config::PipelineConfig;
use crate::density::{render_gt_density, DensityError, DensityMapSet};
use crate::eval::BudgetReport;
use crate::gaze::{pixel_budget, run_gaze, DetectorAdapter, FrameSize, GazeError, PatchResult};
use crate::geometry::{ScaleLevel, SceneExtent};
use crate::merge::{merge_run, GlobalDetection, MergeError};
use crate::saccade::{saccade, GridSpec, Patch, SaccadeError};
use crate::scene::Scene;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Saccade(#[from] SaccadeError),
    #[error(transparent)]
    Gaze(#[from] GazeError),
    #[error(transparent)]
    Merge(#[from] MergeError),
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub density: DensityMapSet,
    pub patches: Vec<Patch>,
    pub results: Vec<PatchResult>,
    pub detections: Vec<GlobalDetection>,
    pub budget: BudgetReport,
}

/// Runs the detector over `patches` and merges the output.
pub fn detect_patches<A: DetectorAdapter + ?Sized>(
    name: &str,
    patches: &[Patch],
    extent: SceneExtent,
    adapter: &A,
    standard_size: FrameSize,
    workers: usize,
    nms_iou: f64,
) -> Result<(Vec<PatchResult>, Vec<GlobalDetection>, BudgetReport), PipelineError> {
    let start = Instant::now();
    let results = run_gaze(patches, adapter, standard_size, workers)?;
    let detections = merge_run(&results, extent, nms_iou)?;
    let mut budget = BudgetReport::new(
        name,
        pixel_budget(patches.len(), standard_size),
        patches.len(),
    );
    budget.wall_seconds = start.elapsed().as_secs_f64();
    Ok((results, detections, budget))
}

/// Full two-stage run. Without an explicit density set the ground-truth
/// density of the scene is rendered.
pub fn run_pipeline<A: DetectorAdapter + ?Sized>(
    scene: &Scene,
    density: Option<DensityMapSet>,
    config: &PipelineConfig,
    adapter: &A,
) -> Result<PipelineOutput, PipelineError> {
    let extent = scene.extent();
    let density = match density {
        Some(d) => d,
        None => render_gt_density(
            &scene.annotations,
            extent,
            config.downsample,
            &config.boundaries,
        )?,
    };
    let patches = saccade(
        &density,
        &config.grids,
        config.threshold,
        config.expansion,
        extent,
    )?;
    let (results, detections, budget) = detect_patches(
        "saccade",
        &patches,
        extent,
        adapter,
        config.standard_size_for(extent),
        config.workers,
        config.nms_iou,
    )?;
    Ok(PipelineOutput {
        density,
        patches,
        results,
        detections,
        budget,
    })
}

/// Every cell of an `n x n` grid as a patch, expanded like selected cells.
pub fn sliding_window_patches(
    extent: SceneExtent,
    n: u32,
    expansion: f64,
) -> Result<Vec<Patch>, SaccadeError> {
    let grid = GridSpec::square(ScaleLevel::Tiny, n)?;
    if n as u64 > extent.width || n as u64 > extent.height {
        return Err(SaccadeError::GridTooFine {
            cells_x: n,
            cells_y: n,
            width: extent.width,
            height: extent.height,
        });
    }
    if !(expansion.is_finite() && expansion >= 1.0) {
        return Err(SaccadeError::Expansion(expansion));
    }
    let mut out = Vec::with_capacity(grid.cell_count());
    for j in 0..n {
        for i in 0..n {
            let cell = grid.cell_region(i, j, extent);
            out.push(Patch {
                scale: ScaleLevel::Tiny,
                cell: (i, j),
                cell_region: cell,
                region: cell
                    .scaled_about_center(expansion)
                    .clip_to(extent)
                    .unwrap_or(cell),
                density: 0.0,
            });
        }
    }
    Ok(out)
}

/// Sliding-window baseline: no selection, every cell goes to the detector.
pub fn sliding_window_run<A: DetectorAdapter + ?Sized>(
    extent: SceneExtent,
    n: u32,
    adapter: &A,
    config: &PipelineConfig,
) -> Result<(Vec<GlobalDetection>, BudgetReport), PipelineError> {
    let patches = sliding_window_patches(extent, n, config.expansion)?;
    let (_, detections, budget) = detect_patches(
        &format!("sw-{}", patches.len()),
        &patches,
        extent,
        adapter,
        config.standard_size_for(extent),
        config.workers,
        config.nms_iou,
    )?;
    Ok((detections, budget))
}
