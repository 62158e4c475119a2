//! Density-guided object detection for gigapixel scenes.
//!
//! The pipeline works in two stages. The saccade stage integrates per-scale
//! density maps over a coarse grid and keeps the cells likely to contain
//! objects. The gaze stage normalizes those cells to one detector resolution,
//! runs a pluggable detector on them, and merges the results back onto the
//! original scene, where they are evaluated.
//!
//! ```
//! use gigadet_core::{generate_scene, run_pipeline, evaluate, OracleDetector,
//!     PipelineConfig, SceneExtent, SceneSpec};
//!
//! let spec = SceneSpec {
//!     extent: SceneExtent::new(8000, 4500).unwrap(),
//!     object_count: 80,
//!     foreground_fraction_target: 0.03,
//!     size_gradient: (12.0, 600.0),
//!     ..SceneSpec::default()
//! };
//! let scene = generate_scene(&spec).unwrap();
//! let oracle = OracleDetector::new(&scene.annotations);
//! let out = run_pipeline(&scene, None, &PipelineConfig::default(), &oracle).unwrap();
//! let report = evaluate(&out.detections, &scene.annotations);
//! assert!(report.ap50.unwrap() > 0.9);
//! ```

pub mod config;
pub mod density;
pub mod dmap;
pub mod eval;
pub mod gaze;
pub mod geometry;
pub mod integral;
pub mod merge;
pub mod pipeline;
pub mod saccade;
pub mod scene;
pub mod seed;
pub mod synth;

pub use config::{ConfigError, PipelineConfig};
pub use density::{
    apply_count_scale, remove_count_scale, render_gt_density, scale_aware_loss, sigma_for,
    DensityError, DensityMap, DensityMapSet, GaussianStamp, ScaleWeights,
};
pub use dmap::{read_dmap, write_dmap, DmapError};
pub use eval::{
    ap50, budget_table, compare_budgets, evaluate, ApResult, BudgetRatio, BudgetReport, EvalReport,
};
pub use gaze::{
    normalize, run_gaze, AdapterError, CostedDetector, DetectorAdapter, ExecDetector, FrameSize,
    GazeError, NoisyDetector, NormalizedPatch, OracleDetector, PatchDetection, PatchResult,
    PixelLedger,
};
pub use geometry::{
    eval_size_bucket, iou, scale_bucket, BoundingBox, EvalSize, GeometryError, ScaleBoundaries,
    ScaleLevel, SceneExtent,
};
pub use integral::IntegralImage;
pub use merge::{global_nms, merge_run, to_global, GlobalDetection, MergeError};
pub use pipeline::{
    detect_patches, run_pipeline, sliding_window_patches, sliding_window_run, PipelineError,
    PipelineOutput,
};
pub use saccade::{
    build_integral, grid_densities, saccade, select_patches, CellDensity, GridSpec, Patch,
    SaccadeError, ScaleGrids,
};
pub use scene::{Annotation, Scene, SceneError};
pub use synth::{generate_scene, scene_stats, SceneSpec, SceneStats, SynthError};
