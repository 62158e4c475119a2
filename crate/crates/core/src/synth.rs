//! Deterministic synthetic crowd scenes for desk-scale runs.
//!
//! Objects are person-shaped boxes gathered in clusters laid out from the
//! top of the frame (far, small) to the bottom (near, large). The longest
//! side grows geometrically with the vertical position, from `min_side` at
//! the top edge to `max_side` at the bottom edge. Far clusters hold more
//! people than near ones; how strongly the counts favor far clusters is
//! solved for so that the boxes cover the requested fraction of the scene.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::config::{key_values, parse_num, ConfigError};
use crate::geometry::{iou, scale_bucket, BoundingBox, ScaleBoundaries, SceneExtent};
use crate::scene::{Annotation, Scene};
use crate::seed;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    Spec(String),
    #[error("infeasible scene: {0}")]
    Infeasible(String),
}

/// Pairwise IoU allowed between generated boxes.
pub const MAX_PAIR_IOU: f64 = 0.5;
/// Allowed absolute deviation of the measured foreground fraction.
pub const FOREGROUND_TOLERANCE: f64 = 0.02;
/// Raster resolution used to measure foreground coverage.
pub const COVERAGE_DOWNSAMPLE: u64 = 32;

const ASPECT_RANGE: (f64, f64) = (0.35, 0.55);
const MAX_TRIES_PER_OBJECT: usize = 200;
const MAX_GROWTHS: usize = 40;
/// Horizontal standard deviation of a cluster in units of `side * sqrt(n)`;
/// the vertical spread is half of it.
const CLUSTER_SPREAD: f64 = 0.4;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub extent: SceneExtent,
    pub object_count: usize,
    pub foreground_fraction_target: f64,
    /// Longest box side at the top and at the bottom edge of the scene.
    pub size_gradient: (f64, f64),
    pub cluster_count: usize,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            extent: SceneExtent {
                width: 26368,
                height: 14976,
            },
            object_count: 500,
            foreground_fraction_target: 0.05,
            size_gradient: (16.0, 4000.0),
            cluster_count: 6,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let (lo, hi) = self.size_gradient;
        let bad = |m: &str| Err(SynthError::Spec(m.to_string()));
        if !(lo.is_finite() && hi.is_finite()) || lo < 4.0 {
            return bad("min_side must be >= 4");
        }
        if hi < lo {
            return bad("max_side must be >= min_side");
        }
        if hi > self.extent.width.min(self.extent.height) as f64 {
            return bad("max_side must fit inside the scene");
        }
        if !(self.foreground_fraction_target > 0.0 && self.foreground_fraction_target < 1.0) {
            return bad("foreground fraction must lie in (0, 1)");
        }
        if self.cluster_count == 0 {
            return bad("cluster_count must be >= 1");
        }
        Ok(())
    }

    /// Longest side of an object centered at vertical position `y`.
    pub fn side_at(&self, y: f64) -> f64 {
        let (lo, hi) = self.size_gradient;
        let t = (y / self.extent.height as f64).clamp(0.0, 1.0);
        lo * (hi / lo).powf(t)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "width" => self.extent.width = parse_positive(key, value)?,
            "height" => self.extent.height = parse_positive(key, value)?,
            "objects" | "object_count" => self.object_count = parse_num(key, value)?,
            "foreground" | "foreground_fraction" => {
                self.foreground_fraction_target = parse_num(key, value)?
            }
            "min_side" => self.size_gradient.0 = parse_num(key, value)?,
            "max_side" => self.size_gradient.1 = parse_num(key, value)?,
            "clusters" | "cluster_count" => self.cluster_count = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

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
}

fn parse_positive(key: &str, value: &str) -> Result<u64, ConfigError> {
    let v: u64 = parse_num(key, value)?;
    if v == 0 {
        return Err(ConfigError::Invalid {
            key: key.to_string(),
            value: value.to_string(),
            reason: "must be positive".into(),
        });
    }
    Ok(v)
}

struct Cluster {
    cx: f64,
    cy: f64,
}

fn cluster_centers(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Vec<Cluster> {
    let (w, h) = (spec.extent.width as f64, spec.extent.height as f64);
    let c = spec.cluster_count;
    (0..c)
        .map(|k| {
            let t = if c == 1 {
                0.5
            } else {
                0.04 + 0.92 * k as f64 / (c - 1) as f64
            };
            Cluster {
                cx: rng.gen_range(0.1..0.9) * w,
                cy: t * h,
            }
        })
        .collect()
}

/// Splits `n` objects over clusters proportionally to `weights`, giving each
/// cluster at least one object while there are enough to go around.
fn allocate(n: usize, weights: &[f64]) -> Vec<usize> {
    let c = weights.len();
    let mut counts = vec![0usize; c];
    let base = if n >= c { 1 } else { 0 };
    for slot in counts.iter_mut() {
        *slot = base;
    }
    let rest = n - base * c;
    let total: f64 = weights.iter().sum();
    let shares: Vec<f64> = weights.iter().map(|w| w / total * rest as f64).collect();
    let mut given = 0;
    for (slot, s) in counts.iter_mut().zip(&shares) {
        *slot += s.floor() as usize;
        given += s.floor() as usize;
    }
    // largest remainder, ties to the earlier cluster
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (shares[a] - shares[a].floor(), shares[b] - shares[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().take(rest - given) {
        counts[k] += 1;
    }
    counts
}

fn mean_aspect() -> f64 {
    0.5 * (ASPECT_RANGE.0 + ASPECT_RANGE.1)
}

fn expected_area(spec: &SceneSpec, clusters: &[Cluster], beta: f64) -> f64 {
    let sides: Vec<f64> = clusters.iter().map(|c| spec.side_at(c.cy)).collect();
    let weights: Vec<f64> = sides.iter().map(|s| s.powf(-beta)).collect();
    allocate(spec.object_count, &weights)
        .iter()
        .zip(&sides)
        .map(|(&n, s)| n as f64 * s * s * mean_aspect())
        .sum()
}

/// Exponent that makes the expected box area hit the target.
fn solve_beta(spec: &SceneSpec, clusters: &[Cluster], target: f64) -> Result<f64, SynthError> {
    let (mut lo, mut hi) = (0.0f64, 8.0f64);
    if expected_area(spec, clusters, lo) < target * (1.0 - FOREGROUND_TOLERANCE) {
        return Err(SynthError::Infeasible(format!(
            "{} objects cannot cover {:.2}% of the scene with sides up to {}",
            spec.object_count,
            100.0 * spec.foreground_fraction_target,
            spec.size_gradient.1
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if expected_area(spec, clusters, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn place_cluster(
    spec: &SceneSpec,
    cluster: &Cluster,
    count: usize,
    placed: &mut Vec<BoundingBox>,
    rng: &mut ChaCha8Rng,
) -> Result<(), SynthError> {
    let (w, h) = (spec.extent.width as f64, spec.extent.height as f64);
    let side = spec.side_at(cluster.cy);
    let mut radius = side * (count as f64).sqrt() * CLUSTER_SPREAD;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    for _ in 0..count {
        let mut growths = 0;
        'object: loop {
            for _ in 0..MAX_TRIES_PER_OBJECT {
                let cx = cluster.cx + unit.sample(rng) * radius;
                let cy = cluster.cy + unit.sample(rng) * radius * 0.5;
                let bh = spec.side_at(cy);
                let bw = bh * rng.gen_range(ASPECT_RANGE.0..ASPECT_RANGE.1);
                let (x, y) = (cx - 0.5 * bw, cy - 0.5 * bh);
                if x < 0.0 || y < 0.0 || x + bw > w || y + bh > h {
                    continue;
                }
                let b = BoundingBox {
                    x,
                    y,
                    width: bw,
                    height: bh,
                };
                if placed.iter().all(|p| iou(p, &b) <= MAX_PAIR_IOU) {
                    placed.push(b);
                    break 'object;
                }
            }
            growths += 1;
            if growths > MAX_GROWTHS {
                return Err(SynthError::Infeasible(
                    "could not place objects without exceeding the overlap cap".into(),
                ));
            }
            radius *= 1.25;
        }
    }
    Ok(())
}

/// Generates a scene; the same spec always yields the same annotations.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene, SynthError> {
    spec.validate()?;
    let extent = spec.extent;
    if spec.object_count == 0 {
        return Ok(Scene {
            scene: extent,
            annotations: Vec::new(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed::split_seed(spec.seed, "synth.layout"));
    let clusters = cluster_centers(spec, &mut rng);
    let goal = spec.foreground_fraction_target;

    // Overlap and edge effects make the union smaller than the summed box
    // area, so the area target is corrected from the measured coverage.
    let mut area_target = goal * extent.area() as f64;
    let mut best: Option<(f64, Vec<Annotation>)> = None;
    for round in 0..CALIBRATION_ROUNDS {
        let annotations = match place_all(spec, &clusters, area_target) {
            Ok(a) => a,
            Err(SynthError::Infeasible(_)) if round > 0 => break,
            Err(e) => return Err(e),
        };
        let fraction = foreground_fraction(&annotations, extent);
        let err = (fraction - goal).abs();
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, annotations));
        }
        if err <= 0.1 * FOREGROUND_TOLERANCE || fraction <= 0.0 {
            break;
        }
        area_target *= goal / fraction;
    }
    let (err, annotations) = best.expect("at least one calibration round");
    if err > FOREGROUND_TOLERANCE {
        return Err(SynthError::Infeasible(format!(
            "foreground fraction misses target {goal:.4} by {err:.4}"
        )));
    }
    Ok(Scene {
        scene: extent,
        annotations,
    })
}

const CALIBRATION_ROUNDS: usize = 6;

fn place_all(
    spec: &SceneSpec,
    clusters: &[Cluster],
    area_target: f64,
) -> Result<Vec<Annotation>, SynthError> {
    let beta = solve_beta(spec, clusters, area_target)?;
    let weights: Vec<f64> = clusters
        .iter()
        .map(|c| spec.side_at(c.cy).powf(-beta))
        .collect();
    let counts = allocate(spec.object_count, &weights);

    let mut placed = Vec::with_capacity(spec.object_count);
    for (k, (cluster, &n)) in clusters.iter().zip(&counts).enumerate() {
        let mut crng = ChaCha8Rng::seed_from_u64(seed::combine(
            seed::split_seed(spec.seed, "synth.cluster"),
            &[k as u64],
        ));
        place_cluster(spec, cluster, n, &mut placed, &mut crng)?;
    }
    Ok(placed
        .into_iter()
        .enumerate()
        .map(|(id, bbox)| Annotation {
            id: id as u64,
            bbox,
            category: 0,
        })
        .collect())
}

/// Union coverage of the boxes measured on a coarse raster: each raster
/// cell's covered area is the summed overlap, capped at the cell area.
pub fn foreground_fraction(annotations: &[Annotation], extent: SceneExtent) -> f64 {
    let d = COVERAGE_DOWNSAMPLE;
    let (gw, gh) = (
        extent.width.div_ceil(d) as usize,
        extent.height.div_ceil(d) as usize,
    );
    let mut cover = vec![0.0f64; gw * gh];
    let df = d as f64;
    for a in annotations {
        let b = &a.bbox;
        let (i0, i1) = (
            (b.x / df).floor() as usize,
            ((b.right() / df).ceil() as usize).min(gw),
        );
        let (j0, j1) = (
            (b.y / df).floor() as usize,
            ((b.bottom() / df).ceil() as usize).min(gh),
        );
        for j in j0..j1 {
            let (y0, y1) = (j as f64 * df, (j + 1) as f64 * df);
            let oy = b.bottom().min(y1) - b.y.max(y0);
            if oy <= 0.0 {
                continue;
            }
            for i in i0..i1 {
                let (x0, x1) = (i as f64 * df, (i + 1) as f64 * df);
                let ox = b.right().min(x1) - b.x.max(x0);
                if ox > 0.0 {
                    cover[j * gw + i] += ox * oy;
                }
            }
        }
    }
    let mut covered = 0.0;
    for j in 0..gh {
        let ch = (((j + 1) as u64 * d).min(extent.height) - j as u64 * d) as f64;
        for i in 0..gw {
            let cw = (((i + 1) as u64 * d).min(extent.width) - i as u64 * d) as f64;
            covered += cover[j * gw + i].min(cw * ch);
        }
    }
    covered / extent.area() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneStats {
    pub objects: usize,
    pub tiny: usize,
    pub small: usize,
    pub middle: usize,
    pub large: usize,
    pub foreground_fraction: f64,
    pub min_side: f64,
    pub max_side: f64,
    pub side_ratio: f64,
    /// Object counts per power-of-two band of the longest side:
    /// `(lower_bound, count)`.
    pub side_histogram: Vec<(f64, usize)>,
}

impl SceneStats {
    pub fn bucket_counts(&self) -> [usize; 4] {
        [self.tiny, self.small, self.middle, self.large]
    }
}

pub fn scene_stats(
    annotations: &[Annotation],
    extent: SceneExtent,
    boundaries: &ScaleBoundaries,
) -> SceneStats {
    let mut counts = [0usize; 4];
    let mut bins: std::collections::BTreeMap<i32, usize> = Default::default();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for a in annotations {
        counts[scale_bucket(&a.bbox, boundaries).index()] += 1;
        let s = a.bbox.max_side();
        lo = lo.min(s);
        hi = hi.max(s);
        *bins.entry(s.log2().floor() as i32).or_default() += 1;
    }
    if annotations.is_empty() {
        lo = 0.0;
    }
    SceneStats {
        objects: annotations.len(),
        tiny: counts[0],
        small: counts[1],
        middle: counts[2],
        large: counts[3],
        foreground_fraction: foreground_fraction(annotations, extent),
        min_side: lo,
        max_side: hi,
        side_ratio: if lo > 0.0 { hi / lo } else { 0.0 },
        side_histogram: bins.into_iter().map(|(e, n)| (2f64.powi(e), n)).collect(),
    }
}
