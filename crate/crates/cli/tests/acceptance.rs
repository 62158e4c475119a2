//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::process::Command;
use std::time::{Duration, Instant};

use gigadet_core::dmap::{decode, encode};
use gigadet_core::{
    ap50, detect_patches, generate_scene, global_nms, grid_densities, normalize, render_gt_density,
    run_pipeline, saccade, scale_aware_loss, scene_stats, sigma_for, sliding_window_patches,
    Annotation, BoundingBox, CostedDetector, DensityMap, DensityMapSet, DmapError, FrameSize,
    GlobalDetection, IntegralImage, OracleDetector, Patch, PipelineConfig, ScaleBoundaries,
    ScaleLevel, ScaleWeights, SceneExtent, SceneSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn default_extent() -> SceneExtent {
    SceneExtent::new(26368, 14976).unwrap()
}

fn ann(id: u64, x: f64, y: f64, w: f64, h: f64) -> Annotation {
    Annotation {
        id,
        bbox: BoundingBox::new(x, y, w, h).unwrap(),
        category: 0,
    }
}

// 1 ---------------------------------------------------------------------

fn density_mass_conservation() -> Outcome {
    let start = Instant::now();
    let extent = default_extent();
    let d = 32.0;
    let mut r = rng(1);
    let ranges = [
        (16.0, 799.0),
        (800.0, 1599.0),
        (1600.0, 3199.0),
        (3200.0, 4400.0),
    ];
    let mut anns = Vec::new();
    for (s, &(lo, hi)) in ranges.iter().enumerate() {
        for k in 0..200 {
            let h: f64 = r.gen_range(lo..hi);
            let w = h * r.gen_range(0.3..1.0);
            let sigma = sigma_for(&BoundingBox::new(0.0, 0.0, w, h).unwrap());
            // stamp window plus one map pixel of slack stays inside the raster
            let margin = 3.0 * sigma + 2.0 * d + 0.5 * h;
            let cx = r.gen_range(margin..extent.width as f64 - margin);
            let cy = r.gen_range(margin..extent.height as f64 - margin);
            anns.push(ann((s * 1000 + k) as u64, cx - 0.5 * w, cy - 0.5 * h, w, h));
        }
    }
    let set = render_gt_density(&anns, extent, d, &ScaleBoundaries::default())
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let masses: Vec<f64> = ScaleLevel::ALL
        .iter()
        .map(|&s| set.get(s).total_mass())
        .collect();
    let worst = masses
        .iter()
        .map(|m| rel_err(*m, 200.0))
        .fold(0.0, f64::max);
    check(
        worst <= 0.01 && elapsed < Duration::from_secs(5),
        format!(
            "masses {:.3?} vs 200 each, worst rel err {worst:.2e}, {:.2}s",
            masses,
            elapsed.as_secs_f64()
        ),
    )
}

// 2 ---------------------------------------------------------------------

fn random_set(r: &mut ChaCha8Rng, n: usize) -> DensityMapSet {
    let maps = std::array::from_fn(|_| {
        let v: Vec<f64> = (0..n * n).map(|_| r.gen_range(0.0..2.0)).collect();
        DensityMap::from_values(n, n, 32.0, v).unwrap()
    });
    DensityMapSet::new(maps).unwrap()
}

fn brute_loss(pred: &DensityMapSet, gt: &DensityMapSet, alphas: [f64; 4]) -> f64 {
    let mut total = 0.0;
    for (s, scale) in ScaleLevel::ALL.iter().enumerate() {
        let (p, g) = (pred.get(*scale), gt.get(*scale));
        let mut sq = 0.0;
        let mut n = 0usize;
        for y in 0..p.height() {
            for x in 0..p.width() {
                let e = p.get(x, y) - g.get(x, y);
                sq += e * e;
                n += 1;
            }
        }
        total += alphas[s] * sq / n as f64;
    }
    total
}

fn loss_closed_forms() -> Outcome {
    let mut r = rng(2);
    let defaults = ScaleWeights::default().0;
    let mut worst: f64 = 0.0;
    let mut self_loss: f64 = 0.0;
    let mut linear_worst: f64 = 0.0;
    for _ in 0..10 {
        let pred = random_set(&mut r, 64);
        let gt = random_set(&mut r, 64);
        let fast =
            scale_aware_loss(&pred, &gt, &ScaleWeights::default()).map_err(|e| e.to_string())?;
        worst = worst.max(rel_err(fast, brute_loss(&pred, &gt, defaults)));
        self_loss = self_loss.max(
            scale_aware_loss(&pred, &pred, &ScaleWeights::default())
                .unwrap()
                .abs(),
        );
        for s in 0..4 {
            let mut unit = [0.0; 4];
            unit[s] = 1.0;
            let base = scale_aware_loss(&pred, &gt, &ScaleWeights::new(unit).unwrap()).unwrap();
            for alpha in [0.01, 0.1, 10.0, 100.0] {
                let mut w = [0.0; 4];
                w[s] = alpha;
                let l = scale_aware_loss(&pred, &gt, &ScaleWeights::new(w).unwrap()).unwrap();
                linear_worst = linear_worst.max(rel_err(l, alpha * base));
            }
        }
    }
    check(
        worst <= 1e-9 && self_loss == 0.0 && linear_worst <= 1e-9,
        format!(
            "brute-force rel err {worst:.1e}, loss(x,x) = {self_loss}, linearity rel err {linear_worst:.1e}"
        ),
    )
}

// 3 ---------------------------------------------------------------------

/// Integral of a piecewise-constant map over a fractional rectangle.
fn brute_region(map: &DensityMap, x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
    let mut s = 0.0;
    for y in 0..map.height() {
        let oy = (y1.min(y as f64 + 1.0) - y0.max(y as f64)).max(0.0);
        if oy == 0.0 {
            continue;
        }
        for x in 0..map.width() {
            let ox = (x1.min(x as f64 + 1.0) - x0.max(x as f64)).max(0.0);
            s += map.get(x, y) * ox * oy;
        }
    }
    s
}

fn integral_oracle() -> Outcome {
    let mut r = rng(3);
    let n = 256;
    let mut worst: f64 = 0.0;
    let mut queries = 0;
    for _ in 0..4 {
        let v: Vec<f64> = (0..n * n).map(|_| r.gen_range(0.0..1.0)).collect();
        let map = DensityMap::from_values(n, n, 1.0, v).unwrap();
        let ii = IntegralImage::build(&map);
        for q in 0..250 {
            if q % 2 == 0 {
                let (a, b) = (r.gen_range(0..=n), r.gen_range(0..=n));
                let (c, d) = (r.gen_range(0..=n), r.gen_range(0..=n));
                let (x0, x1) = (a.min(b), a.max(b));
                let (y0, y1) = (c.min(d), c.max(d));
                let fast = ii.rect_sum(x0, y0, x1, y1);
                let slow = brute_region(&map, x0 as f64, y0 as f64, x1 as f64, y1 as f64);
                worst = worst.max(rel_err(fast, slow));
            } else {
                let (a, b) = (r.gen_range(0.0..n as f64), r.gen_range(0.0..n as f64));
                let (c, d) = (r.gen_range(0.0..n as f64), r.gen_range(0.0..n as f64));
                let (x0, x1) = (a.min(b), a.max(b));
                let (y0, y1) = (c.min(d), c.max(d));
                let fast = ii.region_sum(x0, y0, x1, y1);
                let slow = brute_region(&map, x0, y0, x1, y1);
                worst = worst.max(rel_err(fast, slow));
            }
            queries += 1;
        }
    }
    check(
        worst <= 1e-6,
        format!("{queries} queries (half fractional), worst rel err {worst:.1e}"),
    )
}

// 4 ---------------------------------------------------------------------

fn threshold_behavior() -> Outcome {
    let thresholds = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
    let config = PipelineConfig::default();
    let mut monotone = true;
    let mut mismatched = 0usize;
    let mut counts_first = Vec::new();
    for seed in 0..20u64 {
        let spec = SceneSpec {
            seed,
            ..SceneSpec::default()
        };
        let scene = generate_scene(&spec).map_err(|e| format!("seed {seed}: {e}"))?;
        let extent = scene.extent();
        let set = render_gt_density(
            &scene.annotations,
            extent,
            config.downsample,
            &config.boundaries,
        )
        .map_err(|e| e.to_string())?;
        let mut counts = Vec::new();
        for &t in &thresholds {
            let patches = saccade(&set, &config.grids, t, config.expansion, extent)
                .map_err(|e| e.to_string())?;
            counts.push(patches.len());
        }
        if counts.windows(2).any(|w| w[1] > w[0]) {
            monotone = false;
        }
        if seed == 0 {
            counts_first = counts.clone();
        }

        // threshold 0 keeps exactly the cells holding any mass
        for scale in ScaleLevel::ALL {
            let map = set.get(scale);
            let grid = config.grids.get(scale);
            let cells = grid_densities(map, grid, extent).map_err(|e| e.to_string())?;
            let kept: Vec<(u32, u32)> = saccade(&set, &config.grids, 0.0, config.expansion, extent)
                .unwrap()
                .into_iter()
                .filter(|p| p.scale == scale)
                .map(|p| p.cell)
                .collect();
            let d = map.downsample();
            for c in &cells {
                let (i, j) = c.cell;
                let x0 = (i as u64 * extent.width / grid.cells_x as u64) as f64 / d;
                let y0 = (j as u64 * extent.height / grid.cells_y as u64) as f64 / d;
                let x1 = if i + 1 == grid.cells_x {
                    map.width() as f64
                } else {
                    ((i + 1) as u64 * extent.width / grid.cells_x as u64) as f64 / d
                };
                let y1 = if j + 1 == grid.cells_y {
                    map.height() as f64
                } else {
                    ((j + 1) as u64 * extent.height / grid.cells_y as u64) as f64 / d
                };
                let mut has_mass = false;
                'scan: for y in y0.floor() as usize..(y1.ceil() as usize).min(map.height()) {
                    let oy = y1.min(y as f64 + 1.0) - y0.max(y as f64);
                    for x in x0.floor() as usize..(x1.ceil() as usize).min(map.width()) {
                        let ox = x1.min(x as f64 + 1.0) - x0.max(x as f64);
                        if ox > 0.0 && oy > 0.0 && map.get(x, y) > 0.0 {
                            has_mass = true;
                            break 'scan;
                        }
                    }
                }
                if has_mass != kept.contains(&c.cell) {
                    mismatched += 1;
                }
            }
        }
    }
    check(
        monotone && mismatched == 0,
        format!(
            "20 scenes, counts non-increasing: {monotone}, seed 0 counts {counts_first:?}, \
             threshold-0 mismatches {mismatched}"
        ),
    )
}

// 5 and 6 -----------------------------------------------------------------

fn end_to_end_oracle() -> Outcome {
    let start = Instant::now();
    let scene = generate_scene(&SceneSpec::default()).map_err(|e| e.to_string())?;
    let stats = scene_stats(
        &scene.annotations,
        scene.extent(),
        &ScaleBoundaries::default(),
    );
    let oracle = OracleDetector::new(&scene.annotations);
    let out = run_pipeline(&scene, None, &PipelineConfig::default(), &oracle)
        .map_err(|e| e.to_string())?;
    let all = ap50(&out.detections, &scene.annotations, None);
    let covered: Vec<Annotation> = scene
        .annotations
        .iter()
        .filter(|a| {
            let (cx, cy) = a.bbox.center();
            out.patches.iter().any(|p| p.region.contains_point(cx, cy))
        })
        .cloned()
        .collect();
    let recall = ap50(&out.detections, &covered, None)
        .recall()
        .unwrap_or(0.0);
    let elapsed = start.elapsed();
    let ap = all.ap.unwrap_or(0.0);
    check(
        ap >= 0.99 && recall == 1.0 && elapsed < Duration::from_secs(30),
        format!(
            "{} objects, foreground {:.4}, side ratio {:.0}; {} patches, AP50 {ap:.4}, \
             recall {recall:.4} over {} covered objects, {:.2}s",
            scene.annotations.len(),
            stats.foreground_fraction,
            stats.side_ratio,
            out.patches.len(),
            covered.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn speed_mechanism() -> Outcome {
    let scene = generate_scene(&SceneSpec::default()).map_err(|e| e.to_string())?;
    let extent = scene.extent();
    let config = PipelineConfig {
        workers: 8,
        ..PipelineConfig::default()
    };
    let set = render_gt_density(
        &scene.annotations,
        extent,
        config.downsample,
        &config.boundaries,
    )
    .map_err(|e| e.to_string())?;
    let selected = saccade(
        &set,
        &config.grids,
        config.threshold,
        config.expansion,
        extent,
    )
    .map_err(|e| e.to_string())?;
    let sw = sliding_window_patches(extent, 16, config.expansion).map_err(|e| e.to_string())?;
    let standard = config.standard_size_for(extent);

    let costed = CostedDetector::new(OracleDetector::new(&scene.annotations), 0.5);
    let run = |patches: &[Patch], name: &str| {
        detect_patches(
            name,
            patches,
            extent,
            &costed,
            standard,
            config.workers,
            config.nms_iou,
        )
        .map(|(_, _, b)| b)
        .map_err(|e| e.to_string())
    };
    let ours = run(&selected, "saccade")?;
    let base = run(&sw, "sw-256")?;
    let ratio = base.pixels_processed as f64 / ours.pixels_processed as f64;
    let speedup = base.wall_seconds / ours.wall_seconds.max(1e-9);
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    check(
        base.patch_count == 256 && ratio >= 6.0,
        format!(
            "budget {} vs {} pixels ({} vs 256 patches), ratio {ratio:.2}x >= 6; \
             informative wall-clock speedup at 8 workers on {cores} core(s) {speedup:.1}x \
             (target 4x; {:.2}s vs {:.2}s)",
            ours.pixels_processed,
            base.pixels_processed,
            ours.patch_count,
            ours.wall_seconds,
            base.wall_seconds
        ),
    )
}

// 7 ---------------------------------------------------------------------

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scene = generate_scene(&SceneSpec::default()).map_err(|e| e.to_string())?;
    let scene_path = dir.path().join("scene.json");
    scene.save(&scene_path).map_err(|e| e.to_string())?;
    let mut reference: Option<Vec<u8>> = None;
    let mut runs = 0;
    for adapter in ["noisy", "oracle"] {
        reference = None;
        for workers in [1, 4, 8] {
            for rep in 0..3 {
                let out = dir.path().join(format!("{adapter}-{workers}-{rep}.json"));
                let status = Command::new(env!("CARGO_BIN_EXE_gigadet"))
                    .args(["run", scene_path.to_str().unwrap(), "--adapter", adapter])
                    .args(["--seed", "7", "--workers", &workers.to_string()])
                    .args(["--out", out.to_str().unwrap()])
                    .output()
                    .map_err(|e| e.to_string())?;
                if !status.status.success() {
                    return Err(String::from_utf8_lossy(&status.stderr).into_owned());
                }
                let bytes = fs::read(&out).map_err(|e| e.to_string())?;
                runs += 1;
                match &reference {
                    None => reference = Some(bytes),
                    Some(r) if *r != bytes => {
                        return Err(format!(
                            "{adapter} output differs at workers {workers}, run {rep}"
                        ));
                    }
                    Some(_) => {}
                }
            }
        }
    }
    check(
        true,
        format!(
            "{runs} runs (noisy and oracle, workers 1/4/8, 3x each) byte-identical, {} bytes",
            reference.map_or(0, |r| r.len())
        ),
    )
}

// 8 ---------------------------------------------------------------------

fn ref_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = (a.x + a.width).min(b.x + b.width) - a.x.max(b.x);
    let h = (a.y + a.height).min(b.y + b.height) - a.y.max(b.y);
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let i = w * h;
    i / (a.width * a.height + b.width * b.height - i)
}

/// Textbook NMS: repeatedly take the best remaining box and drop everything
/// of its category that overlaps it too much.
fn reference_nms(dets: &[GlobalDetection], t: f64) -> Vec<GlobalDetection> {
    let mut left: Vec<GlobalDetection> = dets.to_vec();
    let mut kept = Vec::new();
    while !left.is_empty() {
        let mut best = 0;
        for k in 1..left.len() {
            let (a, b) = (&left[k], &left[best]);
            let better = a.score > b.score
                || (a.score == b.score
                    && (a.bbox.x, a.bbox.y, a.source) < (b.bbox.x, b.bbox.y, b.source));
            if better {
                best = k;
            }
        }
        let top = left.swap_remove(best);
        left.retain(|d| d.category != top.category || ref_iou(&d.bbox, &top.bbox) <= t);
        kept.push(top);
    }
    kept
}

fn key(d: &GlobalDetection) -> (u64, u64, u64, u64, u64, u32, usize) {
    (
        d.bbox.x.to_bits(),
        d.bbox.y.to_bits(),
        d.bbox.width.to_bits(),
        d.bbox.height.to_bits(),
        d.score.to_bits(),
        d.category,
        d.source,
    )
}

fn merge_correctness() -> Outcome {
    let mut r = rng(8);
    let mut equal = 0;
    for inst in 0..50 {
        let dets: Vec<GlobalDetection> = (0..200)
            .map(|k| GlobalDetection {
                bbox: BoundingBox::new(
                    r.gen_range(0.0..1000.0),
                    r.gen_range(0.0..1000.0),
                    r.gen_range(20.0..200.0),
                    r.gen_range(20.0..200.0),
                )
                .unwrap(),
                // coarse scores so ties occur
                score: (r.gen_range(0..20) as f64) / 20.0,
                category: r.gen_range(0..3),
                source: k,
            })
            .collect();
        let t = [0.3, 0.5, 0.7][inst % 3];
        let mut fast: Vec<_> = global_nms(&dets, t).unwrap().iter().map(key).collect();
        let mut slow: Vec<_> = reference_nms(&dets, t).iter().map(key).collect();
        fast.sort_unstable();
        slow.sort_unstable();
        if fast == slow {
            equal += 1;
        }
    }

    let mut worst: f64 = 0.0;
    for id in 0..10_000usize {
        let w: f64 = r.gen_range(200.0..8000.0);
        let h = w * r.gen_range(0.5..1.0);
        let region =
            BoundingBox::new(r.gen_range(0.0..20000.0), r.gen_range(0.0..10000.0), w, h).unwrap();
        let patch = Patch {
            scale: ScaleLevel::ALL[id % 4],
            cell: (0, 0),
            cell_region: region,
            region,
            density: 1.0,
        };
        let np = normalize(id, patch, FrameSize::new(1978, 1124).unwrap());
        let b = BoundingBox::new(
            region.x + r.gen_range(0.0..0.8) * w,
            region.y + r.gen_range(0.0..0.8) * h,
            r.gen_range(1.0..0.2 * w),
            r.gen_range(1.0..0.2 * h),
        )
        .unwrap();
        let back = np.box_to_global(&np.box_to_frame(&b));
        for (a, c) in [
            (b.x, back.x),
            (b.y, back.y),
            (b.width, back.width),
            (b.height, back.height),
        ] {
            worst = worst.max((a - c).abs());
        }
    }
    check(
        equal == 50 && worst < 1e-6,
        format!("{equal}/50 NMS instances match the reference; round-trip max err {worst:.1e} px"),
    )
}

// 9 ---------------------------------------------------------------------

fn det_from(a: &Annotation, score: f64, source: usize) -> GlobalDetection {
    GlobalDetection {
        bbox: a.bbox,
        score,
        category: a.category,
        source,
    }
}

fn ap_sanity() -> Outcome {
    let gts: Vec<Annotation> = (0..10)
        .map(|k| ann(k, 100.0 * k as f64, 50.0, 60.0, 80.0))
        .collect();
    let perfect: Vec<_> = gts
        .iter()
        .enumerate()
        .map(|(k, a)| det_from(a, 0.9, k))
        .collect();
    let p = ap50(&perfect, &gts, None).ap.unwrap_or(f64::NAN);
    let e = ap50(&[], &gts, None).ap.unwrap_or(f64::NAN);
    let half = ap50(&perfect[..5], &gts, None).ap.unwrap_or(f64::NAN);

    let mut r = rng(9);
    let mut invariant = 0;
    for _ in 0..20 {
        let gts: Vec<Annotation> = (0..40)
            .map(|k| {
                ann(
                    k,
                    r.gen_range(0.0..5000.0),
                    r.gen_range(0.0..5000.0),
                    r.gen_range(10.0..400.0),
                    r.gen_range(10.0..400.0),
                )
            })
            .collect();
        let mut dets = Vec::new();
        for (k, g) in gts.iter().enumerate() {
            if r.gen_bool(0.8) {
                let mut d = det_from(g, r.gen_range(0.0..1.0), k);
                d.bbox.x += r.gen_range(-0.3..0.3) * g.bbox.width;
                dets.push(d);
            }
        }
        for k in 0..15 {
            dets.push(GlobalDetection {
                bbox: BoundingBox::new(
                    r.gen_range(0.0..5000.0),
                    r.gen_range(0.0..5000.0),
                    50.0,
                    50.0,
                )
                .unwrap(),
                score: r.gen_range(0.0..1.0),
                category: 0,
                source: 100 + k,
            });
        }
        let base = ap50(&dets, &gts, None).ap.unwrap();
        let rescaled: Vec<_> = dets
            .iter()
            .map(|d| GlobalDetection {
                score: 0.1 + 0.5 * d.score * d.score,
                ..*d
            })
            .collect();
        if ap50(&rescaled, &gts, None).ap.unwrap() == base {
            invariant += 1;
        }
    }
    check(
        p == 1.0 && e == 0.0 && (half - 0.5).abs() <= 0.01 && invariant == 20,
        format!(
            "perfect {p:.4}, empty {e:.4}, half-recall {half:.4}, score rescaling invariant {invariant}/20"
        ),
    )
}

// 10 --------------------------------------------------------------------

fn dmap_format() -> Outcome {
    let mut r = rng(10);
    let maps = std::array::from_fn(|_| {
        let v: Vec<f64> = (0..37 * 23)
            .map(|_| r.gen_range(0.0f32..5.0) as f64)
            .collect();
        DensityMap::from_values(37, 23, 32.0, v).unwrap()
    });
    let set = DensityMapSet::new(maps).unwrap();
    let bytes = encode(&set);
    let back = decode(&bytes).map_err(|e| e.to_string())?;
    let bit_exact = back == set && encode(&back) == bytes;

    let mut magic = bytes.clone();
    magic[0] = b'X';
    let mut planes = bytes.clone();
    planes[8..12].copy_from_slice(&3u32.to_le_bytes());
    let truncated = &bytes[..bytes.len() - 7];
    let errs = [decode(&magic), decode(&planes), decode(truncated)];
    let kinds: Vec<&str> = errs
        .iter()
        .map(|e| match e {
            Err(DmapError::BadMagic(_)) => "BadMagic",
            Err(DmapError::PlaneCount(_)) => "PlaneCount",
            Err(DmapError::Truncated { .. }) => "Truncated",
            Err(_) => "other",
            Ok(_) => "accepted",
        })
        .collect();
    check(
        bit_exact && kinds == ["BadMagic", "PlaneCount", "Truncated"],
        format!("round trip bit-exact: {bit_exact}; corruptions -> {kinds:?}"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("density mass conservation", density_mass_conservation),
        ("scale-aware loss closed forms", loss_closed_forms),
        ("integral image oracle", integral_oracle),
        ("threshold behavior", threshold_behavior),
        ("end-to-end oracle", end_to_end_oracle),
        ("speed mechanism", speed_mechanism),
        ("determinism", determinism),
        ("merge correctness", merge_correctness),
        ("AP evaluator sanity", ap_sanity),
        ("DMAP format", dmap_format),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", k + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
