//! Fixtures shared by the benchmarks.

use gigadet_core::{generate_scene, BoundingBox, GlobalDetection, Scene, SceneSpec};

/// Default-sized synthetic scene.
pub fn default_scene(seed: u64) -> Scene {
    generate_scene(&SceneSpec {
        seed,
        ..SceneSpec::default()
    })
    .expect("default spec is feasible")
}

/// Overlapping detections in clumps, the shape NMS sees after a run.
pub fn clumped_detections(n: usize, seed: u64) -> Vec<GlobalDetection> {
    // small LCG keeps the fixture free of extra dependencies
    let mut state = seed.wrapping_mul(6_364_136_223_846_793_005).wrapping_add(1);
    let mut next = move || {
        state = state
            .wrapping_mul(6_364_136_223_846_793_005)
            .wrapping_add(1_442_695_040_888_963_407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    (0..n)
        .map(|k| {
            let clump = (k / 8) as f64;
            let x = (clump * 97.0) % 20_000.0 + next() * 30.0;
            let y = (clump * 61.0) % 10_000.0 + next() * 30.0;
            GlobalDetection {
                bbox: BoundingBox::new(x, y, 40.0 + next() * 40.0, 80.0 + next() * 40.0)
                    .expect("positive size"),
                score: next(),
                category: 0,
                source: k,
            }
        })
        .collect()
}
