//! First stage: find where objects are likely to be.
//!
//! Each scale's density map is cut into a coarse grid, the density inside
//! every cell is integrated with a summed-area table, and cells whose
//! expected object count exceeds a threshold become overlapping patches.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::{DensityMap, DensityMapSet};
use crate::geometry::{BoundingBox, ScaleLevel, SceneExtent};
use crate::integral::IntegralImage;

#[derive(Debug, Error, PartialEq)]
pub enum SaccadeError {
    #[error("grid for {scale} must have at least one cell per axis, got {cells_x}x{cells_y}")]
    EmptyGrid {
        scale: ScaleLevel,
        cells_x: u32,
        cells_y: u32,
    },
    #[error("grid {cells_x}x{cells_y} is finer than the {width}x{height} scene")]
    GridTooFine {
        cells_x: u32,
        cells_y: u32,
        width: u64,
        height: u64,
    },
    #[error("threshold must be finite and >= 0, got {0}")]
    Threshold(f64),
    #[error("expansion must be finite and >= 1, got {0}")]
    Expansion(f64),
    #[error("density map {map_w}x{map_h}@{downsample} does not cover scene {extent}")]
    MapExtent {
        map_w: usize,
        map_h: usize,
        downsample: f64,
        extent: SceneExtent,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub scale: ScaleLevel,
    pub cells_x: u32,
    pub cells_y: u32,
}

impl GridSpec {
    pub fn new(scale: ScaleLevel, cells_x: u32, cells_y: u32) -> Result<Self, SaccadeError> {
        if cells_x == 0 || cells_y == 0 {
            return Err(SaccadeError::EmptyGrid {
                scale,
                cells_x,
                cells_y,
            });
        }
        Ok(Self {
            scale,
            cells_x,
            cells_y,
        })
    }

    pub fn square(scale: ScaleLevel, n: u32) -> Result<Self, SaccadeError> {
        Self::new(scale, n, n)
    }

    pub fn cell_count(&self) -> usize {
        self.cells_x as usize * self.cells_y as usize
    }

    /// Pixel span of cell `i` along an axis of length `len` split `n` ways.
    fn span(i: u32, n: u32, len: u64) -> (u64, u64) {
        let lo = i as u64 * len / n as u64;
        let hi = (i as u64 + 1) * len / n as u64;
        (lo, hi)
    }

    /// Region of cell `(i, j)` in original-image pixels.
    pub fn cell_region(&self, i: u32, j: u32, extent: SceneExtent) -> BoundingBox {
        let (x0, x1) = Self::span(i, self.cells_x, extent.width);
        let (y0, y1) = Self::span(j, self.cells_y, extent.height);
        BoundingBox {
            x: x0 as f64,
            y: y0 as f64,
            width: (x1 - x0) as f64,
            height: (y1 - y0) as f64,
        }
    }

    fn check_fits(&self, extent: SceneExtent) -> Result<(), SaccadeError> {
        if self.cells_x as u64 > extent.width || self.cells_y as u64 > extent.height {
            return Err(SaccadeError::GridTooFine {
                cells_x: self.cells_x,
                cells_y: self.cells_y,
                width: extent.width,
                height: extent.height,
            });
        }
        Ok(())
    }
}

/// One grid per scale level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleGrids(pub [GridSpec; 4]);

impl ScaleGrids {
    pub fn from_sizes(sizes: [u32; 4]) -> Result<Self, SaccadeError> {
        let mut grids = [GridSpec {
            scale: ScaleLevel::Tiny,
            cells_x: 1,
            cells_y: 1,
        }; 4];
        for (g, (scale, n)) in grids.iter_mut().zip(ScaleLevel::ALL.into_iter().zip(sizes)) {
            *g = GridSpec::square(scale, n)?;
        }
        Ok(Self(grids))
    }

    pub fn get(&self, scale: ScaleLevel) -> &GridSpec {
        &self.0[scale.index()]
    }

    pub fn sizes(&self) -> [u32; 4] {
        self.0.map(|g| g.cells_x)
    }
}

impl Default for ScaleGrids {
    fn default() -> Self {
        Self::from_sizes([16, 8, 4, 2]).expect("default grids are valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellDensity {
    pub scale: ScaleLevel,
    pub cell: (u32, u32),
    pub region: BoundingBox,
    /// Expected number of objects of this scale inside the cell.
    pub density: f64,
}

/// A selected, expanded cell in original-image pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Patch {
    pub scale: ScaleLevel,
    pub cell: (u32, u32),
    pub cell_region: BoundingBox,
    pub region: BoundingBox,
    pub density: f64,
}

pub fn build_integral(map: &DensityMap) -> IntegralImage {
    IntegralImage::build(map)
}

fn check_map_covers(map: &DensityMap, extent: SceneExtent) -> Result<(), SaccadeError> {
    let d = map.downsample();
    let covers = map.width() as f64 * d >= extent.width as f64
        && map.height() as f64 * d >= extent.height as f64;
    if !covers {
        return Err(SaccadeError::MapExtent {
            map_w: map.width(),
            map_h: map.height(),
            downsample: d,
            extent,
        });
    }
    Ok(())
}

/// Integrates the density map over every cell of `grid`.
///
/// Cells are returned row by row. The last row and column extend to the map
/// edge so mass in the padding beyond the scene is still counted and the
/// cell densities always sum to the map total.
pub fn grid_densities(
    map: &DensityMap,
    grid: &GridSpec,
    extent: SceneExtent,
) -> Result<Vec<CellDensity>, SaccadeError> {
    grid.check_fits(extent)?;
    check_map_covers(map, extent)?;
    let ii = build_integral(map);
    let d = map.downsample();
    let edge = |i: u32, n: u32, len: u64, map_len: usize| -> f64 {
        if i == n {
            map_len as f64
        } else {
            (i as u64 * len / n as u64) as f64 / d
        }
    };
    let xs: Vec<f64> = (0..=grid.cells_x)
        .map(|i| edge(i, grid.cells_x, extent.width, map.width()))
        .collect();
    let ys: Vec<f64> = (0..=grid.cells_y)
        .map(|j| edge(j, grid.cells_y, extent.height, map.height()))
        .collect();

    let mut cells = Vec::with_capacity(grid.cell_count());
    for j in 0..grid.cells_y {
        for i in 0..grid.cells_x {
            let (iu, ju) = (i as usize, j as usize);
            cells.push(CellDensity {
                scale: grid.scale,
                cell: (i, j),
                region: grid.cell_region(i, j, extent),
                density: ii.region_sum(xs[iu], ys[ju], xs[iu + 1], ys[ju + 1]),
            });
        }
    }
    Ok(cells)
}

/// Keeps cells with density strictly above `threshold` and grows each one by
/// `expansion` about its center, clipped to the scene.
pub fn select_patches(
    cells: &[CellDensity],
    threshold: f64,
    expansion: f64,
    extent: SceneExtent,
) -> Result<Vec<Patch>, SaccadeError> {
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(SaccadeError::Threshold(threshold));
    }
    if !(expansion.is_finite() && expansion >= 1.0) {
        return Err(SaccadeError::Expansion(expansion));
    }
    let mut patches: Vec<Patch> = cells
        .iter()
        .filter(|c| c.density > threshold)
        .map(|c| Patch {
            scale: c.scale,
            cell: c.cell,
            cell_region: c.region,
            region: c
                .region
                .scaled_about_center(expansion)
                .clip_to(extent)
                .unwrap_or(c.region),
            density: c.density,
        })
        .collect();
    patches.sort_by_key(|p| (p.scale, p.cell.1, p.cell.0));
    Ok(patches)
}

/// Runs cell selection on all four scale maps, tiny first.
pub fn saccade(
    set: &DensityMapSet,
    grids: &ScaleGrids,
    threshold: f64,
    expansion: f64,
    extent: SceneExtent,
) -> Result<Vec<Patch>, SaccadeError> {
    let mut out = Vec::new();
    for scale in ScaleLevel::ALL {
        let cells = grid_densities(set.get(scale), grids.get(scale), extent)?;
        out.extend(select_patches(&cells, threshold, expansion, extent)?);
    }
    Ok(out)
}

/// Row of the patch manifest written by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub scale: ScaleLevel,
    pub cell: [u32; 2],
    pub region: BoundingBox,
    pub density: f64,
}

impl From<&Patch> for PatchRecord {
    fn from(p: &Patch) -> Self {
        Self {
            scale: p.scale,
            cell: [p.cell.0, p.cell.1],
            region: p.region,
            density: p.density,
        }
    }
}

pub fn patch_manifest(patches: &[Patch]) -> Vec<PatchRecord> {
    patches.iter().map(PatchRecord::from).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{render_gt_density, GaussianStamp};
    use crate::scene::Annotation;

    fn extent(w: u64, h: u64) -> SceneExtent {
        SceneExtent::new(w, h).unwrap()
    }

    fn stamp_map(w: usize, h: usize, d: f64, center: (f64, f64), sigma: f64) -> DensityMap {
        let mut acc = vec![0.0; w * h];
        GaussianStamp::new(center, sigma).splat(&mut acc, w, h);
        DensityMap::from_values(w, h, d, acc).unwrap()
    }

    #[test]
    fn cell_regions_tile_exactly() {
        let e = extent(1003, 517);
        let g = GridSpec::new(ScaleLevel::Tiny, 7, 5).unwrap();
        let mut area = 0.0;
        for j in 0..5 {
            for i in 0..7 {
                let r = g.cell_region(i, j, e);
                area += r.area();
                if i + 1 < 7 {
                    assert_eq!(r.right(), g.cell_region(i + 1, j, e).x);
                }
            }
        }
        assert_eq!(area, e.area() as f64);
        assert_eq!(g.cell_region(6, 4, e).right(), 1003.0);
    }

    #[test]
    fn zero_map_gives_zero_cells() {
        let e = extent(640, 640);
        let m = DensityMap::zeros(20, 20, 32.0).unwrap();
        let cells = grid_densities(&m, &GridSpec::square(ScaleLevel::Tiny, 4).unwrap(), e).unwrap();
        assert_eq!(cells.len(), 16);
        assert!(cells.iter().all(|c| c.density == 0.0));
    }

    #[test]
    fn stamp_inside_one_cell() {
        let e = extent(640, 640);
        let m = stamp_map(20, 20, 32.0, (5.5, 5.5), 1.0);
        let cells = grid_densities(&m, &GridSpec::square(ScaleLevel::Tiny, 2).unwrap(), e).unwrap();
        assert!((cells[0].density - 1.0).abs() < 1e-9);
        for c in &cells[1..] {
            assert!(c.density.abs() < 1e-12);
        }
    }

    #[test]
    fn straddling_stamp_splits() {
        let e = extent(640, 640);
        let m = stamp_map(20, 20, 32.0, (10.0, 5.0), 1.0);
        let cells = grid_densities(&m, &GridSpec::square(ScaleLevel::Tiny, 2).unwrap(), e).unwrap();
        let (a, b) = (cells[0].density, cells[1].density);
        assert!(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0);
        assert!((a + b - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cells_conserve_mass_on_uneven_grids() {
        let e = extent(1000, 700);
        let anns: Vec<_> = (0..30)
            .map(|k| Annotation {
                id: k,
                bbox: BoundingBox::new(
                    (k * 31 % 970) as f64,
                    (k * 53 % 680) as f64,
                    20.0 + k as f64,
                    30.0,
                )
                .unwrap(),
                category: 0,
            })
            .collect();
        let set = render_gt_density(&anns, e, 3.0, &Default::default()).unwrap();
        let map = set.get(ScaleLevel::Tiny);
        for n in [1, 2, 3, 5, 7, 16, 33] {
            let g = GridSpec::square(ScaleLevel::Tiny, n).unwrap();
            let total: f64 = grid_densities(map, &g, e)
                .unwrap()
                .iter()
                .map(|c| c.density)
                .sum();
            let mass = map.total_mass();
            assert!(
                (total - mass).abs() <= 1e-6 * mass,
                "{n}: {total} vs {mass}"
            );
        }
    }

    #[test]
    fn expansion_about_center() {
        let e = extent(1000, 1000);
        let cell = CellDensity {
            scale: ScaleLevel::Tiny,
            cell: (3, 4),
            region: BoundingBox::new(300.0, 400.0, 100.0, 100.0).unwrap(),
            density: 0.5,
        };
        let out = select_patches(&[cell], 0.2, 1.2, e).unwrap();
        assert_eq!(out.len(), 1);
        let r = out[0].region;
        assert!((r.width - 120.0).abs() < 1e-9 && (r.height - 120.0).abs() < 1e-9);
        assert_eq!(r.center(), cell.region.center());

        let corner = CellDensity {
            region: BoundingBox::new(0.0, 0.0, 100.0, 100.0).unwrap(),
            ..cell
        };
        let r = select_patches(&[corner], 0.2, 1.2, e).unwrap()[0].region;
        assert_eq!((r.x, r.y), (0.0, 0.0));
        assert!((r.width - 110.0).abs() < 1e-9);
    }

    #[test]
    fn threshold_is_strict() {
        let e = extent(100, 100);
        let c = CellDensity {
            scale: ScaleLevel::Tiny,
            cell: (0, 0),
            region: BoundingBox::new(0.0, 0.0, 50.0, 50.0).unwrap(),
            density: 0.2,
        };
        assert!(select_patches(&[c], 0.2, 1.2, e).unwrap().is_empty());
        assert_eq!(select_patches(&[c], 0.19, 1.2, e).unwrap().len(), 1);
        let zero = CellDensity { density: 0.0, ..c };
        assert!(select_patches(&[zero], 0.0, 1.2, e).unwrap().is_empty());
        assert!(select_patches(&[c], -0.1, 1.2, e).is_err());
        assert!(select_patches(&[c], 0.2, 0.9, e).is_err());
    }

    #[test]
    fn output_is_ordered() {
        let e = extent(100, 100);
        let mk = |scale, i, j| CellDensity {
            scale,
            cell: (i, j),
            region: BoundingBox::new(i as f64, j as f64, 1.0, 1.0).unwrap(),
            density: 1.0,
        };
        let cells = [
            mk(ScaleLevel::Small, 0, 0),
            mk(ScaleLevel::Tiny, 1, 1),
            mk(ScaleLevel::Tiny, 2, 0),
            mk(ScaleLevel::Tiny, 0, 1),
        ];
        let order: Vec<_> = select_patches(&cells, 0.5, 1.0, e)
            .unwrap()
            .iter()
            .map(|p| (p.scale, p.cell))
            .collect();
        assert_eq!(
            order,
            vec![
                (ScaleLevel::Tiny, (2, 0)),
                (ScaleLevel::Tiny, (0, 1)),
                (ScaleLevel::Tiny, (1, 1)),
                (ScaleLevel::Small, (0, 0)),
            ]
        );
    }

    #[test]
    fn empty_set_selects_nothing() {
        let e = extent(3200, 3200);
        let set = DensityMapSet::zeros(100, 100, 32.0).unwrap();
        assert!(saccade(&set, &ScaleGrids::default(), 0.2, 1.2, e)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn rejects_grid_finer_than_scene_and_short_maps() {
        let e = extent(4, 4);
        let m = DensityMap::zeros(4, 4, 1.0).unwrap();
        let g = GridSpec::square(ScaleLevel::Tiny, 5).unwrap();
        assert!(matches!(
            grid_densities(&m, &g, e),
            Err(SaccadeError::GridTooFine { .. })
        ));
        let short = DensityMap::zeros(2, 4, 1.0).unwrap();
        let g = GridSpec::square(ScaleLevel::Tiny, 2).unwrap();
        assert!(matches!(
            grid_densities(&short, &g, e),
            Err(SaccadeError::MapExtent { .. })
        ));
        assert!(GridSpec::new(ScaleLevel::Tiny, 0, 2).is_err());
    }
}
