//! Summed-area table over a density map.

use crate::density::DensityMap;

/// Relative size below which a region sum counts as cancellation noise.
const NOISE_FLOOR: f64 = 1e-12;

/// `(width + 1) x (height + 1)` table of cumulative sums; entry `(x, y)` is
/// the sum of all map cells with column `< x` and row `< y`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    sums: Vec<f64>,
}

impl IntegralImage {
    pub fn build(map: &DensityMap) -> Self {
        let (w, h) = (map.width(), map.height());
        let stride = w + 1;
        let mut sums = vec![0.0; stride * (h + 1)];
        let values = map.values();
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += values[y * w + x];
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self {
            width: w,
            height: h,
            sums,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.sums[y * (self.width + 1) + x]
    }

    /// Sum over cells in `[x0, x1) x [y0, y1)`.
    pub fn rect_sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        debug_assert!(x0 <= x1 && x1 <= self.width && y0 <= y1 && y1 <= self.height);
        // grouped by column so empty rectangles come out exactly zero
        (self.at(x1, y1) - self.at(x1, y0)) - (self.at(x0, y1) - self.at(x0, y0))
    }

    /// Cumulative sum at fractional coordinates, treating each map cell as a
    /// constant density over its unit square. Within a cell the table is
    /// bilinear, so this is exact for that piecewise-constant model.
    pub fn at_frac(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, self.width as f64);
        let y = y.clamp(0.0, self.height as f64);
        let i = (x.floor() as usize).min(self.width.saturating_sub(1));
        let j = (y.floor() as usize).min(self.height.saturating_sub(1));
        let (fx, fy) = (x - i as f64, y - j as f64);
        let s00 = self.at(i, j);
        let s10 = self.at(i + 1, j);
        let s01 = self.at(i, j + 1);
        let s11 = self.at(i + 1, j + 1);
        s00 + (s10 - s00) * fx + (s01 - s00) * fy + (s11 - s10 - s01 + s00) * fx * fy
    }

    /// Integral over a fractional rectangle in map-pixel coordinates.
    ///
    /// Results at the level of cancellation error are reported as exactly
    /// zero, so empty regions never show a spurious positive mass.
    pub fn region_sum(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
        let corners = [
            self.at_frac(x1, y1),
            self.at_frac(x0, y1),
            self.at_frac(x1, y0),
            self.at_frac(x0, y0),
        ];
        let v = (corners[0] - corners[2]) - (corners[1] - corners[3]);
        let scale = corners.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        if v <= scale * NOISE_FLOOR {
            0.0
        } else {
            v
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn brute(map: &DensityMap, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let mut s = 0.0;
        for y in y0..y1 {
            for x in x0..x1 {
                s += map.get(x, y);
            }
        }
        s
    }

    #[test]
    fn zeros_and_ones() {
        let z = IntegralImage::build(&DensityMap::zeros(5, 4, 1.0).unwrap());
        assert!(z.sums.iter().all(|&v| v == 0.0));
        let ones = DensityMap::from_values(3, 3, 1.0, vec![1.0; 9]).unwrap();
        let ii = IntegralImage::build(&ones);
        assert_eq!(ii.rect_sum(0, 0, 3, 3), 9.0);
        assert_eq!(ii.rect_sum(1, 1, 2, 3), 2.0);
        assert_eq!(ii.rect_sum(2, 2, 2, 3), 0.0);
    }

    #[test]
    fn borders_zero_and_monotone() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let v = (0..20 * 13).map(|_| rng.gen::<f64>()).collect();
        let ii = IntegralImage::build(&DensityMap::from_values(20, 13, 1.0, v).unwrap());
        for x in 0..=20 {
            assert_eq!(ii.at(x, 0), 0.0);
        }
        for y in 0..=13 {
            assert_eq!(ii.at(0, y), 0.0);
            for x in 1..=20 {
                assert!(ii.at(x, y) >= ii.at(x - 1, y));
                if y > 0 {
                    assert!(ii.at(x, y) >= ii.at(x, y - 1));
                }
            }
        }
    }

    #[test]
    fn random_rectangles_match_direct_sums() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let v = (0..64 * 64).map(|_| rng.gen::<f64>()).collect();
        let map = DensityMap::from_values(64, 64, 1.0, v).unwrap();
        let ii = IntegralImage::build(&map);
        for _ in 0..100 {
            let (a, b) = (rng.gen_range(0..=64), rng.gen_range(0..=64));
            let (c, d) = (rng.gen_range(0..=64), rng.gen_range(0..=64));
            let (x0, x1) = (a.min(b), a.max(b));
            let (y0, y1) = (c.min(d), c.max(d));
            let want = brute(&map, x0, y0, x1, y1);
            let got = ii.rect_sum(x0, y0, x1, y1);
            assert!((got - want).abs() <= 1e-6 * want.max(1e-12));
        }
    }

    #[test]
    fn fractional_regions_split_cells_by_area() {
        let map = DensityMap::from_values(2, 2, 1.0, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let ii = IntegralImage::build(&map);
        // half of the first column plus half of the second
        assert!((ii.region_sum(0.5, 0.0, 1.5, 1.0) - 1.5).abs() < 1e-12);
        assert!((ii.region_sum(0.0, 0.0, 2.0, 2.0) - 10.0).abs() < 1e-12);
        let left = ii.region_sum(0.0, 0.0, 0.7, 2.0);
        let right = ii.region_sum(0.7, 0.0, 2.0, 2.0);
        assert!((left + right - 10.0).abs() < 1e-12);
        assert!((left - 0.7 * 4.0).abs() < 1e-12);
    }
}
