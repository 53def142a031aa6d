use crate::attribution::Heatmap;

use super::PerturbError;

/// A rectangular window anchored at its top-left pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Region {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Region {
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.row..self.row + self.height)
            .flat_map(move |r| (self.col..self.col + self.width).map(move |c| (r, c)))
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn fits(&self, height: usize, width: usize) -> bool {
        self.row + self.height <= height && self.col + self.width <= width
    }

    pub fn overlaps(&self, other: &Region) -> bool {
        self.row < other.row + other.height
            && other.row < self.row + self.height
            && self.col < other.col + other.width
            && other.col < self.col + self.width
    }
}

/// Non-overlapping `window x window` tiling anchored at the top-left corner,
/// in row-major order. Trailing strips narrower than the window are left out.
pub fn build_region_grid(
    height: usize,
    width: usize,
    window: usize,
) -> Result<Vec<Region>, PerturbError> {
    if window == 0 || window > height.min(width) {
        return Err(PerturbError::WindowTooLarge {
            window,
            height,
            width,
        });
    }
    let mut regions = Vec::with_capacity((height / window) * (width / window));
    for gr in 0..height / window {
        for gc in 0..width / window {
            regions.push(Region {
                row: gr * window,
                col: gc * window,
                height: window,
                width: window,
            });
        }
    }
    Ok(regions)
}

/// Regions sorted by descending score.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionOrdering {
    entries: Vec<(Region, f64)>,
}

impl RegionOrdering {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(Region, f64)] {
        &self.entries
    }

    pub fn regions(&self) -> impl DoubleEndedIterator<Item = &Region> + ExactSizeIterator {
        self.entries.iter().map(|(r, _)| r)
    }

    pub fn scores(&self) -> impl DoubleEndedIterator<Item = f64> + ExactSizeIterator + '_ {
        self.entries.iter().map(|(_, s)| *s)
    }
}

/// Scores each region by the sum of its pixel scores and sorts descending;
/// equal scores keep the input (row-major) order.
pub fn order_regions(
    heatmap: &Heatmap,
    regions: &[Region],
) -> Result<RegionOrdering, PerturbError> {
    let (h, w) = (heatmap.height(), heatmap.width());
    if let Some(r) = regions.iter().find(|r| !r.fits(h, w)) {
        return Err(PerturbError::HeatmapExtent {
            found: (h, w),
            needed: (r.row + r.height, r.col + r.width),
        });
    }
    let mut entries: Vec<(Region, f64)> = regions
        .iter()
        .map(|r| (*r, r.pixels().map(|(y, x)| heatmap.score(y, x)).sum()))
        .collect();
    // stable sort; NaN-free scores compare totally
    entries.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(RegionOrdering { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heat(h: usize, w: usize, scores: Vec<f64>) -> Heatmap {
        Heatmap::new(h, w, scores, "t").unwrap()
    }

    #[test]
    fn paper_scale_grid() {
        let grid = build_region_grid(227, 227, 9).unwrap();
        assert_eq!(grid.len(), 625);
        let frac = grid[0].area() as f64 / (227.0 * 227.0);
        assert!((frac - 0.00157).abs() < 5e-6);
        assert!((100.0 * frac - 0.157).abs() < 5e-4);
        assert!(grid.iter().all(|r| r.fits(225, 225)));
    }

    #[test]
    fn single_window_grid() {
        assert_eq!(build_region_grid(9, 9, 9).unwrap().len(), 1);
        assert!(build_region_grid(8, 20, 9).is_err());
        assert!(build_region_grid(8, 8, 0).is_err());
    }

    #[test]
    fn grid_is_disjoint() {
        let g = build_region_grid(20, 13, 3).unwrap();
        assert_eq!(g.len(), 6 * 4);
        for (i, a) in g.iter().enumerate() {
            for b in &g[i + 1..] {
                assert!(!a.overlaps(b));
            }
        }
    }

    #[test]
    fn orders_by_region_sum() {
        let regions = build_region_grid(1, 3, 1).unwrap();
        let o = order_regions(&heat(1, 3, vec![0.1, 0.9, 0.5]), &regions).unwrap();
        let cols: Vec<usize> = o.regions().map(|r| r.col).collect();
        assert_eq!(cols, [1, 2, 0]);
    }

    #[test]
    fn ties_keep_row_major_order() {
        let regions = build_region_grid(4, 4, 2).unwrap();
        let o = order_regions(&heat(4, 4, vec![1.0; 16]), &regions).unwrap();
        assert_eq!(o.regions().copied().collect::<Vec<_>>(), regions);
    }

    #[test]
    fn small_heatmap_is_rejected() {
        let regions = build_region_grid(4, 4, 2).unwrap();
        assert!(order_regions(&heat(3, 3, vec![0.0; 9]), &regions).is_err());
    }
}
