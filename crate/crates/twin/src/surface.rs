//! Heap surface reconstruction on a regular grid.
//!
//! Each cell keeps a running mean of the z values of points that landed in
//! it plus an observation count. Sums are accumulated in integer micrometres
//! so ingesting the same batch of points in any order produces a bit-equal
//! grid — floating addition is order-sensitive, integer addition is not —
//! which makes the volume estimate exactly permutation-invariant.

use std::collections::HashSet;

use dtp_core::pose::Vec3;

use crate::TwinError;

/// Axis-aligned region used to describe the heap footprint in the ground
/// plane; coverage fractions are measured against cells whose centers fall
/// inside (x0 ≤ x < x1, y0 ≤ y < y1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

/// Grid of per-cell height means and observation counts, on the same lattice
/// as the ground-truth terrain so estimates compare cell-for-cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionGrid {
    origin_x: f64,
    origin_y: f64,
    cell_size: f64,
    width: usize,
    height: usize,
    /// Σ z per cell in micrometres; i64 so batch order never changes a mean.
    sums_um: Vec<i64>,
    counts: Vec<u64>,
    out_of_bounds: u64,
}

impl ReconstructionGrid {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        cell_size: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, TwinError> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(TwinError::Config(format!(
                "grid cell size must be positive and finite, got {cell_size}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(TwinError::Config("grid dimensions must be non-zero".into()));
        }
        Ok(ReconstructionGrid {
            origin_x,
            origin_y,
            cell_size,
            width,
            height,
            sums_um: vec![0; width * height],
            counts: vec![0; width * height],
            out_of_bounds: 0,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> (f64, f64) {
        (self.origin_x, self.origin_y)
    }

    pub fn cell_center(&self, cx: usize, cy: usize) -> (f64, f64) {
        (
            self.origin_x + (cx as f64 + 0.5) * self.cell_size,
            self.origin_y + (cy as f64 + 0.5) * self.cell_size,
        )
    }

    /// Grid cell containing a ground-plane point, or None outside the grid.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = (x - self.origin_x) / self.cell_size;
        let fy = (y - self.origin_y) / self.cell_size;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (cx, cy) = (fx as usize, fy as usize);
        if cx >= self.width || cy >= self.height {
            return None;
        }
        Some((cx, cy))
    }

    /// Folds one world point into its cell's running mean; returns false and
    /// bumps the skip counter when the point falls outside the grid.
    pub fn add_point(&mut self, p: Vec3) -> bool {
        match self.cell_at(p.x, p.y) {
            Some((cx, cy)) => {
                let i = cy * self.width + cx;
                self.sums_um[i] += (p.z * 1e6).round() as i64;
                self.counts[i] += 1;
                true
            }
            None => {
                self.out_of_bounds += 1;
                false
            }
        }
    }

    pub fn add_points(&mut self, points: &[Vec3]) {
        for &p in points {
            self.add_point(p);
        }
    }

    pub fn count(&self, cx: usize, cy: usize) -> u64 {
        self.counts[cy * self.width + cx]
    }

    /// Estimated surface height: the running mean clamped to the ground
    /// plane (negative means are measurement noise below z = 0). None until
    /// the cell has been observed.
    pub fn height(&self, cx: usize, cy: usize) -> Option<f64> {
        let i = cy * self.width + cx;
        if self.counts[i] == 0 {
            return None;
        }
        let mean = self.sums_um[i] as f64 * 1e-6 / self.counts[i] as f64;
        Some(mean.max(0.0))
    }

    pub fn observed_cells(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn out_of_bounds(&self) -> u64 {
        self.out_of_bounds
    }

    /// Σ over observed cells of cell_size² · height.
    pub fn volume_m3(&self) -> f64 {
        let area = self.cell_size * self.cell_size;
        let mut v = 0.0;
        for cy in 0..self.height {
            for cx in 0..self.width {
                if let Some(h) = self.height(cx, cy) {
                    v += area * h;
                }
            }
        }
        v
    }

    /// Fraction of the given region's cells that have been observed; 0.0 for
    /// an empty region.
    pub fn observed_fraction(&self, region: &[(usize, usize)]) -> f64 {
        if region.is_empty() {
            return 0.0;
        }
        let unique: HashSet<(usize, usize)> = region.iter().copied().collect();
        let observed = unique
            .iter()
            .filter(|&&(cx, cy)| cx < self.width && cy < self.height && self.count(cx, cy) > 0)
            .count();
        observed as f64 / unique.len() as f64
    }

    /// Cells whose center lies inside any of the boxes — the region the
    /// coverage fraction is measured against.
    pub fn region_cells(&self, boxes: &[RegionBox]) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for cy in 0..self.height {
            for cx in 0..self.width {
                let (px, py) = self.cell_center(cx, cy);
                if boxes
                    .iter()
                    .any(|b| px >= b.x0 && px < b.x1 && py >= b.y0 && py < b.y1)
                {
                    out.push((cx, cy));
                }
            }
        }
        out
    }

    pub fn clear(&mut self) {
        self.sums_um.iter_mut().for_each(|s| *s = 0);
        self.counts.iter_mut().for_each(|c| *c = 0);
        self.out_of_bounds = 0;
    }
}

/// Volume estimate plus region coverage in one call.
pub fn estimate_volume(grid: &ReconstructionGrid, region: &[(usize, usize)]) -> (f64, f64) {
    (grid.volume_m3(), grid.observed_fraction(region))
}
