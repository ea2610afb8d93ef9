//! Compaction coverage: passes per cell under the vehicle footprint.
//!
//! A cell's pass count increments when the footprint rectangle newly enters
//! it; lingering on a cell does not recount. The containment rule — cell
//! centers inside the heading-aligned rectangle centered on the rear axle,
//! edges inclusive — is deliberately identical to the ground-truth vehicle
//! model's, so twin coverage and truth pass counts compare cell-for-cell.

use std::collections::{HashMap, HashSet};

use crate::TwinError;

#[derive(Debug, Clone)]
pub struct CoverageMap {
    origin_x: f64,
    origin_y: f64,
    cell_size: f64,
    width: usize,
    height: usize,
    footprint_length: f64,
    footprint_width: f64,
    counts: Vec<u32>,
    prev: HashSet<(usize, usize)>,
}

impl CoverageMap {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        cell_size: f64,
        width: usize,
        height: usize,
        footprint_length: f64,
        footprint_width: f64,
    ) -> Result<Self, TwinError> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(TwinError::Config(format!(
                "coverage cell size must be positive and finite, got {cell_size}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(TwinError::Config(
                "coverage dimensions must be non-zero".into(),
            ));
        }
        if !(footprint_length > 0.0) || !(footprint_width > 0.0) {
            return Err(TwinError::Config(format!(
                "footprint must be positive, got {footprint_length} x {footprint_width}"
            )));
        }
        Ok(CoverageMap {
            origin_x,
            origin_y,
            cell_size,
            width,
            height,
            footprint_length,
            footprint_width,
            counts: vec![0; width * height],
            prev: HashSet::new(),
        })
    }

    fn cell_at(&self, x: f64, y: f64) -> Option<(usize, usize)> {
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

    fn cell_center(&self, cx: usize, cy: usize) -> (f64, f64) {
        (
            self.origin_x + (cx as f64 + 0.5) * self.cell_size,
            self.origin_y + (cy as f64 + 0.5) * self.cell_size,
        )
    }

    /// Cells whose centers lie under the footprint rectangle centered on
    /// (x, y) and aligned with `yaw`.
    pub fn footprint_cells(&self, x: f64, y: f64, yaw: f64) -> Vec<(usize, usize)> {
        let half_l = self.footprint_length / 2.0;
        let half_w = self.footprint_width / 2.0;
        let (sin_yaw, cos_yaw) = yaw.sin_cos();
        let reach = half_l.hypot(half_w);
        let cell = self.cell_size;
        let mut cells = Vec::new();
        let x_lo = x - reach - cell;
        let y_lo = y - reach - cell;
        let steps = ((2.0 * (reach + cell)) / cell).ceil() as usize + 1;
        let mut seen = HashSet::new();
        for iy in 0..steps {
            for ix in 0..steps {
                let px = x_lo + (ix as f64 + 0.5) * cell;
                let py = y_lo + (iy as f64 + 0.5) * cell;
                if let Some(c) = self.cell_at(px, py) {
                    if !seen.insert(c) {
                        continue;
                    }
                    let (ccx, ccy) = self.cell_center(c.0, c.1);
                    let dx = ccx - x;
                    let dy = ccy - y;
                    let local_x = dx * cos_yaw + dy * sin_yaw;
                    let local_y = -dx * sin_yaw + dy * cos_yaw;
                    if local_x.abs() <= half_l && local_y.abs() <= half_w {
                        cells.push(c);
                    }
                }
            }
        }
        cells.sort_unstable();
        cells
    }

    /// Counts cells the footprint newly entered since the last update.
    pub fn update(&mut self, x: f64, y: f64, yaw: f64) {
        let cells = self.footprint_cells(x, y, yaw);
        let current: HashSet<(usize, usize)> = cells.iter().copied().collect();
        for &cell in &cells {
            if !self.prev.contains(&cell) {
                self.counts[cell.1 * self.width + cell.0] += 1;
            }
        }
        self.prev = current;
    }

    pub fn count(&self, cx: usize, cy: usize) -> u32 {
        self.counts[cy * self.width + cx]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Row-major copy of all counts (for state snapshots).
    pub fn counts_row_major(&self) -> Vec<u32> {
        self.counts.clone()
    }

    /// Non-zero counts keyed by cell, for comparison against truth maps.
    pub fn to_map(&self) -> HashMap<(usize, usize), u32> {
        let mut out = HashMap::new();
        for cy in 0..self.height {
            for cx in 0..self.width {
                let c = self.counts[cy * self.width + cx];
                if c > 0 {
                    out.insert((cx, cy), c);
                }
            }
        }
        out
    }

    pub fn clear(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0);
        self.prev.clear();
    }
}
