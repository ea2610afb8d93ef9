//! The silage heap as a regular grid of surface heights with a compaction
//! floor.
//!
//! Height lookup is piecewise constant per cell (the cell containing the
//! query point), which keeps heap walls exactly vertical at cell boundaries
//! and makes grid volumes exact — both matter for the analytic oracles the
//! raycaster and volume estimator are tested against. Outside the gridded
//! area the ground is flat at height zero.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("cell size must be positive, got {0}")]
    CellSize(f64),
    #[error("grid dimensions must be non-zero")]
    EmptyGrid,
    #[error("cell ({0}, {1}): height {2} below floor {3}")]
    BelowFloor(usize, usize, f64, f64),
    #[error("cell ({0}, {1}): floor {2} is negative")]
    NegativeFloor(usize, usize, f64),
}

/// Axis-aligned box of raised terrain used to describe heaps in configs.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HeapBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub height: f64,
    #[serde(default)]
    pub min_height: f64,
}

/// Regular grid of terrain heights in the ENU ground plane.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    origin_x: f64,
    origin_y: f64,
    cell_size: f64,
    width: usize,
    height: usize,
    heights: Vec<f64>,
    min_heights: Vec<f64>,
    /// Upper bound on cell heights; compaction only lowers, so this stays a
    /// valid bound and lets the raycaster skip beams that fly above terrain.
    max_height: f64,
}

impl HeightField {
    pub fn new_flat(
        origin_x: f64,
        origin_y: f64,
        cell_size: f64,
        width: usize,
        height: usize,
        h0: f64,
        h_min: f64,
    ) -> Result<Self, FieldError> {
        let hf = HeightField {
            origin_x,
            origin_y,
            cell_size,
            width,
            height,
            heights: vec![h0; width * height],
            min_heights: vec![h_min; width * height],
            max_height: h0,
        };
        hf.check()?;
        Ok(hf)
    }

    /// Builds a field from a flat base plus raised boxes. Later boxes win
    /// where they overlap.
    pub fn from_boxes(
        origin_x: f64,
        origin_y: f64,
        cell_size: f64,
        width: usize,
        height: usize,
        boxes: &[HeapBox],
    ) -> Result<Self, FieldError> {
        let mut hf = Self::new_flat(origin_x, origin_y, cell_size, width, height, 0.0, 0.0)?;
        for b in boxes {
            for cy in 0..height {
                for cx in 0..width {
                    let (px, py) = hf.cell_center(cx, cy);
                    if px >= b.x0 && px < b.x1 && py >= b.y0 && py < b.y1 {
                        hf.heights[cy * width + cx] = b.height;
                        hf.min_heights[cy * width + cx] = b.min_height;
                    }
                }
            }
        }
        hf.max_height = hf.heights.iter().cloned().fold(0.0, f64::max);
        hf.check()?;
        Ok(hf)
    }

    pub fn check(&self) -> Result<(), FieldError> {
        if !(self.cell_size > 0.0) {
            return Err(FieldError::CellSize(self.cell_size));
        }
        if self.width == 0 || self.height == 0 {
            return Err(FieldError::EmptyGrid);
        }
        for cy in 0..self.height {
            for cx in 0..self.width {
                let i = cy * self.width + cx;
                if self.min_heights[i] < 0.0 {
                    return Err(FieldError::NegativeFloor(cx, cy, self.min_heights[i]));
                }
                if self.heights[i] < self.min_heights[i] {
                    return Err(FieldError::BelowFloor(
                        cx,
                        cy,
                        self.heights[i],
                        self.min_heights[i],
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn origin(&self) -> (f64, f64) {
        (self.origin_x, self.origin_y)
    }

    pub fn max_height(&self) -> f64 {
        self.max_height
    }

    pub fn cell_center(&self, cx: usize, cy: usize) -> (f64, f64) {
        (
            self.origin_x + (cx as f64 + 0.5) * self.cell_size,
            self.origin_y + (cy as f64 + 0.5) * self.cell_size,
        )
    }

    /// Grid cell containing a world point, or None outside the field.
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

    /// Terrain height under a world point; zero outside the field.
    #[inline]
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        match self.cell_at(x, y) {
            Some((cx, cy)) => self.heights[cy * self.width + cx],
            None => 0.0,
        }
    }

    pub fn cell_height(&self, cx: usize, cy: usize) -> f64 {
        self.heights[cy * self.width + cx]
    }

    pub fn cell_floor(&self, cx: usize, cy: usize) -> f64 {
        self.min_heights[cy * self.width + cx]
    }

    /// Compacts one cell one pass: h ← h_min + (h − h_min)·k.
    pub fn compact_cell(&mut self, cx: usize, cy: usize, k: f64) {
        debug_assert!(k > 0.0 && k <= 1.0);
        let i = cy * self.width + cx;
        self.heights[i] = self.min_heights[i] + (self.heights[i] - self.min_heights[i]) * k;
    }

    /// Total volume above zero: Σ cell_size² · h.
    pub fn volume(&self) -> f64 {
        let a = self.cell_size * self.cell_size;
        self.heights.iter().map(|h| a * h).sum()
    }

    /// Cells whose center lies inside the given heap boxes — the "heap
    /// region" coverage fractions are measured against.
    pub fn cells_in_boxes(&self, boxes: &[HeapBox]) -> Vec<(usize, usize)> {
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
}
