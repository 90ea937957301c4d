//! Gallery grid geometry.
//!
//! A gallery frame is tiled into `rows x cols` cells in row-major order with
//! the origin at the top-left. Integer-division remainders are absorbed by the
//! last row and the last column so the cells cover the frame exactly.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Axis-aligned rectangle in integer pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl PixelRect {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub const fn right(&self) -> u32 {
        self.x + self.w
    }

    pub const fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub const fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn is_empty(&self) -> bool {
        self.w == 0 || self.h == 0
    }

    /// True when `self` lies entirely inside a `width x height` image.
    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        !self.is_empty() && self.right() <= width && self.bottom() <= height
    }

    pub fn contains_rect(&self, other: &PixelRect) -> bool {
        other.x >= self.x && other.y >= self.y && other.right() <= self.right() && other.bottom() <= self.bottom()
    }

    pub fn intersection(&self, other: &PixelRect) -> Option<PixelRect> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x1 > x0 && y1 > y0).then(|| PixelRect::new(x0, y0, x1 - x0, y1 - y0))
    }

    pub fn iou(&self, other: &PixelRect) -> f64 {
        let inter = self.intersection(other).map_or(0, |r| r.area());
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Translate a rect expressed relative to `self` into the parent frame.
    pub const fn offset_by(&self, inner: &PixelRect) -> PixelRect {
        PixelRect::new(self.x + inner.x, self.y + inner.y, inner.w, inner.h)
    }
}

/// One participant slot in the gallery, 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellRef {
    pub row: u32,
    pub col: u32,
}

impl CellRef {
    pub const fn new(row: u32, col: u32) -> Self {
        Self { row, col }
    }
}

impl std::fmt::Display for CellRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridLayout {
    rows: u32,
    cols: u32,
    frame_w: u32,
    frame_h: u32,
}

impl GridLayout {
    pub fn new(rows: u32, cols: u32, frame_w: u32, frame_h: u32) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(CoreError::InvalidLayout(format!(
                "grid must have at least one cell, got {rows}x{cols}"
            )));
        }
        if frame_w < cols || frame_h < rows {
            return Err(CoreError::InvalidLayout(format!(
                "frame {frame_w}x{frame_h} too small for a {rows}x{cols} grid"
            )));
        }
        Ok(Self {
            rows,
            cols,
            frame_w,
            frame_h,
        })
    }

    pub const fn rows(&self) -> u32 {
        self.rows
    }

    pub const fn cols(&self) -> u32 {
        self.cols
    }

    pub const fn frame_width(&self) -> u32 {
        self.frame_w
    }

    pub const fn frame_height(&self) -> u32 {
        self.frame_h
    }

    pub const fn cell_count(&self) -> usize {
        self.rows as usize * self.cols as usize
    }

    pub fn contains(&self, cell: CellRef) -> bool {
        cell.row < self.rows && cell.col < self.cols
    }

    /// Row-major index of `cell`: `row * cols + col`.
    pub fn linear_index(&self, cell: CellRef) -> Result<usize> {
        if !self.contains(cell) {
            return Err(CoreError::CellOutOfRange {
                index: cell.row as usize * self.cols as usize + cell.col as usize,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(cell.row as usize * self.cols as usize + cell.col as usize)
    }

    pub fn cell_at(&self, index: usize) -> Result<CellRef> {
        if index >= self.cell_count() {
            return Err(CoreError::CellOutOfRange {
                index,
                rows: self.rows,
                cols: self.cols,
            });
        }
        let cols = self.cols as usize;
        Ok(CellRef::new((index / cols) as u32, (index % cols) as u32))
    }

    /// All cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = CellRef> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).map(move |c| CellRef::new(r, c)))
    }

    fn span(total: u32, parts: u32, i: u32) -> (u32, u32) {
        let base = total / parts;
        let start = base * i;
        let len = if i + 1 == parts { total - start } else { base };
        (start, len)
    }

    pub fn cell_rect(&self, cell: CellRef) -> Result<PixelRect> {
        self.linear_index(cell)?;
        let (x, w) = Self::span(self.frame_w, self.cols, cell.col);
        let (y, h) = Self::span(self.frame_h, self.rows, cell.row);
        Ok(PixelRect::new(x, y, w, h))
    }

    /// The full partition of the frame, row-major.
    pub fn partition(&self) -> Vec<(CellRef, PixelRect)> {
        self.cells()
            .map(|c| (c, self.cell_rect(c).expect("cell from own iterator")))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_partition_corners() {
        let g = GridLayout::new(5, 5, 1280, 720).unwrap();
        assert_eq!(g.cell_rect(CellRef::new(0, 0)).unwrap(), PixelRect::new(0, 0, 256, 144));
        assert_eq!(
            g.cell_rect(CellRef::new(4, 4)).unwrap(),
            PixelRect::new(1024, 576, 256, 144)
        );
    }

    #[test]
    fn remainder_goes_to_last_row_and_column() {
        let g = GridLayout::new(5, 5, 1281, 721).unwrap();
        assert_eq!(
            g.cell_rect(CellRef::new(4, 4)).unwrap(),
            PixelRect::new(1024, 576, 257, 145)
        );
        // brute-force summation along each row and column
        for r in 0..5 {
            let sum: u32 = (0..5).map(|c| g.cell_rect(CellRef::new(r, c)).unwrap().w).sum();
            assert_eq!(sum, 1281);
        }
        for c in 0..5 {
            let sum: u32 = (0..5).map(|r| g.cell_rect(CellRef::new(r, c)).unwrap().h).sum();
            assert_eq!(sum, 721);
        }
    }

    #[test]
    fn linear_index_examples() {
        let g = GridLayout::new(5, 5, 1280, 720).unwrap();
        assert_eq!(g.linear_index(CellRef::new(0, 0)).unwrap(), 0);
        assert_eq!(g.linear_index(CellRef::new(4, 4)).unwrap(), 24);
        assert_eq!(g.cell_at(7).unwrap(), CellRef::new(1, 2));
        assert!(matches!(g.cell_at(25), Err(CoreError::CellOutOfRange { .. })));
        assert!(g.linear_index(CellRef::new(5, 0)).is_err());
    }

    #[test]
    fn rejects_degenerate_layouts() {
        assert!(GridLayout::new(0, 5, 100, 100).is_err());
        assert!(GridLayout::new(5, 5, 4, 100).is_err());
        assert!(GridLayout::new(5, 5, 100, 4).is_err());
        assert!(GridLayout::new(1, 1, 1, 1).is_ok());
    }

    #[test]
    fn seven_by_seven_variant() {
        let g = GridLayout::new(7, 7, 1920, 1080).unwrap();
        assert_eq!(g.cell_count(), 49);
        assert_eq!(g.cell_rect(CellRef::new(6, 6)).unwrap().right(), 1920);
    }

    #[test]
    fn iou_basics() {
        let a = PixelRect::new(0, 0, 10, 10);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&PixelRect::new(20, 20, 5, 5)), 0.0);
        let b = PixelRect::new(5, 0, 10, 10);
        assert!((a.iou(&b) - 50.0 / 150.0).abs() < 1e-12);
    }
}
