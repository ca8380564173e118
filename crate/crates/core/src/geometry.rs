//! Integer cell geometry shared by every module: cells, footprints and
//! axis-aligned cell rectangles.

use serde::{Deserialize, Serialize};

/// A grid cell addressed by column `x` and row `y`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    /// The four edge-adjacent neighbours, in a fixed order.
    pub fn neighbors4(self) -> [Cell; 4] {
        [
            Cell::new(self.x + 1, self.y),
            Cell::new(self.x - 1, self.y),
            Cell::new(self.x, self.y + 1),
            Cell::new(self.x, self.y - 1),
        ]
    }

    pub fn manhattan(self, other: Cell) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    /// Euclidean distance between cell centres, in cell units.
    pub fn euclidean(self, other: Cell) -> f64 {
        let dx = f64::from(self.x - other.x);
        let dy = f64::from(self.y - other.y);
        (dx * dx + dy * dy).sqrt()
    }
}

/// Width and height of an object's 2D footprint, in cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Footprint {
    pub w: u32,
    pub h: u32,
}

impl Footprint {
    pub const UNIT: Footprint = Footprint { w: 1, h: 1 };

    pub const fn new(w: u32, h: u32) -> Self {
        Self { w, h }
    }

    pub fn area(self) -> u32 {
        self.w * self.h
    }

    /// The footprint anchored with its top-left cell at `origin`.
    pub fn at(self, origin: Cell) -> Rect {
        Rect::new(origin, self.w, self.h)
    }
}

/// Axis-aligned rectangle of cells `[x, x + w) × [y, y + h)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub origin: Cell,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub const fn new(origin: Cell, w: u32, h: u32) -> Self {
        Self { origin, w, h }
    }

    pub fn x0(&self) -> i32 {
        self.origin.x
    }

    pub fn y0(&self) -> i32 {
        self.origin.y
    }

    /// One past the last column.
    pub fn x1(&self) -> i32 {
        self.origin.x + self.w as i32
    }

    /// One past the last row.
    pub fn y1(&self) -> i32 {
        self.origin.y + self.h as i32
    }

    pub fn area(&self) -> u32 {
        self.w * self.h
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.x >= self.x0() && c.x < self.x1() && c.y >= self.y0() && c.y < self.y1()
    }

    /// True when `other` lies entirely inside `self`.
    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x0() >= self.x0() && other.y0() >= self.y0() && other.x1() <= self.x1() && other.y1() <= self.y1()
    }

    /// Cell-set intersection test. Empty rectangles never intersect.
    pub fn intersects(&self, other: &Rect) -> bool {
        if self.w == 0 || self.h == 0 || other.w == 0 || other.h == 0 {
            return false;
        }
        self.x0() < other.x1() && other.x0() < self.x1() && self.y0() < other.y1() && other.y0() < self.y1()
    }

    /// Grows the rectangle by `margin` cells on every side.
    pub fn expanded(&self, margin: u32) -> Rect {
        let m = margin as i32;
        Rect::new(
            Cell::new(self.origin.x - m, self.origin.y - m),
            self.w + 2 * margin,
            self.h + 2 * margin,
        )
    }

    /// The cell nearest the geometric centre.
    pub fn center(&self) -> Cell {
        Cell::new(self.origin.x + (self.w as i32 - 1) / 2, self.origin.y + (self.h as i32 - 1) / 2)
    }

    /// Row-major iterator over the covered cells.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let (x0, x1) = (self.x0(), self.x1());
        (self.y0()..self.y1()).flat_map(move |y| (x0..x1).map(move |x| Cell::new(x, y)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn touching_rectangles_do_not_intersect() {
        let a = Rect::new(Cell::new(0, 0), 2, 2);
        let b = Rect::new(Cell::new(2, 0), 2, 2);
        assert!(!a.intersects(&b));
        let c = Rect::new(Cell::new(1, 1), 2, 2);
        assert!(a.intersects(&c));
        assert!(c.intersects(&a));
    }

    #[test]
    fn cells_cover_area() {
        let r = Rect::new(Cell::new(3, 4), 3, 2);
        let cells: Vec<_> = r.cells().collect();
        assert_eq!(cells.len(), 6);
        assert!(cells.iter().all(|c| r.contains(*c)));
        assert_eq!(r.center(), Cell::new(4, 4));
    }
}
