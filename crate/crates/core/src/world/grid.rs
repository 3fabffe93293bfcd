//! Occupancy grids and exact grid traversal.
//!
//! Cells are addressed as integer `(x, y)` with `x` growing east and `y`
//! growing north. A cell `(x, y)` covers the metric square
//! `[x * cell_size, (x + 1) * cell_size) x [y * cell_size, (y + 1) * cell_size)`.

use serde::{Deserialize, Serialize};

/// Integer grid coordinate. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[i32; 2]", into = "[i32; 2]")]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    /// Chebyshev distance in cells.
    pub fn chebyshev(self, other: Cell) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    pub fn neighbors4(self) -> [Cell; 4] {
        [
            Cell::new(self.x + 1, self.y),
            Cell::new(self.x, self.y + 1),
            Cell::new(self.x - 1, self.y),
            Cell::new(self.x, self.y - 1),
        ]
    }
}

impl From<[i32; 2]> for Cell {
    fn from(v: [i32; 2]) -> Self {
        Cell::new(v[0], v[1])
    }
}

impl From<Cell> for [i32; 2] {
    fn from(c: Cell) -> Self {
        [c.x, c.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellState {
    Free,
    Obstacle,
    Unknown,
}

/// A rectangular grid of cell states.
///
/// The same type holds the ground-truth map (only `Free`/`Obstacle`) and the
/// agent's online map, which starts all `Unknown` and is refined by sensing.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    cell_size: f64,
    cells: Vec<CellState>,
}

impl OccupancyGrid {
    pub fn new(width: usize, height: usize, cell_size: f64, fill: CellState) -> Self {
        assert!(width >= 1 && height >= 1, "grid must be at least 1x1");
        assert!(cell_size > 0.0, "cell size must be positive");
        Self {
            width,
            height,
            cell_size,
            cells: vec![fill; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height
    }

    /// Row-major index; also the "cell index" used for deterministic tie-breaking.
    pub fn index(&self, c: Cell) -> usize {
        debug_assert!(self.in_bounds(c));
        c.y as usize * self.width + c.x as usize
    }

    pub fn cell_at_index(&self, i: usize) -> Cell {
        Cell::new((i % self.width) as i32, (i / self.width) as i32)
    }

    /// State of `c`; out-of-bounds cells read as `Obstacle`.
    pub fn get(&self, c: Cell) -> CellState {
        if self.in_bounds(c) {
            self.cells[self.index(c)]
        } else {
            CellState::Obstacle
        }
    }

    pub fn set(&mut self, c: Cell, state: CellState) {
        let i = self.index(c);
        self.cells[i] = state;
    }

    pub fn cells(&self) -> impl Iterator<Item = (Cell, CellState)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .map(move |(i, s)| (self.cell_at_index(i), *s))
    }

    pub fn count(&self, state: CellState) -> usize {
        self.cells.iter().filter(|s| **s == state).count()
    }

    /// Cell containing the metric point, if inside the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<Cell> {
        let c = Cell::new(
            (x / self.cell_size).floor() as i32,
            (y / self.cell_size).floor() as i32,
        );
        self.in_bounds(c).then_some(c)
    }

    pub fn center(&self, c: Cell) -> (f64, f64) {
        (
            (c.x as f64 + 0.5) * self.cell_size,
            (c.y as f64 + 0.5) * self.cell_size,
        )
    }

    /// Walks the cells pierced by the ray from `(x, y)` along `(dx, dy)`
    /// (unit vector) up to `max_dist` meters, in order, starting with the
    /// cell containing the origin. `visit` receives each cell and the ray
    /// distance at which it is entered and returns `false` to stop.
    ///
    /// Cells entered exactly at `max_dist` are included. When the ray passes
    /// exactly through a cell corner both side cells are visited, so a ray
    /// never slips diagonally between two blocked cells.
    pub fn traverse<F>(&self, x: f64, y: f64, dx: f64, dy: f64, max_dist: f64, mut visit: F)
    where
        F: FnMut(Cell, f64) -> bool,
    {
        let cs = self.cell_size;
        let mut cell = Cell::new((x / cs).floor() as i32, (y / cs).floor() as i32);
        if !self.in_bounds(cell) {
            return;
        }
        let step_x: i32 = if dx > 0.0 { 1 } else if dx < 0.0 { -1 } else { 0 };
        let step_y: i32 = if dy > 0.0 { 1 } else if dy < 0.0 { -1 } else { 0 };
        let boundary = |pos: f64, c: i32, step: i32| -> f64 {
            if step > 0 {
                (c + 1) as f64 * cs - pos
            } else {
                pos - c as f64 * cs
            }
        };
        let mut t_max_x = if step_x != 0 {
            boundary(x, cell.x, step_x) / dx.abs()
        } else {
            f64::INFINITY
        };
        let mut t_max_y = if step_y != 0 {
            boundary(y, cell.y, step_y) / dy.abs()
        } else {
            f64::INFINITY
        };
        let t_delta_x = if step_x != 0 { cs / dx.abs() } else { f64::INFINITY };
        let t_delta_y = if step_y != 0 { cs / dy.abs() } else { f64::INFINITY };

        if !visit(cell, 0.0) {
            return;
        }
        loop {
            let t = t_max_x.min(t_max_y);
            if t > max_dist {
                return;
            }
            if t_max_x == t_max_y {
                // Corner crossing: visit both side cells before the diagonal one.
                for side in [Cell::new(cell.x + step_x, cell.y), Cell::new(cell.x, cell.y + step_y)] {
                    if !self.in_bounds(side) || !visit(side, t) {
                        return;
                    }
                }
                cell = Cell::new(cell.x + step_x, cell.y + step_y);
                t_max_x += t_delta_x;
                t_max_y += t_delta_y;
            } else if t_max_x < t_max_y {
                cell = Cell::new(cell.x + step_x, cell.y);
                t_max_x += t_delta_x;
            } else {
                cell = Cell::new(cell.x, cell.y + step_y);
                t_max_y += t_delta_y;
            }
            if !self.in_bounds(cell) || !visit(cell, t) {
                return;
            }
        }
    }
}

/// Unit direction for heading index `k` (multiples of 30 degrees), with
/// exact values on the axes so axis-aligned motion never drifts.
pub fn heading_direction(k: u8) -> (f64, f64) {
    const H: f64 = 0.866_025_403_784_438_6; // sqrt(3) / 2
    match k % 12 {
        0 => (1.0, 0.0),
        1 => (H, 0.5),
        2 => (0.5, H),
        3 => (0.0, 1.0),
        4 => (-0.5, H),
        5 => (-H, 0.5),
        6 => (-1.0, 0.0),
        7 => (-H, -0.5),
        8 => (-0.5, -H),
        9 => (0.0, -1.0),
        10 => (0.5, -H),
        _ => (H, -0.5),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn collect(g: &OccupancyGrid, x: f64, y: f64, ang: f64, d: f64) -> Vec<Cell> {
        let mut out = Vec::new();
        g.traverse(x, y, ang.cos(), ang.sin(), d, |c, _| {
            out.push(c);
            true
        });
        out
    }

    #[test]
    fn axis_ray_visits_consecutive_cells() {
        let g = OccupancyGrid::new(10, 10, 0.25, CellState::Free);
        let cells = collect(&g, 0.125, 0.125, 0.0, 1.0);
        assert_eq!(
            cells,
            (0..=4).map(|x| Cell::new(x, 0)).collect::<Vec<_>>()
        );
    }

    #[test]
    fn ray_stops_at_grid_edge() {
        let g = OccupancyGrid::new(3, 1, 1.0, CellState::Free);
        let cells = collect(&g, 0.5, 0.5, 0.0, 100.0);
        assert_eq!(cells.len(), 3);
    }

    #[test]
    fn corner_crossing_visits_both_sides() {
        let g = OccupancyGrid::new(4, 4, 1.0, CellState::Free);
        let d = std::f64::consts::FRAC_1_SQRT_2;
        let mut cells = Vec::new();
        g.traverse(0.5, 0.5, d, d, 1.5, |c, _| {
            cells.push(c);
            true
        });
        assert_eq!(
            cells,
            vec![Cell::new(0, 0), Cell::new(1, 0), Cell::new(0, 1), Cell::new(1, 1)]
        );
    }

    #[test]
    fn traversal_is_edge_connected() {
        let g = OccupancyGrid::new(40, 40, 0.25, CellState::Free);
        for deg in 0..360 {
            let cells = collect(&g, 5.03, 4.97, (deg as f64).to_radians(), 4.0);
            for (i, c) in cells.iter().enumerate().skip(1) {
                let touches = cells[..i]
                    .iter()
                    .any(|p| (p.x - c.x).abs() + (p.y - c.y).abs() == 1);
                assert!(touches, "{c:?} not edge-adjacent to an earlier cell at {deg} deg");
            }
        }
    }

    #[test]
    fn out_of_bounds_reads_as_obstacle() {
        let g = OccupancyGrid::new(2, 2, 1.0, CellState::Free);
        assert_eq!(g.get(Cell::new(-1, 0)), CellState::Obstacle);
        assert_eq!(g.get(Cell::new(0, 2)), CellState::Obstacle);
        assert_eq!(g.cell_of(2.0, 0.5), None);
    }

    #[test]
    fn heading_table_is_unit_and_matches_trig() {
        for k in 0..12u8 {
            let (c, s) = heading_direction(k);
            let a = (k as f64 * 30.0).to_radians();
            assert!((c - a.cos()).abs() < 1e-12 && (s - a.sin()).abs() < 1e-12);
        }
    }
}
