//! Grid path planning.
//!
//! Geodesic distances use 8-connectivity with axis steps costing one cell and
//! diagonal steps √2 cells. A diagonal step is only allowed when both
//! orthogonal neighbours are Free, so paths never squeeze between two Blocked
//! cells that touch at a corner. Costs are carried as exact integer step
//! counts and converted to meters once, which keeps distances symmetric and
//! independent of summation order.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use thiserror::Error;

use crate::geometry::{GridPoint, WorldPoint};
use crate::scene::{OccupancyGrid, Scene};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("point ({x}, {y}) is outside the grid")]
    OutOfBounds { x: f64, y: f64 },
    #[error("no traversable path between the requested points")]
    Unreachable,
}

/// Exact path cost: `axis + diag·√2` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PathCost {
    pub axis: u32,
    pub diag: u32,
}

impl PathCost {
    pub const ZERO: PathCost = PathCost { axis: 0, diag: 0 };

    pub fn cells(&self) -> f64 {
        self.axis as f64 + self.diag as f64 * SQRT_2
    }

    pub fn meters(&self, resolution: f64) -> f64 {
        resolution * self.cells()
    }

    fn step(self, diagonal: bool) -> PathCost {
        if diagonal {
            PathCost {
                axis: self.axis,
                diag: self.diag + 1,
            }
        } else {
            PathCost {
                axis: self.axis + 1,
                diag: self.diag,
            }
        }
    }
}

impl Ord for PathCost {
    fn cmp(&self, other: &Self) -> Ordering {
        // Compare a1 + b1·√2 with a2 + b2·√2 without rounding:
        // sign of (a1 - a2) + (b1 - b2)·√2.
        let da = self.axis as i64 - other.axis as i64;
        let db = self.diag as i64 - other.diag as i64;
        match (da.signum(), db.signum()) {
            (0, 0) => Ordering::Equal,
            (x, y) if x >= 0 && y >= 0 => Ordering::Greater,
            (x, y) if x <= 0 && y <= 0 => Ordering::Less,
            // Mixed signs: compare |da| against |db|·√2 by squares.
            (x, _) => {
                let lhs = da * da;
                let rhs = 2 * db * db;
                let axis_dominates = lhs.cmp(&rhs);
                if x > 0 {
                    axis_dominates
                } else {
                    axis_dominates.reverse()
                }
            }
        }
    }
}

impl PartialOrd for PathCost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const MOVES: [(i64, i64); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (-1, 1),
    (1, -1),
    (-1, -1),
];

/// Free 8-neighbours of `g` under the no-corner-cutting rule, in a fixed
/// order. The flag marks diagonal moves.
pub fn neighbors(grid: &OccupancyGrid, g: GridPoint) -> impl Iterator<Item = (GridPoint, bool)> + '_ {
    let (c, r) = (g.col as i64, g.row as i64);
    MOVES.iter().filter_map(move |&(dc, dr)| {
        let free = |cc: i64, rr: i64| grid.cell_at(cc, rr) == crate::scene::Cell::Free;
        if !free(c + dc, r + dr) {
            return None;
        }
        let diagonal = dc != 0 && dr != 0;
        if diagonal && !(free(c + dc, r) && free(c, r + dr)) {
            return None;
        }
        Some((GridPoint::new((c + dc) as usize, (r + dr) as usize), diagonal))
    })
}

/// Single-source exact shortest-path tree over Free cells.
#[derive(Debug, Clone)]
pub struct DistanceField {
    source: GridPoint,
    width: usize,
    resolution: f64,
    cost: Vec<Option<PathCost>>,
    pred: Vec<usize>,
}

impl DistanceField {
    /// Full Dijkstra from `source`. A Blocked source yields an empty field.
    pub fn new(grid: &OccupancyGrid, source: GridPoint) -> Self {
        Self::build(grid, source, None)
    }

    fn build(grid: &OccupancyGrid, source: GridPoint, stop_at: Option<GridPoint>) -> Self {
        let n = grid.len();
        let mut field = DistanceField {
            source,
            width: grid.width(),
            resolution: grid.resolution(),
            cost: vec![None; n],
            pred: vec![usize::MAX; n],
        };
        if !grid.is_free(source) {
            return field;
        }
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        let s = grid.index(source);
        field.cost[s] = Some(PathCost::ZERO);
        heap.push(Reverse((PathCost::ZERO, s)));
        while let Some(Reverse((cost, u))) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            let g = grid.point(u);
            if stop_at == Some(g) {
                break;
            }
            for (nb, diagonal) in neighbors(grid, g) {
                let v = grid.index(nb);
                if done[v] {
                    continue;
                }
                let candidate = cost.step(diagonal);
                if field.cost[v].is_none_or(|c| candidate < c) {
                    field.cost[v] = Some(candidate);
                    field.pred[v] = u;
                    heap.push(Reverse((candidate, v)));
                }
            }
        }
        field
    }

    pub fn source(&self) -> GridPoint {
        self.source
    }

    fn idx(&self, g: GridPoint) -> Option<usize> {
        let i = g.row * self.width + g.col;
        (g.col < self.width && i < self.cost.len()).then_some(i)
    }

    pub fn cost(&self, g: GridPoint) -> Option<PathCost> {
        self.idx(g).and_then(|i| self.cost[i])
    }

    pub fn meters(&self, g: GridPoint) -> Option<f64> {
        self.cost(g).map(|c| c.meters(self.resolution))
    }

    pub fn is_reachable(&self, g: GridPoint) -> bool {
        self.cost(g).is_some()
    }

    /// Cells from the source to `g`, inclusive.
    pub fn path_to(&self, g: GridPoint) -> Option<Vec<GridPoint>> {
        let mut i = self.idx(g)?;
        self.cost[i]?;
        let mut cells = vec![g];
        let s = self.source.row * self.width + self.source.col;
        while i != s {
            i = self.pred[i];
            cells.push(GridPoint::new(i % self.width, i / self.width));
        }
        cells.reverse();
        Some(cells)
    }

    /// Reachable cells with their distance in meters, in index order.
    pub fn reachable(&self) -> impl Iterator<Item = (GridPoint, f64)> + '_ {
        self.cost.iter().enumerate().filter_map(move |(i, c)| {
            c.map(|c| {
                (
                    GridPoint::new(i % self.width, i / self.width),
                    c.meters(self.resolution),
                )
            })
        })
    }
}

fn cell_of(grid: &OccupancyGrid, p: WorldPoint) -> Result<GridPoint, PlanError> {
    grid.world_to_grid(p)
        .ok_or(PlanError::OutOfBounds { x: p.x, y: p.y })
}

/// Exact geodesic cost between the cells containing `a` and `b`; `None` when
/// either cell is Blocked or no path exists.
pub fn geodesic_cost(grid: &OccupancyGrid, a: WorldPoint, b: WorldPoint) -> Result<Option<PathCost>, PlanError> {
    let ga = cell_of(grid, a)?;
    let gb = cell_of(grid, b)?;
    Ok(geodesic_cost_cells(grid, ga, gb))
}

pub fn geodesic_cost_cells(grid: &OccupancyGrid, a: GridPoint, b: GridPoint) -> Option<PathCost> {
    if !grid.is_free(a) || !grid.is_free(b) {
        return None;
    }
    DistanceField::build(grid, a, Some(b)).cost(b)
}

/// Geodesic distance in meters, `Ok(None)` when unreachable.
pub fn geodesic_distance(scene: &Scene, a: WorldPoint, b: WorldPoint) -> Result<Option<f64>, PlanError> {
    let grid = scene.grid();
    Ok(geodesic_cost(grid, a, b)?.map(|c| c.meters(grid.resolution())))
}

/// Shortest path as cell centers, from `a`'s cell to `b`'s cell.
pub fn shortest_path(scene: &Scene, a: WorldPoint, b: WorldPoint) -> Result<Vec<WorldPoint>, PlanError> {
    let grid = scene.grid();
    let ga = cell_of(grid, a)?;
    let gb = cell_of(grid, b)?;
    let cells = shortest_path_cells(grid, ga, gb).ok_or(PlanError::Unreachable)?;
    Ok(cells.into_iter().map(|g| grid.grid_to_world(g)).collect())
}

pub fn shortest_path_cells(grid: &OccupancyGrid, a: GridPoint, b: GridPoint) -> Option<Vec<GridPoint>> {
    if !grid.is_free(a) || !grid.is_free(b) {
        return None;
    }
    DistanceField::build(grid, a, Some(b)).path_to(b)
}

/// Total euclidean length of a poly-line.
pub fn polyline_length(points: &[WorldPoint]) -> f64 {
    points.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

/// Point at arc-length `fraction` of the poly-line, and the direction of the
/// segment it lies on (the following segment when it falls on a vertex).
pub fn point_at_fraction(points: &[WorldPoint], fraction: f64) -> Option<(WorldPoint, Option<f64>)> {
    let first = *points.first()?;
    let total = polyline_length(points);
    if points.len() == 1 || total == 0.0 {
        return Some((first, None));
    }
    let target = total * fraction.clamp(0.0, 1.0);
    let mut walked = 0.0;
    for w in points.windows(2) {
        let len = w[0].distance(&w[1]);
        if len > 0.0 && walked + len > target {
            let t = (target - walked) / len;
            return Some((w[0].lerp(&w[1], t), Some(w[0].bearing_to(&w[1]))));
        }
        walked += len;
    }
    let n = points.len();
    Some((points[n - 1], Some(points[n - 2].bearing_to(&points[n - 1]))))
}

/// Per-cell extra cost for hugging walls, used only by [`NavField`].
pub(crate) fn wall_penalty(grid: &OccupancyGrid) -> Vec<f64> {
    const WEIGHTS: [f64; 3] = [3.0, 1.0, 0.3];
    let mut out = vec![0.0; grid.len()];
    for (i, slot) in out.iter_mut().enumerate() {
        let g = grid.point(i);
        if !grid.is_free(g) {
            continue;
        }
        let (c, r) = (g.col as i64, g.row as i64);
        'rings: for (k, w) in WEIGHTS.iter().enumerate() {
            let d = k as i64 + 1;
            for dr in -d..=d {
                for dc in -d..=d {
                    if dr.abs() != d && dc.abs() != d {
                        continue;
                    }
                    if grid.cell_at(c + dc, r + dr) != crate::scene::Cell::Free {
                        *slot = *w;
                        break 'rings;
                    }
                }
            }
        }
    }
    out
}

/// Shortest-path tree rooted at a target, with a wall-clearance penalty so
/// that followed paths keep away from obstacles. `next` points one step
/// closer to the target.
#[derive(Debug, Clone)]
pub struct NavField {
    target: GridPoint,
    width: usize,
    cost: Vec<f64>,
    next: Vec<usize>,
}

impl NavField {
    pub fn toward(scene: &Scene, target: GridPoint) -> Self {
        let grid = scene.grid();
        let penalty = scene.wall_penalty();
        let n = grid.len();
        let mut field = NavField {
            target,
            width: grid.width(),
            cost: vec![f64::INFINITY; n],
            next: vec![usize::MAX; n],
        };
        if !grid.is_free(target) {
            return field;
        }
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        let t = grid.index(target);
        field.cost[t] = 0.0;
        heap.push(Reverse((OrdF64(0.0), t)));
        while let Some(Reverse((OrdF64(cost), u))) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            let g = grid.point(u);
            for (nb, diagonal) in neighbors(grid, g) {
                let v = grid.index(nb);
                if done[v] {
                    continue;
                }
                let len = if diagonal { SQRT_2 } else { 1.0 };
                let candidate = cost + len * (1.0 + 0.5 * (penalty[u] + penalty[v]));
                if candidate < field.cost[v] {
                    field.cost[v] = candidate;
                    field.next[v] = u;
                    heap.push(Reverse((OrdF64(candidate), v)));
                }
            }
        }
        field
    }

    pub fn target(&self) -> GridPoint {
        self.target
    }

    pub fn reaches(&self, g: GridPoint) -> bool {
        let i = g.row * self.width + g.col;
        g.col < self.width && i < self.cost.len() && self.cost[i].is_finite()
    }

    /// Weighted cost-to-go, `None` when unreachable.
    pub fn cost_of(&self, g: GridPoint) -> Option<f64> {
        self.reaches(g).then(|| self.cost[g.row * self.width + g.col])
    }

    /// Cells from `from` to the target, inclusive; `None` when unreachable.
    pub fn path_from(&self, from: GridPoint) -> Option<Vec<GridPoint>> {
        if !self.reaches(from) {
            return None;
        }
        let mut i = from.row * self.width + from.col;
        let t = self.target.row * self.width + self.target.col;
        let mut cells = vec![from];
        while i != t {
            i = self.next[i];
            cells.push(GridPoint::new(i % self.width, i / self.width));
        }
        Some(cells)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}
