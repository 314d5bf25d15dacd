//! The world model: occupancy grid, labeled regions with detected entrances,
//! and labeled object instances.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GridPoint, WorldPoint};
use crate::planner;

/// Default meters-per-cell, equal to one Forward step.
pub const DEFAULT_RESOLUTION: f64 = 0.25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("schema error at `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("invariant violated at `{field}`: {message}")]
    Invariant { field: String, message: String },
}

impl SceneError {
    fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        SceneError::Schema {
            field: field.into(),
            message: message.into(),
        }
    }

    fn invariant(field: impl Into<String>, message: impl Into<String>) -> Self {
        SceneError::Invariant {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Free,
    Blocked,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    resolution: f64,
    origin: WorldPoint,
    width: usize,
    height: usize,
    cells: Vec<Cell>,
}

impl OccupancyGrid {
    pub fn new(
        resolution: f64,
        origin: WorldPoint,
        width: usize,
        height: usize,
        cells: Vec<Cell>,
    ) -> Result<Self, SceneError> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(SceneError::schema("resolution", "must be a positive number"));
        }
        if width == 0 || height == 0 {
            return Err(SceneError::schema("grid", "must have at least one row and column"));
        }
        if cells.len() != width * height {
            return Err(SceneError::invariant(
                "grid",
                format!("{} cells for a {}x{} grid", cells.len(), width, height),
            ));
        }
        Ok(Self {
            resolution,
            origin,
            width,
            height,
            cells,
        })
    }

    /// Builds a grid from rows of `.` (Free) and `#` (Blocked); row 0 is the lowest y.
    pub fn from_rows<S: AsRef<str>>(
        resolution: f64,
        origin: WorldPoint,
        rows: &[S],
    ) -> Result<Self, SceneError> {
        let height = rows.len();
        if height == 0 {
            return Err(SceneError::schema("grid", "must have at least one row"));
        }
        let width = rows[0].as_ref().chars().count();
        let mut cells = Vec::with_capacity(width * height);
        for (r, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.chars().count() != width {
                return Err(SceneError::schema(
                    format!("grid[{r}]"),
                    format!("expected {width} columns, found {}", row.chars().count()),
                ));
            }
            for (c, ch) in row.chars().enumerate() {
                cells.push(match ch {
                    '.' => Cell::Free,
                    '#' => Cell::Blocked,
                    other => {
                        return Err(SceneError::schema(
                            format!("grid[{r}][{c}]"),
                            format!("unexpected character {other:?}"),
                        ))
                    }
                });
            }
        }
        Self::new(resolution, origin, width, height, cells)
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> WorldPoint {
        self.origin
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn index(&self, g: GridPoint) -> usize {
        g.row * self.width + g.col
    }

    pub fn point(&self, index: usize) -> GridPoint {
        GridPoint::new(index % self.width, index / self.width)
    }

    pub fn in_bounds(&self, g: GridPoint) -> bool {
        g.col < self.width && g.row < self.height
    }

    /// Out-of-bounds cells read as Blocked.
    pub fn cell(&self, g: GridPoint) -> Cell {
        if self.in_bounds(g) {
            self.cells[self.index(g)]
        } else {
            Cell::Blocked
        }
    }

    /// Signed variant of [`cell`](Self::cell) for neighbourhood scans.
    pub fn cell_at(&self, col: i64, row: i64) -> Cell {
        if col < 0 || row < 0 {
            return Cell::Blocked;
        }
        self.cell(GridPoint::new(col as usize, row as usize))
    }

    pub fn is_free(&self, g: GridPoint) -> bool {
        self.cell(g) == Cell::Free
    }

    pub fn free_count(&self) -> usize {
        self.cells.iter().filter(|c| **c == Cell::Free).count()
    }

    pub fn free_cells(&self) -> impl Iterator<Item = GridPoint> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == Cell::Free)
            .map(|(i, _)| self.point(i))
    }

    /// World point to the cell containing it, or `None` outside the grid.
    pub fn world_to_grid(&self, p: WorldPoint) -> Option<GridPoint> {
        let fx = ((p.x - self.origin.x) / self.resolution).floor();
        let fy = ((p.y - self.origin.y) / self.resolution).floor();
        if !(fx.is_finite() && fy.is_finite()) || fx < 0.0 || fy < 0.0 {
            return None;
        }
        let g = GridPoint::new(fx as usize, fy as usize);
        self.in_bounds(g).then_some(g)
    }

    /// Center of a cell.
    pub fn grid_to_world(&self, g: GridPoint) -> WorldPoint {
        WorldPoint::new(
            self.origin.x + (g.col as f64 + 0.5) * self.resolution,
            self.origin.y + (g.row as f64 + 0.5) * self.resolution,
        )
    }

    pub fn contains(&self, p: WorldPoint) -> bool {
        self.world_to_grid(p).is_some()
    }

    /// True when the point lies in a Free cell.
    pub fn is_navigable(&self, p: WorldPoint) -> bool {
        self.world_to_grid(p).is_some_and(|g| self.is_free(g))
    }

    /// True when a disc of `radius` centered at `p` touches no Blocked or
    /// out-of-bounds cell.
    pub fn disc_is_clear(&self, p: WorldPoint, radius: f64) -> bool {
        let res = self.resolution;
        let c0 = ((p.x - radius - self.origin.x) / res).floor() as i64;
        let c1 = ((p.x + radius - self.origin.x) / res).floor() as i64;
        let r0 = ((p.y - radius - self.origin.y) / res).floor() as i64;
        let r1 = ((p.y + radius - self.origin.y) / res).floor() as i64;
        for row in r0..=r1 {
            for col in c0..=c1 {
                if self.cell_at(col, row) == Cell::Free {
                    continue;
                }
                let x0 = self.origin.x + col as f64 * res;
                let y0 = self.origin.y + row as f64 * res;
                let nx = p.x.clamp(x0, x0 + res);
                let ny = p.y.clamp(y0, y0 + res);
                if (p.x - nx).hypot(p.y - ny) < radius {
                    return false;
                }
            }
        }
        true
    }

    /// Rows as `.`/`#` strings, row 0 first.
    pub fn to_rows(&self) -> Vec<String> {
        (0..self.height)
            .map(|r| {
                (0..self.width)
                    .map(|c| match self.cells[r * self.width + c] {
                        Cell::Free => '.',
                        Cell::Blocked => '#',
                    })
                    .collect()
            })
            .collect()
    }
}

/// Axis-aligned rectangle in meters, serialized as `[xmin, ymin, xmax, ymax]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl BBox {
    pub const fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Self {
            xmin,
            ymin,
            xmax,
            ymax,
        }
    }

    /// Inclusive containment.
    pub fn contains(&self, p: WorldPoint) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    pub fn center(&self) -> WorldPoint {
        WorldPoint::new(0.5 * (self.xmin + self.xmax), 0.5 * (self.ymin + self.ymax))
    }

    /// Distance from an inside point to the nearest edge (negative outside).
    pub fn inset_of(&self, p: WorldPoint) -> f64 {
        (p.x - self.xmin)
            .min(self.xmax - p.x)
            .min(p.y - self.ymin)
            .min(self.ymax - p.y)
    }

    fn area(&self) -> f64 {
        (self.xmax - self.xmin) * (self.ymax - self.ymin)
    }
}

impl From<[f64; 4]> for BBox {
    fn from([xmin, ymin, xmax, ymax]: [f64; 4]) -> Self {
        Self::new(xmin, ymin, xmax, ymax)
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.xmin, b.ymin, b.xmax, b.ymax]
    }
}

/// A doorway proxy: a connected run of Free cells on a region's bbox boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Entrance {
    pub region_id: String,
    /// Sorted by (row, col).
    pub cells: Vec<GridPoint>,
    pub midpoint: WorldPoint,
    /// The entrance cell closest to `midpoint`; geodesic queries start here.
    pub anchor: GridPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: String,
    pub label: String,
    pub bbox: BBox,
    pub entrances: Vec<Entrance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub label: String,
    pub position: WorldPoint,
}

/// Region as declared in a scene document, before entrance detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub id: String,
    pub label: String,
    pub bbox: BBox,
}

/// On-disk scene format. Entrances are never serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDocument {
    pub id: String,
    pub resolution: f64,
    pub origin: WorldPoint,
    pub grid: Vec<String>,
    #[serde(default)]
    pub regions: Vec<RegionSpec>,
    #[serde(default)]
    pub objects: Vec<ObjectInstance>,
}

/// Immutable after construction; all queries take `&self`.
#[derive(Debug, Clone)]
pub struct Scene {
    id: String,
    grid: OccupancyGrid,
    regions: Vec<Region>,
    objects: Vec<ObjectInstance>,
    wall_penalty: Vec<f64>,
}

impl Scene {
    /// Validates every invariant and detects entrances.
    pub fn new(
        id: impl Into<String>,
        grid: OccupancyGrid,
        regions: Vec<RegionSpec>,
        objects: Vec<ObjectInstance>,
    ) -> Result<Self, SceneError> {
        let id = id.into();
        if grid.free_count() == 0 {
            return Err(SceneError::invariant("grid", "scene has no Free cell"));
        }
        let mut seen = HashSet::new();
        let mut built = Vec::with_capacity(regions.len());
        for (i, spec) in regions.into_iter().enumerate() {
            let field = format!("regions[{i}]");
            if !seen.insert(spec.id.clone()) {
                return Err(SceneError::invariant(
                    format!("{field}.id"),
                    format!("duplicate region id {:?}", spec.id),
                ));
            }
            if spec.label.trim().is_empty() {
                return Err(SceneError::invariant(format!("{field}.label"), "empty label"));
            }
            let b = spec.bbox;
            let finite = [b.xmin, b.ymin, b.xmax, b.ymax].iter().all(|v| v.is_finite());
            if !finite || b.xmax <= b.xmin || b.ymax <= b.ymin || b.area() <= 0.0 {
                return Err(SceneError::invariant(
                    format!("{field}.bbox"),
                    format!("region {:?} bbox must have positive area", spec.id),
                ));
            }
            if bbox_cell_range(&grid, &b).is_none() {
                return Err(SceneError::invariant(
                    format!("{field}.bbox"),
                    format!("region {:?} bbox does not cover any grid cell", spec.id),
                ));
            }
            let mut region = Region {
                id: spec.id,
                label: spec.label,
                bbox: spec.bbox,
                entrances: Vec::new(),
            };
            region.entrances = detect_entrances(&grid, &region);
            built.push(region);
        }
        for (i, obj) in objects.iter().enumerate() {
            if obj.label.trim().is_empty() {
                return Err(SceneError::invariant(format!("objects[{i}].label"), "empty label"));
            }
            if !grid.is_navigable(obj.position) {
                return Err(SceneError::invariant(
                    format!("objects[{i}].position"),
                    format!(
                        "object {:?} at ({}, {}) is not on a Free cell",
                        obj.label, obj.position.x, obj.position.y
                    ),
                ));
            }
        }
        let wall_penalty = planner::wall_penalty(&grid);
        Ok(Self {
            id,
            grid,
            regions: built,
            objects,
            wall_penalty,
        })
    }

    pub fn from_document(doc: SceneDocument) -> Result<Self, SceneError> {
        if doc.id.trim().is_empty() {
            return Err(SceneError::schema("id", "must be non-empty"));
        }
        let grid = OccupancyGrid::from_rows(doc.resolution, doc.origin, &doc.grid)?;
        Scene::new(doc.id, grid, doc.regions, doc.objects)
    }

    pub fn to_document(&self) -> SceneDocument {
        SceneDocument {
            id: self.id.clone(),
            resolution: self.grid.resolution,
            origin: self.grid.origin,
            grid: self.grid.to_rows(),
            regions: self
                .regions
                .iter()
                .map(|r| RegionSpec {
                    id: r.id.clone(),
                    label: r.label.clone(),
                    bbox: r.bbox,
                })
                .collect(),
            objects: self.objects.clone(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn objects(&self) -> &[ObjectInstance] {
        &self.objects
    }

    pub(crate) fn wall_penalty(&self) -> &[f64] {
        &self.wall_penalty
    }

    pub fn region(&self, id: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.id == id)
    }

    /// First region (declaration order) carrying the label, case-insensitive.
    pub fn region_by_label(&self, label: &str) -> Option<(usize, &Region)> {
        self.regions
            .iter()
            .enumerate()
            .find(|(_, r)| labels_match(&r.label, label))
    }

    pub fn objects_labeled<'a>(
        &'a self,
        label: &'a str,
    ) -> impl Iterator<Item = &'a ObjectInstance> + 'a {
        self.objects
            .iter()
            .filter(move |o| labels_match(&o.label, label))
    }

    /// Index of the first region (declaration order) whose bbox contains `p`.
    pub fn region_index_containing(&self, p: WorldPoint) -> Option<usize> {
        self.regions.iter().position(|r| r.bbox.contains(p))
    }

    /// Id of the first region (declaration order) whose bbox contains `p`.
    pub fn region_containing(&self, p: WorldPoint) -> Option<&str> {
        self.region_index_containing(p)
            .map(|i| self.regions[i].id.as_str())
    }

    /// Free cell of the region nearest its bbox center; the "landmark point"
    /// of a region for landmark-only navigation.
    pub fn region_anchor(&self, region_index: usize) -> Option<GridPoint> {
        let region = &self.regions[region_index];
        let center = region.bbox.center();
        self.cells_in_region(region_index).min_by(|a, b| {
            let da = self.grid.grid_to_world(*a).distance(&center);
            let db = self.grid.grid_to_world(*b).distance(&center);
            da.total_cmp(&db).then(a.row_major().cmp(&b.row_major()))
        })
    }

    /// Free cells `c` with `region_index_containing(center(c)) == region_index`.
    pub fn cells_in_region(&self, region_index: usize) -> impl Iterator<Item = GridPoint> + '_ {
        let bbox = self.regions[region_index].bbox;
        let (c0, c1, r0, r1) = bbox_cell_range(&self.grid, &bbox).unwrap_or((1, 0, 1, 0));
        (r0..=r1)
            .flat_map(move |r| (c0..=c1).map(move |c| GridPoint::new(c, r)))
            .filter(move |g| {
                self.grid.is_free(*g)
                    && self.region_index_containing(self.grid.grid_to_world(*g))
                        == Some(region_index)
            })
    }
}

/// Parses and validates a scene document.
pub fn load_scene(document: &str) -> Result<Scene, SceneError> {
    let doc: SceneDocument = serde_json::from_str(document).map_err(|e| {
        SceneError::schema(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    Scene::from_document(doc)
}

pub fn labels_match(a: &str, b: &str) -> bool {
    a.trim().eq_ignore_ascii_case(b.trim())
}

/// In-bounds cell range `(col0, col1, row0, row1)` whose centers fall inside
/// the bbox, or `None` if no cell center does.
fn bbox_cell_range(grid: &OccupancyGrid, b: &BBox) -> Option<(usize, usize, usize, usize)> {
    let (lo_c, hi_c) = axis_range(b.xmin, b.xmax, grid.origin.x, grid.resolution, grid.width)?;
    let (lo_r, hi_r) = axis_range(b.ymin, b.ymax, grid.origin.y, grid.resolution, grid.height)?;
    Some((lo_c, hi_c, lo_r, hi_r))
}

/// Unclipped signed index range of cells whose center lies in `[lo, hi]`.
fn axis_span(lo: f64, hi: f64, origin: f64, res: f64) -> (i64, i64) {
    let first = ((lo - origin) / res - 0.5).ceil() as i64;
    let last = ((hi - origin) / res - 0.5).floor() as i64;
    (first, last)
}

fn axis_range(lo: f64, hi: f64, origin: f64, res: f64, n: usize) -> Option<(usize, usize)> {
    let (first, last) = axis_span(lo, hi, origin, res);
    let first = first.max(0);
    let last = last.min(n as i64 - 1);
    (first <= last).then_some((first as usize, last as usize))
}

/// One entrance per maximal 8-connected run of Free cells on the ring of
/// cells forming the region bbox boundary. Ordered by the (row, col) of each
/// entrance's first cell.
pub fn detect_entrances(grid: &OccupancyGrid, region: &Region) -> Vec<Entrance> {
    let b = &region.bbox;
    let (c0, c1) = axis_span(b.xmin, b.xmax, grid.origin.x, grid.resolution);
    let (r0, r1) = axis_span(b.ymin, b.ymax, grid.origin.y, grid.resolution);
    if c0 > c1 || r0 > r1 {
        return Vec::new();
    }
    let on_ring = |c: i64, r: i64| {
        (c == c0 || c == c1 || r == r0 || r == r1) && (c0..=c1).contains(&c) && (r0..=r1).contains(&r)
    };
    let mut ring: Vec<GridPoint> = Vec::new();
    for r in r0..=r1 {
        for c in c0..=c1 {
            if on_ring(c, r) && grid.cell_at(c, r) == Cell::Free {
                ring.push(GridPoint::new(c as usize, r as usize));
            }
        }
    }
    let members: HashSet<GridPoint> = ring.iter().copied().collect();
    let mut visited: HashSet<GridPoint> = HashSet::new();
    let mut entrances = Vec::new();
    // `ring` is already in (row, col) order, so each component's seed is its first cell.
    for &seed in &ring {
        if visited.contains(&seed) {
            continue;
        }
        let mut component = Vec::new();
        let mut stack = vec![seed];
        visited.insert(seed);
        while let Some(g) = stack.pop() {
            component.push(g);
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (nc, nr) = (g.col as i64 + dc, g.row as i64 + dr);
                    if nc < 0 || nr < 0 {
                        continue;
                    }
                    let n = GridPoint::new(nc as usize, nr as usize);
                    if members.contains(&n) && visited.insert(n) {
                        stack.push(n);
                    }
                }
            }
        }
        component.sort_by_key(|g| g.row_major());
        let k = component.len() as f64;
        let (sx, sy) = component.iter().fold((0.0, 0.0), |(sx, sy), g| {
            let w = grid.grid_to_world(*g);
            (sx + w.x, sy + w.y)
        });
        let midpoint = WorldPoint::new(sx / k, sy / k);
        let anchor = *component
            .iter()
            .min_by(|a, b| {
                let da = grid.grid_to_world(**a).distance(&midpoint);
                let db = grid.grid_to_world(**b).distance(&midpoint);
                da.total_cmp(&db).then(a.row_major().cmp(&b.row_major()))
            })
            .expect("component is non-empty");
        entrances.push(Entrance {
            region_id: region.id.clone(),
            cells: component,
            midpoint,
            anchor,
        });
    }
    entrances
}
