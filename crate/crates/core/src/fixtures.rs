//! Procedural fixture scenes.
//!
//! All generators use 0.25 m cells, wrap the map in a wall ring and lay region
//! bboxes over the walls of each room, so that the Free cells of a door are
//! exactly the entrance cells found on the bbox boundary.

use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GridPoint, WorldPoint};
use crate::scene::{BBox, Cell, ObjectInstance, OccupancyGrid, RegionSpec, Scene, DEFAULT_RESOLUTION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FixtureError {
    #[error("unknown fixture generator {0:?} (expected corridor, two-room, four-room-ring or exit-trap)")]
    UnknownGenerator(String),
    #[error("fixture {kind} needs a size of at least {min} m, got {size}")]
    TooSmall { kind: FixtureKind, min: f64, size: f64 },
    #[error("fixture generation produced an invalid scene: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixtureKind {
    Corridor,
    TwoRoom,
    FourRoomRing,
    /// A long room whose single door is far from the room's center, so that
    /// heading for the room label moves away from any goal outside the door.
    ExitTrap,
}

impl FixtureKind {
    pub const ALL: [FixtureKind; 4] = [
        FixtureKind::Corridor,
        FixtureKind::TwoRoom,
        FixtureKind::FourRoomRing,
        FixtureKind::ExitTrap,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FixtureKind::Corridor => "corridor",
            FixtureKind::TwoRoom => "two-room",
            FixtureKind::FourRoomRing => "four-room-ring",
            FixtureKind::ExitTrap => "exit-trap",
        }
    }

    pub fn default_size(&self) -> f64 {
        match self {
            FixtureKind::Corridor => 12.0,
            FixtureKind::TwoRoom => 5.0,
            FixtureKind::FourRoomRing => 8.0,
            FixtureKind::ExitTrap => 10.0,
        }
    }

    fn min_size(&self) -> f64 {
        match self {
            FixtureKind::Corridor => 4.0,
            FixtureKind::TwoRoom => 4.0,
            FixtureKind::FourRoomRing => 6.0,
            FixtureKind::ExitTrap => 6.0,
        }
    }
}

impl fmt::Display for FixtureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FixtureKind {
    type Err = FixtureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FixtureKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| FixtureError::UnknownGenerator(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub kind: FixtureKind,
    /// Characteristic size in meters (room side, corridor or room length).
    pub size: f64,
    pub seed: u64,
}

impl FixtureSpec {
    pub fn new(kind: FixtureKind) -> Self {
        Self {
            kind,
            size: kind.default_size(),
            seed: 0,
        }
    }

    pub fn generate(&self) -> Result<Scene, FixtureError> {
        if !(self.size >= self.kind.min_size()) {
            return Err(FixtureError::TooSmall {
                kind: self.kind,
                min: self.kind.min_size(),
                size: self.size,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let cells = |m: f64| (m / DEFAULT_RESOLUTION).round() as usize;
        let layout = match self.kind {
            FixtureKind::Corridor => corridor(cells(self.size), &mut rng),
            FixtureKind::TwoRoom => two_room(cells(self.size), &mut rng),
            FixtureKind::FourRoomRing => four_room_ring(cells(self.size), &mut rng),
            FixtureKind::ExitTrap => exit_trap(cells(self.size), &mut rng),
        };
        layout.into_scene(self.kind.name())
    }
}

/// Default-size, seed-0 instance of every generator.
pub fn fixture_suite() -> Vec<Scene> {
    FixtureKind::ALL
        .iter()
        .map(|k| FixtureSpec::new(*k).generate().expect("default fixtures are valid"))
        .collect()
}

pub fn fixture(kind: FixtureKind) -> Scene {
    FixtureSpec::new(kind).generate().expect("default fixtures are valid")
}

struct Layout {
    width: usize,
    height: usize,
    blocked: Vec<bool>,
    regions: Vec<(String, String, (usize, usize, usize, usize))>,
    objects: Vec<(String, GridPoint)>,
}

impl Layout {
    fn new(width: usize, height: usize) -> Self {
        let mut l = Layout {
            width,
            height,
            blocked: vec![false; width * height],
            regions: Vec::new(),
            objects: Vec::new(),
        };
        l.wall_rect(0, width - 1, 0, height - 1);
        l
    }

    fn set(&mut self, col: usize, row: usize, blocked: bool) {
        self.blocked[row * self.width + col] = blocked;
    }

    fn is_blocked(&self, col: i64, row: i64) -> bool {
        if col < 0 || row < 0 || col >= self.width as i64 || row >= self.height as i64 {
            return true;
        }
        self.blocked[row as usize * self.width + col as usize]
    }

    /// Walls along the boundary of the inclusive cell rectangle.
    fn wall_rect(&mut self, c0: usize, c1: usize, r0: usize, r1: usize) {
        for c in c0..=c1 {
            self.set(c, r0, true);
            self.set(c, r1, true);
        }
        for r in r0..=r1 {
            self.set(c0, r, true);
            self.set(c1, r, true);
        }
    }

    fn vertical_wall(&mut self, col: usize, r0: usize, r1: usize) {
        for r in r0..=r1 {
            self.set(col, r, true);
        }
    }

    fn horizontal_wall(&mut self, row: usize, c0: usize, c1: usize) {
        for c in c0..=c1 {
            self.set(c, row, true);
        }
    }

    fn door_in_column(&mut self, col: usize, r0: usize, width: usize) {
        for r in r0..r0 + width {
            self.set(col, r, false);
        }
    }

    fn door_in_row(&mut self, row: usize, c0: usize, width: usize) {
        for c in c0..c0 + width {
            self.set(c, row, false);
        }
    }

    fn region(&mut self, id: &str, label: &str, c0: usize, c1: usize, r0: usize, r1: usize) {
        self.regions
            .push((id.to_string(), label.to_string(), (c0, c1, r0, r1)));
    }

    /// Free cell at least two cells from any wall and 4 cells from any other
    /// object, inside the inclusive rectangle.
    fn place_object(
        &mut self,
        label: &str,
        rng: &mut ChaCha8Rng,
        (c0, c1, r0, r1): (usize, usize, usize, usize),
    ) {
        let mut candidates: Vec<GridPoint> = Vec::new();
        for r in r0..=r1 {
            for c in c0..=c1 {
                let (ci, ri) = (c as i64, r as i64);
                let clear = (-2..=2).all(|dr| (-2..=2).all(|dc| !self.is_blocked(ci + dc, ri + dr)));
                let spaced = self.objects.iter().all(|(_, g)| {
                    (g.col as i64 - ci).abs().max((g.row as i64 - ri).abs()) >= 4
                });
                if clear && spaced {
                    candidates.push(GridPoint::new(c, r));
                }
            }
        }
        if let Some(g) = candidates.choose(rng) {
            self.objects.push((label.to_string(), *g));
        }
    }

    fn into_scene(self, id: &str) -> Result<Scene, FixtureError> {
        let res = DEFAULT_RESOLUTION;
        let cells = self
            .blocked
            .iter()
            .map(|b| if *b { Cell::Blocked } else { Cell::Free })
            .collect();
        let grid = OccupancyGrid::new(res, WorldPoint::new(0.0, 0.0), self.width, self.height, cells)
            .map_err(|e| FixtureError::Invalid(e.to_string()))?;
        let regions = self
            .regions
            .into_iter()
            .map(|(id, label, (c0, c1, r0, r1))| RegionSpec {
                id,
                label,
                bbox: BBox::new(
                    c0 as f64 * res,
                    r0 as f64 * res,
                    (c1 + 1) as f64 * res,
                    (r1 + 1) as f64 * res,
                ),
            })
            .collect();
        let objects = self
            .objects
            .into_iter()
            .map(|(label, g)| ObjectInstance {
                label,
                position: grid.grid_to_world(g),
            })
            .collect();
        Scene::new(id, grid, regions, objects).map_err(|e| FixtureError::Invalid(e.to_string()))
    }
}

const DOOR: usize = 3;

fn door_start(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    // Door of DOOR cells somewhere in [lo, hi - DOOR + 1].
    let hi = hi.saturating_sub(DOOR - 1).max(lo);
    rng.random_range(lo..=hi)
}

/// An 2 m wide hallway with a few objects and no regions.
fn corridor(length: usize, rng: &mut ChaCha8Rng) -> Layout {
    let width = length.max(8);
    let height = 10;
    let mut l = Layout::new(width, height);
    let mut labels = ["plant", "bench", "painting", "lamp", "statue", "cabinet"];
    labels.shuffle(rng);
    let n = (width / 12).clamp(2, labels.len());
    let seg = (width - 2) / n;
    for (i, label) in labels.iter().take(n).enumerate() {
        let c0 = 1 + i * seg;
        l.place_object(label, rng, (c0, c0 + seg - 1, 1, height - 2));
    }
    l
}

/// Two rooms side by side sharing a wall with one door.
fn two_room(side: usize, rng: &mut ChaCha8Rng) -> Layout {
    let n = side.max(16);
    let mut l = Layout::new(n, n);
    let mid = n / 2;
    l.vertical_wall(mid, 0, n - 1);
    let d = door_start(rng, 2, n - 3);
    l.door_in_column(mid, d, DOOR);
    l.region("r0", "bedroom", 0, mid, 0, n - 1);
    l.region("r1", "living room", mid, n - 1, 0, n - 1);
    l.place_object("bed", rng, (1, mid - 1, 1, n - 2));
    l.place_object("wardrobe", rng, (1, mid - 1, 1, n - 2));
    l.place_object("sofa", rng, (mid + 1, n - 2, 1, n - 2));
    l.place_object("tv", rng, (mid + 1, n - 2, 1, n - 2));
    l
}

/// Four rooms in a 2x2 block; each shared half-wall has a door, so every
/// room has exactly two entrances and the rooms form a ring.
fn four_room_ring(side: usize, rng: &mut ChaCha8Rng) -> Layout {
    let n = side.max(24);
    let mut l = Layout::new(n, n);
    let mid = n / 2;
    l.vertical_wall(mid, 0, n - 1);
    l.horizontal_wall(mid, 0, n - 1);
    let south = door_start(rng, 2, mid - 3);
    l.door_in_column(mid, south, DOOR);
    let north = door_start(rng, mid + 2, n - 3);
    l.door_in_column(mid, north, DOOR);
    let west = door_start(rng, 2, mid - 3);
    l.door_in_row(mid, west, DOOR);
    let east = door_start(rng, mid + 2, n - 3);
    l.door_in_row(mid, east, DOOR);
    l.region("r0", "kitchen", 0, mid, 0, mid);
    l.region("r1", "dining room", mid, n - 1, 0, mid);
    l.region("r2", "bedroom", mid, n - 1, mid, n - 1);
    l.region("r3", "office", 0, mid, mid, n - 1);
    l.place_object("fridge", rng, (1, mid - 1, 1, mid - 1));
    l.place_object("stove", rng, (1, mid - 1, 1, mid - 1));
    l.place_object("table", rng, (mid + 1, n - 2, 1, mid - 1));
    l.place_object("bed", rng, (mid + 1, n - 2, mid + 1, n - 2));
    l.place_object("desk", rng, (1, mid - 1, mid + 1, n - 2));
    l.place_object("bookshelf", rng, (1, mid - 1, mid + 1, n - 2));
    l
}

/// A long room (the only region) with its door in the far short wall,
/// opening onto an unlabeled 3 m x 3 m landing.
fn exit_trap(length: usize, rng: &mut ChaCha8Rng) -> Layout {
    let room = length.max(24);
    let depth = 12;
    let landing = 12;
    let width = room + landing;
    let mut l = Layout::new(width, depth);
    let wall = room - 1;
    l.vertical_wall(wall, 0, depth - 1);
    let d = door_start(rng, 3, depth - 4);
    l.door_in_column(wall, d, DOOR);
    l.region("r0", "bedroom", 0, wall, 0, depth - 1);
    l.place_object("bed", rng, (1, room / 4, 1, depth - 2));
    l.place_object("shoe rack", rng, (wall + 1, width - 2, 1, depth - 2));
    l
}
