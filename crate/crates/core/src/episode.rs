//! Action-specific episode sampling.
//!
//! Each [`ActionKind`] fixes where its landmark sits relative to the path:
//! at the end (GoTo, GoInto), in the middle (GoPast, GoThrough) or at the
//! start (Exit). Goal poses stand in for goal images.

use std::f64::consts::{FRAC_PI_4, TAU};
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{angular_distance, GridPoint, Pose, WorldPoint};
use crate::par::{self, Execution};
use crate::planner::{self, DistanceField};
use crate::scene::Scene;

/// Euclidean displacement a GoPast path must exceed, and geodesic radius
/// that counts as "near an entrance".
pub const NEAR_DISTANCE: f64 = 1.5;
/// Maximum jitter applied to the GoPast goal heading.
pub const GO_PAST_JITTER: f64 = FRAC_PI_4;
pub const DEFAULT_ATTEMPT_BUDGET: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionKind {
    GoTo,
    GoPast,
    GoInto,
    GoThrough,
    Exit,
}

impl ActionKind {
    /// Also the tie-break order for semantic translation.
    pub const ALL: [ActionKind; 5] = [
        ActionKind::GoTo,
        ActionKind::GoPast,
        ActionKind::GoInto,
        ActionKind::GoThrough,
        ActionKind::Exit,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ActionKind::GoTo => "GoTo",
            ActionKind::GoPast => "GoPast",
            ActionKind::GoInto => "GoInto",
            ActionKind::GoThrough => "GoThrough",
            ActionKind::Exit => "Exit",
        }
    }

    /// True for kinds whose landmark is a region.
    pub fn targets_region(&self) -> bool {
        matches!(self, ActionKind::GoInto | ActionKind::GoThrough | ActionKind::Exit)
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("unknown action kind {0:?}")]
pub struct UnknownActionKind(pub String);

impl FromStr for ActionKind {
    type Err = UnknownActionKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        ActionKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(&key))
            .ok_or_else(|| UnknownActionKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: u64,
    pub scene_id: String,
    pub action: ActionKind,
    pub landmark: String,
    pub start: Pose,
    pub path: Vec<WorldPoint>,
    pub goal: Pose,
    /// Dataset seed; together with `id` it reproduces the episode.
    pub seed: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SampleError {
    #[error("scene {scene} cannot host {kind} episodes: {reason}")]
    ResourceUnavailable {
        scene: String,
        kind: ActionKind,
        reason: String,
    },
    #[error("no valid {kind} episode in {attempts} attempts")]
    RetriesExhausted { kind: ActionKind, attempts: usize },
}

/// Per-scene lookups reused across many draws.
pub struct Sampler<'a> {
    scene: &'a Scene,
    attempts: usize,
    free: Vec<GridPoint>,
    component: Vec<u32>,
    /// Indexed by region; one field per entrance anchor.
    entrance_fields: Vec<Vec<DistanceField>>,
    /// Regions that are the first carrying their label.
    addressable: Vec<bool>,
}

impl<'a> Sampler<'a> {
    pub fn new(scene: &'a Scene) -> Self {
        Self::with_attempt_budget(scene, DEFAULT_ATTEMPT_BUDGET)
    }

    pub fn with_attempt_budget(scene: &'a Scene, attempts: usize) -> Self {
        let grid = scene.grid();
        let free: Vec<GridPoint> = grid.free_cells().collect();
        let component = connected_components(scene);
        let entrance_fields = scene
            .regions()
            .iter()
            .map(|r| {
                r.entrances
                    .iter()
                    .map(|e| DistanceField::new(grid, e.anchor))
                    .collect()
            })
            .collect();
        let addressable = scene
            .regions()
            .iter()
            .enumerate()
            .map(|(i, r)| scene.region_by_label(&r.label).map(|(j, _)| j) == Some(i))
            .collect();
        Sampler {
            scene,
            attempts: attempts.max(1),
            free,
            component,
            entrance_fields,
            addressable,
        }
    }

    pub fn scene(&self) -> &Scene {
        self.scene
    }

    fn unavailable(&self, kind: ActionKind, reason: &str) -> SampleError {
        SampleError::ResourceUnavailable {
            scene: self.scene.id().to_string(),
            kind,
            reason: reason.to_string(),
        }
    }

    fn regions_with_entrances(&self, min: usize) -> Vec<usize> {
        self.scene
            .regions()
            .iter()
            .enumerate()
            .filter(|(i, r)| self.addressable[*i] && r.entrances.len() >= min)
            .map(|(i, _)| i)
            .collect()
    }

    /// Checks the scene can host `kind` at all.
    pub fn check_resources(&self, kind: ActionKind) -> Result<(), SampleError> {
        match kind {
            ActionKind::GoTo | ActionKind::GoPast if self.scene.objects().is_empty() => {
                Err(self.unavailable(kind, "no labeled objects"))
            }
            ActionKind::GoInto | ActionKind::Exit if self.regions_with_entrances(1).is_empty() => {
                Err(self.unavailable(kind, "no region with an entrance"))
            }
            ActionKind::GoThrough if self.regions_with_entrances(2).is_empty() => {
                Err(self.unavailable(kind, "no region with two different entrances"))
            }
            _ => Ok(()),
        }
    }

    fn same_component(&self, a: GridPoint, b: GridPoint) -> bool {
        let grid = self.scene.grid();
        self.component[grid.index(a)] == self.component[grid.index(b)]
    }

    fn center(&self, g: GridPoint) -> WorldPoint {
        self.scene.grid().grid_to_world(g)
    }

    fn path(&self, a: GridPoint, b: GridPoint) -> Vec<WorldPoint> {
        planner::shortest_path_cells(self.scene.grid(), a, b)
            .expect("endpoints share a component")
            .into_iter()
            .map(|g| self.center(g))
            .collect()
    }

    /// Free cells outside `region` within the near radius of one of its entrances.
    fn near_entrance_outside(&self, region: usize) -> Vec<GridPoint> {
        self.free
            .iter()
            .copied()
            .filter(|g| {
                self.scene.region_index_containing(self.center(*g)) != Some(region)
                    && self.entrance_fields[region]
                        .iter()
                        .any(|f| f.meters(*g).is_some_and(|d| d < NEAR_DISTANCE))
            })
            .collect()
    }

    fn near_entrance(&self, region: usize, entrance: usize) -> Vec<GridPoint> {
        let field = &self.entrance_fields[region][entrance];
        self.free
            .iter()
            .copied()
            .filter(|g| field.meters(*g).is_some_and(|d| d < NEAR_DISTANCE))
            .collect()
    }

    fn nearest_object_label(&self, p: WorldPoint) -> String {
        nearest_object_label(self.scene, p).expect("resources checked")
    }

    /// Draws one episode. The rng is the only source of randomness.
    pub fn sample(&self, kind: ActionKind, rng: &mut impl Rng, id: u64, seed: u64) -> Result<Episode, SampleError> {
        self.check_resources(kind)?;
        let heading = |rng: &mut dyn rand::RngCore| rng.random_range(0.0..TAU);
        for _ in 0..self.attempts {
            let drawn = match kind {
                ActionKind::GoTo => self.draw_go_to(rng),
                ActionKind::GoPast => self.draw_go_past(rng),
                ActionKind::GoInto => self.draw_go_into(rng),
                ActionKind::GoThrough => self.draw_go_through(rng),
                ActionKind::Exit => self.draw_exit(rng),
            };
            if let Some((path, goal, landmark)) = drawn {
                let start = Pose::new(path[0], heading(rng));
                return Ok(Episode {
                    id,
                    scene_id: self.scene.id().to_string(),
                    action: kind,
                    landmark,
                    start,
                    path,
                    goal,
                    seed,
                });
            }
        }
        Err(SampleError::RetriesExhausted {
            kind,
            attempts: self.attempts,
        })
    }

    fn random_pair(&self, rng: &mut impl Rng) -> Option<(GridPoint, GridPoint)> {
        let a = *self.free.choose(rng)?;
        let b = *self.free.choose(rng)?;
        (a != b && self.same_component(a, b)).then_some((a, b))
    }

    fn draw_go_to(&self, rng: &mut impl Rng) -> Option<(Vec<WorldPoint>, Pose, String)> {
        let (a, b) = self.random_pair(rng)?;
        let path = self.path(a, b);
        let n = path.len();
        let end = path[n - 1];
        let goal = Pose::new(end, path[n - 2].bearing_to(&end));
        let landmark = self.nearest_object_label(end);
        Some((path, goal, landmark))
    }

    fn draw_go_past(&self, rng: &mut impl Rng) -> Option<(Vec<WorldPoint>, Pose, String)> {
        let (a, b) = self.random_pair(rng)?;
        if self.center(a).distance(&self.center(b)) <= NEAR_DISTANCE {
            return None;
        }
        let path = self.path(a, b);
        let (mid, tangent) = planner::point_at_fraction(&path, 0.5)?;
        let jitter = rng.random_range(-GO_PAST_JITTER..=GO_PAST_JITTER);
        let goal = Pose::new(mid, tangent? + jitter);
        let landmark = self.nearest_object_label(mid);
        Some((path, goal, landmark))
    }

    fn draw_go_into(&self, rng: &mut impl Rng) -> Option<(Vec<WorldPoint>, Pose, String)> {
        let region = *self.regions_with_entrances(1).choose(rng)?;
        let starts = self.near_entrance_outside(region);
        let goals: Vec<GridPoint> = self.scene.cells_in_region(region).collect();
        let a = *starts.choose(rng)?;
        let b = *goals.choose(rng)?;
        if !self.same_component(a, b) {
            return None;
        }
        let path = self.path(a, b);
        let goal = Pose::new(self.center(b), rng.random_range(0.0..TAU));
        Some((path, goal, self.scene.regions()[region].label.clone()))
    }

    fn draw_go_through(&self, rng: &mut impl Rng) -> Option<(Vec<WorldPoint>, Pose, String)> {
        let region = *self.regions_with_entrances(2).choose(rng)?;
        let count = self.scene.regions()[region].entrances.len();
        let first = rng.random_range(0..count);
        let mut second = rng.random_range(0..count - 1);
        if second >= first {
            second += 1;
        }
        let a = *self.near_entrance(region, first).choose(rng)?;
        let b = *self.near_entrance(region, second).choose(rng)?;
        if a == b || !self.same_component(a, b) {
            return None;
        }
        let path = self.path(a, b);
        let (mid, tangent) = planner::point_at_fraction(&path, 0.5)?;
        let goal = Pose::new(mid, tangent?);
        Some((path, goal, self.scene.regions()[region].label.clone()))
    }

    fn draw_exit(&self, rng: &mut impl Rng) -> Option<(Vec<WorldPoint>, Pose, String)> {
        let region = *self.regions_with_entrances(1).choose(rng)?;
        let starts: Vec<GridPoint> = self.scene.cells_in_region(region).collect();
        let goals = self.near_entrance_outside(region);
        let a = *starts.choose(rng)?;
        let b = *goals.choose(rng)?;
        if !self.same_component(a, b) {
            return None;
        }
        let path = self.path(a, b);
        let goal = Pose::new(self.center(b), rng.random_range(0.0..TAU));
        Some((path, goal, self.scene.regions()[region].label.clone()))
    }
}

/// Label of the object nearest to `p` (euclidean; declaration order breaks ties).
pub fn nearest_object_label(scene: &Scene, p: WorldPoint) -> Option<String> {
    scene
        .objects()
        .iter()
        .min_by(|a, b| a.position.distance(&p).total_cmp(&b.position.distance(&p)))
        .map(|o| o.label.clone())
}

fn connected_components(scene: &Scene) -> Vec<u32> {
    let grid = scene.grid();
    let mut comp = vec![u32::MAX; grid.len()];
    let mut next = 0;
    for start in grid.free_cells() {
        if comp[grid.index(start)] != u32::MAX {
            continue;
        }
        let mut stack = vec![start];
        comp[grid.index(start)] = next;
        while let Some(g) = stack.pop() {
            for (n, _) in planner::neighbors(grid, g) {
                let i = grid.index(n);
                if comp[i] == u32::MAX {
                    comp[i] = next;
                    stack.push(n);
                }
            }
        }
        next += 1;
    }
    comp
}

/// Rng for episode `index` of a dataset: one ChaCha stream per episode, so
/// episodes can be drawn in any order or in parallel.
pub fn episode_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws one episode with a fresh sampler.
pub fn sample_episode(scene: &Scene, kind: ActionKind, rng: &mut impl Rng) -> Result<Episode, SampleError> {
    Sampler::new(scene).sample(kind, rng, 0, 0)
}

pub fn generate_dataset(scene: &Scene, kind: ActionKind, count: usize, seed: u64) -> Result<Vec<Episode>, SampleError> {
    generate_dataset_with(scene, kind, count, seed, Execution::default())
}

/// Deterministic for a given (scene, kind, seed) regardless of `mode`.
pub fn generate_dataset_with(
    scene: &Scene,
    kind: ActionKind,
    count: usize,
    seed: u64,
    mode: Execution,
) -> Result<Vec<Episode>, SampleError> {
    let sampler = Sampler::new(scene);
    if count == 0 {
        return Ok(Vec::new());
    }
    sampler.check_resources(kind)?;
    par::map_range(mode, count, |i| {
        let mut rng = episode_rng(seed, i as u64);
        sampler.sample(kind, &mut rng, i as u64, seed)
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub scene_id: String,
    pub kind: ActionKind,
    pub seed: u64,
    pub count: usize,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset is empty (missing header line)")]
    MissingHeader,
    #[error("dataset line {line}: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("dataset header announces {expected} episodes, found {found}")]
    CountMismatch { expected: usize, found: usize },
}

/// Header line followed by one JSON episode per line.
pub fn write_dataset(header: &DatasetHeader, episodes: &[Episode]) -> String {
    let mut out = serde_json::to_string(header).expect("header serializes");
    out.push('\n');
    for ep in episodes {
        out.push_str(&serde_json::to_string(ep).expect("episode serializes"));
        out.push('\n');
    }
    out
}

pub fn read_dataset(text: &str) -> Result<(DatasetHeader, Vec<Episode>), DatasetError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (i, first) = lines.next().ok_or(DatasetError::MissingHeader)?;
    let header: DatasetHeader =
        serde_json::from_str(first).map_err(|source| DatasetError::Malformed { line: i + 1, source })?;
    let episodes = lines
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| DatasetError::Malformed { line: i + 1, source }))
        .collect::<Result<Vec<Episode>, _>>()?;
    if episodes.len() != header.count {
        return Err(DatasetError::CountMismatch {
            expected: header.count,
            found: episodes.len(),
        });
    }
    Ok((header, episodes))
}

/// Arc length from the start of the poly-line to `p`, if `p` lies on it.
pub fn arc_length_to(points: &[WorldPoint], p: WorldPoint) -> Option<f64> {
    if points.first() == Some(&p) {
        return Some(0.0);
    }
    let mut walked = 0.0;
    for w in points.windows(2) {
        let len = w[0].distance(&w[1]);
        if len > 0.0 {
            let (dx, dy) = (w[1].x - w[0].x, w[1].y - w[0].y);
            let t = (((p.x - w[0].x) * dx + (p.y - w[0].y) * dy) / (len * len)).clamp(0.0, 1.0);
            if w[0].lerp(&w[1], t).distance(&p) <= 1e-9 {
                return Some(walked + t * len);
            }
        }
        walked += len;
    }
    None
}

/// Verifies every invariant of an episode against its scene. Returns the
/// first violation as text.
pub fn check_episode(scene: &Scene, ep: &Episode) -> Result<(), String> {
    let grid = scene.grid();
    let geo = |a: WorldPoint, b: WorldPoint| -> Option<f64> {
        planner::geodesic_distance(scene, a, b).ok().flatten()
    };
    let (first, last) = match (ep.path.first(), ep.path.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return Err("empty path".into()),
    };
    if first != ep.start.position {
        return Err("path does not begin at the start position".into());
    }
    if !grid.is_navigable(first) || !grid.is_navigable(last) || !grid.is_navigable(ep.goal.position) {
        return Err("path endpoint or goal not navigable".into());
    }
    for h in [ep.start.heading, ep.goal.heading] {
        if !(0.0..TAU).contains(&h) {
            return Err(format!("heading {h} outside [0, 2pi)"));
        }
    }
    for w in ep.path.windows(2) {
        let (a, b) = (grid.world_to_grid(w[0]), grid.world_to_grid(w[1]));
        let adjacent = matches!((a, b), (Some(a), Some(b))
            if planner::neighbors(grid, a).any(|(n, _)| n == b));
        if !adjacent {
            return Err("consecutive path points are not adjacent Free cells".into());
        }
    }
    let region_target = || -> Result<usize, String> {
        scene
            .region_by_label(&ep.landmark)
            .map(|(i, _)| i)
            .ok_or_else(|| format!("no region labeled {:?}", ep.landmark))
    };
    let near_entrance = |region: usize, p: WorldPoint| -> Vec<usize> {
        scene.regions()[region]
            .entrances
            .iter()
            .enumerate()
            .filter(|(_, e)| geo(p, grid.grid_to_world(e.anchor)).is_some_and(|d| d <= NEAR_DISTANCE))
            .map(|(i, _)| i)
            .collect()
    };
    let containing = |p: WorldPoint| scene.region_index_containing(p);
    let mid_checks = |jitter: f64| -> Result<(), String> {
        let total = planner::polyline_length(&ep.path);
        let arc = arc_length_to(&ep.path, ep.goal.position).ok_or("goal is not on the path")?;
        if total <= 0.0 || (arc / total - 0.5).abs() > grid.resolution() / total {
            return Err(format!("goal at arc fraction {} instead of 0.5", arc / total));
        }
        let (_, tangent) = planner::point_at_fraction(&ep.path, 0.5).ok_or("degenerate path")?;
        let tangent = tangent.ok_or("degenerate path")?;
        if angular_distance(ep.goal.heading, tangent) > jitter + 1e-9 {
            return Err("goal heading too far from the path tangent".into());
        }
        Ok(())
    };
    match ep.action {
        ActionKind::GoTo => {
            if ep.goal.position != last {
                return Err("GoTo goal is not the path end".into());
            }
            if nearest_object_label(scene, last).as_deref() != Some(ep.landmark.as_str()) {
                return Err("GoTo landmark is not the object nearest the goal".into());
            }
        }
        ActionKind::GoPast => {
            if first.distance(&last) <= NEAR_DISTANCE {
                return Err(format!("GoPast endpoints only {:.3} m apart", first.distance(&last)));
            }
            mid_checks(GO_PAST_JITTER)?;
        }
        ActionKind::GoInto => {
            let target = region_target()?;
            if containing(first) == Some(target) {
                return Err("GoInto start is inside the target region".into());
            }
            if containing(ep.goal.position) != Some(target) || ep.goal.position != last {
                return Err("GoInto goal is not the path end inside the target region".into());
            }
            if near_entrance(target, first).is_empty() {
                return Err("GoInto start is not near an entrance".into());
            }
        }
        ActionKind::GoThrough => {
            let target = region_target()?;
            let a = near_entrance(target, first);
            let b = near_entrance(target, last);
            let distinct = a.iter().any(|i| b.iter().any(|j| i != j));
            if !distinct {
                return Err("GoThrough endpoints are not near two different entrances".into());
            }
            mid_checks(0.0)?;
        }
        ActionKind::Exit => {
            let target = region_target()?;
            if containing(first) != Some(target) {
                return Err("Exit start is outside the target region".into());
            }
            if containing(ep.goal.position) == Some(target) || ep.goal.position != last {
                return Err("Exit goal is not the path end outside the target region".into());
            }
            if near_entrance(target, ep.goal.position).is_empty() {
                return Err("Exit goal is not near an entrance".into());
            }
        }
    }
    Ok(())
}
