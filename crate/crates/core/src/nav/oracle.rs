//! Map-oracle navigators, one behaviour per action kind. Each plans a short
//! chain of waypoints when its sub-task starts, follows them, then stops.

use super::{Follower, NavError, Navigator, Observation, StepAction, WAYPOINT_TOLERANCE};
use crate::episode::ActionKind;
use crate::geometry::{wrap_pi, GridPoint, Pose, WorldPoint};
use crate::planner::DistanceField;
use crate::scene::Scene;

/// How far past a GoPast landmark the agent keeps walking.
pub const GO_PAST_CONTINUATION: f64 = 1.5;
/// Geodesic distance to an object that counts as having reached it.
const APPROACH_RADIUS: f64 = 0.5;
/// Depth inside a region's box for GoInto / GoThrough interior points.
const INSIDE_MARGIN: f64 = 0.5;
/// Geodesic distance beyond an entrance for points outside a region.
const OUTSIDE_DISTANCE: f64 = 0.5;
/// Path cells behind the approach point used to estimate travel direction.
const APPROACH_BACKSIGHT: usize = 4;

#[derive(Debug, Default)]
pub struct Oracle {
    landmark_only: bool,
    plan: Vec<WorldPoint>,
    next: usize,
    planned_for: Option<usize>,
    follower: Follower,
}

impl Oracle {
    pub fn new() -> Self {
        Self::default()
    }

    /// Treats every sub-task as GoTo its landmark (regions: their anchor).
    pub fn landmark_only() -> Self {
        Self {
            landmark_only: true,
            ..Self::default()
        }
    }

    /// The waypoint chain for `kind` from `pose`.
    pub fn plan(scene: &Scene, pose: &Pose, kind: ActionKind, landmark: &str) -> Result<Vec<WorldPoint>, NavError> {
        let grid = scene.grid();
        let here = grid.world_to_grid(pose.position).ok_or(NavError::Unreachable)?;
        let from_here = DistanceField::new(grid, here);
        let center = |g: GridPoint| grid.grid_to_world(g);
        match kind {
            ActionKind::GoTo => {
                let (approach, _, _) = approach(scene, &from_here, landmark)?;
                Ok(vec![center(approach)])
            }
            ActionKind::GoPast => {
                let (approach, object, path) = approach(scene, &from_here, landmark)?;
                let idx = path.iter().position(|c| *c == approach).unwrap_or(0);
                let back = center(path[idx.saturating_sub(APPROACH_BACKSIGHT)]);
                let direction = if back.distance(&object) > WAYPOINT_TOLERANCE {
                    back.bearing_to(&object)
                } else {
                    pose.heading
                };
                let continuation = continuation(scene, approach, object, direction);
                Ok(std::iter::once(approach).chain(continuation).map(center).collect())
            }
            ActionKind::GoInto => {
                let region = region_index(scene, landmark)?;
                let interior = interior_cells(scene, region);
                if scene.region_index_containing(pose.position) == Some(region) {
                    if interior.is_empty() || scene.regions()[region].bbox.inset_of(pose.position) >= INSIDE_MARGIN {
                        return Ok(Vec::new());
                    }
                    let inner = nearest(&from_here, &interior).ok_or(NavError::Unreachable)?;
                    return Ok(vec![center(inner)]);
                }
                let Some(entrance) = nearest_entrance(scene, region, &from_here) else {
                    let inner = nearest(&from_here, &interior).ok_or(NavError::Unreachable)?;
                    return Ok(vec![center(inner)]);
                };
                let from_door = DistanceField::new(grid, entrance);
                let inner = nearest(&from_door, &interior).unwrap_or(entrance);
                Ok(vec![center(entrance), center(inner)])
            }
            ActionKind::GoThrough => {
                let region = region_index(scene, landmark)?;
                let entry = nearest_entrance(scene, region, &from_here).ok_or(NavError::Unreachable)?;
                let from_entry = DistanceField::new(grid, entry);
                let exit = scene.regions()[region]
                    .entrances
                    .iter()
                    .map(|e| e.anchor)
                    .filter(|a| *a != entry)
                    .filter_map(|a| from_entry.cost(a).map(|c| (c, a)))
                    .min_by(|x, y| x.0.cmp(&y.0))
                    .map_or(entry, |(_, a)| a);
                let from_exit = DistanceField::new(grid, exit);
                let inner = interior_cells(scene, region)
                    .into_iter()
                    .filter_map(|c| Some((from_entry.meters(c)? + from_exit.meters(c)?, c)))
                    .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.row_major().cmp(&y.1.row_major())))
                    .map(|(_, c)| c);
                let out = outside_point(scene, region, exit).ok_or(NavError::Unreachable)?;
                // Already inside (next to the entry door): leave by the other one.
                if scene.region_index_containing(pose.position) == Some(region) {
                    return Ok([inner, Some(exit), Some(out)].into_iter().flatten().map(center).collect());
                }
                Ok([Some(entry), inner, Some(exit), Some(out)].into_iter().flatten().map(center).collect())
            }
            ActionKind::Exit => {
                let region = region_index(scene, landmark)?;
                if scene.region_index_containing(pose.position) != Some(region) {
                    return Ok(Vec::new());
                }
                let door = nearest_entrance(scene, region, &from_here).ok_or(NavError::Unreachable)?;
                let out = outside_point(scene, region, door).ok_or(NavError::Unreachable)?;
                Ok(vec![center(door), center(out)])
            }
        }
    }
}

impl Navigator for Oracle {
    fn step(&mut self, obs: &Observation<'_>) -> Result<StepAction, NavError> {
        if obs.steps_in_subtask == 0 || self.planned_for != Some(obs.subtask_index) {
            let kind = if self.landmark_only { ActionKind::GoTo } else { obs.subtask.action };
            self.plan = Self::plan(obs.scene, &obs.pose, kind, &obs.subtask.landmark)?;
            self.next = 0;
            self.planned_for = Some(obs.subtask_index);
        }
        while self.next < self.plan.len() && obs.pose.position.distance(&self.plan[self.next]) <= WAYPOINT_TOLERANCE {
            self.next += 1;
        }
        match self.plan.get(self.next) {
            None => Ok(StepAction::Stop),
            Some(target) => Ok(self.follower.step_toward(obs.scene, &obs.pose, *target)?.into()),
        }
    }
}

fn region_index(scene: &Scene, label: &str) -> Result<usize, NavError> {
    scene
        .region_by_label(label)
        .map(|(i, _)| i)
        .ok_or_else(|| NavError::LandmarkNotFound(label.to_string()))
}

/// Free cells standing for each instance of `label`: the object's own cell,
/// or the nearest Free cell when it sits on an obstacle. A region label
/// falls back to the region's anchor.
pub(crate) fn landmark_cells(scene: &Scene, label: &str) -> Vec<(GridPoint, WorldPoint)> {
    let grid = scene.grid();
    let objects: Vec<_> = scene
        .objects_labeled(label)
        .filter_map(|o| {
            let cell = grid
                .world_to_grid(o.position)
                .filter(|g| grid.is_free(*g))
                .or_else(|| {
                    grid.free_cells().min_by(|a, b| {
                        let da = grid.grid_to_world(*a).distance(&o.position);
                        let db = grid.grid_to_world(*b).distance(&o.position);
                        da.total_cmp(&db).then(a.row_major().cmp(&b.row_major()))
                    })
                })?;
            Some((cell, o.position))
        })
        .collect();
    if !objects.is_empty() {
        return objects;
    }
    scene
        .region_by_label(label)
        .and_then(|(i, _)| scene.region_anchor(i))
        .map(|a| vec![(a, grid.grid_to_world(a))])
        .unwrap_or_default()
}

/// Nearest instance of the landmark and the first cell on the way to it
/// within [`APPROACH_RADIUS`]; also returns the path to that instance.
fn approach(scene: &Scene, from_here: &DistanceField, label: &str) -> Result<(GridPoint, WorldPoint, Vec<GridPoint>), NavError> {
    let grid = scene.grid();
    let cells = landmark_cells(scene, label);
    if cells.is_empty() {
        return Err(NavError::LandmarkNotFound(label.to_string()));
    }
    let (target, position) = cells
        .into_iter()
        .filter(|(c, _)| from_here.is_reachable(*c))
        .min_by(|a, b| from_here.cost(a.0).cmp(&from_here.cost(b.0)))
        .ok_or(NavError::Unreachable)?;
    let path = from_here.path_to(target).ok_or(NavError::Unreachable)?;
    let to_target = DistanceField::new(grid, target);
    let approach = *path
        .iter()
        .find(|c| to_target.meters(**c).is_some_and(|d| d <= APPROACH_RADIUS))
        .unwrap_or(&target);
    Ok((approach, position, path))
}

/// A reachable cell about [`GO_PAST_CONTINUATION`] beyond the object along
/// `direction`, preferring points within 45° of it.
fn continuation(scene: &Scene, approach: GridPoint, object: WorldPoint, direction: f64) -> Option<GridPoint> {
    let grid = scene.grid();
    let from_approach = DistanceField::new(grid, approach);
    let ideal = object.offset(direction, GO_PAST_CONTINUATION);
    let pick = |min_dist: f64, max_angle: f64| {
        from_approach
            .reachable()
            .map(|(c, _)| c)
            .filter(|c| {
                let p = grid.grid_to_world(*c);
                let d = p.distance(&object);
                d >= min_dist && wrap_pi(object.bearing_to(&p) - direction).abs() <= max_angle
            })
            .min_by(|a, b| {
                let da = grid.grid_to_world(*a).distance(&ideal);
                let db = grid.grid_to_world(*b).distance(&ideal);
                da.total_cmp(&db).then(a.row_major().cmp(&b.row_major()))
            })
    };
    pick(GO_PAST_CONTINUATION, std::f64::consts::FRAC_PI_4)
        .or_else(|| pick(GO_PAST_CONTINUATION - WAYPOINT_TOLERANCE, std::f64::consts::FRAC_PI_2))
        .or_else(|| pick(GO_PAST_CONTINUATION - WAYPOINT_TOLERANCE, std::f64::consts::PI))
}

fn interior_cells(scene: &Scene, region: usize) -> Vec<GridPoint> {
    let bbox = scene.regions()[region].bbox;
    scene
        .cells_in_region(region)
        .filter(|c| bbox.inset_of(scene.grid().grid_to_world(*c)) >= INSIDE_MARGIN)
        .collect()
}

fn nearest(field: &DistanceField, cells: &[GridPoint]) -> Option<GridPoint> {
    cells
        .iter()
        .filter_map(|c| field.cost(*c).map(|d| (d, *c)))
        .min_by(|a, b| a.0.cmp(&b.0).then(a.1.row_major().cmp(&b.1.row_major())))
        .map(|(_, c)| c)
}

fn nearest_entrance(scene: &Scene, region: usize, from_here: &DistanceField) -> Option<GridPoint> {
    let anchors: Vec<GridPoint> = scene.regions()[region].entrances.iter().map(|e| e.anchor).collect();
    // Declaration order breaks ties, so search in that order.
    anchors
        .iter()
        .filter_map(|a| from_here.cost(*a).map(|d| (d, *a)))
        .fold(None, |best: Option<(crate::planner::PathCost, GridPoint)>, cur| match best {
            Some(b) if b.0 <= cur.0 => Some(b),
            _ => Some(cur),
        })
        .map(|(_, a)| a)
}

/// Closest cell outside `region` at least [`OUTSIDE_DISTANCE`] from `door`.
fn outside_point(scene: &Scene, region: usize, door: GridPoint) -> Option<GridPoint> {
    let grid = scene.grid();
    let field = DistanceField::new(grid, door);
    field
        .reachable()
        .filter(|(c, d)| *d >= OUTSIDE_DISTANCE - 1e-9 && scene.region_index_containing(grid.grid_to_world(*c)) != Some(region))
        .min_by(|a, b| field.cost(a.0).cmp(&field.cost(b.0)).then(a.0.row_major().cmp(&b.0.row_major())))
        .map(|(c, _)| c)
}
