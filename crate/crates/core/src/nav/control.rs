//! Local controller: turn toward a waypoint, then step forward.

use std::collections::HashMap;
use std::f64::consts::PI;

use super::{apply_action, forward_is_clear, AgentAction, NavError, AGENT_RADIUS, FORWARD_STEP, TURN_ANGLE};
use crate::geometry::{wrap_pi, GridPoint, Pose, WorldPoint};
use crate::planner::NavField;
use crate::scene::Scene;

/// Half a turn increment; smaller bearing errors are not corrected.
pub const BEARING_DEADBAND: f64 = PI / 12.0;
pub const WAYPOINT_TOLERANCE: f64 = 0.25;

/// Cells of look-ahead along the planned path.
const LOOKAHEAD: usize = 8;
/// Extra clearance demanded of look-ahead segments.
const SIGHT_MARGIN: f64 = 0.05;

/// Turn to reduce the bearing error beyond the dead-band, else Forward. A
/// target exactly behind turns right.
pub fn steer(pose: &Pose, target: WorldPoint) -> AgentAction {
    let error = wrap_pi(pose.position.bearing_to(&target) - pose.heading);
    if error.abs() <= BEARING_DEADBAND {
        AgentAction::Forward
    } else if error > 0.0 && error < PI {
        AgentAction::TurnLeft
    } else {
        AgentAction::TurnRight
    }
}

/// Stop within [`WAYPOINT_TOLERANCE`] of the waypoint, otherwise [`steer`].
pub fn waypoint_follow(scene: &Scene, pose: &Pose, waypoint: WorldPoint) -> Result<AgentAction, NavError> {
    if pose.position.distance(&waypoint) <= WAYPOINT_TOLERANCE {
        return Ok(AgentAction::Stop);
    }
    if !scene.grid().is_navigable(waypoint) {
        return Err(NavError::Unreachable);
    }
    Ok(steer(pose, waypoint))
}

fn segment_is_clear(scene: &Scene, a: WorldPoint, b: WorldPoint) -> bool {
    const SAMPLE: f64 = 0.05;
    let n = (a.distance(&b) / SAMPLE).ceil().max(1.0) as usize;
    (0..=n).all(|i| scene.grid().disc_is_clear(a.lerp(&b, i as f64 / n as f64), AGENT_RADIUS + SIGHT_MARGIN))
}

/// Follows clearance-weighted shortest paths to arbitrary Free targets,
/// caching one navigation field per target cell. When a forward step is
/// blocked it picks the clear heading that most reduces the remaining cost.
#[derive(Debug, Default)]
pub struct Follower {
    fields: HashMap<GridPoint, NavField>,
    last: Option<(Pose, AgentAction)>,
    escape: Option<WorldPoint>,
}

impl Follower {
    pub fn new() -> Self {
        Self::default()
    }

    fn field(&mut self, scene: &Scene, target: GridPoint) -> &NavField {
        self.fields.entry(target).or_insert_with(|| NavField::toward(scene, target))
    }

    pub fn reaches(&mut self, scene: &Scene, from: WorldPoint, target: WorldPoint) -> bool {
        let grid = scene.grid();
        match (grid.world_to_grid(from), grid.world_to_grid(target)) {
            (Some(f), Some(t)) => self.field(scene, t).reaches(f),
            _ => false,
        }
    }

    /// Next action toward `target`; `Stop` once within the waypoint tolerance.
    pub fn step_toward(&mut self, scene: &Scene, pose: &Pose, target: WorldPoint) -> Result<AgentAction, NavError> {
        let action = self.choose(scene, pose, target)?;
        self.last = Some((*pose, action));
        Ok(action)
    }

    fn choose(&mut self, scene: &Scene, pose: &Pose, target: WorldPoint) -> Result<AgentAction, NavError> {
        if pose.position.distance(&target) <= WAYPOINT_TOLERANCE {
            return Ok(AgentAction::Stop);
        }
        let grid = scene.grid();
        let here = grid.world_to_grid(pose.position).ok_or(NavError::Unreachable)?;
        let goal = grid.world_to_grid(target).ok_or(NavError::Unreachable)?;
        let blocked = matches!(self.last, Some((p, AgentAction::Forward)) if p == *pose);
        if let Some((p, _)) = self.last {
            if p.position != pose.position {
                self.escape = None;
            }
        }
        if blocked && self.escape.is_none() {
            self.escape = self.escape_aim(scene, pose, goal);
        }
        if let Some(aim) = self.escape {
            return Ok(steer(pose, aim));
        }
        let path = self.field(scene, goal).path_from(here).ok_or(NavError::Unreachable)?;
        let last = path.len() - 1;
        let mut aim = if last == 0 { target } else { grid.grid_to_world(path[1]) };
        for i in (1..=last.min(LOOKAHEAD)).rev() {
            let p = if i == last { target } else { grid.grid_to_world(path[i]) };
            if segment_is_clear(scene, pose.position, p) {
                aim = p;
                break;
            }
        }
        if pose.position.distance(&aim) < 1e-9 {
            return Ok(AgentAction::Stop);
        }
        Ok(steer(pose, aim))
    }

    /// Among the twelve reachable headings, the clear forward move landing
    /// in the cheapest cell.
    fn escape_aim(&mut self, scene: &Scene, pose: &Pose, goal: GridPoint) -> Option<WorldPoint> {
        let grid = scene.grid();
        let field = self.field(scene, goal);
        let mut best: Option<(f64, f64, WorldPoint)> = None;
        for k in 0..12 {
            let turn = k as f64 * TURN_ANGLE;
            let probe = Pose::new(pose.position, pose.heading + turn);
            if !forward_is_clear(scene, &probe, FORWARD_STEP) {
                continue;
            }
            let moved = apply_action(scene, &probe, AgentAction::Forward).position;
            let Some(cost) = grid.world_to_grid(moved).and_then(|c| field.cost_of(c)) else { continue };
            let rotation = wrap_pi(turn).abs();
            if best.is_none_or(|(c, r, _)| (cost, rotation) < (c, r)) {
                best = Some((cost, rotation, pose.position.offset(probe.heading, 1.0)));
            }
        }
        best.map(|(_, _, aim)| aim)
    }
}
