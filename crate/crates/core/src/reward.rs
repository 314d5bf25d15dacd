//! Shaped step reward:
//! `r = r_success + r_angle_success − Δdtg − Δatg + r_slack`,
//! with `Δ = current − previous`, so approaching the goal pays off.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{angular_distance, Pose, WorldPoint};
use crate::nav::{StepAction, Trajectory};
use crate::planner::DistanceField;
use crate::scene::Scene;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub success_bonus: f64,
    pub angle_success_bonus: f64,
    pub success_radius: f64,
    /// Radians.
    pub angle_success_threshold: f64,
    /// Beyond this distance the angle term is zeroed.
    pub atg_gate_radius: f64,
    pub slack: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            success_bonus: 5.0,
            angle_success_bonus: 5.0,
            success_radius: 1.0,
            angle_success_threshold: 25f64.to_radians(),
            atg_gate_radius: 1.0,
            slack: -0.01,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardConfigError {
    #[error("reward radii must be positive")]
    Radius,
    #[error("angle threshold must lie in (0, π]")]
    Angle,
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardConfigError> {
        if !(self.success_radius > 0.0 && self.atg_gate_radius > 0.0) {
            return Err(RewardConfigError::Radius);
        }
        if !(self.angle_success_threshold > 0.0 && self.angle_success_threshold <= std::f64::consts::PI) {
            return Err(RewardConfigError::Angle);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardComponents {
    pub r_success: f64,
    pub r_angle_success: f64,
    pub neg_delta_dtg: f64,
    pub neg_delta_atg: f64,
    pub r_slack: f64,
    pub total: f64,
}

impl RewardComponents {
    fn new(r_success: f64, r_angle_success: f64, neg_delta_dtg: f64, neg_delta_atg: f64, r_slack: f64) -> Self {
        Self {
            r_success,
            r_angle_success,
            neg_delta_dtg,
            neg_delta_atg,
            r_slack,
            total: r_success + r_angle_success + neg_delta_dtg + neg_delta_atg + r_slack,
        }
    }
}

/// Distance (meters) and absolute heading error (radians) to the goal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalState {
    pub dtg: f64,
    pub atg: f64,
}

pub fn step_reward(prev: GoalState, cur: GoalState, stopped: bool, config: &RewardConfig) -> RewardComponents {
    let near = cur.dtg <= config.success_radius;
    let r_success = if stopped && near { config.success_bonus } else { 0.0 };
    let r_angle = if near && cur.atg <= config.angle_success_threshold {
        config.angle_success_bonus
    } else {
        0.0
    };
    let neg_delta_atg = if cur.dtg > config.atg_gate_radius {
        0.0
    } else {
        -(cur.atg - prev.atg)
    };
    RewardComponents::new(r_success, r_angle, -(cur.dtg - prev.dtg), neg_delta_atg, config.slack)
}

/// Geodesic distance to a fixed goal, one Dijkstra for many queries. Points
/// off the grid or cut off from the goal fall back to straight-line distance.
pub struct GoalField<'a> {
    scene: &'a Scene,
    goal: Pose,
    field: Option<DistanceField>,
}

impl<'a> GoalField<'a> {
    pub fn new(scene: &'a Scene, goal: Pose) -> Self {
        let grid = scene.grid();
        let field = grid
            .world_to_grid(goal.position)
            .filter(|g| grid.is_free(*g))
            .map(|g| DistanceField::new(grid, g));
        Self { scene, goal, field }
    }

    pub fn goal(&self) -> Pose {
        self.goal
    }

    /// `None` when unreachable.
    pub fn geodesic(&self, p: WorldPoint) -> Option<f64> {
        let cell = self.scene.grid().world_to_grid(p)?;
        self.field.as_ref()?.meters(cell)
    }

    pub fn dtg(&self, p: WorldPoint) -> f64 {
        self.geodesic(p).unwrap_or_else(|| p.distance(&self.goal.position))
    }

    pub fn state(&self, pose: &Pose) -> GoalState {
        GoalState {
            dtg: self.dtg(pose.position),
            atg: angular_distance(pose.heading, self.goal.heading),
        }
    }
}

/// Fills `dtg`, `atg` and `reward` on every step; the start pose supplies the
/// "previous" state of the first step.
pub fn annotate(scene: &Scene, trajectory: &mut Trajectory, goal: Pose, config: &RewardConfig) {
    let field = GoalField::new(scene, goal);
    let mut prev = field.state(&trajectory.start);
    for step in &mut trajectory.steps {
        let cur = field.state(&step.pose_after);
        step.dtg = Some(cur.dtg);
        step.atg = Some(cur.atg);
        step.reward = Some(step_reward(prev, cur, step.action == StepAction::Stop, config));
        prev = cur;
    }
}
