//! Landmark-greedy baselines in the style of CLIP-Nav, plus a random walker.
//!
//! The image-text score is replaced by an oracle visibility score: for each
//! of four directions (ahead, left, behind, right) the best `1/(1+d)` over
//! landmark instances whose bearing lies within that 90° cone, with `d` the
//! geodesic distance; unreachable instances score 0.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{AgentAction, Follower, NavError, Navigator, Observation, StepAction, WAYPOINT_TOLERANCE};
use crate::geometry::{wrap_pi, GridPoint, Pose, WorldPoint};
use crate::planner::DistanceField;
use crate::scene::Scene;

pub const DEFAULT_GREEDY_THRESHOLD: f64 = 0.8;
pub const DEFAULT_BACKTRACK: usize = 15;

#[derive(Debug)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(rng: ChaCha8Rng) -> Self {
        Self { rng }
    }
}

impl Navigator for RandomPolicy {
    fn step(&mut self, _obs: &Observation<'_>) -> Result<StepAction, NavError> {
        const ACTIONS: [AgentAction; 4] = [
            AgentAction::Stop,
            AgentAction::Forward,
            AgentAction::TurnLeft,
            AgentAction::TurnRight,
        ];
        Ok((*ACTIONS.choose(&mut self.rng).expect("non-empty")).into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedyConfig {
    /// Stop once the best direction scores strictly above this.
    pub threshold: f64,
    /// Steps to jump back after `patience` steps without a better score;
    /// `None` disables backtracking.
    pub backtrack: Option<usize>,
    pub patience: usize,
    pub waypoint_min: f64,
    pub waypoint_max: f64,
    /// Steps spent on one waypoint before a new one is drawn.
    pub waypoint_age: usize,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_GREEDY_THRESHOLD,
            backtrack: None,
            patience: DEFAULT_BACKTRACK,
            waypoint_min: 1.0,
            waypoint_max: 3.0,
            waypoint_age: 30,
        }
    }
}

impl GreedyConfig {
    pub fn with_backtrack() -> Self {
        Self {
            backtrack: Some(DEFAULT_BACKTRACK),
            ..Self::default()
        }
    }
}

/// Geodesic fields rooted at each instance of a landmark.
pub(crate) struct LandmarkFields {
    instances: Vec<(WorldPoint, DistanceField)>,
}

impl LandmarkFields {
    pub(crate) fn new(scene: &Scene, label: &str) -> Self {
        let grid = scene.grid();
        let mut points: Vec<WorldPoint> = scene.objects_labeled(label).map(|o| o.position).collect();
        if points.is_empty() {
            if let Some(anchor) = scene.region_by_label(label).and_then(|(i, _)| scene.region_anchor(i)) {
                points.push(grid.grid_to_world(anchor));
            }
        }
        let instances = points
            .into_iter()
            .filter_map(|p| {
                let cell = grid.world_to_grid(p).filter(|g| grid.is_free(*g))?;
                Some((p, DistanceField::new(grid, cell)))
            })
            .collect();
        Self { instances }
    }

    /// Scores for the directions heading + 0°, 90°, 180°, 270°.
    pub(crate) fn scores(&self, scene: &Scene, pose: &Pose) -> [f64; 4] {
        let mut out = [0.0; 4];
        let Some(here) = scene.grid().world_to_grid(pose.position) else { return out };
        for (p, field) in &self.instances {
            let Some(d) = field.meters(here) else { continue };
            let score = 1.0 / (1.0 + d);
            let at_landmark = pose.position.distance(p) < 1e-9;
            let bearing = pose.position.bearing_to(p);
            for (i, slot) in out.iter_mut().enumerate() {
                let dir = pose.heading + i as f64 * FRAC_PI_2;
                if (at_landmark || wrap_pi(bearing - dir).abs() <= FRAC_PI_4) && score > *slot {
                    *slot = score;
                }
            }
        }
        out
    }
}

/// Visibility scores of `label` from `pose` in the four directions.
pub fn visibility_scores(scene: &Scene, pose: &Pose, label: &str) -> [f64; 4] {
    LandmarkFields::new(scene, label).scores(scene, pose)
}

pub struct Greedy {
    config: GreedyConfig,
    rng: ChaCha8Rng,
    follower: Follower,
    task: Option<usize>,
    fields: Option<LandmarkFields>,
    waypoint: Option<(WorldPoint, usize)>,
    best_seen: f64,
    stale: usize,
}

impl Greedy {
    pub fn new(config: GreedyConfig, rng: ChaCha8Rng) -> Self {
        Self {
            config,
            rng,
            follower: Follower::new(),
            task: None,
            fields: None,
            waypoint: None,
            best_seen: f64::NEG_INFINITY,
            stale: 0,
        }
    }

    /// A reachable point `waypoint_min..=waypoint_max` meters along `heading`,
    /// cut short at the first obstacle.
    fn draw_waypoint(&mut self, scene: &Scene, pose: &Pose, heading: f64) -> Option<WorldPoint> {
        let grid = scene.grid();
        let length = self.rng.random_range(self.config.waypoint_min..=self.config.waypoint_max);
        let here = grid.world_to_grid(pose.position)?;
        let mut cell: Option<GridPoint> = None;
        let n = (length / 0.05).ceil() as usize;
        for i in 1..=n {
            let p = pose.position.offset(heading, length * i as f64 / n as f64);
            match grid.world_to_grid(p).filter(|g| grid.is_free(*g)) {
                Some(g) => cell = Some(g),
                None => break,
            }
        }
        let target = cell.filter(|g| *g != here).map(|g| grid.grid_to_world(g))?;
        self.follower.reaches(scene, pose.position, target).then_some(target)
    }
}

impl Navigator for Greedy {
    fn step(&mut self, obs: &Observation<'_>) -> Result<StepAction, NavError> {
        if obs.steps_in_subtask == 0 || self.task != Some(obs.subtask_index) {
            self.task = Some(obs.subtask_index);
            self.fields = Some(LandmarkFields::new(obs.scene, &obs.subtask.landmark));
            self.waypoint = None;
            // The first score of a sub-task counts as an improvement.
            self.best_seen = f64::NEG_INFINITY;
            self.stale = 0;
        }
        let scores = self.fields.as_ref().expect("set above").scores(obs.scene, &obs.pose);
        let (best_dir, best) = scores
            .iter()
            .enumerate()
            .fold((0, scores[0]), |acc, (i, s)| if *s > acc.1 { (i, *s) } else { acc });
        if best > self.config.threshold {
            return Ok(StepAction::Stop);
        }
        if let Some(k) = self.config.backtrack {
            if best > self.best_seen {
                self.best_seen = best;
                self.stale = 0;
            } else {
                self.stale += 1;
            }
            if self.stale >= self.config.patience && !obs.history.is_empty() {
                self.stale = 0;
                self.waypoint = None;
                return Ok(StepAction::Backtrack(k));
            }
        }
        for _ in 0..2 {
            let stale = match self.waypoint {
                None => true,
                Some((w, age)) => age >= self.config.waypoint_age || obs.pose.position.distance(&w) <= WAYPOINT_TOLERANCE,
            };
            if stale {
                let heading = if best > 0.0 {
                    obs.pose.heading + best_dir as f64 * FRAC_PI_2
                } else {
                    obs.pose.heading + self.rng.random_range(0..4) as f64 * FRAC_PI_2
                };
                match self.draw_waypoint(obs.scene, &obs.pose, heading) {
                    Some(w) => self.waypoint = Some((w, 0)),
                    // Facing an obstacle: rotate to change what "ahead" means.
                    None => return Ok(StepAction::TurnLeft),
                }
            }
            let (w, age) = self.waypoint.expect("set above");
            match self.follower.step_toward(obs.scene, &obs.pose, w) {
                Ok(AgentAction::Stop) | Err(_) => self.waypoint = None,
                Ok(action) => {
                    self.waypoint = Some((w, age + 1));
                    return Ok(action.into());
                }
            }
        }
        Ok(StepAction::TurnLeft)
    }
}
