//! Agent kinematics, navigators and the sequential sub-task executor.

mod baseline;
mod control;
mod oracle;

pub use baseline::{visibility_scores, Greedy, GreedyConfig, RandomPolicy, DEFAULT_BACKTRACK, DEFAULT_GREEDY_THRESHOLD};
pub use control::{steer, waypoint_follow, Follower, BEARING_DEADBAND, WAYPOINT_TOLERANCE};
pub use oracle::{Oracle, GO_PAST_CONTINUATION};
pub(crate) use oracle::landmark_cells;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::episode_rng;
use crate::geometry::{normalize_angle, Pose};
use crate::parser::SubTask;
use crate::reward::RewardComponents;
use crate::scene::Scene;

pub const FORWARD_STEP: f64 = 0.25;
pub const TURN_ANGLE: f64 = PI / 6.0;
pub const AGENT_RADIUS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentAction {
    Stop,
    Forward,
    TurnLeft,
    TurnRight,
}

/// What one executor step did: an agent action, or a relocation to the pose
/// held `k` steps earlier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepAction {
    Stop,
    Forward,
    TurnLeft,
    TurnRight,
    Backtrack(usize),
}

impl From<AgentAction> for StepAction {
    fn from(a: AgentAction) -> Self {
        match a {
            AgentAction::Stop => StepAction::Stop,
            AgentAction::Forward => StepAction::Forward,
            AgentAction::TurnLeft => StepAction::TurnLeft,
            AgentAction::TurnRight => StepAction::TurnRight,
        }
    }
}

/// Swept-disc test: every point of the move keeps the agent disc off
/// Blocked cells.
pub fn forward_is_clear(scene: &Scene, pose: &Pose, length: f64) -> bool {
    const SAMPLE: f64 = 0.02;
    let grid = scene.grid();
    let n = (length / SAMPLE).ceil().max(1.0) as usize;
    (0..=n).all(|i| {
        let p = pose.position.offset(pose.heading, length * i as f64 / n as f64);
        grid.is_navigable(p) && grid.disc_is_clear(p, AGENT_RADIUS)
    })
}

pub fn apply_action(scene: &Scene, pose: &Pose, action: AgentAction) -> Pose {
    match action {
        AgentAction::Stop => *pose,
        AgentAction::Forward => {
            if forward_is_clear(scene, pose, FORWARD_STEP) {
                Pose {
                    position: pose.position.offset(pose.heading, FORWARD_STEP),
                    heading: pose.heading,
                }
            } else {
                *pose
            }
        }
        AgentAction::TurnLeft => Pose {
            position: pose.position,
            heading: normalize_angle(pose.heading + TURN_ANGLE),
        },
        AgentAction::TurnRight => Pose {
            position: pose.position,
            heading: normalize_angle(pose.heading - TURN_ANGLE),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecutorConfig {
    /// Per-sub-task step budget.
    pub m_s: usize,
    /// Episode step budget.
    pub m_e: usize,
    pub success_radius: f64,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self {
            m_s: 100,
            m_e: 500,
            success_radius: 3.0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("step budgets must satisfy 0 < m_s <= m_e (got m_s={m_s}, m_e={m_e})")]
    Budgets { m_s: usize, m_e: usize },
    #[error("success radius must be positive")]
    Radius,
}

impl ExecutorConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.m_s == 0 || self.m_s > self.m_e {
            return Err(ConfigError::Budgets { m_s: self.m_s, m_e: self.m_e });
        }
        if !(self.success_radius > 0.0) {
            return Err(ConfigError::Radius);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub subtask_index: usize,
    pub action: StepAction,
    pub pose_before: Pose,
    pub pose_after: Pose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<RewardComponents>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Status {
    AllSubtasksDone,
    EpisodeBudgetExhausted,
    Error { subtask_index: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub start: Pose,
    pub subtasks: Vec<SubTask>,
    pub steps: Vec<StepRecord>,
    pub status: Status,
}

impl Trajectory {
    pub fn final_pose(&self) -> Pose {
        self.steps.last().map_or(self.start, |s| s.pose_after)
    }

    pub fn stopped(&self) -> bool {
        self.steps.last().is_some_and(|s| s.action == StepAction::Stop)
    }

    /// Summed positional displacement of movement steps; backtrack
    /// relocations do not count as travel.
    pub fn traveled(&self) -> f64 {
        self.steps
            .iter()
            .filter(|s| s.action == StepAction::Forward)
            .map(|s| s.pose_before.position.distance(&s.pose_after.position))
            .sum()
    }

    /// Step index range of each sub-task that got at least one step.
    pub fn subtask_spans(&self) -> Vec<(usize, std::ops::Range<usize>)> {
        let mut spans: Vec<(usize, std::ops::Range<usize>)> = Vec::new();
        for (t, s) in self.steps.iter().enumerate() {
            match spans.last_mut() {
                Some((k, r)) if *k == s.subtask_index => r.end = t + 1,
                _ => spans.push((s.subtask_index, t..t + 1)),
            }
        }
        spans
    }
}

/// Pose held before step `len - k` of `steps`, clamped to the start; `k = 0`
/// is the current pose.
pub fn backtrack_pose(start: Pose, steps: &[StepRecord], k: usize) -> Pose {
    let idx = steps.len().saturating_sub(k);
    match steps.get(idx) {
        Some(s) => s.pose_before,
        None => steps.last().map_or(start, |s| s.pose_after),
    }
}

pub fn backtrack(trajectory: &Trajectory, k: usize) -> Pose {
    backtrack_pose(trajectory.start, &trajectory.steps, k)
}

/// Everything a navigator sees at one step.
pub struct Observation<'a> {
    pub pose: Pose,
    pub scene: &'a Scene,
    pub subtask: &'a SubTask,
    pub subtask_index: usize,
    pub steps_in_subtask: usize,
    pub start: Pose,
    pub history: &'a [StepRecord],
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NavError {
    #[error("landmark {0:?} not found in scene")]
    LandmarkNotFound(String),
    #[error("target unreachable from the current position")]
    Unreachable,
}

pub trait Navigator {
    fn step(&mut self, obs: &Observation<'_>) -> Result<StepAction, NavError>;
}

impl<N: Navigator + ?Sized> Navigator for Box<N> {
    fn step(&mut self, obs: &Observation<'_>) -> Result<StepAction, NavError> {
        (**self).step(obs)
    }
}

/// Runs sub-tasks in order. A sub-task ends on Stop or after `m_s` steps;
/// the episode ends when all sub-tasks are done or `m_e` steps were taken.
/// Stop counts as a step.
pub fn execute_instruction(
    scene: &Scene,
    id: impl Into<String>,
    start: Pose,
    subtasks: &[SubTask],
    policy: &mut dyn Navigator,
    config: &ExecutorConfig,
) -> Trajectory {
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut pose = start;
    let mut status = Status::AllSubtasksDone;
    'tasks: for (k, subtask) in subtasks.iter().enumerate() {
        for n in 0..config.m_s {
            if steps.len() >= config.m_e {
                status = Status::EpisodeBudgetExhausted;
                break 'tasks;
            }
            let obs = Observation {
                pose,
                scene,
                subtask,
                subtask_index: k,
                steps_in_subtask: n,
                start,
                history: &steps,
            };
            let action = match policy.step(&obs) {
                Ok(a) => a,
                Err(e) => {
                    status = Status::Error {
                        subtask_index: k,
                        message: e.to_string(),
                    };
                    break 'tasks;
                }
            };
            let after = match action {
                StepAction::Backtrack(b) => backtrack_pose(start, &steps, b),
                StepAction::Stop => apply_action(scene, &pose, AgentAction::Stop),
                StepAction::Forward => apply_action(scene, &pose, AgentAction::Forward),
                StepAction::TurnLeft => apply_action(scene, &pose, AgentAction::TurnLeft),
                StepAction::TurnRight => apply_action(scene, &pose, AgentAction::TurnRight),
            };
            steps.push(StepRecord {
                subtask_index: k,
                action,
                pose_before: pose,
                pose_after: after,
                dtg: None,
                atg: None,
                reward: None,
            });
            pose = after;
            if action == StepAction::Stop {
                break;
            }
        }
    }
    Trajectory {
        id: id.into(),
        start,
        subtasks: subtasks.to_vec(),
        steps,
        status,
    }
}

/// Re-applies every recorded action from the start pose.
pub fn replay(scene: &Scene, trajectory: &Trajectory) -> Vec<Pose> {
    let mut poses = Vec::with_capacity(trajectory.steps.len());
    let mut replayed: Vec<StepRecord> = Vec::with_capacity(trajectory.steps.len());
    let mut pose = trajectory.start;
    for s in &trajectory.steps {
        let after = match s.action {
            StepAction::Backtrack(k) => backtrack_pose(trajectory.start, &replayed, k),
            StepAction::Stop => pose,
            StepAction::Forward => apply_action(scene, &pose, AgentAction::Forward),
            StepAction::TurnLeft => apply_action(scene, &pose, AgentAction::TurnLeft),
            StepAction::TurnRight => apply_action(scene, &pose, AgentAction::TurnRight),
        };
        replayed.push(StepRecord {
            pose_before: pose,
            pose_after: after,
            ..s.clone()
        });
        poses.push(after);
        pose = after;
    }
    poses
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    /// Action-aware map oracle.
    Oracle,
    /// The oracle restricted to GoTo: always heads for the landmark itself.
    LandmarkOnly,
    Random,
    Greedy,
    GreedyBacktrack,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Oracle,
        PolicyKind::LandmarkOnly,
        PolicyKind::Random,
        PolicyKind::Greedy,
        PolicyKind::GreedyBacktrack,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Oracle => "oracle",
            PolicyKind::LandmarkOnly => "landmark-only",
            PolicyKind::Random => "random",
            PolicyKind::Greedy => "greedy",
            PolicyKind::GreedyBacktrack => "greedy-backtrack",
        }
    }

    /// A fresh navigator whose randomness depends only on `(seed, item)`.
    pub fn build(&self, seed: u64, item: u64) -> Box<dyn Navigator + Send> {
        let rng = episode_rng(seed, item);
        match self {
            PolicyKind::Oracle => Box::new(Oracle::new()),
            PolicyKind::LandmarkOnly => Box::new(Oracle::landmark_only()),
            PolicyKind::Random => Box::new(RandomPolicy::new(rng)),
            PolicyKind::Greedy => Box::new(Greedy::new(GreedyConfig::default(), rng)),
            PolicyKind::GreedyBacktrack => Box::new(Greedy::new(GreedyConfig::with_backtrack(), rng)),
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == key || (key == "goto-only" && *p == PolicyKind::LandmarkOnly))
            .ok_or_else(|| format!("unknown policy {s:?} (oracle, landmark-only, random, greedy, greedy-backtrack)"))
    }
}

/// One JSON object per line: a header, the steps, then the status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceLine {
    Header {
        id: String,
        scene_id: String,
        start: Pose,
        subtasks: Vec<SubTask>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        goal: Option<Pose>,
    },
    Step(StepRecord),
    Status { status: Status },
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("trace is missing its {0} record")]
    Missing(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub scene_id: String,
    pub goal: Option<Pose>,
    pub trajectory: Trajectory,
}

pub fn write_trace(scene_id: &str, goal: Option<Pose>, traj: &Trajectory) -> String {
    let mut lines = vec![TraceLine::Header {
        id: traj.id.clone(),
        scene_id: scene_id.to_string(),
        start: traj.start,
        subtasks: traj.subtasks.clone(),
        goal,
    }];
    lines.extend(traj.steps.iter().cloned().map(TraceLine::Step));
    lines.push(TraceLine::Status {
        status: traj.status.clone(),
    });
    lines
        .iter()
        .map(|l| serde_json::to_string(l).expect("trace line serializes") + "\n")
        .collect()
}

pub fn read_trace(text: &str) -> Result<Trace, TraceError> {
    let mut header = None;
    let mut steps = Vec::new();
    let mut status = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| TraceError::Malformed { line: i + 1, message };
        let parsed: TraceLine = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        match parsed {
            TraceLine::Header { .. } if header.is_some() => return Err(bad("duplicate header".into())),
            TraceLine::Header { .. } if !steps.is_empty() => return Err(bad("header after steps".into())),
            TraceLine::Header { id, scene_id, start, subtasks, goal } => header = Some((id, scene_id, start, subtasks, goal)),
            _ if header.is_none() => return Err(TraceError::Missing("header")),
            _ if status.is_some() => return Err(bad("record after status".into())),
            TraceLine::Step(s) => steps.push(s),
            TraceLine::Status { status: s } => status = Some(s),
        }
    }
    let (id, scene_id, start, subtasks, goal) = header.ok_or(TraceError::Missing("header"))?;
    let status = status.ok_or(TraceError::Missing("status"))?;
    Ok(Trace {
        scene_id,
        goal,
        trajectory: Trajectory {
            id,
            start,
            subtasks,
            steps,
            status,
        },
    })
}

#[cfg(test)]
mod tests;
