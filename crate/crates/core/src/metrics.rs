//! Success, SPL and CSR, plus batch evaluation of navigators over episodes.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{ActionKind, Episode};
use crate::geometry::{Pose, WorldPoint};
use crate::nav::{execute_instruction, landmark_cells, ExecutorConfig, PolicyKind, StepAction, Status, Trajectory};
use crate::par::{self, Execution};
use crate::parser::SubTask;
use crate::planner::DistanceField;
use crate::reward::GoalField;
use crate::scene::Scene;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no results to aggregate")]
    EmptyResultSet,
}

/// Whether reaching the goal also needs an explicit Stop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuccessRule {
    #[default]
    StopRequired,
    Lenient,
}

/// What a trajectory is judged against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scoring {
    /// Final position within the radius of the episode's goal pose.
    #[default]
    Goal,
    /// Each sub-task satisfies the predicate of its action kind.
    Subtask,
}

impl fmt::Display for Scoring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scoring::Goal => "goal",
            Scoring::Subtask => "subtask",
        })
    }
}

impl FromStr for Scoring {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "goal" => Ok(Scoring::Goal),
            "subtask" | "sub-task" => Ok(Scoring::Subtask),
            _ => Err(format!("unknown scoring {s:?} (goal, subtask)")),
        }
    }
}

fn terminated_ok(traj: &Trajectory, rule: SuccessRule) -> bool {
    match rule {
        SuccessRule::Lenient => true,
        // An empty sub-task list finishes without any step to stop with.
        SuccessRule::StopRequired => traj.stopped() || (traj.steps.is_empty() && traj.status == Status::AllSubtasksDone),
    }
}

/// Final position within `radius` (geodesic, inclusive) of the goal, with
/// the termination demanded by `rule`.
pub fn episode_success(scene: &Scene, traj: &Trajectory, goal: &Pose, radius: f64, rule: SuccessRule) -> bool {
    if !terminated_ok(traj, rule) {
        return false;
    }
    GoalField::new(scene, *goal)
        .geodesic(traj.final_pose().position)
        .is_some_and(|d| d <= radius)
}

fn geodesic_from(scene: &Scene, p: WorldPoint) -> Option<DistanceField> {
    let grid = scene.grid();
    grid.world_to_grid(p).filter(|g| grid.is_free(*g)).map(|g| DistanceField::new(grid, g))
}

/// Nearest entrance (index, geodesic meters) of `region` from `p`.
fn nearest_entrance(scene: &Scene, region: usize, p: WorldPoint) -> Option<(usize, f64)> {
    let field = geodesic_from(scene, p)?;
    scene.regions()[region]
        .entrances
        .iter()
        .enumerate()
        .filter_map(|(i, e)| field.meters(e.anchor).map(|d| (i, d)))
        .fold(None, |best: Option<(usize, f64)>, cur| match best {
            Some(b) if b.1 <= cur.1 => Some(b),
            _ => Some(cur),
        })
}

/// Whether the poses `path` (start first) realize `subtask`, judged at
/// `radius`:
/// - GoTo: ends within `radius` (geodesic) of a landmark instance;
/// - GoPast: passes within `radius` of the object before the end, and ends at
///   least `radius` away from it;
/// - GoInto: ends inside the region;
/// - GoThrough: visits the region, ends outside within `radius` of an
///   entrance other than the one nearest to where it entered;
/// - Exit: ends outside the region within `radius` of one of its entrances.
pub fn subtask_satisfied(scene: &Scene, subtask: &SubTask, path: &[Pose], radius: f64) -> bool {
    let Some(last) = path.last() else { return false };
    let end = last.position;
    let region = || scene.region_by_label(&subtask.landmark).map(|(i, _)| i);
    let inside = |p: WorldPoint, r: usize| scene.region_index_containing(p) == Some(r);
    match subtask.action {
        ActionKind::GoTo => {
            let Some(field) = geodesic_from(scene, end) else { return false };
            landmark_cells(scene, &subtask.landmark)
                .iter()
                .any(|(c, _)| field.meters(*c).is_some_and(|d| d <= radius))
        }
        ActionKind::GoPast => {
            let objects: Vec<WorldPoint> = scene.objects_labeled(&subtask.landmark).map(|o| o.position).collect();
            objects.iter().any(|o| {
                let passed = path[..path.len() - 1].iter().any(|p| p.position.distance(o) <= radius);
                passed && end.distance(o) >= radius
            })
        }
        ActionKind::GoInto => region().is_some_and(|r| inside(end, r)),
        ActionKind::GoThrough => {
            let Some(r) = region() else { return false };
            let Some(first_in) = path.iter().position(|p| inside(p.position, r)) else { return false };
            if inside(end, r) {
                return false;
            }
            let entered_from = path[first_in.saturating_sub(1)].position;
            match (nearest_entrance(scene, r, entered_from), nearest_entrance(scene, r, end)) {
                (Some((a, _)), Some((b, d))) => a != b && d <= radius,
                _ => false,
            }
        }
        ActionKind::Exit => {
            let Some(r) = region() else { return false };
            !inside(end, r) && nearest_entrance(scene, r, end).is_some_and(|(_, d)| d <= radius)
        }
    }
}

/// Every sub-task got steps, ended as `rule` demands and satisfied its
/// predicate.
pub fn subtasks_success(scene: &Scene, traj: &Trajectory, radius: f64, rule: SuccessRule) -> bool {
    let spans = traj.subtask_spans();
    if spans.len() != traj.subtasks.len() {
        return traj.subtasks.is_empty();
    }
    spans.iter().all(|(k, range)| {
        let steps = &traj.steps[range.clone()];
        let stopped = steps.last().is_some_and(|s| s.action == StepAction::Stop);
        if rule == SuccessRule::StopRequired && !stopped {
            return false;
        }
        let path: Vec<Pose> = std::iter::once(steps[0].pose_before)
            .chain(steps.iter().map(|s| s.pose_after))
            .collect();
        subtask_satisfied(scene, &traj.subtasks[*k], &path, radius)
    })
}

/// `success · ℓ / max(p, ℓ)`; an agent that starts on the goal scores 1.
pub fn spl_term(success: bool, shortest: f64, traveled: f64) -> f64 {
    if !success {
        return 0.0;
    }
    let denom = traveled.max(shortest);
    if denom <= 0.0 {
        1.0
    } else {
        shortest / denom
    }
}

/// Consistency of two success rates, in percent; two zero rates are
/// identical performance.
pub fn csr(sr_a: f64, sr_b: f64) -> f64 {
    let hi = sr_a.max(sr_b);
    if hi <= 0.0 {
        return 100.0;
    }
    (1.0 - (sr_a - sr_b).abs() / hi) * 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub id: String,
    pub success: bool,
    pub shortest: f64,
    pub traveled: f64,
    pub spl_term: f64,
    pub steps: usize,
    pub status: String,
}

pub fn sr(results: &[EpisodeResult]) -> Result<f64, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyResultSet);
    }
    Ok(100.0 * results.iter().filter(|r| r.success).count() as f64 / results.len() as f64)
}

pub fn spl(results: &[EpisodeResult]) -> Result<f64, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyResultSet);
    }
    Ok(100.0 * results.iter().map(|r| r.spl_term).sum::<f64>() / results.len() as f64)
}

/// One unit of evaluation: a start pose, the sub-tasks to execute and the
/// goal pose the episode is judged against.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem {
    pub id: String,
    pub scene_id: String,
    pub start: Pose,
    pub subtasks: Vec<SubTask>,
    pub goal: Pose,
    /// Seeds the navigator's randomness together with `stream`.
    pub seed: u64,
    pub stream: u64,
}

impl EvalItem {
    /// The episode's own (action, landmark) as the single sub-task.
    pub fn from_episode(ep: &Episode) -> Self {
        let subtask = SubTask::new(ep.action, &ep.landmark).unwrap_or_else(|_| SubTask {
            action: ep.action,
            landmark: ep.landmark.clone(),
            landmark_kind: crate::parser::LandmarkKind::for_action(ep.action),
        });
        Self {
            id: ep.id.to_string(),
            scene_id: ep.scene_id.clone(),
            start: ep.start,
            subtasks: vec![subtask],
            goal: ep.goal,
            seed: ep.seed,
            stream: ep.id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub executor: ExecutorConfig,
    pub scoring: Scoring,
    pub rule: SuccessRule,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            executor: ExecutorConfig::default(),
            scoring: Scoring::Goal,
            rule: SuccessRule::StopRequired,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    pub options: EvalOptions,
    pub count: usize,
    pub sr: f64,
    pub spl: f64,
    pub episodes: Vec<EpisodeResult>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

fn status_name(status: &Status) -> String {
    match status {
        Status::AllSubtasksDone => "all-subtasks-done".into(),
        Status::EpisodeBudgetExhausted => "episode-budget-exhausted".into(),
        Status::Error { subtask_index, message } => format!("error at sub-task {subtask_index}: {message}"),
    }
}

/// Runs and scores one item. A missing scene yields a failed row rather than
/// an error.
pub fn run_item(
    scenes: &HashMap<String, &Scene>,
    item: &EvalItem,
    policy: PolicyKind,
    options: &EvalOptions,
) -> (EpisodeResult, Option<Trajectory>) {
    let Some(scene) = scenes.get(&item.scene_id) else {
        let row = EpisodeResult {
            id: item.id.clone(),
            success: false,
            shortest: 0.0,
            traveled: 0.0,
            spl_term: 0.0,
            steps: 0,
            status: format!("error: unknown scene {:?}", item.scene_id),
        };
        return (row, None);
    };
    let mut nav = policy.build(item.seed, item.stream);
    let traj = execute_instruction(scene, item.id.clone(), item.start, &item.subtasks, &mut nav, &options.executor);
    let radius = options.executor.success_radius;
    let success = match options.scoring {
        Scoring::Goal => episode_success(scene, &traj, &item.goal, radius, options.rule),
        Scoring::Subtask => subtasks_success(scene, &traj, radius, options.rule),
    };
    let field = GoalField::new(scene, item.goal);
    let shortest = field.dtg(item.start.position);
    let traveled = traj.traveled();
    let row = EpisodeResult {
        id: item.id.clone(),
        success,
        shortest,
        traveled,
        spl_term: spl_term(success, shortest, traveled),
        steps: traj.steps.len(),
        status: status_name(&traj.status),
    };
    (row, Some(traj))
}

/// Rows come back in input order whatever the execution mode.
pub fn evaluate_with_traces(
    scenes: &[Scene],
    items: &[EvalItem],
    policy: PolicyKind,
    options: &EvalOptions,
    mode: Execution,
) -> Result<(EvalReport, Vec<Option<Trajectory>>), MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::EmptyResultSet);
    }
    let by_id: HashMap<String, &Scene> = scenes.iter().map(|s| (s.id().to_string(), s)).collect();
    let (episodes, traces): (Vec<_>, Vec<_>) = par::map(mode, items, |item| run_item(&by_id, item, policy, options))
        .into_iter()
        .unzip();
    let report = EvalReport {
        policy: policy.name().to_string(),
        options: *options,
        count: episodes.len(),
        sr: sr(&episodes)?,
        spl: spl(&episodes)?,
        episodes,
    };
    Ok((report, traces))
}

pub fn evaluate(
    scenes: &[Scene],
    items: &[EvalItem],
    policy: PolicyKind,
    options: &EvalOptions,
    mode: Execution,
) -> Result<EvalReport, MetricsError> {
    evaluate_with_traces(scenes, items, policy, options, mode).map(|(r, _)| r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::generate_dataset;
    use crate::fixtures::{fixture, FixtureKind};
    use crate::geometry::WorldPoint;
    use crate::nav::{Navigator, NavError, Observation, StepRecord};

    fn row(success: bool, shortest: f64, traveled: f64) -> EpisodeResult {
        EpisodeResult {
            id: String::new(),
            success,
            shortest,
            traveled,
            spl_term: spl_term(success, shortest, traveled),
            steps: 0,
            status: String::new(),
        }
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn csr_matches_published_rows() {
        // 1 - |a-b|/max(a,b), in percent, worked by hand.
        assert!(close(csr(35.0, 10.0), 28.6, 0.1));
        assert!(close(csr(38.9, 15.0), 38.6, 0.1));
        assert!(close(csr(19.3, 14.2), 73.6, 0.1));
        assert!(close(csr(7.1, 9.1), 77.8, 0.3));
        assert_eq!(csr(0.0, 6.0), 0.0);
    }

    #[test]
    fn csr_symmetry_and_identity() {
        for (a, b) in [(1.0, 2.0), (35.0, 10.0), (0.0, 3.0)] {
            assert_eq!(csr(a, b), csr(b, a));
        }
        assert_eq!(csr(42.0, 42.0), 100.0);
        assert_eq!(csr(0.0, 0.0), 100.0);
    }

    #[test]
    fn spl_terms() {
        assert_eq!(spl_term(true, 4.0, 4.0), 1.0);
        assert_eq!(spl_term(false, 4.0, 4.0), 0.0);
        assert_eq!(spl_term(true, 4.0, 8.0), 0.5);
        assert_eq!(spl_term(true, 0.0, 0.0), 1.0);
        // Shorter than shortest (grid vs continuous) is capped at 1.
        assert_eq!(spl_term(true, 4.0, 3.0), 1.0);
    }

    #[test]
    fn aggregates_and_empty_set() {
        assert_eq!(sr(&[]), Err(MetricsError::EmptyResultSet));
        assert_eq!(spl(&[]), Err(MetricsError::EmptyResultSet));
        let rows = [row(true, 2.0, 4.0), row(false, 2.0, 2.0)];
        assert_eq!(sr(&rows).unwrap(), 50.0);
        assert_eq!(spl(&rows).unwrap(), 25.0);
        assert!(spl(&rows).unwrap() <= sr(&rows).unwrap());
    }

    fn stopped_at(p: WorldPoint, stop: bool, status: Status) -> Trajectory {
        let pose = Pose::new(p, 0.0);
        Trajectory {
            id: "t".into(),
            start: pose,
            subtasks: Vec::new(),
            steps: vec![StepRecord {
                subtask_index: 0,
                action: if stop { StepAction::Stop } else { StepAction::Forward },
                pose_before: pose,
                pose_after: pose,
                dtg: None,
                atg: None,
                reward: None,
            }],
            status,
        }
    }

    #[test]
    fn success_radius_and_stop_rule() {
        let scene = fixture(FixtureKind::Corridor);
        let grid = scene.grid();
        let y = grid.grid_to_world(grid.free_cells().next().unwrap()).y;
        let row_cells: Vec<WorldPoint> = grid
            .free_cells()
            .map(|c| grid.grid_to_world(c))
            .filter(|p| (p.y - y).abs() < 1e-9)
            .collect();
        let a = row_cells[0];
        let near = *row_cells.iter().find(|p| close(p.distance(&a), 2.75, 1e-9)).unwrap();
        let exact = *row_cells.iter().find(|p| close(p.distance(&a), 3.0, 1e-9)).unwrap();
        let far = *row_cells.iter().find(|p| close(p.distance(&a), 3.25, 1e-9)).unwrap();
        let goal = Pose::new(a, 0.0);
        let done = Status::AllSubtasksDone;
        assert!(episode_success(&scene, &stopped_at(near, true, done.clone()), &goal, 3.0, SuccessRule::StopRequired));
        assert!(episode_success(&scene, &stopped_at(exact, true, done.clone()), &goal, 3.0, SuccessRule::StopRequired));
        assert!(!episode_success(&scene, &stopped_at(far, true, done), &goal, 3.0, SuccessRule::StopRequired));
        let unstopped = stopped_at(a.lerp(&near, 0.1), false, Status::EpisodeBudgetExhausted);
        assert!(!episode_success(&scene, &unstopped, &goal, 3.0, SuccessRule::StopRequired));
        assert!(episode_success(&scene, &unstopped, &goal, 3.0, SuccessRule::Lenient));
    }

    struct StopAtOnce;

    impl Navigator for StopAtOnce {
        fn step(&mut self, _obs: &Observation<'_>) -> Result<StepAction, NavError> {
            Ok(StepAction::Stop)
        }
    }

    #[test]
    fn immediate_stop_far_from_goals_scores_zero() {
        let scene = fixture(FixtureKind::TwoRoom);
        let eps = generate_dataset(&scene, ActionKind::GoTo, 20, 5).unwrap();
        let mut rows = Vec::new();
        for ep in eps.iter().filter(|e| e.start.position.distance(&e.goal.position) > 4.0) {
            let item = EvalItem::from_episode(ep);
            let traj = execute_instruction(&scene, "x", item.start, &item.subtasks, &mut StopAtOnce, &ExecutorConfig::default());
            let ok = episode_success(&scene, &traj, &item.goal, 3.0, SuccessRule::StopRequired);
            rows.push(row(ok, 5.0, traj.traveled()));
        }
        assert!(!rows.is_empty());
        assert_eq!(sr(&rows).unwrap(), 0.0);
        assert_eq!(spl(&rows).unwrap(), 0.0);
    }

    #[test]
    fn evaluation_is_order_and_mode_independent() {
        let scenes = vec![fixture(FixtureKind::TwoRoom)];
        let items: Vec<EvalItem> = generate_dataset(&scenes[0], ActionKind::GoTo, 12, 9)
            .unwrap()
            .iter()
            .map(EvalItem::from_episode)
            .collect();
        let opts = EvalOptions::default();
        let a = evaluate(&scenes, &items, PolicyKind::Greedy, &opts, Execution::Sequential).unwrap();
        let b = evaluate(&scenes, &items, PolicyKind::Greedy, &opts, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        let mut reversed = items.clone();
        reversed.reverse();
        let mut c = evaluate(&scenes, &reversed, PolicyKind::Greedy, &opts, Execution::Parallel).unwrap();
        c.episodes.reverse();
        assert_eq!(a.episodes, c.episodes);
        assert_eq!(a.sr, c.sr);
        assert!(a.spl <= a.sr);
    }

    #[test]
    fn empty_item_set_is_an_error() {
        let scenes = vec![fixture(FixtureKind::TwoRoom)];
        let r = evaluate(&scenes, &[], PolicyKind::Oracle, &EvalOptions::default(), Execution::Sequential);
        assert_eq!(r, Err(MetricsError::EmptyResultSet));
    }

    #[test]
    fn unknown_scene_is_a_failed_row() {
        let scenes = vec![fixture(FixtureKind::TwoRoom)];
        let mut item = EvalItem::from_episode(&generate_dataset(&scenes[0], ActionKind::GoTo, 1, 1).unwrap()[0]);
        item.scene_id = "nowhere".into();
        let r = evaluate(&scenes, &[item], PolicyKind::Oracle, &EvalOptions::default(), Execution::Sequential).unwrap();
        assert!(!r.episodes[0].success);
        assert!(r.episodes[0].status.contains("unknown scene"));
    }
}
