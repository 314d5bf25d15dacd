use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::episode::{generate_dataset, ActionKind};
use crate::fixtures::{fixture, fixture_suite, FixtureKind};
use crate::geometry::{angular_distance, WorldPoint};
use crate::scene::{ObjectInstance, OccupancyGrid};

fn open_room(objects: Vec<ObjectInstance>) -> Scene {
    let mut rows = vec!["#".repeat(20)];
    rows.extend((0..18).map(|_| format!("#{}#", ".".repeat(18))));
    rows.push("#".repeat(20));
    let grid = OccupancyGrid::from_rows(0.25, WorldPoint::new(0.0, 0.0), &rows).unwrap();
    Scene::new("open", grid, Vec::new(), objects).unwrap()
}

fn pose(x: f64, y: f64, heading: f64) -> Pose {
    Pose::new(WorldPoint::new(x, y), heading)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

struct NeverStop;

impl Navigator for NeverStop {
    fn step(&mut self, _obs: &Observation<'_>) -> Result<StepAction, NavError> {
        Ok(StepAction::TurnLeft)
    }
}

/// Never stops and records what it was shown.
struct Watcher {
    seen: Vec<(usize, usize)>,
}

impl Navigator for Watcher {
    fn step(&mut self, obs: &Observation<'_>) -> Result<StepAction, NavError> {
        self.seen.push((obs.subtask_index, obs.steps_in_subtask));
        Ok(StepAction::Forward)
    }
}

fn subtask(kind: ActionKind, landmark: &str) -> SubTask {
    SubTask::new(kind, landmark).unwrap()
}

#[test]
fn twelve_left_turns_are_a_full_circle() {
    let scene = open_room(Vec::new());
    let start = pose(2.0, 2.0, 0.3);
    let mut p = start;
    for _ in 0..12 {
        p = apply_action(&scene, &p, AgentAction::TurnLeft);
    }
    assert!(angular_distance(p.heading, start.heading) < 1e-9);
    assert_eq!(p.position, start.position);
}

#[test]
fn turns_are_thirty_degrees() {
    let scene = open_room(Vec::new());
    let p = apply_action(&scene, &pose(2.0, 2.0, 0.0), AgentAction::TurnRight);
    assert!(close(p.heading, TAU - PI / 6.0));
    let p = apply_action(&scene, &pose(2.0, 2.0, 0.0), AgentAction::TurnLeft);
    assert!(close(p.heading, PI / 6.0));
}

#[test]
fn forward_moves_a_quarter_meter() {
    let scene = open_room(Vec::new());
    let p = apply_action(&scene, &pose(2.0, 2.0, 0.0), AgentAction::Forward);
    assert!(close(p.position.x, 2.25));
    assert!(close(p.position.y, 2.0));
}

#[test]
fn forward_into_wall_is_a_no_op() {
    let scene = open_room(Vec::new());
    // Wall cells start at x = 4.75; the disc edge would cross it.
    let start = pose(4.5, 2.0, 0.0);
    assert_eq!(apply_action(&scene, &start, AgentAction::Forward), start);
    // The swept disc also counts: 0.1 m radius at 4.6 would touch 4.7+.
    let start = pose(4.4, 2.0, 0.0);
    assert_eq!(apply_action(&scene, &start, AgentAction::Forward), start);
}

#[test]
fn stop_leaves_the_pose_alone() {
    let scene = open_room(Vec::new());
    let start = pose(2.0, 2.0, 1.0);
    assert_eq!(apply_action(&scene, &start, AgentAction::Stop), start);
}

#[test]
fn random_actions_never_leave_free_space() {
    let scene = fixture(FixtureKind::FourRoomRing);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let actions = [AgentAction::Forward, AgentAction::Forward, AgentAction::TurnLeft, AgentAction::TurnRight];
    let start = scene.grid().grid_to_world(scene.grid().free_cells().nth(40).unwrap());
    let mut p = Pose::new(start, 0.0);
    for _ in 0..5000 {
        p = apply_action(&scene, &p, actions[rng.random_range(0..4)]);
        assert!(scene.grid().disc_is_clear(p.position, AGENT_RADIUS));
    }
}

#[test]
fn waypoint_follow_examples() {
    let scene = open_room(Vec::new());
    let p = pose(2.0, 2.0, 0.0);
    assert_eq!(waypoint_follow(&scene, &p, WorldPoint::new(3.0, 2.0)), Ok(AgentAction::Forward));
    assert_eq!(waypoint_follow(&scene, &p, WorldPoint::new(1.0, 2.0)), Ok(AgentAction::TurnRight));
    assert_eq!(waypoint_follow(&scene, &p, WorldPoint::new(2.2, 2.1)), Ok(AgentAction::Stop));
    assert_eq!(waypoint_follow(&scene, &p, WorldPoint::new(2.0, 3.0)), Ok(AgentAction::TurnLeft));
    assert_eq!(waypoint_follow(&scene, &p, WorldPoint::new(2.0, 1.0)), Ok(AgentAction::TurnRight));
    // 10° off the heading is inside the dead-band.
    let off = WorldPoint::new(2.0 + 10f64.to_radians().cos(), 2.0 + 10f64.to_radians().sin());
    assert_eq!(waypoint_follow(&scene, &p, off), Ok(AgentAction::Forward));
    assert_eq!(waypoint_follow(&scene, &p, WorldPoint::new(0.1, 0.1)), Err(NavError::Unreachable));
}

fn turning_steps(n: usize) -> (Pose, Vec<StepRecord>) {
    let scene = open_room(Vec::new());
    let start = pose(2.0, 2.0, 0.0);
    let mut steps = Vec::new();
    let mut p = start;
    for _ in 0..n {
        let after = apply_action(&scene, &p, AgentAction::TurnLeft);
        steps.push(StepRecord {
            subtask_index: 0,
            action: StepAction::TurnLeft,
            pose_before: p,
            pose_after: after,
            dtg: None,
            atg: None,
            reward: None,
        });
        p = after;
    }
    (start, steps)
}

#[test]
fn backtrack_examples() {
    let (start, steps) = turning_steps(20);
    assert_eq!(backtrack_pose(start, &steps, 15), steps[5].pose_before);
    assert_eq!(backtrack_pose(start, &steps, 0), steps[19].pose_after);
    let (start, steps) = turning_steps(3);
    assert_eq!(backtrack_pose(start, &steps, 15), start);
    assert_eq!(backtrack_pose(start, &[], 15), start);
}

#[test]
fn empty_instruction_takes_no_steps() {
    let scene = open_room(Vec::new());
    let t = execute_instruction(&scene, "e", pose(2.0, 2.0, 0.0), &[], &mut NeverStop, &ExecutorConfig::default());
    assert!(t.steps.is_empty());
    assert_eq!(t.status, Status::AllSubtasksDone);
}

#[test]
fn never_stopping_uses_the_whole_subtask_budget() {
    let scene = open_room(Vec::new());
    let tasks = [subtask(ActionKind::GoTo, "chair")];
    let t = execute_instruction(&scene, "e", pose(2.0, 2.0, 0.0), &tasks, &mut NeverStop, &ExecutorConfig::default());
    assert_eq!(t.steps.len(), 100);
    assert_eq!(t.status, Status::AllSubtasksDone);
}

#[test]
fn six_unstoppable_subtasks_hit_the_episode_budget() {
    let scene = open_room(Vec::new());
    let tasks = vec![subtask(ActionKind::GoTo, "chair"); 6];
    let t = execute_instruction(&scene, "e", pose(2.0, 2.0, 0.0), &tasks, &mut NeverStop, &ExecutorConfig::default());
    assert_eq!(t.steps.len(), 500);
    assert_eq!(t.status, Status::EpisodeBudgetExhausted);
    assert_eq!(t.steps.last().unwrap().subtask_index, 4);
}

#[test]
fn observations_respect_the_budgets() {
    let scene = open_room(Vec::new());
    let config = ExecutorConfig { m_s: 7, m_e: 30, success_radius: 3.0 };
    let tasks = vec![subtask(ActionKind::GoTo, "chair"); 5];
    let mut w = Watcher { seen: Vec::new() };
    let t = execute_instruction(&scene, "e", pose(2.0, 2.0, 0.0), &tasks, &mut w, &config);
    assert_eq!(w.seen.len(), 30);
    assert!(w.seen.iter().all(|(_, n)| *n < 7));
    assert_eq!(w.seen[7], (1, 0));
    assert_eq!(t.steps.len(), 30);
    for pair in t.steps.windows(2) {
        assert_eq!(pair[0].pose_after, pair[1].pose_before);
    }
}

#[test]
fn navigator_errors_end_the_episode_with_the_index() {
    let scene = open_room(Vec::new());
    let tasks = [subtask(ActionKind::GoTo, "piano")];
    let t = execute_instruction(&scene, "e", pose(2.0, 2.0, 0.0), &tasks, &mut Oracle::new(), &ExecutorConfig::default());
    assert!(matches!(t.status, Status::Error { subtask_index: 0, .. }), "{:?}", t.status);
    assert!(t.steps.is_empty());
}

#[test]
fn config_validation() {
    assert!(ExecutorConfig::default().validate().is_ok());
    let bad = ExecutorConfig { m_s: 0, ..ExecutorConfig::default() };
    assert!(bad.validate().is_err());
    let bad = ExecutorConfig { m_s: 600, ..ExecutorConfig::default() };
    assert!(bad.validate().is_err());
    let bad = ExecutorConfig { success_radius: 0.0, ..ExecutorConfig::default() };
    assert_eq!(bad.validate(), Err(ConfigError::Radius));
}

#[test]
fn exit_from_outside_stops_at_once() {
    let scene = fixture(FixtureKind::TwoRoom);
    let region = &scene.regions()[0];
    let outside = scene
        .grid()
        .free_cells()
        .map(|c| scene.grid().grid_to_world(c))
        .find(|p| scene.region_index_containing(*p).is_none() || scene.region_index_containing(*p) != Some(0))
        .unwrap();
    let tasks = [subtask(ActionKind::Exit, &region.label)];
    let t = execute_instruction(&scene, "e", Pose::new(outside, 0.0), &tasks, &mut Oracle::new(), &ExecutorConfig::default());
    assert_eq!(t.steps.len(), 1);
    assert_eq!(t.steps[0].action, StepAction::Stop);
}

fn run_oracle(scene: &Scene, ep: &crate::episode::Episode) -> Trajectory {
    let tasks = [subtask(ep.action, &ep.landmark)];
    execute_instruction(scene, ep.id.to_string(), ep.start, &tasks, &mut Oracle::new(), &ExecutorConfig::default())
}

#[test]
fn go_past_leaves_the_object_behind() {
    let scene = fixture(FixtureKind::Corridor);
    for ep in generate_dataset(&scene, ActionKind::GoPast, 30, 2).unwrap() {
        let t = run_oracle(&scene, &ep);
        assert!(t.stopped());
        let object = scene
            .objects_labeled(&ep.landmark)
            .map(|o| o.position)
            .min_by(|a, b| a.distance(&ep.start.position).total_cmp(&b.distance(&ep.start.position)))
            .unwrap();
        let positions: Vec<WorldPoint> = std::iter::once(t.start.position)
            .chain(t.steps.iter().map(|s| s.pose_after.position))
            .collect();
        let closest = (0..positions.len())
            .min_by(|a, b| positions[*a].distance(&object).total_cmp(&positions[*b].distance(&object)))
            .unwrap();
        assert!(closest < positions.len() - 1, "episode {}", ep.id);
        // Travel direction: from where the agent started toward the object.
        let dir = ep.start.position.bearing_to(&object);
        let end = *positions.last().unwrap();
        let beyond = (end.x - object.x) * dir.cos() + (end.y - object.y) * dir.sin();
        assert!(beyond >= 1.0, "episode {} ends {beyond} m past the object", ep.id);
    }
}

#[test]
fn go_through_crosses_a_two_door_room() {
    let scene = fixture(FixtureKind::FourRoomRing);
    for ep in generate_dataset(&scene, ActionKind::GoThrough, 30, 5).unwrap() {
        let t = run_oracle(&scene, &ep);
        let (r, region) = scene.region_by_label(&ep.landmark).unwrap();
        let poses: Vec<Pose> = std::iter::once(t.start).chain(t.steps.iter().map(|s| s.pose_after)).collect();
        assert!(poses.iter().any(|p| scene.region_index_containing(p.position) == Some(r)));
        assert_ne!(scene.region_index_containing(t.final_pose().position), Some(r), "episode {}", ep.id);
        // Starts may already be inside, up to the sampler's "near" distance
        // from the entry door.
        for e in &region.entrances {
            let near = poses.iter().any(|p| p.position.distance(&e.midpoint) <= crate::episode::NEAR_DISTANCE);
            assert!(near, "episode {} never near entrance {:?}", ep.id, e.midpoint);
        }
    }
}

#[test]
fn go_into_and_exit_end_on_the_right_side() {
    for scene in fixture_suite() {
        for kind in [ActionKind::GoInto, ActionKind::Exit] {
            let Ok(eps) = generate_dataset(&scene, kind, 25, 8) else { continue };
            for ep in eps {
                let t = run_oracle(&scene, &ep);
                let (r, _) = scene.region_by_label(&ep.landmark).unwrap();
                let inside = scene.region_index_containing(t.final_pose().position) == Some(r);
                assert_eq!(inside, kind == ActionKind::GoInto, "{} {kind} {}", scene.id(), ep.id);
            }
        }
    }
}

#[test]
fn replay_reproduces_every_pose() {
    for scene in fixture_suite() {
        let eps = generate_dataset(&scene, ActionKind::GoTo, 6, 3).unwrap();
        for (i, ep) in eps.iter().enumerate() {
            for policy in PolicyKind::ALL {
                let tasks = [subtask(ActionKind::GoTo, &ep.landmark), subtask(ActionKind::GoPast, &ep.landmark)];
                let mut nav = policy.build(1, i as u64);
                let t = execute_instruction(&scene, "r", ep.start, &tasks, &mut nav, &ExecutorConfig::default());
                let poses = replay(&scene, &t);
                let recorded: Vec<Pose> = t.steps.iter().map(|s| s.pose_after).collect();
                assert_eq!(poses, recorded, "{} {policy}", scene.id());
            }
        }
    }
}

#[test]
fn trace_round_trip() {
    let scene = fixture(FixtureKind::TwoRoom);
    let ep = &generate_dataset(&scene, ActionKind::GoInto, 1, 4).unwrap()[0];
    let t = run_oracle(&scene, ep);
    let text = write_trace(scene.id(), Some(ep.goal), &t);
    assert_eq!(text.lines().count(), t.steps.len() + 2);
    let back = read_trace(&text).unwrap();
    assert_eq!(back.trajectory, t);
    assert_eq!(back.goal, Some(ep.goal));
    assert_eq!(back.scene_id, scene.id());
}

#[test]
fn malformed_traces_are_rejected() {
    assert!(matches!(read_trace(""), Err(TraceError::Missing("header"))));
    assert!(matches!(read_trace("{\"record\":\"nope\"}"), Err(TraceError::Malformed { line: 1, .. })));
    let scene = open_room(Vec::new());
    let t = execute_instruction(&scene, "e", pose(2.0, 2.0, 0.0), &[], &mut NeverStop, &ExecutorConfig::default());
    let text = write_trace("open", None, &t);
    let header_only = text.lines().next().unwrap();
    assert!(matches!(read_trace(header_only), Err(TraceError::Missing("status"))));
}

#[test]
fn policy_names_parse() {
    for p in PolicyKind::ALL {
        assert_eq!(p.name().parse::<PolicyKind>(), Ok(p));
    }
    assert_eq!("GoTo-Only".parse::<PolicyKind>(), Ok(PolicyKind::LandmarkOnly));
    assert!("clip".parse::<PolicyKind>().is_err());
}

#[test]
fn greedy_scores_follow_inverse_distance() {
    let scene = open_room(vec![ObjectInstance {
        label: "lamp".into(),
        position: WorldPoint::new(2.625, 2.125),
    }]);
    // Half a meter straight ahead: 1/(1+0.5).
    let s = visibility_scores(&scene, &pose(2.125, 2.125, 0.0), "lamp");
    assert!(close(s[0], 1.0 / 1.5));
    assert_eq!(&s[1..], &[0.0, 0.0, 0.0]);
    // Behind once the agent turns around.
    let s = visibility_scores(&scene, &pose(2.125, 2.125, PI), "lamp");
    assert!(close(s[2], 1.0 / 1.5));
    // To the left.
    let s = visibility_scores(&scene, &pose(2.125, 2.125, -FRAC_PI_2), "lamp");
    assert!(close(s[1], 1.0 / 1.5));
    assert_eq!(visibility_scores(&scene, &pose(2.125, 2.125, 0.0), "piano"), [0.0; 4]);
}

fn greedy_first_action(scene: &Scene, at: Pose, landmark: &str, seed: u64) -> StepAction {
    let task = subtask(ActionKind::GoTo, landmark);
    let obs = Observation {
        pose: at,
        scene,
        subtask: &task,
        subtask_index: 0,
        steps_in_subtask: 0,
        start: at,
        history: &[],
    };
    Greedy::new(GreedyConfig::default(), ChaCha8Rng::seed_from_u64(seed)).step(&obs).unwrap()
}

#[test]
fn greedy_threshold_is_strict() {
    let scene = open_room(vec![ObjectInstance {
        label: "lamp".into(),
        position: WorldPoint::new(2.625, 2.125),
    }]);
    // 0.5 m: score 0.667, keep going.
    assert_ne!(greedy_first_action(&scene, pose(2.125, 2.125, 0.0), "lamp", 1), StepAction::Stop);
    // 0.25 m: score exactly 0.8, still not above the threshold.
    let s = visibility_scores(&scene, &pose(2.375, 2.125, 0.0), "lamp");
    assert_eq!(s[0], 0.8);
    assert_ne!(greedy_first_action(&scene, pose(2.375, 2.125, 0.0), "lamp", 1), StepAction::Stop);
    // On the landmark's cell: score 1.
    assert_eq!(greedy_first_action(&scene, pose(2.625, 2.125, 0.0), "lamp", 1), StepAction::Stop);
}

#[test]
fn greedy_without_landmark_wanders_reproducibly() {
    let scene = open_room(Vec::new());
    let tasks = [subtask(ActionKind::GoTo, "piano")];
    let run = |seed| {
        let mut nav = Greedy::new(GreedyConfig::default(), ChaCha8Rng::seed_from_u64(seed));
        execute_instruction(&scene, "g", pose(2.0, 2.0, 0.0), &tasks, &mut nav, &ExecutorConfig::default())
    };
    let a = run(3);
    assert_eq!(a, run(3));
    assert_eq!(a.steps.len(), 100);
    assert!(a.traveled() > 1.0);
}

#[test]
fn greedy_backtracks_when_stuck() {
    let scene = open_room(Vec::new());
    let tasks = [subtask(ActionKind::GoTo, "piano")];
    let mut nav = Greedy::new(GreedyConfig::with_backtrack(), ChaCha8Rng::seed_from_u64(3));
    let t = execute_instruction(&scene, "g", pose(2.0, 2.0, 0.0), &tasks, &mut nav, &ExecutorConfig::default());
    let first = t.steps.iter().position(|s| matches!(s.action, StepAction::Backtrack(15))).unwrap();
    // The score never improves from 0, so the first jump comes after the
    // patience window.
    assert_eq!(first, DEFAULT_BACKTRACK);
    let s = &t.steps[first];
    assert_eq!(s.pose_after, t.start);
    assert_eq!(t.traveled(), t.steps.iter().filter(|s| s.action == StepAction::Forward).map(|s| s.pose_before.position.distance(&s.pose_after.position)).sum::<f64>());
}

#[test]
fn greedy_homes_in_on_visible_landmarks() {
    let lamp = WorldPoint::new(3.625, 3.625);
    let scene = open_room(vec![ObjectInstance {
        label: "lamp".into(),
        position: lamp,
    }]);
    let tasks = [subtask(ActionKind::GoTo, "lamp")];
    let mut nav = Greedy::new(GreedyConfig::default(), ChaCha8Rng::seed_from_u64(2));
    let t = execute_instruction(&scene, "g", pose(1.0, 1.0, 0.0), &tasks, &mut nav, &ExecutorConfig::default());
    // Starts 3.7 m away; the strict threshold only stops on the landmark's
    // own cell, but the walk must pass close by.
    let closest = t.steps.iter().map(|s| s.pose_after.position.distance(&lamp)).fold(f64::INFINITY, f64::min);
    assert!(closest <= 0.5, "closest approach {closest}");
    if t.stopped() {
        assert_eq!(scene.grid().world_to_grid(t.final_pose().position), scene.grid().world_to_grid(lamp));
    }
}
