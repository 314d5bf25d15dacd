//! Acceptance checks, one PASS/FAIL line per criterion. Runs as a plain
//! binary so the lines show up in `cargo test` output unconditionally.

use std::time::{Duration, Instant};

use actnav::episode::{check_episode, generate_dataset, generate_dataset_with, write_dataset, ActionKind, DatasetHeader, Sampler};
use actnav::fixtures::{fixture, fixture_suite, FixtureKind};
use actnav::geometry::{GridPoint, Pose, WorldPoint};
use actnav::llm::{LlmClient, TrigramEncoder};
use actnav::metrics::{csr, evaluate, EvalItem, EvalOptions, Scoring};
use actnav::nav::{apply_action, execute_instruction, AgentAction, ExecutorConfig, NavError, Navigator, Observation, PolicyKind, StepAction};
use actnav::par::Execution;
use actnav::parser::{canonicalize_action, parse_instruction, shipped_corpus, shipped_llm_fixtures, ActionLexicon, ParserKind, PromptStyle, SubTask};
use actnav::planner::DistanceField;
use actnav::reward::{annotate, step_reward, GoalField, GoalState, RewardConfig};
use actnav::scene::{Cell, OccupancyGrid, Scene};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, ok: impl Into<String>, fail: impl Into<String>) -> Outcome {
    if cond {
        Ok(ok.into())
    } else {
        Err(fail.into())
    }
}

fn within(limit: Duration, t: Instant) -> Result<Duration, String> {
    let e = t.elapsed();
    if e < limit {
        Ok(e)
    } else {
        Err(format!("took {e:.2?}, limit {limit:?}"))
    }
}

fn c1_csr() -> Outcome {
    let t = Instant::now();
    let rows = [(35.0, 10.0, 28.6, 0.1), (38.9, 15.0, 38.6, 0.1), (19.3, 14.2, 73.6, 0.1), (7.1, 9.1, 77.8, 0.3), (0.0, 6.0, 0.0, 0.1)];
    for (a, b, want, tol) in rows {
        let got = csr(a, b);
        if (got - want).abs() > tol {
            return Err(format!("csr({a}, {b}) = {got:.3}, expected {want} ± {tol}"));
        }
    }
    let e = within(Duration::from_secs(1), t)?;
    Ok(format!("5 rows match, {e:.2?}"))
}

fn c2_dataset_invariants() -> Outcome {
    const PER_KIND: usize = 10_000;
    let t = Instant::now();
    let scenes = fixture_suite();
    let mut summary = Vec::new();
    for kind in ActionKind::ALL {
        let hosts: Vec<&Scene> = scenes.iter().filter(|s| Sampler::new(s).check_resources(kind).is_ok()).collect();
        if hosts.is_empty() {
            return Err(format!("no fixture hosts {kind}"));
        }
        let mut pass = 0;
        for (i, scene) in hosts.iter().enumerate() {
            let n = PER_KIND / hosts.len() + usize::from(i < PER_KIND % hosts.len());
            let eps = generate_dataset_with(scene, kind, n, 1000 + i as u64, Execution::Parallel).map_err(|e| format!("{kind} on {}: {e}", scene.id()))?;
            for ep in &eps {
                check_episode(scene, ep).map_err(|e| format!("{kind} on {} #{}: {e}", scene.id(), ep.id))?;
                pass += 1;
            }
        }
        if pass != PER_KIND {
            return Err(format!("{kind}: only {pass} episodes"));
        }
        summary.push(format!("{kind} {pass}/{PER_KIND}"));
    }
    let e = within(Duration::from_secs(60), t)?;
    Ok(format!("{}, {e:.2?}", summary.join(", ")))
}

fn c3_reward() -> Outcome {
    let cfg = RewardConfig::default();
    let st = |dtg: f64, deg: f64| GoalState { dtg, atg: f64::to_radians(deg) };
    let r = step_reward(st(5.0, 90.0), st(5.0, 90.0), false, &cfg);
    if r.total != -0.01 {
        return Err(format!("stationary step total {}", r.total));
    }
    let r = step_reward(st(2.0, 90.0), st(1.75, 90.0), false, &cfg);
    if r.neg_delta_dtg != 0.25 || r.total != 0.24 {
        return Err(format!("approach step: neg_delta_dtg {} total {}", r.neg_delta_dtg, r.total));
    }
    let r = step_reward(st(0.8, 10.0), st(0.8, 10.0), true, &cfg);
    if r.r_success + r.r_angle_success != 10.0 {
        return Err(format!("terminal bonus {}", r.r_success + r.r_angle_success));
    }

    let scenes = fixture_suite();
    let actions = [AgentAction::Forward, AgentAction::Forward, AgentAction::TurnLeft, AgentAction::TurnRight, AgentAction::Stop];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let scene = &scenes[i % scenes.len()];
        let free: Vec<GridPoint> = scene.grid().free_cells().collect();
        let at = |rng: &mut ChaCha8Rng| scene.grid().grid_to_world(free[rng.random_range(0..free.len())]);
        let start = Pose::new(at(&mut rng), rng.random_range(0.0..std::f64::consts::TAU));
        let goal = Pose::new(at(&mut rng), rng.random_range(0.0..std::f64::consts::TAU));
        let len = rng.random_range(1..=150);
        let mut pose = start;
        let mut steps = Vec::with_capacity(len);
        for _ in 0..len {
            let a = actions[rng.random_range(0..actions.len())];
            let next = apply_action(scene, &pose, a);
            steps.push(actnav::nav::StepRecord {
                subtask_index: 0,
                action: StepAction::from(a),
                pose_before: pose,
                pose_after: next,
                dtg: None,
                atg: None,
                reward: None,
            });
            pose = next;
        }
        let mut traj = execute_instruction(scene, format!("r{i}"), start, &[], &mut Never, &ExecutorConfig::default());
        traj.steps = steps;
        annotate(scene, &mut traj, goal, &cfg);
        let field = GoalField::new(scene, goal);
        let sum: f64 = traj.steps.iter().map(|s| s.reward.as_ref().unwrap().neg_delta_dtg).sum();
        let expected = field.dtg(start.position) - field.dtg(pose.position);
        worst = worst.max((sum - expected).abs());
    }
    check(worst <= 1e-9, format!("3 examples exact; telescoping max error {worst:.1e} over 1000 trajectories"), format!("telescoping error {worst:e}"))
}

/// Bellman–Ford style relaxation to a fixed point over (axis, diagonal) step
/// counts, sharing nothing with the planner.
fn relaxation_oracle(rows: &[Vec<bool>], src: (usize, usize)) -> Vec<Vec<Option<(u32, u32)>>> {
    let (h, w) = (rows.len(), rows[0].len());
    let free = |c: i64, r: i64| r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w && rows[r as usize][c as usize];
    let value = |d: (u32, u32)| d.0 as f64 + d.1 as f64 * std::f64::consts::SQRT_2;
    let mut dist = vec![vec![None; w]; h];
    dist[src.1][src.0] = Some((0, 0));
    loop {
        let mut changed = false;
        for r in 0..h {
            for c in 0..w {
                let Some(d) = dist[r][c] else { continue };
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        if (dr, dc) == (0, 0) {
                            continue;
                        }
                        let (nc, nr) = (c as i64 + dc, r as i64 + dr);
                        if !free(nc, nr) {
                            continue;
                        }
                        let diagonal = dr != 0 && dc != 0;
                        if diagonal && !(free(c as i64 + dc, r as i64) && free(c as i64, r as i64 + dr)) {
                            continue;
                        }
                        let cand = if diagonal { (d.0, d.1 + 1) } else { (d.0 + 1, d.1) };
                        let slot = &mut dist[nr as usize][nc as usize];
                        if slot.is_none_or(|old| value(cand) < value(old) - 1e-9) {
                            *slot = Some(cand);
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            return dist;
        }
    }
}

fn c4_geodesic() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut compared = 0usize;
    for g in 0..50 {
        let (w, h) = (rng.random_range(2..=20), rng.random_range(2..=20));
        let density = rng.random_range(0.0..0.45);
        let rows: Vec<Vec<bool>> = (0..h).map(|_| (0..w).map(|_| !rng.random_bool(density)).collect()).collect();
        let cells = rows.iter().flatten().map(|&f| if f { Cell::Free } else { Cell::Blocked }).collect();
        let grid = OccupancyGrid::new(0.25, WorldPoint::new(0.0, 0.0), w, h, cells).map_err(|e| e.to_string())?;
        let free: Vec<GridPoint> = grid.free_cells().collect();
        if free.is_empty() {
            continue;
        }
        for _ in 0..3 {
            let src = free[rng.random_range(0..free.len())];
            let field = DistanceField::new(&grid, src);
            let oracle = relaxation_oracle(&rows, (src.col, src.row));
            for r in 0..h {
                for c in 0..w {
                    let p = GridPoint::new(c, r);
                    let got = field.cost(p).map(|k| (k.axis, k.diag));
                    if got != oracle[r][c] {
                        return Err(format!("grid {g}: {src:?} -> {p:?}: planner {got:?}, oracle {:?}", oracle[r][c]));
                    }
                    if let Some(path) = field.path_to(p) {
                        for pair in path.windows(2) {
                            let (a, b) = (pair[0], pair[1]);
                            let (dc, dr) = (b.col as i64 - a.col as i64, b.row as i64 - a.row as i64);
                            let corner_ok = dc == 0 || dr == 0 || (rows[a.row][b.col] && rows[b.row][a.col]);
                            if dc.abs() > 1 || dr.abs() > 1 || !rows[b.row][b.col] || !corner_ok {
                                return Err(format!("grid {g}: illegal move {a:?} -> {b:?}"));
                            }
                        }
                    }
                    compared += 1;
                }
            }
        }
    }
    let e = within(Duration::from_secs(30), t)?;
    Ok(format!("{compared} distances identical on 50 grids, {e:.2?}"))
}

fn items_for(scene: &Scene, kind: ActionKind, count: usize, seed: u64) -> Result<Vec<EvalItem>, String> {
    let eps = generate_dataset(scene, kind, count, seed).map_err(|e| e.to_string())?;
    Ok(eps
        .iter()
        .map(|e| {
            let mut item = EvalItem::from_episode(e);
            item.id = format!("{}:{}", scene.id(), e.id);
            item
        })
        .collect())
}

fn c5_oracle_competence() -> Outcome {
    const PER_KIND: usize = 200;
    let scenes = fixture_suite();
    let mut options = EvalOptions::default();
    options.scoring = Scoring::Subtask;
    options.executor.success_radius = 1.0;
    options.executor.m_s = 100;
    let mut summary = Vec::new();
    let mut ok = true;
    for kind in ActionKind::ALL {
        let hosts: Vec<&Scene> = scenes.iter().filter(|s| Sampler::new(s).check_resources(kind).is_ok()).collect();
        let mut items = Vec::new();
        for (i, scene) in hosts.iter().enumerate() {
            let n = PER_KIND / hosts.len() + usize::from(i < PER_KIND % hosts.len());
            items.extend(items_for(scene, kind, n, 50)?);
        }
        let report = evaluate(&scenes, &items, PolicyKind::Oracle, &options, Execution::Parallel).map_err(|e| e.to_string())?;
        ok &= report.count == PER_KIND && report.sr >= 95.0;
        summary.push(format!("{kind} {:.1}% (n={})", report.sr, report.count));
    }
    check(ok, summary.join(", "), summary.join(", "))
}

fn c6_exit_gap() -> Outcome {
    let t = Instant::now();
    let scene = fixture(FixtureKind::ExitTrap);
    let items = items_for(&scene, ActionKind::Exit, 200, 6)?;
    let options = EvalOptions::default();
    let scenes = [scene];
    let sr = |p| evaluate(&scenes, &items, p, &options, Execution::Parallel).map(|r| r.sr).map_err(|e| e.to_string());
    let (oracle, landmark) = (sr(PolicyKind::Oracle)?, sr(PolicyKind::LandmarkOnly)?);
    let e = within(Duration::from_secs(120), t)?;
    let msg = format!("exit oracle {oracle:.1}% vs landmark-only {landmark:.1}% (gap {:.1} pp), {e:.2?}", oracle - landmark);
    check(oracle - landmark >= 20.0, msg.clone(), msg)
}

struct Never;

impl Navigator for Never {
    fn step(&mut self, _: &Observation<'_>) -> Result<StepAction, NavError> {
        Ok(StepAction::TurnLeft)
    }
}

fn c7_budgets() -> Outcome {
    let scene = fixture(FixtureKind::TwoRoom);
    let start = Pose::new(scene.grid().grid_to_world(scene.grid().free_cells().next().unwrap()), 0.0);
    let task = SubTask::new(ActionKind::GoTo, "sofa").unwrap();
    let config = ExecutorConfig { m_s: 100, m_e: 500, ..ExecutorConfig::default() };
    let two = execute_instruction(&scene, "two", start, &vec![task.clone(); 2], &mut Never, &config);
    let per: Vec<usize> = (0..2).map(|k| two.steps.iter().filter(|s| s.subtask_index == k).count()).collect();
    if per != [100, 100] || two.status != actnav::nav::Status::AllSubtasksDone {
        return Err(format!("two sub-tasks: {per:?} steps, {:?}", two.status));
    }
    let six = execute_instruction(&scene, "six", start, &vec![task; 6], &mut Never, &config);
    check(
        six.steps.len() == 500 && six.status == actnav::nav::Status::EpisodeBudgetExhausted,
        "m_s steps per sub-task; 6 sub-tasks stop at 500 with EpisodeBudgetExhausted",
        format!("six sub-tasks: {} steps, {:?}", six.steps.len(), six.status),
    )
}

fn c8_parser() -> Outcome {
    let corpus = shipped_corpus();
    let lexicon = ActionLexicon::shipped();
    let hits = corpus
        .iter()
        .filter(|rec| {
            parse_instruction(&rec.instruction, ParserKind::Heuristic, PromptStyle::Both, None, &TrigramEncoder, &lexicon)
                .is_ok_and(|p| rec.matches(&p.subtasks))
        })
        .count();
    let heuristic = 100.0 * hits as f64 / corpus.len() as f64;

    let entries: Vec<(String, ActionKind)> = lexicon.entries().map(|(p, k)| (p.to_string(), k)).collect();
    let canon = entries.iter().filter(|(p, k)| canonicalize_action(p, &lexicon, &TrigramEncoder).ok() == Some(*k)).count();

    let client = LlmClient::with_fixtures(shipped_llm_fixtures());
    let mut llm_hits = 0;
    for style in PromptStyle::ALL {
        llm_hits += corpus
            .iter()
            .filter(|rec| {
                parse_instruction(&rec.instruction, ParserKind::Llm, style, Some(&client), &TrigramEncoder, &lexicon)
                    .is_ok_and(|p| rec.matches(&p.subtasks))
            })
            .count();
    }
    let llm_total = corpus.len() * PromptStyle::ALL.len();
    let msg = format!(
        "heuristic {hits}/{} ({heuristic:.1}%), lexicon {canon}/{}, llm fixtures {llm_hits}/{llm_total}",
        corpus.len(),
        entries.len()
    );
    check(heuristic >= 80.0 && canon == entries.len() && llm_hits == llm_total, msg.clone(), msg)
}

fn c9_determinism() -> Outcome {
    let scenes = fixture_suite();
    let scene = &scenes[2];
    let dataset = |mode| {
        let eps = generate_dataset_with(scene, ActionKind::GoPast, 300, 9, mode).unwrap();
        let header = DatasetHeader { scene_id: scene.id().to_string(), kind: ActionKind::GoPast, seed: 9, count: eps.len() };
        write_dataset(&header, &eps)
    };
    let runs = [dataset(Execution::Parallel), dataset(Execution::Parallel), dataset(Execution::Sequential)];
    if runs[0] != runs[1] || runs[0] != runs[2] {
        return Err("dataset bytes differ between runs".into());
    }
    let items = items_for(scene, ActionKind::GoPast, 300, 9)?;
    let report = |mode| evaluate(&scenes, &items, PolicyKind::Greedy, &EvalOptions::default(), mode).unwrap().to_json();
    let reports = [report(Execution::Parallel), report(Execution::Parallel), report(Execution::Sequential)];
    check(
        reports[0] == reports[1] && reports[0] == reports[2],
        format!("dataset ({} bytes) and eval report ({} bytes) identical across runs and modes", runs[0].len(), reports[0].len()),
        "eval report bytes differ between runs",
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("csr regression", c1_csr),
        ("dataset invariants", c2_dataset_invariants),
        ("reward", c3_reward),
        ("geodesic oracle equivalence", c4_geodesic),
        ("oracle navigator competence", c5_oracle_competence),
        ("exit vs landmark-only", c6_exit_gap),
        ("executor budgets", c7_budgets),
        ("parser golden suite", c8_parser),
        ("determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("acceptance {}: PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("acceptance {}: FAIL {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
