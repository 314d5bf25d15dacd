//! `actnav` command-line harness.
//!
//! Exit codes: 0 ok, 2 episode sampling failed, 3 language-model failure,
//! 4 unreadable trace or failed plot, 1 anything else.

mod config;

use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use actnav::episode::{check_episode, generate_dataset_with, read_dataset, write_dataset, ActionKind, DatasetHeader};
use actnav::fixtures::{FixtureKind, FixtureSpec};
use actnav::geometry::{Pose, WorldPoint};
use actnav::llm::{FixtureStore, LlmClient, RemoteEncoder, TextEncoder, TrigramEncoder};
use actnav::metrics::{
    csr, episode_success, evaluate_with_traces, EvalItem, EvalOptions, EvalReport, Scoring, SuccessRule,
};
use actnav::nav::{execute_instruction, read_trace, write_trace, ExecutorConfig, PolicyKind, Trajectory};
use actnav::par::Execution;
use actnav::parser::{
    parse_instruction, parse_llm_output, shipped_corpus, shipped_llm_fixtures, load_corpus, ActionLexicon,
    InstructionParser, ParseError, ParserKind, PromptStyle, SubTask,
};
use actnav::plot::render_svg;
use actnav::reward::{annotate, RewardConfig};
use actnav::scene::{load_scene, Scene};

use config::FileConfig;

const EXIT_OTHER: u8 = 1;
const EXIT_SAMPLING: u8 = 2;
const EXIT_LLM: u8 = 3;
const EXIT_TRACE: u8 = 4;

/// An error with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: EXIT_OTHER,
            error: e.into(),
        }
    }
}

trait WithCode<T> {
    fn code(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> WithCode<T> for Result<T, E> {
    fn code(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

type Outcome = Result<(), Failure>;

#[derive(Parser)]
#[command(name = "actnav", version, about = "Action-aware instruction navigation harness")]
struct Cli {
    /// Seed for sampling and stochastic policies (default 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// File of key=value defaults; explicit flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run batch work on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scene file utilities.
    #[command(subcommand)]
    Scene(SceneCmd),
    /// Procedural fixture scenes.
    #[command(subcommand)]
    Fixture(FixtureCmd),
    /// Episode datasets.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Decompose instructions into (action, landmark) sub-tasks.
    Parse(ParseArgs),
    /// Execute one instruction or a dataset and write traces.
    Run(RunArgs),
    /// Score a policy on datasets, or compare two reports.
    Eval(EvalArgs),
    /// Render a trace as SVG.
    Plot(PlotArgs),
}

#[derive(Subcommand)]
enum SceneCmd {
    /// Load a scene, check its invariants and summarize it.
    Validate { path: PathBuf },
}

#[derive(Subcommand)]
enum FixtureCmd {
    Generate {
        /// corridor, two-room, four-room-ring or exit-trap.
        #[arg(long)]
        kind: FixtureKind,
        /// Characteristic size in meters.
        #[arg(long)]
        size: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum DatasetCmd {
    Generate {
        /// Fixture name or scene file.
        #[arg(long)]
        scene: String,
        #[arg(long)]
        action: ActionKind,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone, Default)]
struct ParserOpts {
    #[arg(long)]
    parser: Option<ParserKind>,
    #[arg(long)]
    prompt_style: Option<PromptStyle>,
    /// Offline completions (JSONL); `shipped` selects the bundled set.
    #[arg(long)]
    llm_fixtures: Option<String>,
    /// Replacement action lexicon (TSV).
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Args)]
struct ParseArgs {
    #[arg(long, conflicts_with = "corpus", required_unless_present = "corpus")]
    instruction: Option<String>,
    /// Labeled corpus (JSONL) to score; `shipped` selects the bundled one.
    #[arg(long)]
    corpus: Option<String>,
    #[command(flatten)]
    parser: ParserOpts,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct ExecOpts {
    #[arg(long)]
    policy: Option<PolicyKind>,
    /// Per-sub-task step budget (100; 50 for long instructions).
    #[arg(long)]
    max_subtask_steps: Option<usize>,
    #[arg(long)]
    max_episode_steps: Option<usize>,
    /// Meters.
    #[arg(long)]
    success_radius: Option<f64>,
    /// goal (distance to the goal pose) or subtask (per-kind predicates).
    #[arg(long)]
    scoring: Option<Scoring>,
    /// Count reaching the goal without an explicit Stop as success.
    #[arg(long)]
    lenient_success: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Fixture name or scene file; defaults to the dataset's scene.
    #[arg(long)]
    scene: Option<String>,
    #[arg(long, conflicts_with_all = ["instruction", "subtasks"])]
    dataset: Option<PathBuf>,
    /// Free-form instruction, decomposed with the selected parser.
    #[arg(long, conflicts_with = "subtasks")]
    instruction: Option<String>,
    /// Pre-decomposed sub-tasks, e.g. "(Exit, bedroom); (GoTo, sofa)".
    #[arg(long)]
    subtasks: Option<String>,
    /// Start pose "x,y[,heading_degrees]".
    #[arg(long)]
    start: Option<String>,
    /// Goal pose "x,y[,heading_degrees]"; enables rewards and success.
    #[arg(long)]
    goal: Option<String>,
    #[command(flatten)]
    exec: ExecOpts,
    #[command(flatten)]
    parser: ParserOpts,
    /// Trace file for a single run (default stdout).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Directory receiving one trace per dataset episode.
    #[arg(long)]
    traces: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: Vec<PathBuf>,
    /// Scenes the datasets refer to (fixture names or files); by default
    /// each dataset's scene id is taken as a fixture name.
    #[arg(long)]
    scene: Vec<String>,
    #[command(flatten)]
    exec: ExecOpts,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory receiving one trace per episode.
    #[arg(long)]
    traces: Option<PathBuf>,
    #[arg(long, requires = "report_b", conflicts_with = "dataset")]
    report_a: Option<PathBuf>,
    #[arg(long, requires = "report_a")]
    report_b: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Fixture name or scene file; defaults to the trace's scene id.
    #[arg(long)]
    scene: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Ctx {
    seed: u64,
    mode: Execution,
    file: FileConfig,
}

impl Ctx {
    fn executor(&self, o: &ExecOpts) -> Result<EvalOptions, Failure> {
        let executor = ExecutorConfig {
            m_s: self.file.pick(o.max_subtask_steps, "max_subtask_steps", 100)?,
            m_e: self.file.pick(o.max_episode_steps, "max_episode_steps", 500)?,
            success_radius: self.file.pick(o.success_radius, "success_radius", 3.0)?,
        };
        executor.validate()?;
        let rule = if self.file.switch(o.lenient_success, "lenient_success")? {
            SuccessRule::Lenient
        } else {
            SuccessRule::StopRequired
        };
        Ok(EvalOptions {
            executor,
            scoring: self.file.pick(o.scoring, "scoring", Scoring::Goal)?,
            rule,
        })
    }

    fn policy(&self, o: &ExecOpts) -> Result<PolicyKind, Failure> {
        Ok(self.file.pick(o.policy, "policy", PolicyKind::Oracle)?)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cli: Cli) -> Outcome {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let sequential = file.switch(cli.sequential, "sequential")?;
    let ctx = Ctx {
        seed: file.pick(cli.seed, "seed", 0)?,
        mode: if sequential { Execution::Sequential } else { Execution::default() },
        file,
    };
    match cli.command {
        Command::Scene(SceneCmd::Validate { path }) => scene_validate(&path),
        Command::Fixture(FixtureCmd::Generate { kind, size, out }) => fixture_generate(&ctx, kind, size, out.as_deref()),
        Command::Dataset(DatasetCmd::Generate { scene, action, count, out }) => {
            dataset_generate(&ctx, &scene, action, count, out.as_deref())
        }
        Command::Parse(args) => parse(&ctx, &args),
        Command::Run(args) => run(&ctx, &args),
        Command::Eval(args) => eval(&ctx, &args),
        Command::Plot(args) => plot(&args),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// A fixture name (default size and seed) or a scene file.
fn resolve_scene(arg: &str) -> anyhow::Result<Scene> {
    if let Ok(kind) = arg.parse::<FixtureKind>() {
        return Ok(FixtureSpec::new(kind).generate()?);
    }
    let path = Path::new(arg);
    if !path.exists() {
        bail!("{arg:?} is neither a fixture name (corridor, two-room, four-room-ring, exit-trap) nor a scene file");
    }
    Ok(load_scene(&read(path)?).with_context(|| format!("loading scene {arg}"))?)
}

fn scene_validate(path: &Path) -> Outcome {
    let scene = load_scene(&read(path)?).with_context(|| format!("invalid scene {}", path.display()))?;
    let grid = scene.grid();
    println!("scene {}: {}x{} cells at {} m, {} free", scene.id(), grid.width(), grid.height(), grid.resolution(), grid.free_count());
    for r in scene.regions() {
        println!("  region {} ({}): {} entrance(s)", r.id, r.label, r.entrances.len());
    }
    println!("  {} object(s)", scene.objects().len());
    Ok(())
}

fn fixture_generate(ctx: &Ctx, kind: FixtureKind, size: Option<f64>, out: Option<&Path>) -> Outcome {
    let spec = FixtureSpec {
        kind,
        size: size.unwrap_or(kind.default_size()),
        seed: ctx.seed,
    };
    let scene = spec.generate()?;
    let text = serde_json::to_string_pretty(&scene.to_document())? + "\n";
    emit(out, &text)
}

fn dataset_generate(ctx: &Ctx, scene: &str, kind: ActionKind, count: usize, out: Option<&Path>) -> Outcome {
    let scene = resolve_scene(scene)?;
    let episodes = generate_dataset_with(&scene, kind, count, ctx.seed, ctx.mode).code(EXIT_SAMPLING)?;
    let failures: Vec<String> = episodes
        .iter()
        .filter_map(|ep| check_episode(&scene, ep).err().map(|e| format!("episode {}: {e}", ep.id)))
        .collect();
    let header = DatasetHeader {
        scene_id: scene.id().to_string(),
        kind,
        seed: ctx.seed,
        count: episodes.len(),
    };
    emit(out, &write_dataset(&header, &episodes))?;
    eprintln!(
        "{count} {kind} episode(s) on {}: invariants {}/{} pass",
        scene.id(),
        episodes.len() - failures.len(),
        episodes.len()
    );
    if let Some(first) = failures.first() {
        return Err(anyhow!("{} episode(s) violate their invariants; first: {first}", failures.len()).into());
    }
    Ok(())
}

struct ParserSetup {
    kind: ParserKind,
    style: PromptStyle,
    client: Option<LlmClient>,
    lexicon: ActionLexicon,
    encoder: Box<dyn TextEncoder>,
}

impl ParserSetup {
    fn new(ctx: &Ctx, o: &ParserOpts) -> Result<Self, Failure> {
        let kind = ctx.file.pick(o.parser, "parser", ParserKind::Heuristic)?;
        let style = ctx.file.pick(o.prompt_style, "prompt_style", PromptStyle::Both)?;
        let fixtures: Option<String> = match &o.llm_fixtures {
            Some(f) => Some(f.clone()),
            None => ctx.file.get("llm_fixtures")?,
        };
        let client = match (kind, fixtures) {
            (ParserKind::Heuristic, _) => None,
            (ParserKind::Llm, Some(f)) if f == "shipped" => Some(LlmClient::with_fixtures(shipped_llm_fixtures())),
            (ParserKind::Llm, Some(f)) => Some(LlmClient::with_fixtures(FixtureStore::load(Path::new(&f)).code(EXIT_LLM)?)),
            (ParserKind::Llm, None) => Some(
                LlmClient::from_env()
                    .ok_or_else(|| anyhow!("llm parser needs --llm-fixtures or a completion endpoint in the environment"))
                    .code(EXIT_LLM)?,
            ),
        };
        let lexicon = match &o.lexicon {
            Some(p) => ActionLexicon::parse(&read(p)?)?,
            None => ActionLexicon::shipped(),
        };
        let encoder: Box<dyn TextEncoder> = match RemoteEncoder::from_env() {
            Some(remote) => Box::new(remote),
            None => Box::new(TrigramEncoder),
        };
        Ok(Self {
            kind,
            style,
            client,
            lexicon,
            encoder,
        })
    }

    fn parse(&self, instruction: &str) -> Result<Vec<SubTask>, Failure> {
        parse_instruction(instruction, self.kind, self.style, self.client.as_ref(), self.encoder.as_ref(), &self.lexicon)
            .map(|p| p.subtasks)
            .map_err(|e| {
                let code = if matches!(e, ParseError::Llm(_)) { EXIT_LLM } else { EXIT_OTHER };
                Failure { code, error: e.into() }
            })
    }
}

fn subtask_lines(subtasks: &[SubTask]) -> String {
    subtasks.iter().map(|s| format!("{s}\n")).collect()
}

fn parse(ctx: &Ctx, args: &ParseArgs) -> Outcome {
    let setup = ParserSetup::new(ctx, &args.parser)?;
    if let Some(instruction) = &args.instruction {
        return emit(args.out.as_deref(), &subtask_lines(&setup.parse(instruction)?));
    }
    let corpus = match args.corpus.as_deref() {
        Some("shipped") | None => shipped_corpus(),
        Some(path) => load_corpus(&read(Path::new(path))?).with_context(|| format!("corpus {path}"))?,
    };
    let mut text = String::new();
    let mut hits = 0;
    for rec in &corpus {
        let got = setup.parse(&rec.instruction)?;
        let ok = rec.matches(&got);
        hits += usize::from(ok);
        let shown: Vec<String> = got.iter().map(|s| s.to_string()).collect();
        text.push_str(&format!("{}\t{}\t{}\n", if ok { "ok" } else { "MISS" }, rec.instruction, shown.join(" ")));
    }
    let rate = if corpus.is_empty() { 0.0 } else { 100.0 * hits as f64 / corpus.len() as f64 };
    text.push_str(&format!("exact-match: {hits}/{} ({rate:.1}%)\n", corpus.len()));
    emit(args.out.as_deref(), &text)
}

fn parse_pose(text: &str) -> anyhow::Result<Pose> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("pose {text:?} must be x,y[,heading_degrees]"))?;
    match parts.as_slice() {
        [x, y] => Ok(Pose::new(WorldPoint::new(*x, *y), 0.0)),
        [x, y, h] => Ok(Pose::new(WorldPoint::new(*x, *y), h.to_radians())),
        _ => bail!("pose {text:?} must be x,y[,heading_degrees]"),
    }
}

fn explicit_subtasks(text: &str, setup: &ParserSetup) -> anyhow::Result<Vec<SubTask>> {
    let lines = text.replace(';', "\n");
    let raw = parse_llm_output(&lines)?;
    let p = InstructionParser {
        lexicon: &setup.lexicon,
        encoder: setup.encoder.as_ref(),
    };
    Ok(p.canonicalize(&raw)?)
}

fn annotated_trace(scene: &Scene, goal: Option<Pose>, mut traj: Trajectory) -> String {
    if let Some(goal) = goal {
        annotate(scene, &mut traj, goal, &RewardConfig::default());
    }
    write_trace(scene.id(), goal, &traj)
}

fn run(ctx: &Ctx, args: &RunArgs) -> Outcome {
    let options = ctx.executor(&args.exec)?;
    let policy = ctx.policy(&args.exec)?;
    if let Some(dataset) = &args.dataset {
        let (header, episodes) = read_dataset(&read(dataset)?).with_context(|| format!("dataset {}", dataset.display()))?;
        let scene = resolve_scene(args.scene.as_deref().unwrap_or(&header.scene_id))?;
        let items: Vec<EvalItem> = episodes.iter().map(EvalItem::from_episode).collect();
        if items.is_empty() {
            eprintln!("dataset is empty; nothing to run");
            return Ok(());
        }
        let scenes = std::slice::from_ref(&scene);
        let (report, traces) = evaluate_with_traces(scenes, &items, policy, &options, ctx.mode)?;
        if let Some(dir) = &args.traces {
            write_traces(dir, &scene, &items, traces)?;
        }
        eprintln!("{} episode(s), policy {policy}: SR {:.1}% SPL {:.1}%", report.count, report.sr, report.spl);
        return Ok(());
    }
    let scene_arg = args.scene.as_deref().ok_or_else(|| anyhow!("run needs --scene with --instruction/--subtasks"))?;
    let scene = resolve_scene(scene_arg)?;
    let setup = ParserSetup::new(ctx, &args.parser)?;
    let subtasks = match (&args.instruction, &args.subtasks) {
        (Some(i), _) => setup.parse(i)?,
        (None, Some(s)) => explicit_subtasks(s, &setup)?,
        (None, None) => return Err(anyhow!("run needs exactly one of --dataset, --instruction or --subtasks").into()),
    };
    let start = parse_pose(args.start.as_deref().ok_or_else(|| anyhow!("run needs --start x,y[,heading]"))?)?;
    let goal = args.goal.as_deref().map(parse_pose).transpose()?;
    let mut nav = policy.build(ctx.seed, 0);
    let traj = execute_instruction(&scene, "run", start, &subtasks, &mut nav, &options.executor);
    if let Some(g) = goal {
        let ok = episode_success(&scene, &traj, &g, options.executor.success_radius, options.rule);
        eprintln!("{} step(s), success: {ok}", traj.steps.len());
    } else {
        eprintln!("{} step(s)", traj.steps.len());
    }
    emit(args.trace.as_deref(), &annotated_trace(&scene, goal, traj))
}

fn write_traces(dir: &Path, scene: &Scene, items: &[EvalItem], traces: Vec<Option<Trajectory>>) -> Outcome {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (item, traj) in items.iter().zip(traces) {
        let Some(traj) = traj else { continue };
        let path = dir.join(format!("{}-{}.jsonl", item.scene_id, item.id));
        std::fs::write(&path, annotated_trace(scene, Some(item.goal), traj))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn report_sr(path: &Path) -> anyhow::Result<f64> {
    let v: serde_json::Value = serde_json::from_str(&read(path)?).with_context(|| format!("report {}", path.display()))?;
    v.get("sr")
        .and_then(|s| s.as_f64())
        .ok_or_else(|| anyhow!("report {} has no numeric \"sr\" field", path.display()))
}

struct Pct(f64);

impl fmt::Display for Pct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}%", self.0)
    }
}

fn eval(ctx: &Ctx, args: &EvalArgs) -> Outcome {
    if let (Some(a), Some(b)) = (&args.report_a, &args.report_b) {
        let (sa, sb) = (report_sr(a)?, report_sr(b)?);
        println!("SR a: {}  SR b: {}  CSR: {}", Pct(sa), Pct(sb), Pct(csr(sa, sb)));
        return Ok(());
    }
    if args.dataset.is_empty() {
        return Err(anyhow!("eval needs --dataset (one or more) or --report-a/--report-b").into());
    }
    let options = ctx.executor(&args.exec)?;
    let policy = ctx.policy(&args.exec)?;
    let mut scenes: Vec<Scene> = args.scene.iter().map(|s| resolve_scene(s)).collect::<anyhow::Result<_>>()?;
    let mut reports: Vec<(String, EvalReport)> = Vec::new();
    for path in &args.dataset {
        let (header, episodes) = read_dataset(&read(path)?).with_context(|| format!("dataset {}", path.display()))?;
        if !scenes.iter().any(|s| s.id() == header.scene_id) {
            scenes.push(resolve_scene(&header.scene_id)?);
        }
        let items: Vec<EvalItem> = episodes.iter().map(EvalItem::from_episode).collect();
        let (report, traces) = evaluate_with_traces(&scenes, &items, policy, &options, ctx.mode)
            .with_context(|| format!("dataset {}", path.display()))?;
        if let Some(dir) = &args.traces {
            let scene = scenes.iter().find(|s| s.id() == header.scene_id).expect("resolved above");
            write_traces(dir, scene, &items, traces)?;
        }
        eprintln!("{}: {} episode(s), SR {} SPL {}", path.display(), report.count, Pct(report.sr), Pct(report.spl));
        reports.push((path.display().to_string(), report));
    }
    let text = if reports.len() == 1 {
        reports[0].1.to_json()
    } else {
        let mut pairs = Vec::new();
        for i in 0..reports.len() {
            for j in i + 1..reports.len() {
                let value = csr(reports[i].1.sr, reports[j].1.sr);
                eprintln!("CSR {} vs {}: {}", reports[i].0, reports[j].0, Pct(value));
                pairs.push(json!({"a": reports[i].0, "b": reports[j].0, "csr": value}));
            }
        }
        let datasets: Vec<_> = reports.iter().map(|(name, r)| json!({"dataset": name, "report": r})).collect();
        serde_json::to_string_pretty(&json!({"datasets": datasets, "csr": pairs}))? + "\n"
    };
    emit(args.out.as_deref(), &text)
}

fn plot(args: &PlotArgs) -> Outcome {
    let text = read(&args.trace).code(EXIT_TRACE)?;
    let trace = read_trace(&text)
        .with_context(|| format!("trace {}", args.trace.display()))
        .code(EXIT_TRACE)?;
    let scene = resolve_scene(args.scene.as_deref().unwrap_or(&trace.scene_id))?;
    let svg = render_svg(&scene, &trace.scene_id, &trace.trajectory).code(EXIT_TRACE)?;
    emit(args.out.as_deref(), &svg)
}
