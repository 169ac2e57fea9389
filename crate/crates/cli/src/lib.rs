//! `radioplan` subcommands. Each one wraps a single library operation.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use radioplan::agent::{
    model_backend, AgentSession, BackendConfig, EventKind, Gazetteer, SessionOptions, ToolEnv,
};
use radioplan::geodata::{fetch_osm, parse_osm, write_atomic, FixtureTransport, GeoBBox, HttpTransport, MapTransport, OsmCache};
use radioplan::grid_doc::GridDocument;
use radioplan::planner::{optimize, random_initial_stations};
use radioplan::project::{ProjectDir, SessionId};
use radioplan::propagation::generate_radio_map;
use radioplan::render::{render_png, RenderOptions};
use radioplan::scene::{build_environment_with, create_grid, HeightRules};
use radioplan::sinr::{compute_sinr_map, coverage_stats, DEFAULT_NOISE_FIGURE_DB, DEFAULT_PL_THRESHOLD_DB, DEFAULT_SINR_THRESHOLD_DB};
use radioplan::{AntennaPattern, BaseStation, CoverageReport, EnvironmentModel, NetworkPlan, PlanningConfig, PropagationConfig};
use radioplan_service::ServiceConfig;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Data(_) => 2,
            Self::Internal(_) => 3,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "radioplan", version, about = "Radio-map generation and base-station planning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Download (or serve from cache) the OSM document for an area.
    FetchOsm(FetchOsm),
    /// Extrude building footprints into a scene.
    BuildEnv(BuildEnv),
    /// Best-server path-loss map.
    Radiomap(Radiomap),
    /// SINR map and coverage report.
    Sinr(Sinr),
    /// Optimize station placement and parameters.
    Plan(Plan),
    /// Interactive prompt loop against a model backend.
    Agent(Agent),
    /// Run the HTTP service.
    Serve(Serve),
}

#[derive(Debug, Args)]
pub struct FetchOsm {
    /// `min_lat,min_lon,max_lat,max_lon`.
    #[arg(long, conflicts_with = "area", required_unless_present = "area", allow_hyphen_values = true)]
    pub bbox: Option<String>,
    /// Named area from the built-in gazetteer.
    #[arg(long)]
    pub area: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Serve requests from `.osm` files in this directory instead of the network.
    #[arg(long, conflicts_with = "base_url")]
    pub fixtures: Option<PathBuf>,
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildEnv {
    #[arg(long)]
    pub osm: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = HeightRules::default().meters_per_level)]
    pub meters_per_level: f64,
    #[arg(long, default_value_t = HeightRules::default().default_height)]
    pub default_height: f64,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// JSON list of stations, or any object with a `stations` list (such as a plan).
    #[arg(long)]
    pub stations: PathBuf,
    /// Cell edge in metres.
    #[arg(long, default_value_t = 5.0)]
    pub resolution: f64,
}

#[derive(Debug, Args)]
pub struct Radiomap {
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub png: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Sinr {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Receiver noise figure, dB.
    #[arg(long, default_value_t = DEFAULT_NOISE_FIGURE_DB)]
    pub nf: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub png: Option<PathBuf>,
    /// Coverage report destination; printed to stdout either way.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_PL_THRESHOLD_DB)]
    pub pl_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_SINR_THRESHOLD_DB)]
    pub sinr_threshold: f64,
}

#[derive(Debug, Args)]
pub struct Plan {
    #[arg(long)]
    pub scene: PathBuf,
    /// Planning configuration JSON; omitted fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Starting stations; defaults to `--initial-count` random ones.
    #[arg(long)]
    pub stations: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub initial_count: usize,
    #[arg(long, default_value_t = 5.0)]
    pub resolution: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Agent {
    /// `mock` or `remote`.
    #[arg(long, default_value = "mock")]
    pub backend: String,
    /// Scripted completions for the mock backend.
    #[arg(long, required_if_eq("backend", "mock"))]
    pub fixtures: Option<PathBuf>,
    #[arg(long, required_if_eq("backend", "remote"))]
    pub endpoint: Option<String>,
    #[arg(long, required_if_eq("backend", "remote"))]
    pub model: Option<String>,
    #[arg(long, default_value = "radioplan-project")]
    pub project: PathBuf,
    /// OSM fixture directory; the live map API is used when absent.
    #[arg(long)]
    pub osm_fixtures: Option<PathBuf>,
    #[arg(long)]
    pub default_area: Option<String>,
    /// Resume this session instead of starting a new one.
    #[arg(long)]
    pub session: Option<String>,
}

#[derive(Debug, Args)]
pub struct Serve {
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with(args: impl IntoIterator<Item = String>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::FetchOsm(c) => fetch_osm_cmd(&c),
        Command::BuildEnv(c) => build_env_cmd(&c),
        Command::Radiomap(c) => radiomap_cmd(&c),
        Command::Sinr(c) => sinr_cmd(&c),
        Command::Plan(c) => plan_cmd(&c),
        Command::Agent(c) => {
            let stdin = std::io::stdin();
            agent_cmd(&c, stdin.lock(), std::io::stdout())
        }
        Command::Serve(c) => serve_cmd(&c),
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, bytes).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}

pub fn load_scene(path: &Path) -> Result<EnvironmentModel> {
    EnvironmentModel::from_json(&read_text(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Reads a station list: a bare array, or an object with a `stations` array.
pub fn load_stations(path: &Path) -> Result<Vec<BaseStation>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum StationsFile {
        List(Vec<BaseStation>),
        Wrapped { stations: Vec<BaseStation> },
    }
    let parsed: StationsFile =
        serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let stations = match parsed {
        StationsFile::List(s) | StationsFile::Wrapped { stations: s } => s,
    };
    if stations.is_empty() {
        return Err(CliError::Data(format!("{}: the stations list is empty", path.display())));
    }
    Ok(stations)
}

fn png(doc: &GridDocument, path: &Path) -> Result<()> {
    let bytes = render_png(doc, &RenderOptions::default()).map_err(CliError::Internal)?;
    write(path, &bytes)
}

fn fetch_osm_cmd(c: &FetchOsm) -> Result<()> {
    let bbox = match (&c.bbox, &c.area) {
        (Some(b), _) => GeoBBox::parse(b).map_err(|e| CliError::Usage(e.to_string()))?,
        (None, Some(area)) => {
            Gazetteer::standard().lookup(area).ok_or_else(|| CliError::Usage(format!("unknown area {area:?}")))?.bbox
        }
        (None, None) => return Err(CliError::Usage("--bbox or --area is required".into())),
    };
    let transport: Box<dyn MapTransport> = match (&c.fixtures, &c.base_url) {
        (Some(dir), _) => Box::new(FixtureTransport::from_dir(dir).map_err(data)?),
        (None, Some(url)) => Box::new(HttpTransport { base_url: url.clone(), ..HttpTransport::default() }),
        (None, None) => Box::new(HttpTransport::default()),
    };
    let cache = c.cache.as_ref().map(OsmCache::new);
    let fetched = fetch_osm(&bbox, transport.as_ref(), cache.as_ref()).map_err(data)?;
    write(&c.out, &fetched.bytes)?;
    println!(
        "{} bytes{} -> {}",
        fetched.bytes.len(),
        if fetched.from_cache { " (cached)" } else { "" },
        c.out.display()
    );
    Ok(())
}

pub fn build_env(osm: &Path, rules: &HeightRules) -> Result<EnvironmentModel> {
    let parsed = parse_osm(&read(osm)?).map_err(|e| CliError::Data(format!("{}: {e}", osm.display())))?;
    build_environment_with(&parsed, rules).map_err(data)
}

fn build_env_cmd(c: &BuildEnv) -> Result<()> {
    let rules = HeightRules { meters_per_level: c.meters_per_level, default_height: c.default_height };
    let env = build_env(&c.osm, &rules)?;
    write(&c.out, env.to_json().as_bytes())?;
    println!("{} buildings -> {}", env.buildings.len(), c.out.display());
    Ok(())
}

pub fn radio_map_document(g: &GridArgs) -> Result<GridDocument> {
    let env = load_scene(&g.scene)?;
    let stations = load_stations(&g.stations)?;
    let grid = create_grid(&env, g.resolution).map_err(data)?;
    let map = generate_radio_map(&grid, &stations, &env, &AntennaPattern::default(), &PropagationConfig::default())
        .map_err(data)?;
    Ok(map.to_document())
}

fn radiomap_cmd(c: &Radiomap) -> Result<()> {
    let doc = radio_map_document(&c.grid)?;
    write(&c.out, doc.to_json().as_bytes())?;
    if let Some(p) = &c.png {
        png(&doc, p)?;
    }
    println!("{}x{} radio map -> {}", doc.width, doc.height, c.out.display());
    Ok(())
}

pub fn sinr_outputs(c: &Sinr) -> Result<(GridDocument, CoverageReport)> {
    let env = load_scene(&c.grid.scene)?;
    let stations = load_stations(&c.grid.stations)?;
    let grid = create_grid(&env, c.grid.resolution).map_err(data)?;
    let pattern = AntennaPattern::default();
    let prop = PropagationConfig::default();
    let rm = generate_radio_map(&grid, &stations, &env, &pattern, &prop).map_err(data)?;
    let sm = compute_sinr_map(&grid, &stations, &env, &pattern, c.nf, &prop).map_err(data)?;
    let report = coverage_stats(&rm, &sm, c.pl_threshold, c.sinr_threshold).map_err(data)?;
    Ok((sm.to_document(), report))
}

fn sinr_cmd(c: &Sinr) -> Result<()> {
    let (doc, report) = sinr_outputs(c)?;
    write(&c.out, doc.to_json().as_bytes())?;
    if let Some(p) = &c.png {
        png(&doc, p)?;
    }
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Internal(e.to_string()))?;
    if let Some(p) = &c.report {
        write(p, text.as_bytes())?;
    }
    println!("{text}");
    Ok(())
}

pub fn make_plan(c: &Plan) -> Result<NetworkPlan> {
    let env = load_scene(&c.scene)?;
    let mut config: PlanningConfig = match &c.config {
        Some(p) => serde_json::from_str(&read_text(p)?).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        None => PlanningConfig::default(),
    };
    if let Some(seed) = c.seed {
        config.seed = seed;
    }
    config.validate().map_err(data)?;
    let grid = create_grid(&env, c.resolution).map_err(data)?;
    let initial = match &c.stations {
        Some(p) => load_stations(p)?,
        None => random_initial_stations(&grid, &env, &config, c.initial_count, config.seed).map_err(data)?,
    };
    optimize(&env, &grid, &AntennaPattern::default(), &PropagationConfig::default(), &config, &initial).map_err(data)
}

fn plan_cmd(c: &Plan) -> Result<()> {
    let plan = make_plan(c)?;
    write(&c.out, plan.to_json().as_bytes())?;
    println!(
        "{} stations, coverage {:.1}% ({}), compliant={} -> {}",
        plan.stations.len(),
        100.0 * plan.achieved_coverage,
        plan.compliant_cells,
        plan.compliant,
        c.out.display()
    );
    Ok(())
}

fn backend_config(c: &Agent) -> Result<BackendConfig> {
    match c.backend.as_str() {
        "mock" => Ok(BackendConfig::Mock {
            fixtures: c.fixtures.clone().ok_or_else(|| CliError::Usage("--fixtures is required".into()))?,
        }),
        "remote" => Ok(BackendConfig::Remote {
            endpoint: c.endpoint.clone().unwrap_or_default(),
            model: c.model.clone().unwrap_or_default(),
            api_key: None,
            timeout_secs: 60,
        }),
        other => Err(CliError::Usage(format!("unknown backend {other:?}; expected mock or remote"))),
    }
}

/// Reads prompts line by line from `input` until EOF or `exit`, printing
/// task logs and artifact paths to `out`.
pub fn agent_cmd(c: &Agent, input: impl BufRead, mut out: impl Write + Send + 'static) -> Result<()> {
    let backend = model_backend(&backend_config(c)?).map_err(data)?;
    let transport: Arc<dyn MapTransport> = match &c.osm_fixtures {
        Some(dir) => Arc::new(FixtureTransport::from_dir(dir).map_err(data)?),
        None => Arc::new(HttpTransport::default()),
    };
    let tools = Arc::new(ToolEnv::new(transport));
    let project = ProjectDir::open(&c.project).map_err(|e| CliError::Internal(e.to_string()))?;
    let mut session = match &c.session {
        Some(id) => {
            let id = SessionId::parse(id).map_err(|e| CliError::Usage(e.to_string()))?;
            AgentSession::open(project.clone(), id, backend, tools).map_err(data)?
        }
        None => {
            let id = project.next_session_id().map_err(|e| CliError::Internal(e.to_string()))?;
            let options = SessionOptions { default_area: c.default_area.clone(), ..SessionOptions::default() };
            AgentSession::create(project.clone(), id, backend, tools, options).map_err(data)?
        }
    };
    let io = |e: std::io::Error| CliError::Internal(e.to_string());
    writeln!(out, "session {}", session.id().as_str()).map_err(io)?;
    if session.is_degraded() {
        writeln!(out, "warning: transcript damaged; earlier results may be missing").map_err(io)?;
    }

    let root = project.root().to_path_buf();
    let shared = Arc::new(std::sync::Mutex::new(out));
    let sink_out = Arc::clone(&shared);
    session.set_event_sink(Box::new(move |e| {
        let mut out = sink_out.lock().unwrap_or_else(|p| p.into_inner());
        let _ = match &e.kind {
            EventKind::TaskStarted { task, tool } => writeln!(out, "[{task}] {tool} started"),
            EventKind::TaskFinished { task, tool, status, error, log, artifacts } => {
                for line in log {
                    let _ = writeln!(out, "[{task}] {line}");
                }
                for a in artifacts {
                    let _ = writeln!(out, "[{task}] artifact {} {}", a.id.0, root.join(&a.path).display());
                }
                match error {
                    Some(err) => writeln!(out, "[{task}] {tool} {status:?}: {err}"),
                    None => writeln!(out, "[{task}] {tool} {status:?}"),
                }
            }
            _ => Ok(()),
        };
    }));

    for line in input.lines() {
        let line = line.map_err(io)?;
        let prompt = line.trim();
        if prompt.is_empty() {
            continue;
        }
        if prompt == "exit" || prompt == "quit" {
            break;
        }
        let message = match session.step(prompt) {
            Ok(r) => {
                let mut text = format!("{:?}: {}", r.outcome, r.message);
                for a in &r.cited {
                    text.push_str(&format!("\nreused {} {}", a.id.0, project.resolve(&a.path).display()));
                }
                text
            }
            Err(e) => format!("error: {e}"),
        };
        let mut out = shared.lock().unwrap_or_else(|p| p.into_inner());
        writeln!(out, "{message}").map_err(io)?;
        out.flush().map_err(io)?;
    }
    Ok(())
}

fn serve_cmd(c: &Serve) -> Result<()> {
    let config = match &c.config {
        Some(p) => ServiceConfig::load(p).map_err(data)?,
        None => ServiceConfig::default(),
    };
    let config = config.with_env(|k| std::env::var(k).ok()).map_err(data)?;
    radioplan_service::run(config).map_err(|e| CliError::Internal(e.to_string()))
}
