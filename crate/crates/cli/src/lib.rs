//! Command implementations behind the `blockscene` binary.
//!
//! Every command is a thin wrapper over the library: it loads inputs, calls
//! one library entry point and writes canonical outputs. Exit codes: 0 on
//! success, 1 on input or transport errors, 2 when a placement is rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use blockscene::arranger::{place_object, residual_table, ArrangeError, PlacementTask, RoughRelation};
use blockscene::constraint::{Constraint, ConstraintKind, GapMode, ResidualReport};
use blockscene::geometry::{ObjectId, Vec3};
use blockscene::graph::{RelationEdge, SceneGraph, Strength};
use blockscene::io::{self, BackendSpec, RunConfig};
use blockscene::metrics::{MetricsEngine, SceneMetrics};
use blockscene::planner::{run_pipeline, PipelineReport};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Transport,
    Rejected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl fmt::Display) -> Self {
        Self { kind: ErrorKind::Input, message: message.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Input | ErrorKind::Transport => 1,
            ErrorKind::Rejected => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<io::IoError> for CliError {
    fn from(e: io::IoError) -> Self {
        CliError::input(e)
    }
}

impl From<io::ConfigError> for CliError {
    fn from(e: io::ConfigError) -> Self {
        CliError::input(e)
    }
}

fn arrange_error(e: ArrangeError) -> CliError {
    let kind = match &e {
        ArrangeError::Rejected { .. } => ErrorKind::Rejected,
        ArrangeError::Backend(_) => ErrorKind::Transport,
        _ => ErrorKind::Input,
    };
    CliError { kind, message: e.to_string() }
}

#[derive(Debug, Parser)]
#[command(name = "blockscene", version, about = "Build block scenes from spatial constraints")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    pub show_config: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for the genetic algorithm (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Planner backend: scripted:<dir> or remote:<url>.
    #[arg(long, global = true)]
    pub backend: Option<String>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Place one object of a scene against a constraints file.
    Solve {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        constraints: PathBuf,
    },
    /// Run the full planning pipeline for a text request.
    Pipeline {
        /// Scene request, e.g. "a desk with a lamp".
        request: String,
    },
    /// Compute overlap and isolation scores of a scene.
    Metrics {
        #[arg(long)]
        scene: PathBuf,
    },
    /// Write a scene as an OBJ mesh.
    Export {
        #[arg(long)]
        scene: PathBuf,
        /// Output file (default: <out-dir>/scene.obj).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the configuration and any given input files.
    Validate {
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        constraints: Option<PathBuf>,
    },
    /// Print the effective configuration.
    ShowConfig,
}

/// Effective configuration: file (or defaults), then environment, then flags.
pub fn load_config(common: &Common, env_url: Option<String>, env_token: Option<String>) -> Result<RunConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config = config.with_env_overrides(env_url, env_token);
    if let Some(spec) = &common.backend {
        config.backend = Some(spec.parse::<BackendSpec>()?);
    }
    if let Some(seed) = common.seed {
        config.seed = Some(seed);
    }
    config.validate()?;
    Ok(config)
}

// -------------------------------------------------------------------- solve

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveRelation {
    pub reference: ObjectId,
    pub kind: ConstraintKind,
    #[serde(default)]
    pub distance: f64,
    #[serde(default = "strong")]
    pub strength: Strength,
    #[serde(default)]
    pub gap: GapMode,
}

fn strong() -> Strength {
    Strength::Strong
}

/// Contents of a `--constraints` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveRequest {
    pub movable: ObjectId,
    /// Where to put the center of the movable object's bounds before solving.
    #[serde(default)]
    pub proposed_position: Option<Vec3>,
    pub relations: Vec<SolveRelation>,
}

impl SolveRequest {
    pub fn from_json(path: &Path, text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub movable: ObjectId,
    pub constraints: Vec<Constraint>,
    pub best_motion: Vec3,
    pub final_error: f64,
    pub residuals: ResidualReport,
    pub generations_run: usize,
    pub converged: bool,
    pub diagnostics: Vec<String>,
}

impl SolveReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Apply a solve request to a copy of `scene` and return the updated scene.
pub fn solve(scene: &SceneGraph, request: &SolveRequest, config: &RunConfig) -> Result<(SceneGraph, SolveReport), CliError> {
    let mut work = scene.clone();
    let movable = request.movable.as_str();
    let bounds = work.object(movable).ok_or_else(|| CliError::input(format!("constraints: movable: unknown object: {movable}")))?.bounds();
    if let Some(p) = request.proposed_position {
        work.update_placement(movable, p - bounds.center()).map_err(CliError::input)?;
    }
    for (i, r) in request.relations.iter().enumerate() {
        let edge = RelationEdge { gap: r.gap, ..RelationEdge::new(r.reference.clone(), request.movable.clone(), r.kind, r.distance, r.strength) };
        work.add_relation(edge).map_err(|e| CliError::input(format!("constraints: relations[{i}]: {e}")))?;
    }
    let task = PlacementTask {
        movable: request.movable.clone(),
        proposed_position: work.object(movable).expect("checked").bounds().center(),
        rough_relations: request
            .relations
            .iter()
            .map(|r| RoughRelation { reference: r.reference.clone(), kind: r.kind, distance: Some(r.distance) })
            .collect(),
    };
    let backend = config.backend_or_offline()?;
    let placed = place_object(&mut work, &task, &backend, &config.arranger_options()).map_err(arrange_error)?;
    let r = placed.result;
    let report = SolveReport {
        movable: request.movable.clone(),
        constraints: placed.constraints,
        best_motion: r.best_motion,
        final_error: r.final_error,
        residuals: r.residuals,
        generations_run: r.generations_run,
        converged: r.converged,
        diagnostics: placed.diagnostics,
    };
    Ok((work, report))
}

pub fn solve_files(scene: &Path, constraints: &Path, config: &RunConfig, out_dir: &Path) -> Result<SolveReport, CliError> {
    let graph = io::read_scene(scene)?;
    let request = SolveRequest::from_json(constraints, &io::read_text(constraints)?)?;
    let (updated, report) = solve(&graph, &request, config)?;
    io::write_text(&out_dir.join("scene.json"), &updated.to_json())?;
    io::write_text(&out_dir.join("solve.json"), &report.to_json())?;
    Ok(report)
}

// ----------------------------------------------------------------- pipeline

/// Everything `pipeline` writes, rendered but not yet on disk.
#[derive(Debug, Clone)]
pub struct PipelineOutputs {
    pub scene: SceneGraph,
    pub report: PipelineReport,
    pub metrics: SceneMetrics,
    pub scene_json: String,
    pub metrics_json: String,
    pub obj: String,
}

pub fn pipeline(request: &str, config: &RunConfig) -> Result<PipelineOutputs, CliError> {
    let backend = config.open_backend()?.ok_or_else(|| CliError::input(io::ConfigError::NoBackend))?;
    let mut scene = SceneGraph::new();
    let report = run_pipeline(request, &mut scene, &backend, &config.pipeline_options()).map_err(|e| {
        let kind = if e.is_rejection() {
            ErrorKind::Rejected
        } else if e.is_retryable() {
            ErrorKind::Transport
        } else {
            ErrorKind::Input
        };
        CliError { kind, message: e.to_string() }
    })?;
    let metrics = MetricsEngine::new(config.execution()).compute(&scene, config.contact_epsilon).map_err(CliError::input)?;
    Ok(PipelineOutputs {
        scene_json: scene.to_json(),
        metrics_json: metrics.to_json(),
        obj: io::scene_to_obj(&scene),
        scene,
        report,
        metrics,
    })
}

pub fn write_pipeline_outputs(outputs: &PipelineOutputs, out_dir: &Path) -> Result<(), CliError> {
    io::write_text(&out_dir.join("scene.json"), &outputs.scene_json)?;
    io::write_text(&out_dir.join("metrics.json"), &outputs.metrics_json)?;
    io::write_text(&out_dir.join("scene.obj"), &outputs.obj)?;
    Ok(())
}

pub fn pipeline_summary(outputs: &PipelineOutputs) -> String {
    let mut s = format!("scene `{}`: {} objects\n", outputs.report.plan.scene_name, outputs.scene.len());
    for o in &outputs.report.objects {
        match &o.placement {
            Some(p) => s.push_str(&format!(
                "  {:<16} placed on {:<16} E = {:.3e} after {} generations\n",
                o.name.as_str(),
                o.strong_reference.as_ref().map_or("-", ObjectId::as_str),
                p.result.final_error,
                p.result.generations_run
            )),
            None => s.push_str(&format!("  {:<16} root\n", o.name.as_str())),
        }
        for v in &o.part_violations {
            s.push_str(&format!("    part {} {} {} off by {:.4}\n", v.part, v.kind, v.reference, v.residual));
        }
    }
    s.push_str(&outputs.metrics.to_string());
    s
}

// ---------------------------------------------------------- metrics, export

pub fn metrics(scene: &SceneGraph, config: &RunConfig) -> Result<SceneMetrics, CliError> {
    MetricsEngine::new(config.execution()).compute(scene, config.contact_epsilon).map_err(CliError::input)
}

fn validate(common: &Common, config: &RunConfig, scene: Option<&Path>, constraints: Option<&Path>) -> Result<String, CliError> {
    let mut out = String::new();
    out.push_str(&format!("config: ok ({})\n", common.config.as_ref().map_or("defaults".into(), |p| p.display().to_string())));
    if let Some(backend) = &config.backend {
        if let BackendSpec::Scripted(_) = backend {
            config.open_backend()?;
        }
        out.push_str(&format!("backend: ok ({backend})\n"));
    }
    let graph = match scene {
        Some(path) => {
            let g = io::read_scene(path)?;
            out.push_str(&format!("scene: ok ({} objects, {} relations)\n", g.len(), g.edges().count()));
            Some(g)
        }
        None => None,
    };
    if let Some(path) = constraints {
        let request = SolveRequest::from_json(path, &io::read_text(path)?)?;
        if let Some(g) = &graph {
            for id in std::iter::once(&request.movable).chain(request.relations.iter().map(|r| &r.reference)) {
                if !g.contains(id.as_str()) {
                    return Err(CliError::input(format!("{}: unknown object: {id}", path.display())));
                }
            }
        }
        out.push_str(&format!("constraints: ok ({} relations on {})\n", request.relations.len(), request.movable));
    }
    Ok(out)
}

/// Run a parsed command line, printing to stdout/stderr. Returns the exit code.
pub fn run(cli: Cli) -> i32 {
    match execute(cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Run a parsed command line and return what it would print.
pub fn execute(cli: Cli) -> Result<String, CliError> {
    let common = &cli.common;
    let config = load_config(common, std::env::var(io::ENV_URL).ok(), std::env::var(io::ENV_TOKEN).ok())?;
    if cli.show_config {
        return Ok(config.to_json());
    }
    let Some(command) = cli.command else {
        return Err(CliError::input("no command given (see --help)"));
    };
    match command {
        Command::ShowConfig => Ok(config.to_json()),
        Command::Solve { scene, constraints } => {
            let report = solve_files(&scene, &constraints, &config, &common.out_dir)?;
            Ok(format!(
                "placed {}: E = {:.3e}, motion {:?}, {} generations\n{}\n",
                report.movable,
                report.final_error,
                <[f64; 3]>::from(report.best_motion),
                report.generations_run,
                residual_table(&report.constraints, &report.residuals.residuals)
            ))
        }
        Command::Pipeline { request } => {
            let outputs = pipeline(&request, &config)?;
            write_pipeline_outputs(&outputs, &common.out_dir)?;
            Ok(pipeline_summary(&outputs))
        }
        Command::Metrics { scene } => {
            let m = metrics(&io::read_scene(&scene)?, &config)?;
            io::write_text(&common.out_dir.join("metrics.json"), &m.to_json())?;
            Ok(m.to_string())
        }
        Command::Export { scene, out } => {
            let graph = io::read_scene(&scene)?;
            let path = out.unwrap_or_else(|| common.out_dir.join("scene.obj"));
            io::write_text(&path, &io::scene_to_obj(&graph))?;
            Ok(format!("wrote {}\n", path.display()))
        }
        Command::Validate { scene, constraints } => validate(common, &config, scene.as_deref(), constraints.as_deref()),
    }
}
