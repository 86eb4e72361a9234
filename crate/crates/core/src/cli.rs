//! Command-line interface. `run` parses arguments, executes one subcommand
//! and returns the process exit code.

use std::ffi::OsString;
use std::io::Read;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, DepthMap};
use crate::coordsys::{ImageShape, NormBox, NormPoint, PixelPoint};
use crate::datastore::{self, DatastoreError, DemoEntry, DetectionFile, ReadMode, SampleEnvelope};
use crate::eval::{self, BoxSampling, EvalOptions, EvalRecord, HttpJudge, JudgeConfig};
use crate::labelgen::{self, FilterReason, FilterThresholds};
use crate::lift::{self, LiftConfig, LiftError, Quaternion};
use crate::markup;
use crate::mask::BinaryMask;
use crate::scenegraph::{self, GraphOptions, SceneObject};

pub const DEFAULT_SEED: u64 = 20250101;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_JUDGE: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn io(message: impl std::fmt::Display) -> Self {
        Self { code: EXIT_IO, message: message.to_string() }
    }

    fn invalid(message: impl std::fmt::Display) -> Self {
        Self { code: EXIT_INVALID, message: message.to_string() }
    }
}

impl From<DatastoreError> for CliError {
    fn from(e: DatastoreError) -> Self {
        if e.is_io() {
            CliError::io(e)
        } else {
            CliError::invalid(e)
        }
    }
}

type CliResult = Result<i32, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "visaid",
    version,
    about = "Grounded spatial markup, scene graphs, visual-aid labels, trace lifting and evaluation"
)]
pub struct Cli {
    /// TOML file with defaults for thresholds, seed and judge settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for record processing (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse markup text and print the document as JSON.
    Parse(ParseArgs),
    /// Build a spatial relationship graph from detections.
    Graph(GraphArgs),
    /// Build affordance and trace samples from a demo corpus.
    Dataset(DatasetArgs),
    /// Lift a 2D trace to 3D waypoints.
    Lift(LiftArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Draw a trace overlay.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    /// Input file; standard input when omitted or `-`.
    pub input: Option<PathBuf>,
    /// Also report grounding violations on standard error.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    /// Detection file (JSON).
    #[arg(long)]
    pub detections: PathBuf,
    /// Depth map (16-bit PNG or CSV) at the detection image resolution.
    #[arg(long)]
    pub depth: Option<PathBuf>,
    /// Camera intrinsics JSON; adds object centroids to the JSON output.
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    /// Where to write the graph JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Where to write the markup text (standard output when omitted).
    #[arg(long)]
    pub markup: Option<PathBuf>,
    /// Directional relation margin in normalized units [default: 10].
    #[arg(long)]
    pub margin: Option<f64>,
    /// Relative depth gap for front/behind ordering [default: 0.20].
    #[arg(long)]
    pub gap: Option<f64>,
    /// Emit both directions of every relation.
    #[arg(long)]
    pub symmetric: bool,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Corpus directory containing demos.jsonl.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory for level4.jsonl, level5.jsonl and filter_report.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Also emit one inverse sample per forward sample.
    #[arg(long)]
    pub inverse: bool,
    /// Sampling seed [default: 20250101].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Minimum final-mask area as a fraction of the image [default: 0.0005].
    #[arg(long)]
    pub min_area: Option<f64>,
    /// Maximum final-mask area as a fraction of the image [default: 0.25].
    #[arg(long)]
    pub max_area: Option<f64>,
    /// Minimum trace length as a fraction of the image diagonal [default: 0.05].
    #[arg(long)]
    pub min_len: Option<f64>,
}

#[derive(Debug, Args)]
pub struct LiftArgs {
    /// Trace as markup text or a JSON list of [x, y] normalized points.
    #[arg(long)]
    pub trace: PathBuf,
    /// Depth map (16-bit PNG or CSV) in raw sensor units.
    #[arg(long)]
    pub depth: PathBuf,
    /// Camera intrinsics JSON with fx, fy, cx, cy and depth_scale.
    #[arg(long)]
    pub intrinsics: PathBuf,
    /// Output waypoint JSON (standard output when omitted).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Skip depth optimization.
    #[arg(long)]
    pub no_optimize: bool,
    /// Start orientation quaternion `w,x,y,z`.
    #[arg(long, value_parser = parse_quat, allow_hyphen_values = true)]
    pub start_orientation: Option<Quaternion>,
    /// End orientation quaternion `w,x,y,z`.
    #[arg(long, value_parser = parse_quat, allow_hyphen_values = true)]
    pub end_orientation: Option<Quaternion>,
    /// Initial gradient step in meters [default: 0.01].
    #[arg(long)]
    pub step_size: Option<f64>,
    /// Iteration cap for depth optimization [default: 2000].
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Relative objective improvement that stops optimization [default: 1e-8].
    #[arg(long)]
    pub tol: Option<f64>,
    /// Window radius in pixels for filling missing depth [default: 5].
    #[arg(long)]
    pub neighborhood: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingArg {
    /// 3×3 grid inside the box.
    Grid,
    /// Box center only.
    Midpoint,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Evaluation records (JSONL).
    #[arg(long)]
    pub records: PathBuf,
    /// Report JSON path.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Skip malformed record lines instead of aborting.
    #[arg(long)]
    pub lenient: bool,
    /// Box scoring mode [default: grid].
    #[arg(long, value_enum)]
    pub sampling: Option<SamplingArg>,
    /// Score trace overlays with the judge model.
    #[arg(long)]
    pub judge: bool,
    /// Chat-completions URL [env: EVAL_JUDGE_ENDPOINT].
    #[arg(long)]
    pub judge_endpoint: Option<String>,
    /// Judge model name [env: EVAL_JUDGE_MODEL].
    #[arg(long)]
    pub judge_model: Option<String>,
    /// Per-request timeout in seconds [default: 60].
    #[arg(long)]
    pub judge_timeout: Option<u64>,
    /// Retries on transport failure [default: 2].
    #[arg(long)]
    pub judge_retries: Option<u32>,
    /// Concurrent judge requests [default: 4].
    #[arg(long)]
    pub judge_max_in_flight: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Trace as markup text or a JSON list of [x, y] normalized points.
    #[arg(long)]
    pub trace: PathBuf,
    /// Background image; a white canvas when omitted.
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub width: u32,
    #[arg(long, default_value_t = 1000)]
    pub height: u32,
    #[arg(long, short)]
    pub output: PathBuf,
}

fn parse_quat(s: &str) -> Result<Quaternion, String> {
    let v: Vec<f64> =
        s.split(',').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let [w, x, y, z] = v[..] else { return Err("expected four comma-separated numbers w,x,y,z".into()) };
    Ok(Quaternion::new(w, x, y, z))
}

/// File-level defaults; flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub filter: Option<FilterThresholds>,
    pub graph: Option<GraphSection>,
    pub lift: Option<LiftConfig>,
    pub eval: Option<EvalSection>,
    pub judge: Option<JudgeConfig>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    pub margin: Option<f64>,
    pub gap_threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub sampling: Option<SamplingArg>,
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile, CliError> {
    let Some(path) = path else { return Ok(ConfigFile::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn execute(cli: Cli) -> CliResult {
    let config = load_config(cli.config.as_deref())?;
    let threads = cli.threads.or(config.threads);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::invalid("--threads must be positive"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::invalid(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Parse(a) => cmd_parse(a),
        Command::Graph(a) => cmd_graph(a, &config),
        Command::Dataset(a) => cmd_dataset(a, &config),
        Command::Lift(a) => cmd_lift(a, &config),
        Command::Eval(a) => cmd_eval(a, &config),
        Command::Render(a) => cmd_render(a),
    })
}

fn read_text(path: Option<&Path>) -> Result<String, CliError> {
    match path {
        None => read_stdin(),
        Some(p) if p.as_os_str() == "-" => read_stdin(),
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::io(format!("{}: {e}", p.display()))),
    }
}

fn read_stdin() -> Result<String, CliError> {
    let mut s = String::new();
    std::io::stdin().read_to_string(&mut s).map_err(|e| CliError::io(format!("stdin: {e}")))?;
    Ok(s)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable value")
}

fn cmd_parse(a: ParseArgs) -> CliResult {
    let text = read_text(a.input.as_deref())?;
    let doc = markup::parse_document(&text).map_err(CliError::invalid)?;
    if a.check {
        for v in markup::validate_binding(&doc) {
            eprintln!("warning: {v}");
        }
    }
    println!("{}", to_json(&doc));
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct GraphObjectOut {
    name: String,
    #[serde(rename = "box")]
    bbox: NormBox,
    #[serde(skip_serializing_if = "Option::is_none")]
    depth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    centroid: Option<[f64; 3]>,
}

#[derive(Debug, Serialize)]
struct GraphOut {
    objects: Vec<GraphObjectOut>,
    relations: Vec<scenegraph::Relation>,
    markup: String,
    qa: Vec<scenegraph::QaPair>,
}

fn pixel_box_mask(b: [f64; 4], shape: ImageShape) -> BinaryMask {
    let [x1, y1, x2, y2] = b;
    BinaryMask::from_fn(shape, |x, y| {
        let (cx, cy) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
        cx >= x1 && cx <= x2 && cy >= y1 && cy <= y2
    })
}

fn cmd_graph(a: GraphArgs, config: &ConfigFile) -> CliResult {
    let det: DetectionFile = datastore::read_json(&a.detections)?;
    det.validate().map_err(|e| CliError::invalid(format!("{}: {e}", a.detections.display())))?;
    let shape = det.shape().map_err(CliError::invalid)?;
    let base = a.detections.parent().unwrap_or(Path::new("."));
    let depth = a.depth.as_deref().map(datastore::read_depth).transpose()?;
    if let Some(d) = &depth {
        d.ensure_shape(shape).map_err(|e| CliError::invalid(format!("depth map: {e}")))?;
    }
    let cam = a.intrinsics.as_deref().map(datastore::read_intrinsics).transpose()?;
    let section = config.graph.unwrap_or_default();
    let opts = GraphOptions {
        margin: a.margin.or(section.margin).unwrap_or(scenegraph::DEFAULT_MARGIN),
        gap_threshold: a.gap.or(section.gap_threshold).unwrap_or(scenegraph::DEFAULT_GAP_THRESHOLD),
        symmetric: a.symmetric,
    };
    let mut objects = Vec::with_capacity(det.objects.len());
    for o in &det.objects {
        let [x1, y1, x2, y2] = o.bbox;
        let lo = crate::coordsys::to_norm_clamped(PixelPoint::new(x1, y1), shape);
        let hi = crate::coordsys::to_norm_clamped(PixelPoint::new(x2, y2), shape);
        let mut obj =
            SceneObject::new(o.name.clone(), NormBox::new(lo.x, lo.y, hi.x, hi.y).map_err(CliError::invalid)?);
        if depth.is_some() {
            let mask = match &o.mask {
                Some(p) => {
                    let m = datastore::read_mask_png(&base.join(p))?;
                    m.ensure_shape(shape).map_err(|e| CliError::invalid(format!("{}: {e}", p)))?;
                    m
                }
                None => pixel_box_mask(o.bbox, shape),
            };
            obj.mask = Some(mask);
        }
        objects.push(obj);
    }
    let graph = scenegraph::build_graph(objects, depth.as_ref(), &opts);
    let text = scenegraph::serialize_graph(&graph);
    if let Some(p) = &a.json {
        let objects = graph
            .objects
            .iter()
            .zip(&det.objects)
            .map(|(o, d)| {
                let centroid = match (&cam, o.depth) {
                    (Some(c), Some(z)) => {
                        let [x1, y1, x2, y2] = d.bbox;
                        crate::camera::backproject(PixelPoint::new((x1 + x2) / 2.0, (y1 + y2) / 2.0), z, c)
                            .ok()
                            .map(|p| p.to_array())
                    }
                    _ => None,
                };
                GraphObjectOut { name: o.name.clone(), bbox: o.bbox, depth: o.depth, centroid }
            })
            .collect();
        let out = GraphOut {
            objects,
            relations: graph.relations.clone(),
            markup: text.clone(),
            qa: scenegraph::template_qa(&graph, opts.gap_threshold),
        };
        datastore::write_json(&out, p)?;
    }
    match &a.markup {
        Some(p) => write_text(p, &format!("{text}\n"))?,
        None => println!("{text}"),
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Default, Serialize)]
struct FilterReport {
    records: usize,
    kept: usize,
    rejected: usize,
    failed: usize,
    seed: u64,
    by_reason: std::collections::BTreeMap<String, usize>,
    rejections: Vec<Rejection>,
    samples: SampleCounts,
}

#[derive(Debug, Serialize)]
struct Rejection {
    id: String,
    reason: String,
}

#[derive(Debug, Default, Serialize)]
struct SampleCounts {
    level4: usize,
    level5: usize,
    inverse: usize,
}

fn cmd_dataset(a: DatasetArgs, config: &ConfigFile) -> CliResult {
    let mut th = config.filter.unwrap_or_default();
    th.min_area = a.min_area.unwrap_or(th.min_area);
    th.max_area = a.max_area.unwrap_or(th.max_area);
    th.min_len = a.min_len.unwrap_or(th.min_len);
    let seed = a.seed.or(config.seed).unwrap_or(DEFAULT_SEED);
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::io(format!("{}: {e}", a.out.display())))?;

    let manifest = a.corpus.join(datastore::DEMO_MANIFEST);
    let entries: Vec<DemoEntry> = if manifest.exists() {
        datastore::read_jsonl(&manifest, ReadMode::Strict)?.records
    } else if a.corpus.is_dir() {
        Vec::new()
    } else {
        return Err(CliError::io(format!("{}: not a directory", a.corpus.display())));
    };
    if entries.is_empty() {
        eprintln!("warning: no demo records in {}", a.corpus.display());
    }

    let outcomes: Vec<Result<labelgen::RecordOutcome, String>> = entries
        .par_iter()
        .map(|e| {
            let rec = datastore::load_demo(e, &a.corpus).map_err(|err| format!("{}: {err}", e.id))?;
            Ok(labelgen::process_record(&rec, &th, seed))
        })
        .collect();

    let mut report = FilterReport { records: entries.len(), seed, ..Default::default() };
    let mut level4: Vec<SampleEnvelope> = Vec::new();
    let mut level5: Vec<SampleEnvelope> = Vec::new();
    for o in outcomes {
        match o {
            Err(msg) => {
                eprintln!("warning: {msg}");
                report.failed += 1;
            }
            Ok(o) => {
                *report.by_reason.entry(o.verdict.reason.to_string()).or_default() += 1;
                if o.verdict.keep {
                    report.kept += 1;
                    level4.extend(o.level4);
                    level5.extend(o.level5);
                } else {
                    report.rejected += 1;
                    report.rejections.push(Rejection { id: o.id, reason: o.verdict.reason.to_string() });
                }
            }
        }
    }
    for s in level4.iter().chain(&level5) {
        let v = datastore::validate_sample(s);
        if !v.is_empty() {
            let msgs: Vec<String> = v.iter().map(ToString::to_string).collect();
            return Err(CliError::invalid(format!("sample {} failed validation: {}", s.id, msgs.join("; "))));
        }
    }
    if a.inverse {
        let inv = |v: &mut Vec<SampleEnvelope>| -> Result<(), CliError> {
            let extra: Vec<SampleEnvelope> =
                v.iter().map(labelgen::invert_sample).collect::<Result<_, _>>().map_err(CliError::invalid)?;
            v.extend(extra);
            Ok(())
        };
        inv(&mut level4)?;
        inv(&mut level5)?;
        report.samples.inverse = level4.len() / 2 + level5.len() / 2;
    }
    report.samples.level4 = level4.iter().filter(|s| s.level == datastore::Level::L4).count();
    report.samples.level5 = level5.iter().filter(|s| s.level == datastore::Level::L5).count();
    datastore::write_jsonl(&level4, &a.out.join("level4.jsonl"))?;
    datastore::write_jsonl(&level5, &a.out.join("level5.jsonl"))?;
    datastore::write_json(&report, &a.out.join("filter_report.json"))?;
    eprintln!(
        "records: {}  kept: {}  rejected: {}  failed: {}",
        report.records, report.kept, report.rejected, report.failed
    );
    for r in FilterReason::ALL.iter().filter(|r| **r != FilterReason::Ok) {
        if let Some(n) = report.by_reason.get(r.as_str()) {
            eprintln!("  {r}: {n}");
        }
    }
    if report.records > 0 && report.failed == report.records {
        return Err(CliError::io("every record failed to load"));
    }
    Ok(EXIT_OK)
}

/// Trace points from markup text or a JSON list of `[x, y]` pairs.
fn read_trace(path: &Path) -> Result<Vec<NormPoint>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())));
    }
    let doc = markup::parse_document(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    let t = markup::extract_trace(&doc).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    Ok(t.points.into_inner())
}

#[derive(Debug, Serialize)]
struct WaypointOut {
    position: [f64; 3],
    orientation: [f64; 4],
}

fn cmd_lift(a: LiftArgs, config: &ConfigFile) -> CliResult {
    let mut lc = config.lift.unwrap_or_default();
    lc.step_size = a.step_size.unwrap_or(lc.step_size);
    lc.max_iters = a.max_iters.unwrap_or(lc.max_iters);
    lc.tol = a.tol.unwrap_or(lc.tol);
    lc.neighborhood = a.neighborhood.unwrap_or(lc.neighborhood);
    let trace = read_trace(&a.trace)?;
    let depth: DepthMap = datastore::read_depth(&a.depth)?;
    let cam: CameraModel = datastore::read_intrinsics(&a.intrinsics)?;
    let out = lift::lift_trace(&trace, &depth, &cam, &lc, !a.no_optimize).map_err(|e| match e {
        LiftError::MissingDepth { index } => CliError::invalid(format!("missing depth at trace point {index}")),
        other => CliError::invalid(other),
    })?;
    let start = a.start_orientation.unwrap_or(Quaternion::IDENTITY);
    let end = a.end_orientation.unwrap_or(start);
    let waypoints = lift::se3_waypoints(&out.points, start, end).map_err(CliError::invalid)?;

    let initial =
        lift::path_objective(&lift::trace_rays(&trace, depth.shape(), &cam), &out.raw_depths, cam.depth_scale);
    let final_ = lift::polyline_length(&out.points);
    match &out.optimization {
        None => eprintln!("optimization: disabled"),
        Some(r) if r.skipped => eprintln!("optimization: skipped (no interior points)"),
        Some(r) => eprintln!("optimization: {} iterations", r.iterations),
    }
    eprintln!("objective initial: {initial:.9} m");
    eprintln!("objective final: {final_:.9} m");

    let json: Vec<WaypointOut> = waypoints
        .iter()
        .map(|w| WaypointOut { position: w.position.to_array(), orientation: w.orientation.into() })
        .collect();
    let text = to_json(&json);
    match &a.output {
        Some(p) => write_text(p, &format!("{text}\n"))?,
        None => println!("{text}"),
    }
    Ok(EXIT_OK)
}

fn cmd_eval(a: EvalArgs, config: &ConfigFile) -> CliResult {
    let mode = if a.lenient { ReadMode::Lenient } else { ReadMode::Strict };
    let read = datastore::read_jsonl::<EvalRecord>(&a.records, mode)?;
    for e in &read.errors {
        eprintln!("warning: {}:{}: {}", a.records.display(), e.line, e.message);
    }
    let sampling = match a.sampling.or(config.eval.and_then(|e| e.sampling)).unwrap_or(SamplingArg::Grid) {
        SamplingArg::Grid => BoxSampling::Grid(3),
        SamplingArg::Midpoint => BoxSampling::Midpoint,
    };
    let mut jc = config.judge.clone().unwrap_or_default();
    if let Some(v) = a.judge_endpoint {
        jc.endpoint = v;
    }
    if let Some(v) = a.judge_model {
        jc.model = v;
    }
    jc.timeout_secs = a.judge_timeout.unwrap_or(jc.timeout_secs);
    jc.retries = a.judge_retries.unwrap_or(jc.retries);
    jc.max_in_flight = a.judge_max_in_flight.unwrap_or(jc.max_in_flight);
    let jc = jc.with_env();
    let opts = EvalOptions {
        base_dir: a.records.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")),
        sampling,
        judge_retries: jc.retries,
        judge_max_in_flight: jc.max_in_flight,
    };
    let judge = if a.judge { Some(HttpJudge::new(jc).map_err(CliError::invalid)?) } else { None };
    let report = eval::evaluate(&read.records, &opts, judge.as_ref().map(|j| j as &dyn eval::JudgeTransport));
    if let Some(p) = &a.output {
        datastore::write_json(&report, p)?;
    }
    print!("{}", report.summary_table());
    if read.errors.len() + report.aggregates.errored > 0 {
        eprintln!("errored records: {}", read.errors.len() + report.aggregates.errored);
    }
    if report.aggregates.judge_transport_errors > 0 {
        eprintln!("error: judge unreachable for {} records", report.aggregates.judge_transport_errors);
        return Ok(EXIT_JUDGE);
    }
    Ok(EXIT_OK)
}

fn cmd_render(a: RenderArgs) -> CliResult {
    let trace = read_trace(&a.trace)?;
    let base = match &a.image {
        Some(p) => image::open(p).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?.to_rgb8(),
        None => {
            if a.width == 0 || a.height == 0 {
                return Err(CliError::invalid("canvas size must be positive"));
            }
            eval::blank_canvas(a.width, a.height)
        }
    };
    let img = eval::render_overlay(&base, &trace, &eval::OverlayStyle::default());
    std::fs::write(&a.output, eval::encode_png(&img))
        .map_err(|e| CliError::io(format!("{}: {e}", a.output.display())))?;
    Ok(EXIT_OK)
}
