use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::judge::{judge_score, JudgeError, JudgeTransport};
use super::overlay::{blank_canvas, encode_png, render_overlay, OverlayStyle};
use super::{point_accuracy, sample_box_points, to_points, trace_metrics, BoxSampling, Region};
use crate::coordsys::{NormBox, NormPoint};
use crate::datastore;
use crate::markup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalTask {
    Point,
    Trace,
}

/// Exactly one of points, a box, or raw model text to be parsed as markup.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPrediction", into = "RawPrediction")]
pub enum Prediction {
    Points(Vec<NormPoint>),
    Box(NormBox),
    Text(String),
}

#[derive(Serialize, Deserialize)]
struct RawPrediction {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    points: Option<Vec<NormPoint>>,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    bbox: Option<NormBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

impl TryFrom<RawPrediction> for Prediction {
    type Error = String;
    fn try_from(r: RawPrediction) -> Result<Self, String> {
        match (r.points, r.bbox, r.text) {
            (Some(p), None, None) => Ok(Prediction::Points(p)),
            (None, Some(b), None) => Ok(Prediction::Box(b)),
            (None, None, Some(t)) => Ok(Prediction::Text(t)),
            _ => Err("prediction needs exactly one of points, box, text".into()),
        }
    }
}

impl From<Prediction> for RawPrediction {
    fn from(p: Prediction) -> Self {
        let mut r = RawPrediction { points: None, bbox: None, text: None };
        match p {
            Prediction::Points(v) => r.points = Some(v),
            Prediction::Box(b) => r.bbox = Some(b),
            Prediction::Text(t) => r.text = Some(t),
        }
        r
    }
}

/// Ground-truth region: a box or a mask PNG path relative to the record file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRegion", into = "RawRegion")]
pub enum GtRegion {
    Box(NormBox),
    Mask(String),
}

#[derive(Serialize, Deserialize)]
struct RawRegion {
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    bbox: Option<NormBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<String>,
}

impl TryFrom<RawRegion> for GtRegion {
    type Error = String;
    fn try_from(r: RawRegion) -> Result<Self, String> {
        match (r.bbox, r.mask) {
            (Some(b), None) => Ok(GtRegion::Box(b)),
            (None, Some(m)) => Ok(GtRegion::Mask(m)),
            _ => Err("gt_region needs exactly one of box, mask".into()),
        }
    }
}

impl From<GtRegion> for RawRegion {
    fn from(g: GtRegion) -> Self {
        match g {
            GtRegion::Box(b) => RawRegion { bbox: Some(b), mask: None },
            GtRegion::Mask(m) => RawRegion { bbox: None, mask: Some(m) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub task: EvalTask,
    #[serde(default)]
    pub instruction: String,
    pub prediction: Prediction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_region: Option<GtRegion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_trace: Option<Vec<NormPoint>>,
    /// Scene image for judge overlays, relative to the record file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    /// Directory that relative mask and image paths resolve against.
    pub base_dir: PathBuf,
    pub sampling: BoxSampling,
    pub judge_retries: u32,
    pub judge_max_in_flight: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            base_dir: PathBuf::from("."),
            sampling: BoxSampling::default(),
            judge_retries: 2,
            judge_max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordResult {
    pub id: String,
    pub task: EvalTask,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judge_score: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judge_explanation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judge_error: Option<String>,
    /// Set when the judge error was a transport failure.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub judge_unreachable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Scored points (point task) or prediction trace (trace task).
    #[serde(skip)]
    pub scored_points: Vec<NormPoint>,
}

impl RecordResult {
    fn new(id: &str, task: EvalTask) -> Self {
        Self {
            id: id.to_string(),
            task,
            accuracy: None,
            mae: None,
            rmse: None,
            judge_score: None,
            judge_explanation: None,
            judge_error: None,
            judge_unreachable: false,
            error: None,
            scored_points: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub records: usize,
    pub point_records: usize,
    pub trace_records: usize,
    pub scored: usize,
    pub errored: usize,
    pub judged: usize,
    pub judge_errors: usize,
    pub judge_transport_errors: usize,
    pub mean_accuracy: Option<f64>,
    pub mean_mae: Option<f64>,
    pub mean_rmse: Option<f64>,
    pub mean_judge: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub judge_enabled: bool,
    pub records: Vec<RecordResult>,
    pub aggregates: Aggregates,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl EvalReport {
    /// Recomputes aggregates from the per-record rows.
    pub fn aggregate(judge_enabled: bool, records: Vec<RecordResult>) -> Self {
        let a = Aggregates {
            records: records.len(),
            point_records: records.iter().filter(|r| r.task == EvalTask::Point).count(),
            trace_records: records.iter().filter(|r| r.task == EvalTask::Trace).count(),
            scored: records.iter().filter(|r| r.error.is_none()).count(),
            errored: records.iter().filter(|r| r.error.is_some()).count(),
            judged: records.iter().filter(|r| r.judge_score.is_some()).count(),
            judge_errors: records.iter().filter(|r| r.judge_error.is_some()).count(),
            judge_transport_errors: records.iter().filter(|r| r.judge_unreachable).count(),
            mean_accuracy: mean(records.iter().filter_map(|r| r.accuracy)),
            mean_mae: mean(records.iter().filter_map(|r| r.mae)),
            mean_rmse: mean(records.iter().filter_map(|r| r.rmse)),
            mean_judge: mean(records.iter().filter_map(|r| r.judge_score.map(f64::from))),
        };
        EvalReport { judge_enabled, records, aggregates: a }
    }

    /// Plain-text summary: accuracy for point records; RMSE, MAE and (when
    /// enabled) judge score for trace records.
    pub fn summary_table(&self) -> String {
        let a = &self.aggregates;
        let opt = |v: Option<f64>, f: &dyn Fn(f64) -> String| v.map_or_else(|| "-".to_string(), f);
        let mut out = String::new();
        let _ = writeln!(out, "records: {}  scored: {}  errored: {}", a.records, a.scored, a.errored);
        if a.point_records > 0 {
            let _ = writeln!(out, "{:<8}{:>10}", "Task", "Accuracy");
            let _ = writeln!(out, "{:<8}{:>10}", "point", opt(a.mean_accuracy, &|v| format!("{:.2}%", 100.0 * v)));
        }
        if a.trace_records > 0 {
            if self.judge_enabled {
                let _ = writeln!(out, "{:<8}{:>10}{:>10}{:>10}", "Task", "RMSE", "MAE", "Judge");
                let _ = writeln!(
                    out,
                    "{:<8}{:>10}{:>10}{:>10}",
                    "trace",
                    opt(a.mean_rmse, &|v| format!("{v:.2}")),
                    opt(a.mean_mae, &|v| format!("{v:.2}")),
                    opt(a.mean_judge, &|v| format!("{v:.2}")),
                );
            } else {
                let _ = writeln!(out, "{:<8}{:>10}{:>10}", "Task", "RMSE", "MAE");
                let _ = writeln!(
                    out,
                    "{:<8}{:>10}{:>10}",
                    "trace",
                    opt(a.mean_rmse, &|v| format!("{v:.2}")),
                    opt(a.mean_mae, &|v| format!("{v:.2}")),
                );
            }
        }
        if self.judge_enabled && a.judge_errors > 0 {
            let _ = writeln!(out, "judge errors: {} ({} transport)", a.judge_errors, a.judge_transport_errors);
        }
        out
    }
}

fn prediction_points(p: &Prediction, sampling: BoxSampling) -> Result<Vec<NormPoint>, String> {
    match p {
        Prediction::Points(v) => Ok(v.clone()),
        Prediction::Box(b) => Ok(sample_box_points(b, sampling)),
        Prediction::Text(t) => {
            let doc = markup::parse_document(t).map_err(|e| format!("prediction text: {e}"))?;
            match markup::extract_affordance(&doc) {
                Ok((_, Some(pts))) => Ok(pts.into_inner()),
                Ok((Some(b), None)) => Ok(sample_box_points(&b, sampling)),
                _ => Err("prediction text has no points or box".into()),
            }
        }
    }
}

fn prediction_trace(p: &Prediction) -> Result<Vec<NormPoint>, String> {
    match p {
        Prediction::Points(v) => Ok(v.clone()),
        Prediction::Box(_) => Err("box prediction for a trace task".into()),
        Prediction::Text(t) => {
            let doc = markup::parse_document(t).map_err(|e| format!("prediction text: {e}"))?;
            markup::extract_trace(&doc).map(|t| t.points.into_inner()).map_err(|e| format!("prediction text: {e}"))
        }
    }
}

fn score_record(r: &EvalRecord, opts: &EvalOptions) -> RecordResult {
    let mut row = RecordResult::new(&r.id, r.task);
    let outcome = match r.task {
        EvalTask::Point => score_point(r, opts, &mut row),
        EvalTask::Trace => score_trace(r, &mut row),
    };
    if let Err(e) = outcome {
        row.error = Some(e);
    }
    row
}

fn score_point(r: &EvalRecord, opts: &EvalOptions, row: &mut RecordResult) -> Result<(), String> {
    let region = match r.gt_region.as_ref().ok_or("point record has no gt_region")? {
        GtRegion::Box(b) => Region::Box(*b),
        GtRegion::Mask(p) => Region::Mask(datastore::read_mask_png(&opts.base_dir.join(p)).map_err(|e| e.to_string())?),
    };
    let pts = prediction_points(&r.prediction, opts.sampling)?;
    row.accuracy = Some(point_accuracy(&pts, &region).map_err(|e| e.to_string())?);
    row.scored_points = pts;
    Ok(())
}

fn score_trace(r: &EvalRecord, row: &mut RecordResult) -> Result<(), String> {
    let gt = r.gt_trace.as_ref().ok_or("trace record has no gt_trace")?;
    let pred = prediction_trace(&r.prediction)?;
    let m = trace_metrics(&to_points(&pred), &to_points(gt)).map_err(|e| e.to_string())?;
    row.mae = Some(m.mae);
    row.rmse = Some(m.rmse);
    row.scored_points = pred;
    Ok(())
}

fn overlay_png(r: &EvalRecord, trace: &[NormPoint], base: &Path) -> Result<Vec<u8>, String> {
    let img = match &r.image {
        Some(p) => image::open(base.join(p)).map_err(|e| format!("{}: {e}", base.join(p).display()))?.to_rgb8(),
        None => blank_canvas(1000, 1000),
    };
    Ok(encode_png(&render_overlay(&img, trace, &OverlayStyle::default())))
}

/// Scores every record in parallel (row order follows input order), then
/// queries the judge for scored trace records when one is supplied.
pub fn evaluate(records: &[EvalRecord], opts: &EvalOptions, judge: Option<&dyn JudgeTransport>) -> EvalReport {
    let mut rows: Vec<RecordResult> = records.par_iter().map(|r| score_record(r, opts)).collect();
    if let Some(judge) = judge {
        let run = |rows: &mut Vec<RecordResult>| {
            rows.par_iter_mut().zip(records.par_iter()).for_each(|(row, r)| {
                if row.task != EvalTask::Trace || row.error.is_some() {
                    return;
                }
                let png = match overlay_png(r, &row.scored_points, &opts.base_dir) {
                    Ok(png) => png,
                    Err(e) => {
                        row.judge_error = Some(format!("overlay: {e}"));
                        return;
                    }
                };
                match judge_score(judge, &r.instruction, &png, opts.judge_retries) {
                    Ok(v) => {
                        row.judge_score = Some(v.score);
                        row.judge_explanation = Some(v.explanation);
                    }
                    Err(e) => {
                        row.judge_unreachable = matches!(e, JudgeError::Transport { .. });
                        row.judge_error = Some(e.to_string());
                    }
                }
            })
        };
        match rayon::ThreadPoolBuilder::new().num_threads(opts.judge_max_in_flight.max(1)).build() {
            Ok(pool) => pool.install(|| run(&mut rows)),
            Err(_) => run(&mut rows),
        }
    }
    EvalReport::aggregate(judge.is_some(), rows)
}
