//! Benchmark metrics: trace MAE/RMSE with length alignment, point accuracy
//! against boxes or masks, trace overlays and judge-model scoring.

mod judge;
mod overlay;
mod report;

pub use judge::{
    judge_score, parse_judge_response, HttpJudge, JudgeConfig, JudgeError, JudgeTransport, JudgeVerdict, TransportError,
};
pub use overlay::{blank_canvas, encode_png, render_overlay, OverlayStyle};
pub use report::{
    evaluate, Aggregates, EvalOptions, EvalRecord, EvalReport, EvalTask, GtRegion, Prediction, RecordResult,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coordsys::{from_norm, ImageShape, NormBox, NormPoint};
use crate::mask::BinaryMask;

pub type Point2 = [f64; 2];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("traces have {pred} and {gt} points")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("trace needs at least {0} points")]
    TooShort(usize),
    #[error("no points to score")]
    NoPoints,
}

pub fn to_points(trace: &[NormPoint]) -> Vec<Point2> {
    trace.iter().map(|p| p.as_f64()).collect()
}

fn dist(a: Point2, b: Point2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Resamples a polyline to `n` points at equal arc length by linear
/// interpolation. A zero-length polyline repeats its first point.
pub fn resample_linear(points: &[Point2], n: usize) -> Vec<Point2> {
    let mut cum = vec![0.0];
    for w in points.windows(2) {
        cum.push(cum.last().unwrap() + dist(w[0], w[1]));
    }
    let total = *cum.last().unwrap();
    if n == 1 || total == 0.0 {
        return vec![points[0]; n];
    }
    (0..n)
        .map(|k| {
            if k == n - 1 {
                return *points.last().unwrap();
            }
            let s = total * k as f64 / (n - 1) as f64;
            let j = cum.partition_point(|&c| c <= s).clamp(1, points.len() - 1);
            let seg = cum[j] - cum[j - 1];
            let f = if seg > 0.0 { (s - cum[j - 1]) / seg } else { 0.0 };
            let (a, b) = (points[j - 1], points[j]);
            [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]
        })
        .collect()
}

/// Returns `(pred', gt)` of equal length; `pred` is resampled only when the
/// lengths differ.
pub fn align_lengths(pred: &[Point2], gt: &[Point2]) -> Result<(Vec<Point2>, Vec<Point2>), MetricError> {
    if pred.len() < 2 || gt.len() < 2 {
        return Err(MetricError::TooShort(2));
    }
    let p = if pred.len() == gt.len() { pred.to_vec() } else { resample_linear(pred, gt.len()) };
    Ok((p, gt.to_vec()))
}

fn check_aligned(pred: &[Point2], gt: &[Point2]) -> Result<(), MetricError> {
    if pred.len() != gt.len() {
        return Err(MetricError::LengthMismatch { pred: pred.len(), gt: gt.len() });
    }
    if pred.is_empty() {
        return Err(MetricError::TooShort(1));
    }
    Ok(())
}

/// Mean per-point Euclidean distance.
pub fn trace_mae(pred: &[Point2], gt: &[Point2]) -> Result<f64, MetricError> {
    check_aligned(pred, gt)?;
    Ok(pred.iter().zip(gt).map(|(a, b)| dist(*a, *b)).sum::<f64>() / pred.len() as f64)
}

/// Root of the mean squared per-point distance.
pub fn trace_rmse(pred: &[Point2], gt: &[Point2]) -> Result<f64, MetricError> {
    check_aligned(pred, gt)?;
    let ms = pred.iter().zip(gt).map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sum::<f64>()
        / pred.len() as f64;
    Ok(ms.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceMetrics {
    pub mae: f64,
    pub rmse: f64,
}

/// Aligns `pred` to `gt` and computes both errors.
pub fn trace_metrics(pred: &[Point2], gt: &[Point2]) -> Result<TraceMetrics, MetricError> {
    let (p, g) = align_lengths(pred, gt)?;
    Ok(TraceMetrics { mae: trace_mae(&p, &g)?, rmse: trace_rmse(&p, &g)? })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Box(NormBox),
    Mask(BinaryMask),
}

impl Region {
    pub fn contains(&self, p: NormPoint) -> bool {
        match self {
            Region::Box(b) => b.contains(p),
            Region::Mask(m) => {
                let shape: ImageShape = m.shape();
                let px = from_norm(p, shape);
                m.get(px.u.floor() as u32, px.v.floor() as u32)
            }
        }
    }
}

/// Fraction of points inside the region (box edges count as inside).
pub fn point_accuracy(points: &[NormPoint], region: &Region) -> Result<f64, MetricError> {
    if points.is_empty() {
        return Err(MetricError::NoPoints);
    }
    Ok(points.iter().filter(|p| region.contains(**p)).count() as f64 / points.len() as f64)
}

/// How a predicted box becomes points for accuracy scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoxSampling {
    /// `k × k` grid at per-axis fractions `(i + 1) / (k + 1)`.
    Grid(u16),
    Midpoint,
}

impl Default for BoxSampling {
    fn default() -> Self {
        BoxSampling::Grid(3)
    }
}

/// Row-major `k × k` grid inside the box at fractions `(i + 1) / (k + 1)`,
/// rounded down.
pub fn sample_box_grid(b: &NormBox, k: u16) -> Vec<NormPoint> {
    let k = k.max(1);
    let at = |lo: u16, hi: u16, i: u16| -> u16 {
        let f = f64::from(i + 1) / f64::from(k + 1);
        (f64::from(lo) + f * f64::from(hi - lo)).floor() as u16
    };
    let mut out = Vec::with_capacity(usize::from(k) * usize::from(k));
    for j in 0..k {
        for i in 0..k {
            out.push(NormPoint { x: at(b.x1, b.x2, i), y: at(b.y1, b.y2, j) });
        }
    }
    out
}

pub fn sample_box_points(b: &NormBox, sampling: BoxSampling) -> Vec<NormPoint> {
    match sampling {
        BoxSampling::Grid(k) => sample_box_grid(b, k),
        BoxSampling::Midpoint => sample_box_grid(b, 1),
    }
}
