//! Affordance and visual-trace labels from demonstration records, rule-based
//! filtering, and inverse samples.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coordsys::{to_norm_clamped, ImageShape, NormBox, NormPoint, PixelPoint};
use crate::datastore::{Level, Provenance, SampleEnvelope, Turn};
use crate::markup::{self, PointSet};
use crate::mask::BinaryMask;
use crate::templates;

pub const AFFORDANCE_POINTS: usize = 8;
pub const TRACE_POINTS: usize = 8;
/// Spline samples used for arc-length lookup.
pub const DENSE_SAMPLES: usize = 1000;
pub const INVERSE_SUFFIX: &str = "-inv";

/// Ordered pixel positions of one tracked point over frames.
pub type Track = Vec<PixelPoint>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabelError {
    #[error("mask is empty")]
    EmptyMask,
    #[error("no tracks")]
    NoTracks,
    #[error("track has fewer than two distinct points")]
    DegenerateSpline,
    #[error("resampling needs at least two output points")]
    TooFewOutputPoints,
    #[error("record was rejected: {0}")]
    Rejected(FilterReason),
    #[error("sample is not invertible: {0}")]
    NotInvertible(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoRecord {
    pub id: String,
    pub instruction: String,
    pub image_path: String,
    pub image_shape: ImageShape,
    /// Informational; tracker query points are upstream of this crate.
    pub initial_mask: Option<BinaryMask>,
    pub final_mask: BinaryMask,
    pub raw_tracks: Vec<Track>,
    pub source: String,
    pub episode: String,
}

/// Pixel box corners for the mask's tight bounds: pixel `(u, v)` contributes
/// `to_norm(u, v)` as a min corner and `to_norm(u + 1, v + 1)` (clamped) as a
/// max corner.
pub fn affordance_box(mask: &BinaryMask, shape: ImageShape) -> Result<NormBox, LabelError> {
    let b = mask.bounds().ok_or(LabelError::EmptyMask)?;
    let lo = to_norm_clamped(PixelPoint::new(f64::from(b.min_x), f64::from(b.min_y)), shape);
    let hi = to_norm_clamped(PixelPoint::new(f64::from(b.max_x) + 1.0, f64::from(b.max_y) + 1.0), shape);
    Ok(NormBox::new(lo.x, lo.y, hi.x, hi.y).expect("corners are ordered"))
}

pub fn erosion_radius(area: usize) -> u32 {
    ((0.05 * (area as f64).sqrt()).round() as u32).max(1)
}

/// Normalized position of a pixel's center.
pub fn pixel_to_norm(x: u32, y: u32, shape: ImageShape) -> NormPoint {
    to_norm_clamped(PixelPoint::new(f64::from(x) + 0.5, f64::from(y) + 0.5), shape)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffordancePoints {
    pub pixels: Vec<(u32, u32)>,
    pub points: PointSet,
    /// Set when the (possibly eroded) mask had fewer than `k` pixels.
    pub with_replacement: bool,
    pub eroded: bool,
}

/// Samples `k` pixels of the eroded mask (or of the mask itself when erosion
/// empties it) uniformly at random.
pub fn sample_affordance_points(
    mask: &BinaryMask,
    shape: ImageShape,
    k: usize,
    seed: u64,
) -> Result<AffordancePoints, LabelError> {
    let area = mask.area();
    if area == 0 {
        return Err(LabelError::EmptyMask);
    }
    let eroded = mask.erode_disk(erosion_radius(area));
    let (pool, eroded): (Vec<(u32, u32)>, bool) =
        if eroded.is_empty() { (mask.pixels().collect(), false) } else { (eroded.pixels().collect(), true) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let with_replacement = pool.len() < k;
    let pixels: Vec<(u32, u32)> = if with_replacement {
        (0..k).map(|_| pool[rng.gen_range(0..pool.len())]).collect()
    } else {
        index::sample(&mut rng, pool.len(), k).into_iter().map(|i| pool[i]).collect()
    };
    let points = pixels.iter().map(|&(x, y)| pixel_to_norm(x, y, shape)).collect();
    Ok(AffordancePoints {
        pixels,
        points: PointSet::new(points).map_err(|_| LabelError::EmptyMask)?,
        with_replacement,
        eroded,
    })
}

pub fn path_length(track: &[PixelPoint]) -> f64 {
    track.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

/// Index of the track with the greatest path length; ties go to the lowest index.
pub fn select_longest(tracks: &[Track]) -> Result<usize, LabelError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, t) in tracks.iter().enumerate() {
        let len = path_length(t);
        if best.is_none_or(|(_, b)| len > b) {
            best = Some((i, len));
        }
    }
    best.map(|(i, _)| i).ok_or(LabelError::NoTracks)
}

/// Natural cubic spline through 2D points, parameterized by cumulative chord length.
#[derive(Debug, Clone, PartialEq)]
pub struct ChordSpline {
    knots: Vec<f64>,
    xs: Vec<f64>,
    ys: Vec<f64>,
    mx: Vec<f64>,
    my: Vec<f64>,
}

impl ChordSpline {
    /// Fits through `points` after removing consecutive duplicates.
    pub fn fit(points: &[PixelPoint]) -> Result<Self, LabelError> {
        let mut pts: Vec<PixelPoint> = Vec::with_capacity(points.len());
        for p in points {
            if pts.last() != Some(p) {
                pts.push(*p);
            }
        }
        if pts.len() < 2 {
            return Err(LabelError::DegenerateSpline);
        }
        let mut knots = vec![0.0];
        for w in pts.windows(2) {
            knots.push(knots.last().unwrap() + w[0].distance(&w[1]));
        }
        let xs: Vec<f64> = pts.iter().map(|p| p.u).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.v).collect();
        let mx = natural_second_derivatives(&knots, &xs);
        let my = natural_second_derivatives(&knots, &ys);
        Ok(Self { knots, xs, ys, mx, my })
    }

    /// Parameter range end (total chord length).
    pub fn t_max(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    pub fn knot_count(&self) -> usize {
        self.knots.len()
    }

    pub fn eval(&self, t: f64) -> PixelPoint {
        let t = t.clamp(0.0, self.t_max());
        let i = match self.knots.partition_point(|&k| k <= t) {
            0 => 0,
            n => (n - 1).min(self.knots.len() - 2),
        };
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - t) / h;
        let b = (t - self.knots[i]) / h;
        let seg = |v: &[f64], m: &[f64]| {
            a * v[i] + b * v[i + 1] + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0
        };
        PixelPoint::new(seg(&self.xs, &self.mx), seg(&self.ys, &self.my))
    }
}

/// Second derivatives of the natural cubic spline (zero at both ends),
/// via the Thomas algorithm.
fn natural_second_derivatives(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let inner = n - 2;
    let mut diag = vec![0.0; inner];
    let mut upper = vec![0.0; inner];
    let mut rhs = vec![0.0; inner];
    for k in 0..inner {
        let i = k + 1;
        let h0 = t[i] - t[i - 1];
        let h1 = t[i + 1] - t[i];
        diag[k] = 2.0 * (h0 + h1);
        upper[k] = h1;
        rhs[k] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
    }
    for k in 1..inner {
        let lower = t[k + 1] - t[k];
        let w = lower / diag[k - 1];
        diag[k] -= w * upper[k - 1];
        rhs[k] -= w * rhs[k - 1];
    }
    m[inner] = rhs[inner - 1] / diag[inner - 1];
    for k in (0..inner - 1).rev() {
        m[k + 1] = (rhs[k] - upper[k] * m[k + 2]) / diag[k];
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub spline: ChordSpline,
    /// Spline parameters of the output points.
    pub params: Vec<f64>,
    pub pixels: Vec<PixelPoint>,
}

/// `n` points at equal arc length along the chord-length spline through
/// `track`, endpoints included, in pixel space.
pub fn resample_equidistant_px(track: &[PixelPoint], n: usize) -> Result<Resampled, LabelError> {
    if n < 2 {
        return Err(LabelError::TooFewOutputPoints);
    }
    let spline = ChordSpline::fit(track)?;
    let t_max = spline.t_max();
    let ts: Vec<f64> = (0..=DENSE_SAMPLES).map(|i| t_max * i as f64 / DENSE_SAMPLES as f64).collect();
    let dense: Vec<PixelPoint> = ts.iter().map(|&t| spline.eval(t)).collect();
    let mut arc = vec![0.0];
    for w in dense.windows(2) {
        arc.push(arc.last().unwrap() + w[0].distance(&w[1]));
    }
    let total = *arc.last().unwrap();
    let mut params = Vec::with_capacity(n);
    for k in 0..n {
        let target = total * k as f64 / (n - 1) as f64;
        let t = if k == 0 {
            0.0
        } else if k == n - 1 {
            t_max
        } else {
            let j = arc.partition_point(|&s| s < target).clamp(1, DENSE_SAMPLES);
            let (s0, s1) = (arc[j - 1], arc[j]);
            let f = if s1 > s0 { (target - s0) / (s1 - s0) } else { 0.0 };
            ts[j - 1] + f * (ts[j] - ts[j - 1])
        };
        params.push(t);
    }
    let pixels = params.iter().map(|&t| spline.eval(t)).collect();
    Ok(Resampled { spline, params, pixels })
}

/// Normalized equal-arc-length resampling of a pixel track.
pub fn resample_equidistant(track: &[PixelPoint], shape: ImageShape, n: usize) -> Result<Vec<NormPoint>, LabelError> {
    let r = resample_equidistant_px(track, n)?;
    Ok(r.pixels.iter().map(|&p| to_norm_clamped(p, shape)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterReason {
    Ok,
    MaskTooSmall,
    MaskTooLarge,
    TraceTooShort,
    TrackMissing,
    DegenerateSpline,
}

impl FilterReason {
    pub const ALL: [FilterReason; 6] = [
        FilterReason::Ok,
        FilterReason::MaskTooSmall,
        FilterReason::MaskTooLarge,
        FilterReason::TraceTooShort,
        FilterReason::TrackMissing,
        FilterReason::DegenerateSpline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FilterReason::Ok => "ok",
            FilterReason::MaskTooSmall => "mask-too-small",
            FilterReason::MaskTooLarge => "mask-too-large",
            FilterReason::TraceTooShort => "trace-too-short",
            FilterReason::TrackMissing => "track-missing",
            FilterReason::DegenerateSpline => "degenerate-spline",
        }
    }
}

impl std::fmt::Display for FilterReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub keep: bool,
    pub reason: FilterReason,
}

impl FilterVerdict {
    pub fn from_reason(reason: FilterReason) -> Self {
        Self { keep: reason == FilterReason::Ok, reason }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterThresholds {
    /// Final-mask area bounds as fractions of the image area.
    pub min_area: f64,
    pub max_area: f64,
    /// Minimum selected-track path length as a fraction of the image diagonal.
    pub min_len: f64,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        Self { min_area: 0.0005, max_area: 0.25, min_len: 0.05 }
    }
}

/// First failing rule, in the order: mask too small, mask too large, no
/// track, selected track too short, spline degenerate.
pub fn filter_record(record: &DemoRecord, th: &FilterThresholds) -> FilterVerdict {
    let shape = record.image_shape;
    let frac = record.final_mask.area() as f64 / shape.pixel_count() as f64;
    let reason = if frac < th.min_area {
        FilterReason::MaskTooSmall
    } else if frac > th.max_area {
        FilterReason::MaskTooLarge
    } else if record.raw_tracks.iter().all(|t| t.is_empty()) {
        FilterReason::TrackMissing
    } else {
        let track = &record.raw_tracks[select_longest(&record.raw_tracks).expect("nonempty")];
        if path_length(track) < th.min_len * shape.diagonal() {
            FilterReason::TraceTooShort
        } else if ChordSpline::fit(track).is_err() {
            FilterReason::DegenerateSpline
        } else {
            FilterReason::Ok
        }
    };
    FilterVerdict::from_reason(reason)
}

/// Per-record sampling seed: the run seed mixed with the record id.
pub fn record_seed(run_seed: u64, id: &str) -> u64 {
    // FNV-1a over the id, then a splitmix64 finalizer
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = run_seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffordanceLabel {
    pub bbox: NormBox,
    pub points: AffordancePoints,
}

pub fn affordance_label(record: &DemoRecord, seed: u64) -> Result<AffordanceLabel, LabelError> {
    let bbox = affordance_box(&record.final_mask, record.image_shape)?;
    let points = sample_affordance_points(&record.final_mask, record.image_shape, AFFORDANCE_POINTS, seed)?;
    Ok(AffordanceLabel { bbox, points })
}

pub fn trace_label(record: &DemoRecord) -> Result<Vec<NormPoint>, LabelError> {
    let idx = select_longest(&record.raw_tracks)?;
    resample_equidistant(&record.raw_tracks[idx], record.image_shape, TRACE_POINTS)
}

fn envelope(record: &DemoRecord, level: Level, prompt: String, answer: String, seed: u64) -> SampleEnvelope {
    SampleEnvelope {
        id: format!("{}-l{}", record.id, if level == Level::L4 { 4 } else { 5 }),
        level,
        image_path: record.image_path.clone(),
        conversations: vec![Turn::human(prompt), Turn::gpt(answer)],
        provenance: Provenance { source: record.source.clone(), seed, verdict: FilterReason::Ok },
    }
}

fn ensure_kept(record: &DemoRecord, th: &FilterThresholds) -> Result<(), LabelError> {
    let v = filter_record(record, th);
    if v.keep {
        Ok(())
    } else {
        Err(LabelError::Rejected(v.reason))
    }
}

/// Affordance sample for a record that passes the filters.
pub fn make_level4(record: &DemoRecord, th: &FilterThresholds, seed: u64) -> Result<SampleEnvelope, LabelError> {
    ensure_kept(record, th)?;
    let label = affordance_label(record, seed)?;
    let answer = templates::level4_answer(&label.bbox, label.points.points.points());
    Ok(envelope(record, Level::L4, templates::level4_prompt(&record.instruction), answer, seed))
}

/// Visual trace sample for a record that passes the filters.
pub fn make_level5(record: &DemoRecord, th: &FilterThresholds, seed: u64) -> Result<SampleEnvelope, LabelError> {
    ensure_kept(record, th)?;
    let trace = trace_label(record)?;
    let answer = templates::level5_answer(&trace);
    Ok(envelope(record, Level::L5, templates::level5_prompt(&record.instruction), answer, seed))
}

/// Swaps a sample's visual aid and instruction. Applied to an inverse sample
/// it restores the forward sample.
pub fn invert_sample(sample: &SampleEnvelope) -> Result<SampleEnvelope, LabelError> {
    let prompt = sample.prompt().ok_or(LabelError::NotInvertible("no prompt"))?;
    let answer = sample.answer().ok_or(LabelError::NotInvertible("no answer"))?;
    match sample.level {
        Level::L4 | Level::L5 => {
            let instruction =
                templates::instruction_from_prompt(prompt).ok_or(LabelError::NotInvertible("unrecognized prompt"))?;
            Ok(SampleEnvelope {
                id: format!("{}{INVERSE_SUFFIX}", sample.id),
                level: Level::Inverse,
                image_path: sample.image_path.clone(),
                conversations: vec![Turn::human(templates::inverse_prompt(answer)), Turn::gpt(instruction)],
                provenance: sample.provenance.clone(),
            })
        }
        Level::Inverse => {
            let aid = templates::aid_from_inverse_prompt(prompt)
                .ok_or(LabelError::NotInvertible("unrecognized inverse prompt"))?;
            let doc = markup::parse_document(aid).map_err(|_| LabelError::NotInvertible("aid does not parse"))?;
            let (level, prompt) = match markup::extract_affordance(&doc) {
                Ok((Some(_), _)) => (Level::L4, templates::level4_prompt(answer)),
                _ => (Level::L5, templates::level5_prompt(answer)),
            };
            let id = sample.id.strip_suffix(INVERSE_SUFFIX).unwrap_or(&sample.id).to_string();
            Ok(SampleEnvelope {
                id,
                level,
                image_path: sample.image_path.clone(),
                conversations: vec![Turn::human(prompt), Turn::gpt(aid)],
                provenance: sample.provenance.clone(),
            })
        }
        _ => Err(LabelError::NotInvertible("only affordance and trace samples carry a visual aid")),
    }
}

/// Result of running one record through the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordOutcome {
    pub id: String,
    pub verdict: FilterVerdict,
    pub seed: u64,
    pub level4: Option<SampleEnvelope>,
    pub level5: Option<SampleEnvelope>,
}

pub fn process_record(record: &DemoRecord, th: &FilterThresholds, run_seed: u64) -> RecordOutcome {
    let seed = record_seed(run_seed, &record.id);
    let verdict = filter_record(record, th);
    let (level4, level5) = if verdict.keep {
        (make_level4(record, th, seed).ok(), make_level5(record, th, seed).ok())
    } else {
        (None, None)
    };
    RecordOutcome { id: record.id.clone(), verdict, seed, level4, level5 }
}
