//! File schemas, validation and ingestion: JSONL corpora, masks, depth maps,
//! point tracks, intrinsics and detection files.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::camera::{CameraModel, DepthMap};
use crate::coordsys::{ImageShape, PixelPoint};
use crate::labelgen::{DemoRecord, FilterReason, Track};
use crate::markup::{self, BindingViolation, ParseError};
use crate::mask::BinaryMask;

#[derive(Debug, Error)]
pub enum DatastoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Line { path: PathBuf, line: usize, message: String },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl DatastoreError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    fn format(path: &Path, message: impl fmt::Display) -> Self {
        Self::Format { path: path.to_path_buf(), message: message.to_string() }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Self::Io { .. })
    }
}

// ---------------------------------------------------------------------------
// JSONL

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReadMode {
    /// Abort on the first malformed line.
    #[default]
    Strict,
    /// Skip malformed lines and count them.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JsonlRead<T> {
    pub records: Vec<T>,
    pub errors: Vec<LineError>,
}

/// Reads one record per non-blank line, in file order. Line numbers are 1-based.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path, mode: ReadMode) -> Result<JsonlRead<T>, DatastoreError> {
    let file = File::open(path).map_err(|e| DatastoreError::io(path, e))?;
    let mut out = JsonlRead { records: Vec::new(), errors: Vec::new() };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DatastoreError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(&line) {
            Ok(r) => out.records.push(r),
            Err(e) => {
                let err = LineError { line: i + 1, message: e.to_string() };
                if mode == ReadMode::Strict {
                    return Err(DatastoreError::Line {
                        path: path.to_path_buf(),
                        line: err.line,
                        message: err.message,
                    });
                }
                out.errors.push(err);
            }
        }
    }
    Ok(out)
}

/// Writes one compact JSON object per line and returns the count.
pub fn write_jsonl<'a, T: Serialize + 'a>(
    records: impl IntoIterator<Item = &'a T>,
    path: &Path,
) -> Result<usize, DatastoreError> {
    let file = File::create(path).map_err(|e| DatastoreError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut n = 0;
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| DatastoreError::format(path, e))?;
        w.write_all(b"\n").map_err(|e| DatastoreError::io(path, e))?;
        n += 1;
    }
    w.flush().map_err(|e| DatastoreError::io(path, e))?;
    Ok(n)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), DatastoreError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| DatastoreError::format(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| DatastoreError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, DatastoreError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatastoreError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| DatastoreError::format(path, e))
}

// ---------------------------------------------------------------------------
// Sample envelopes

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    L1,
    L2,
    L3,
    L4,
    L5,
    Inverse,
}

impl Serialize for Level {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Level::L1 => s.serialize_u8(1),
            Level::L2 => s.serialize_u8(2),
            Level::L3 => s.serialize_u8(3),
            Level::L4 => s.serialize_u8(4),
            Level::L5 => s.serialize_u8(5),
            Level::Inverse => s.serialize_str("inverse"),
        }
    }
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u8),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(1) => Ok(Level::L1),
            Raw::Num(2) => Ok(Level::L2),
            Raw::Num(3) => Ok(Level::L3),
            Raw::Num(4) => Ok(Level::L4),
            Raw::Num(5) => Ok(Level::L5),
            Raw::Text(t) if t == "inverse" => Ok(Level::Inverse),
            _ => Err(serde::de::Error::custom("level must be 1-5 or \"inverse\"")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Human,
    Gpt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub from: Role,
    pub value: String,
}

impl Turn {
    pub fn human(value: impl Into<String>) -> Self {
        Self { from: Role::Human, value: value.into() }
    }

    pub fn gpt(value: impl Into<String>) -> Self {
        Self { from: Role::Gpt, value: value.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub seed: u64,
    pub verdict: FilterReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleEnvelope {
    pub id: String,
    pub level: Level,
    pub image_path: String,
    pub conversations: Vec<Turn>,
    pub provenance: Provenance,
}

impl SampleEnvelope {
    /// Text of the last model turn.
    pub fn answer(&self) -> Option<&str> {
        self.conversations.iter().rev().find(|t| t.from == Role::Gpt).map(|t| t.value.as_str())
    }

    pub fn prompt(&self) -> Option<&str> {
        self.conversations.iter().find(|t| t.from == Role::Human).map(|t| t.value.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SampleViolation {
    NoConversation,
    /// Turn `index` breaks the human/model alternation.
    RoleOrder {
        index: usize,
    },
    Parse {
        turn: usize,
        error: ParseError,
    },
    Binding {
        turn: usize,
        violation: BindingViolation,
    },
    MissingBox,
    MissingPoints,
    TraceLength {
        found: usize,
    },
    PointOutsideBox {
        index: usize,
    },
}

impl fmt::Display for SampleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NoConversation => write!(f, "sample has no conversation turns"),
            Self::RoleOrder { index } => write!(f, "turn {index} breaks human/gpt alternation"),
            Self::Parse { turn, error } => write!(f, "turn {turn}: {error}"),
            Self::Binding { turn, violation } => write!(f, "turn {turn}: {violation}"),
            Self::MissingBox => write!(f, "affordance answer has no box"),
            Self::MissingPoints => write!(f, "answer has no points"),
            Self::TraceLength { found } => write!(f, "trace has {found} points, expected 8"),
            Self::PointOutsideBox { index } => write!(f, "point {index} lies outside the affordance box"),
        }
    }
}

/// Binding validation of every model turn plus level-specific answer rules.
pub fn validate_sample(sample: &SampleEnvelope) -> Vec<SampleViolation> {
    let mut out = Vec::new();
    if sample.conversations.is_empty() {
        out.push(SampleViolation::NoConversation);
        return out;
    }
    for (i, t) in sample.conversations.iter().enumerate() {
        let expected = if i % 2 == 0 { Role::Human } else { Role::Gpt };
        if t.from != expected {
            out.push(SampleViolation::RoleOrder { index: i });
        }
    }
    let mut last_answer = None;
    for (i, t) in sample.conversations.iter().enumerate().filter(|(_, t)| t.from == Role::Gpt) {
        if sample.level == Level::Inverse {
            continue;
        }
        match markup::parse_document(&t.value) {
            Ok(doc) => {
                out.extend(
                    markup::validate_binding(&doc)
                        .into_iter()
                        .map(|violation| SampleViolation::Binding { turn: i, violation }),
                );
                last_answer = Some(doc);
            }
            Err(error) => out.push(SampleViolation::Parse { turn: i, error }),
        }
    }
    let Some(doc) = last_answer else { return out };
    match sample.level {
        Level::L4 => match markup::extract_affordance(&doc) {
            Ok((b, pts)) => {
                if b.is_none() {
                    out.push(SampleViolation::MissingBox);
                }
                match (&b, &pts) {
                    (Some(b), Some(pts)) => {
                        for (k, p) in pts.points().iter().enumerate() {
                            if !b.contains(*p) {
                                out.push(SampleViolation::PointOutsideBox { index: k });
                            }
                        }
                    }
                    (_, None) => out.push(SampleViolation::MissingPoints),
                    _ => {}
                }
            }
            Err(_) => {
                out.push(SampleViolation::MissingBox);
                out.push(SampleViolation::MissingPoints);
            }
        },
        Level::L5 => match markup::extract_trace(&doc) {
            Ok(t) if t.points.len() != markup::TRACE_LEN => {
                out.push(SampleViolation::TraceLength { found: t.points.len() })
            }
            Ok(_) => {}
            Err(_) => out.push(SampleViolation::MissingPoints),
        },
        _ => {}
    }
    out
}

// ---------------------------------------------------------------------------
// Images, masks, depth

/// Reads an 8-bit mask PNG; nonzero luma is foreground.
pub fn read_mask_png(path: &Path) -> Result<BinaryMask, DatastoreError> {
    let img = image::open(path).map_err(|e| image_error(path, e))?.to_luma8();
    let shape = ImageShape::new(img.width(), img.height()).map_err(|e| DatastoreError::format(path, e))?;
    let data = img.pixels().map(|p| p.0[0] != 0).collect();
    BinaryMask::new(shape, data).map_err(|e| DatastoreError::format(path, e))
}

pub fn write_mask_png(mask: &BinaryMask, path: &Path) -> Result<(), DatastoreError> {
    let s = mask.shape();
    let img = image::GrayImage::from_fn(s.width, s.height, |x, y| image::Luma([if mask.get(x, y) { 255 } else { 0 }]));
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| image_error(path, e))
}

/// Reads a depth map: 16-bit single-channel PNG, or CSV with one image row
/// per line (by extension).
pub fn read_depth(path: &Path) -> Result<DepthMap, DatastoreError> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        return read_depth_csv(path);
    }
    let img = image::open(path).map_err(|e| image_error(path, e))?;
    let img = match img {
        image::DynamicImage::ImageLuma16(g) => g,
        image::DynamicImage::ImageLuma8(_) => {
            return Err(DatastoreError::format(path, "depth PNG must be 16-bit single channel"))
        }
        _ => return Err(DatastoreError::format(path, "depth PNG must be single channel")),
    };
    let shape = ImageShape::new(img.width(), img.height()).map_err(|e| DatastoreError::format(path, e))?;
    DepthMap::new(shape, img.pixels().map(|p| u32::from(p.0[0])).collect()).map_err(|e| DatastoreError::format(path, e))
}

fn read_depth_csv(path: &Path) -> Result<DepthMap, DatastoreError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut samples = Vec::new();
    let mut width = None;
    let mut height = 0u32;
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if width.is_some_and(|w| w != rec.len()) {
            return Err(DatastoreError::Line {
                path: path.to_path_buf(),
                line: row + 1,
                message: format!("row has {} values, expected {}", rec.len(), width.unwrap_or(0)),
            });
        }
        width = Some(rec.len());
        for field in rec.iter() {
            let v: u32 = field.parse().map_err(|_| DatastoreError::Line {
                path: path.to_path_buf(),
                line: row + 1,
                message: format!("invalid depth value {field:?}"),
            })?;
            samples.push(v);
        }
        height += 1;
    }
    let shape = ImageShape::new(width.unwrap_or(0) as u32, height).map_err(|e| DatastoreError::format(path, e))?;
    DepthMap::new(shape, samples).map_err(|e| DatastoreError::format(path, e))
}

/// Writes a 16-bit PNG (values above 65535 saturate) or a CSV grid.
pub fn write_depth(depth: &DepthMap, path: &Path) -> Result<(), DatastoreError> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let mut text = String::new();
        for y in 0..depth.height() {
            let row: Vec<String> = (0..depth.width()).map(|x| depth.get(x, y).to_string()).collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        return std::fs::write(path, text).map_err(|e| DatastoreError::io(path, e));
    }
    let img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_fn(depth.width(), depth.height(), |x, y| {
        image::Luma([depth.get(x, y).min(u32::from(u16::MAX)) as u16])
    });
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| image_error(path, e))
}

pub fn read_intrinsics(path: &Path) -> Result<CameraModel, DatastoreError> {
    read_json(path)
}

fn image_error(path: &Path, e: image::ImageError) -> DatastoreError {
    match e {
        image::ImageError::IoError(io) => DatastoreError::io(path, io),
        other => DatastoreError::format(path, other),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> DatastoreError {
    if e.is_io_error() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return DatastoreError::io(path, io);
        }
        unreachable!("is_io_error implies an Io kind");
    }
    DatastoreError::format(path, e)
}

// ---------------------------------------------------------------------------
// Tracks

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct TrackRow {
    frame: u32,
    track_id: u32,
    u: f64,
    v: f64,
}

/// Reads `frame,track_id,u,v` rows into tracks ordered by track id, each
/// ordered by frame.
pub fn read_tracks_csv(path: &Path) -> Result<Vec<Track>, DatastoreError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| csv_error(path, e))?;
    let mut rows: Vec<TrackRow> = Vec::new();
    for (i, rec) in reader.deserialize().enumerate() {
        let row: TrackRow =
            rec.map_err(|e| DatastoreError::Line { path: path.to_path_buf(), line: i + 2, message: e.to_string() })?;
        if !(row.u.is_finite() && row.v.is_finite()) {
            return Err(DatastoreError::Line {
                path: path.to_path_buf(),
                line: i + 2,
                message: "non-finite coordinate".into(),
            });
        }
        rows.push(row);
    }
    rows.sort_by_key(|r| (r.track_id, r.frame));
    let mut tracks: Vec<Track> = Vec::new();
    let mut current = None;
    for r in rows {
        if current != Some(r.track_id) {
            tracks.push(Vec::new());
            current = Some(r.track_id);
        }
        tracks.last_mut().expect("pushed above").push(PixelPoint::new(r.u, r.v));
    }
    Ok(tracks)
}

pub fn write_tracks_csv(tracks: &[Track], path: &Path) -> Result<(), DatastoreError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for (id, t) in tracks.iter().enumerate() {
        for (frame, p) in t.iter().enumerate() {
            w.serialize(TrackRow { frame: frame as u32, track_id: id as u32, u: p.u, v: p.v })
                .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| DatastoreError::io(path, e))
}

// ---------------------------------------------------------------------------
// Demo corpus

pub const DEMO_MANIFEST: &str = "demos.jsonl";

/// One line of `demos.jsonl`; paths are relative to the corpus directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoEntry {
    pub id: String,
    pub instruction: String,
    pub image: String,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_mask: Option<String>,
    pub final_mask: String,
    pub tracks: String,
    #[serde(default)]
    pub source: String,
    #[serde(default)]
    pub episode: String,
}

/// Loads the masks and tracks an entry refers to.
pub fn load_demo(entry: &DemoEntry, root: &Path) -> Result<DemoRecord, DatastoreError> {
    let manifest = root.join(DEMO_MANIFEST);
    let shape = ImageShape::new(entry.width, entry.height).map_err(|e| DatastoreError::format(&manifest, e))?;
    let load_mask = |rel: &str| -> Result<BinaryMask, DatastoreError> {
        let p = root.join(rel);
        let m = read_mask_png(&p)?;
        m.ensure_shape(shape).map_err(|e| DatastoreError::format(&p, e))?;
        Ok(m)
    };
    let initial_mask = entry.initial_mask.as_deref().map(load_mask).transpose()?;
    let final_mask = load_mask(&entry.final_mask)?;
    let raw_tracks = read_tracks_csv(&root.join(&entry.tracks))?;
    Ok(DemoRecord {
        id: entry.id.clone(),
        instruction: entry.instruction.clone(),
        image_path: entry.image.clone(),
        image_shape: shape,
        initial_mask,
        final_mask,
        raw_tracks,
        source: entry.source.clone(),
        episode: entry.episode.clone(),
    })
}

// ---------------------------------------------------------------------------
// Detection files

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub name: String,
    /// Pixel box `[x1, y1, x2, y2]`.
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    /// Mask PNG path relative to the detection file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFile {
    pub image_path: String,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<Detection>,
}

impl DetectionFile {
    pub fn shape(&self) -> Result<ImageShape, String> {
        ImageShape::new(self.width, self.height).map_err(|e| e.to_string())
    }

    /// Checks that every box is ordered and lies within the image.
    pub fn validate(&self) -> Result<(), String> {
        let shape = self.shape()?;
        for (i, o) in self.objects.iter().enumerate() {
            let [x1, y1, x2, y2] = o.bbox;
            let inside = |x: f64, y: f64| shape.contains(PixelPoint::new(x, y));
            if !(x1 <= x2 && y1 <= y2 && inside(x1, y1) && inside(x2, y2)) {
                return Err(format!("object {i} ({:?}) has a box outside the image or inverted", o.name));
            }
        }
        Ok(())
    }
}
