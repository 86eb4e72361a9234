//! Spatial relationship graphs from boxes, masks and depth.
//!
//! 2D relations compare box centers with a margin; depth relations apply the
//! relative depth gap rule `|da - db| / max(da, db) >= threshold`.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::DepthMap;
use crate::coordsys::NormBox;
use crate::markup::{self, MarkupDoc, Node};
use crate::mask::BinaryMask;

pub const DEFAULT_MARGIN: f64 = 10.0;
pub const DEFAULT_GAP_THRESHOLD: f64 = 0.20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("object {0:?} has no depth statistic")]
    MissingDepth(String),
    #[error("mask and depth map resolutions differ")]
    ShapeMismatch,
    #[error("no valid depth samples inside the mask")]
    EmptyRegion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Predicate {
    LeftOf,
    RightOf,
    Above,
    Below,
    InFrontOf,
    Behind,
}

impl Predicate {
    pub const ALL: [Predicate; 6] = [
        Predicate::LeftOf,
        Predicate::RightOf,
        Predicate::Above,
        Predicate::Below,
        Predicate::InFrontOf,
        Predicate::Behind,
    ];

    pub fn inverse(self) -> Predicate {
        match self {
            Predicate::LeftOf => Predicate::RightOf,
            Predicate::RightOf => Predicate::LeftOf,
            Predicate::Above => Predicate::Below,
            Predicate::Below => Predicate::Above,
            Predicate::InFrontOf => Predicate::Behind,
            Predicate::Behind => Predicate::InFrontOf,
        }
    }

    /// Phrase used inside `<pred>` tags.
    pub fn phrase(self) -> &'static str {
        match self {
            Predicate::LeftOf => "to the left of",
            Predicate::RightOf => "to the right of",
            Predicate::Above => "above",
            Predicate::Below => "below",
            Predicate::InFrontOf => "in front of",
            Predicate::Behind => "behind",
        }
    }

    pub fn from_phrase(s: &str) -> Option<Predicate> {
        let s = s.trim().to_ascii_lowercase();
        let s = s.strip_prefix("to the ").unwrap_or(&s);
        Some(match s {
            "left of" | "left" => Predicate::LeftOf,
            "right of" | "right" => Predicate::RightOf,
            "above" => Predicate::Above,
            "below" => Predicate::Below,
            "in front of" => Predicate::InFrontOf,
            "behind" => Predicate::Behind,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub name: String,
    #[serde(rename = "box")]
    pub bbox: NormBox,
    #[serde(skip)]
    pub mask: Option<BinaryMask>,
    /// Median raw depth over the object's mask.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<f64>,
}

impl SceneObject {
    pub fn new(name: impl Into<String>, bbox: NormBox) -> Self {
        Self { name: name.into(), bbox, mask: None, depth: None }
    }

    pub fn with_depth(mut self, depth: f64) -> Self {
        self.depth = Some(depth);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Relation {
    pub subject: usize,
    pub object: usize,
    pub predicate: Predicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub objects: Vec<SceneObject>,
    pub relations: Vec<Relation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthOrdering {
    AInFront,
    BInFront,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphOptions {
    pub margin: f64,
    pub gap_threshold: f64,
    /// Also emit the inverse of every edge (subject > object).
    pub symmetric: bool,
}

impl Default for GraphOptions {
    fn default() -> Self {
        Self { margin: DEFAULT_MARGIN, gap_threshold: DEFAULT_GAP_THRESHOLD, symmetric: false }
    }
}

/// Center-based 2D predicates from `a` to `b`.
pub fn relate_2d(a: &NormBox, b: &NormBox, margin: f64) -> Vec<Predicate> {
    let [ax, ay] = a.center();
    let [bx, by] = b.center();
    let mut out = Vec::new();
    if ax + margin < bx {
        out.push(Predicate::LeftOf);
    }
    if ax > bx + margin {
        out.push(Predicate::RightOf);
    }
    if ay + margin < by {
        out.push(Predicate::Above);
    }
    if ay > by + margin {
        out.push(Predicate::Below);
    }
    out
}

pub fn depth_gap(da: f64, db: f64) -> f64 {
    let m = da.max(db);
    if m <= 0.0 {
        0.0
    } else {
        (da - db).abs() / m
    }
}

pub fn depth_order(a: &SceneObject, b: &SceneObject, gap_threshold: f64) -> Result<DepthOrdering, SceneError> {
    let da = a.depth.ok_or_else(|| SceneError::MissingDepth(a.name.clone()))?;
    let db = b.depth.ok_or_else(|| SceneError::MissingDepth(b.name.clone()))?;
    Ok(order_depths(da, db, gap_threshold))
}

pub fn order_depths(da: f64, db: f64, gap_threshold: f64) -> DepthOrdering {
    if depth_gap(da, db) >= gap_threshold && da != db {
        if da < db {
            DepthOrdering::AInFront
        } else {
            DepthOrdering::BInFront
        }
    } else {
        DepthOrdering::Indeterminate
    }
}

/// Median of valid (nonzero) depth samples under the mask; an even count
/// averages the middle pair.
pub fn median_mask_depth(mask: &BinaryMask, depth: &DepthMap) -> Result<f64, SceneError> {
    if mask.shape() != depth.shape() {
        return Err(SceneError::ShapeMismatch);
    }
    let mut values: Vec<u32> = mask.pixels().map(|(x, y)| depth.get(x, y)).filter(|&d| d > 0).collect();
    if values.is_empty() {
        return Err(SceneError::EmptyRegion);
    }
    values.sort_unstable();
    Ok(median_sorted(&values))
}

pub(crate) fn median_sorted(values: &[u32]) -> f64 {
    let n = values.len();
    if n % 2 == 1 {
        f64::from(values[n / 2])
    } else {
        (f64::from(values[n / 2 - 1]) + f64::from(values[n / 2])) / 2.0
    }
}

/// Builds the graph. Edges run from the lower to the higher object index;
/// `options.symmetric` adds the inverse edges. Objects without a depth
/// statistic get one from their mask when a depth map is supplied.
pub fn build_graph(objects: Vec<SceneObject>, depth: Option<&DepthMap>, options: &GraphOptions) -> SceneGraph {
    let mut objects = objects;
    if let Some(depth) = depth {
        for obj in objects.iter_mut().filter(|o| o.depth.is_none()) {
            if let Some(mask) = &obj.mask {
                obj.depth = median_mask_depth(mask, depth).ok();
            }
        }
    }
    let mut relations = Vec::new();
    for i in 0..objects.len() {
        for j in i + 1..objects.len() {
            let (a, b) = (&objects[i], &objects[j]);
            let mut preds = relate_2d(&a.bbox, &b.bbox, options.margin);
            match depth_order(a, b, options.gap_threshold) {
                Ok(DepthOrdering::AInFront) => preds.push(Predicate::InFrontOf),
                Ok(DepthOrdering::BInFront) => preds.push(Predicate::Behind),
                _ => {}
            }
            for predicate in preds {
                relations.push(Relation { subject: i, object: j, predicate });
                if options.symmetric {
                    relations.push(Relation { subject: j, object: i, predicate: predicate.inverse() });
                }
            }
        }
    }
    SceneGraph { objects, relations }
}

fn grounded(name: &str, b: &NormBox) -> String {
    format!("<ref>{name}</ref>{}", markup::render_boxes(std::slice::from_ref(b)))
}

const VERBS: [&str; 3] = ["is positioned", "appears", "can be seen"];

/// One relation as a grounded sentence, e.g.
/// `<ref>A</ref><box>..</box> is positioned <pred>P</pred><box>A</box><box>B</box> <ref>B</ref><box>..</box>.`
pub fn relation_sentence(graph: &SceneGraph, rel: &Relation, verb: &str) -> String {
    let a = &graph.objects[rel.subject];
    let b = &graph.objects[rel.object];
    let mut s = String::new();
    let _ = write!(
        s,
        "{} {verb} <pred>{}</pred>{}{} {}.",
        grounded(&a.name, &a.bbox),
        rel.predicate.phrase(),
        markup::render_boxes(std::slice::from_ref(&a.bbox)),
        markup::render_boxes(std::slice::from_ref(&b.bbox)),
        grounded(&b.name, &b.bbox),
    );
    s
}

/// Scene-graph answer text: one sentence per relation, verbs cycling through
/// a fixed list. A graph without relations lists its objects.
pub fn serialize_graph(graph: &SceneGraph) -> String {
    if graph.relations.is_empty() {
        let items: Vec<String> = graph.objects.iter().map(|o| grounded(&o.name, &o.bbox)).collect();
        return if items.is_empty() { String::new() } else { format!("{}.", items.join(", ")) };
    }
    let sentences: Vec<String> =
        graph.relations.iter().enumerate().map(|(i, r)| relation_sentence(graph, r, VERBS[i % VERBS.len()])).collect();
    sentences.join(" ")
}

/// Relation triples `(subject box, predicate, object box)` found in a
/// document's grounded predicates. Unknown predicate phrases are skipped.
pub fn relation_triples(doc: &MarkupDoc) -> Vec<(NormBox, Predicate, NormBox)> {
    doc.sections
        .iter()
        .flat_map(|s| s.nodes.iter())
        .filter_map(Node::as_grounded_pred)
        .filter_map(|p| Some((p.subject_box, Predicate::from_phrase(&p.predicate)?, p.object_box)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

/// Template QA pairs: one relative-position question per related object pair
/// and, when at least two objects carry depth and the nearest one is
/// separated from the runner-up by the gap rule, a nearest-object question.
pub fn template_qa(graph: &SceneGraph, gap_threshold: f64) -> Vec<QaPair> {
    let mut out = Vec::new();
    let mut pairs: BTreeMap<(usize, usize), Vec<&Relation>> = BTreeMap::new();
    for r in &graph.relations {
        if r.subject < r.object {
            pairs.entry((r.subject, r.object)).or_default().push(r);
        }
    }
    for ((i, j), rels) in pairs {
        let (a, b) = (&graph.objects[i], &graph.objects[j]);
        let question = format!(
            "How are {} and {} positioned in relation to each other in the image?",
            grounded(&a.name, &a.bbox),
            grounded(&b.name, &b.bbox)
        );
        let answer = rels.iter().map(|r| relation_sentence(graph, r, VERBS[0])).collect::<Vec<_>>().join(" ");
        out.push(QaPair { question, answer });
    }

    let mut with_depth: Vec<(usize, f64)> =
        graph.objects.iter().enumerate().filter_map(|(i, o)| o.depth.map(|d| (i, d))).collect();
    if with_depth.len() >= 2 {
        with_depth.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let (nearest, d0) = with_depth[0];
        let (_, d1) = with_depth[1];
        if order_depths(d0, d1, gap_threshold) == DepthOrdering::AInFront {
            let o = &graph.objects[nearest];
            out.push(QaPair {
                question: "From your perspective, which object in the image is at the shortest distance?".into(),
                answer: format!("{}.", grounded(&o.name, &o.bbox)),
            });
        }
    }
    out
}
