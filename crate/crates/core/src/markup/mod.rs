//! Grounded spatial markup.
//!
//! Documents are built from three optional sections (`<Description>`,
//! `<Reasoning>`, `<Answer>`) whose bodies interleave prose with grounded
//! tags:
//!
//! ```text
//! <ref>cup</ref><box>[[10, 20, 30, 40]]</box>
//! <pred>to the left of</pred><box>[[..]]</box><box>[[..]]</box>
//! <point>[[x1, y1], [x2, y2], ...]</point>
//! ```
//!
//! A `<box>` tag directly following a `<ref>` or `<pred>` (no characters in
//! between) is bound to it. Text without any section tag is treated as a
//! single untagged answer section.

mod parse;
mod write;

pub use parse::{parse_document, ParseError, ParseErrorKind};
pub use write::{render_boxes, render_points, serialize};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coordsys::{NormBox, NormPoint};

/// Canonical number of points in a visual trace.
pub const TRACE_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionKind {
    Description,
    Reasoning,
    Answer,
}

impl SectionKind {
    pub const ALL: [SectionKind; 3] = [SectionKind::Description, SectionKind::Reasoning, SectionKind::Answer];

    pub fn tag_name(self) -> &'static str {
        match self {
            SectionKind::Description => "Description",
            SectionKind::Reasoning => "Reasoning",
            SectionKind::Answer => "Answer",
        }
    }
}

/// Non-empty ordered list of normalized points.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<NormPoint>", into = "Vec<NormPoint>")]
pub struct PointSet(Vec<NormPoint>);

impl PointSet {
    pub fn new(points: Vec<NormPoint>) -> Result<Self, EmptyPointSet> {
        if points.is_empty() {
            Err(EmptyPointSet)
        } else {
            Ok(Self(points))
        }
    }

    pub fn points(&self) -> &[NormPoint] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<NormPoint> {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("point set must contain at least one point")]
pub struct EmptyPointSet;

impl TryFrom<Vec<NormPoint>> for PointSet {
    type Error = EmptyPointSet;
    fn try_from(v: Vec<NormPoint>) -> Result<Self, Self::Error> {
        PointSet::new(v)
    }
}

impl From<PointSet> for Vec<NormPoint> {
    fn from(p: PointSet) -> Self {
        p.0
    }
}

/// One element of a section body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Text {
        text: String,
    },
    /// `<ref>` with the boxes bound to it; `boxes` is empty for an unbound ref.
    Ref {
        name: String,
        boxes: Vec<NormBox>,
    },
    /// `<pred>` with the boxes bound to it; a well-formed predicate has two.
    Pred {
        predicate: String,
        boxes: Vec<NormBox>,
    },
    Points {
        points: PointSet,
    },
    /// A free-standing `<box>` tag (one or more coordinate groups).
    Boxes {
        boxes: Vec<NormBox>,
    },
}

impl Node {
    pub fn is_text(&self) -> bool {
        matches!(self, Node::Text { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub kind: SectionKind,
    /// False only for documents without any section tags.
    pub tagged: bool,
    pub nodes: Vec<Node>,
}

impl Section {
    /// Grounded entities (every non-text node) in textual order.
    pub fn entities(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| !n.is_text())
    }

    /// Canonical body text, tags included.
    pub fn text(&self) -> String {
        write::render_nodes(&self.nodes)
    }
}

/// A parsed document. Equality is structural: `raw` is ignored.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MarkupDoc {
    pub sections: Vec<Section>,
    #[serde(default)]
    pub raw: String,
}

impl PartialEq for MarkupDoc {
    fn eq(&self, other: &Self) -> bool {
        self.sections == other.sections
    }
}

impl Eq for MarkupDoc {}

impl MarkupDoc {
    pub fn from_sections(sections: Vec<Section>) -> Self {
        let mut doc = MarkupDoc { sections, raw: String::new() };
        doc.raw = serialize(&doc);
        doc
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }

    pub fn section(&self, kind: SectionKind) -> Option<&Section> {
        self.sections.iter().find(|s| s.kind == kind)
    }

    pub fn description(&self) -> Option<&Section> {
        self.section(SectionKind::Description)
    }

    pub fn reasoning(&self) -> Option<&Section> {
        self.section(SectionKind::Reasoning)
    }

    pub fn answer(&self) -> Option<&Section> {
        self.section(SectionKind::Answer)
    }
}

/// `<ref>` bound to at least one box.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundedRef {
    pub name: String,
    pub boxes: Vec<NormBox>,
}

/// `<pred>` bound to a subject and an object box.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundedPred {
    pub predicate: String,
    pub subject_box: NormBox,
    pub object_box: NormBox,
}

impl Node {
    pub fn as_grounded_ref(&self) -> Option<GroundedRef> {
        match self {
            Node::Ref { name, boxes } if !boxes.is_empty() => {
                Some(GroundedRef { name: name.clone(), boxes: boxes.clone() })
            }
            _ => None,
        }
    }

    pub fn as_grounded_pred(&self) -> Option<GroundedPred> {
        match self {
            Node::Pred { predicate, boxes } if boxes.len() == 2 => {
                Some(GroundedPred { predicate: predicate.clone(), subject_box: boxes[0], object_box: boxes[1] })
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("document has no answer section")]
    NoAnswer,
    #[error("answer section contains no point list")]
    NoPoints,
    #[error("answer section contains neither a box nor a point list")]
    NoAffordance,
}

/// Trace pulled from an answer. `nonstandard_length` is set when the point
/// count differs from [`TRACE_LEN`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedTrace {
    pub points: PointSet,
    pub nonstandard_length: bool,
}

/// Returns the last point list of the answer section.
pub fn extract_trace(doc: &MarkupDoc) -> Result<ExtractedTrace, ExtractError> {
    let answer = doc.answer().ok_or(ExtractError::NoAnswer)?;
    let points = answer
        .nodes
        .iter()
        .rev()
        .find_map(|n| match n {
            Node::Points { points } => Some(points.clone()),
            _ => None,
        })
        .ok_or(ExtractError::NoPoints)?;
    let nonstandard_length = points.len() != TRACE_LEN;
    Ok(ExtractedTrace { points, nonstandard_length })
}

/// Last box and last point list of the answer section. Boxes bound to a
/// predicate are relation annotations and are skipped.
pub fn extract_affordance(doc: &MarkupDoc) -> Result<(Option<NormBox>, Option<PointSet>), ExtractError> {
    let answer = doc.answer().ok_or(ExtractError::NoAnswer)?;
    let mut last_box = None;
    let mut last_points = None;
    for node in &answer.nodes {
        match node {
            Node::Boxes { boxes } | Node::Ref { boxes, .. } => {
                if let Some(b) = boxes.last() {
                    last_box = Some(*b);
                }
            }
            Node::Points { points } => last_points = Some(points.clone()),
            Node::Pred { .. } | Node::Text { .. } => {}
        }
    }
    if last_box.is_none() && last_points.is_none() {
        return Err(ExtractError::NoAffordance);
    }
    Ok((last_box, last_points))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BindingViolation {
    /// A `<ref>` not immediately followed by a `<box>`.
    UnboundRef { section: SectionKind, name: String },
    /// A `<pred>` not followed by exactly two box groups.
    PredicateBoxes { section: SectionKind, predicate: String, found: usize },
}

impl std::fmt::Display for BindingViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BindingViolation::UnboundRef { section, name } => {
                write!(f, "{}: <ref>{name}</ref> has no bound box", section.tag_name())
            }
            BindingViolation::PredicateBoxes { section, predicate, found } => {
                write!(f, "{}: <pred>{predicate}</pred> has {found} bound box group(s), expected 2", section.tag_name())
            }
        }
    }
}

pub fn validate_binding(doc: &MarkupDoc) -> Vec<BindingViolation> {
    let mut out = Vec::new();
    for section in &doc.sections {
        for node in &section.nodes {
            match node {
                Node::Ref { name, boxes } if boxes.is_empty() => {
                    out.push(BindingViolation::UnboundRef { section: section.kind, name: name.clone() })
                }
                Node::Pred { predicate, boxes } if boxes.len() != 2 => out.push(BindingViolation::PredicateBoxes {
                    section: section.kind,
                    predicate: predicate.clone(),
                    found: boxes.len(),
                }),
                _ => {}
            }
        }
    }
    out
}
