use std::fmt::Write;

use super::{MarkupDoc, Node};
use crate::coordsys::{NormBox, NormPoint};

/// `<box>[[x1, y1, x2, y2], ...]</box>`
pub fn render_boxes(boxes: &[NormBox]) -> String {
    let groups: Vec<String> = boxes.iter().map(|b| format!("[{}, {}, {}, {}]", b.x1, b.y1, b.x2, b.y2)).collect();
    format!("<box>[{}]</box>", groups.join(", "))
}

/// `<point>[[x1, y1], [x2, y2], ...]</point>`
pub fn render_points(points: &[NormPoint]) -> String {
    let groups: Vec<String> = points.iter().map(|p| format!("[{}, {}]", p.x, p.y)).collect();
    format!("<point>[{}]</point>", groups.join(", "))
}

pub(super) fn render_nodes(nodes: &[Node]) -> String {
    let mut out = String::new();
    for node in nodes {
        match node {
            Node::Text { text } => out.push_str(text),
            Node::Ref { name, boxes } => {
                let _ = write!(out, "<ref>{name}</ref>");
                if !boxes.is_empty() {
                    out.push_str(&render_boxes(boxes));
                }
            }
            Node::Pred { predicate, boxes } => {
                let _ = write!(out, "<pred>{predicate}</pred>");
                for b in boxes {
                    out.push_str(&render_boxes(std::slice::from_ref(b)));
                }
            }
            Node::Points { points } => out.push_str(&render_points(points.points())),
            Node::Boxes { boxes } => out.push_str(&render_boxes(boxes)),
        }
    }
    out
}

/// Canonical text for a document. Tagged sections are separated by a newline;
/// an untagged answer is written bare.
pub fn serialize(doc: &MarkupDoc) -> String {
    let parts: Vec<String> = doc
        .sections
        .iter()
        .map(|s| {
            let body = render_nodes(&s.nodes);
            if s.tagged {
                let tag = s.kind.tag_name();
                format!("<{tag}>{body}</{tag}>")
            } else {
                body
            }
        })
        .collect();
    parts.join("\n")
}
