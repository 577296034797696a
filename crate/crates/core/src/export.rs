//! JSON and SVG exports of a converged field.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::field::{FieldState, NodeRecord, NodeRef};
use crate::layout::{magnet_radius, run_to_convergence, LayoutError, LayoutParams, PositionFrame};
use crate::topic_model::TopicModel;

pub const DOCUMENT_RADIUS: f64 = 4.0;

/// Wire form of a [`PositionFrame`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub step: usize,
    pub nodes: Vec<NodeRecord>,
    pub max_displacement: f64,
}

impl FrameRecord {
    pub fn new(frame: &PositionFrame, field: &FieldState) -> Self {
        Self {
            step: frame.step,
            nodes: frame
                .positions
                .iter()
                .map(|(node, p)| {
                    let pinned = field.node(node).is_some_and(|n| n.pinned);
                    NodeRecord::new(node, *p, pinned)
                })
                .collect(),
            max_displacement: frame.max_displacement,
        }
    }

    pub fn position(&self, node: &NodeRef) -> Option<(f64, f64)> {
        let kind = node.kind();
        let reference = node.reference();
        self.nodes
            .iter()
            .find(|n| n.kind == kind && n.reference == reference)
            .map(|n| (n.x, n.y))
    }
}

/// Converges a copy of `field` and returns the final frame.
pub fn final_frame(field: &FieldState, model: &TopicModel, params: &LayoutParams) -> Result<FrameRecord, LayoutError> {
    let frames = run_to_convergence(field, model, params)?;
    let last = frames.last().expect("at least one step is always taken");
    Ok(FrameRecord::new(last, field))
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders a frame: citation edges as lines, documents as small circles,
/// magnets as circles sized by relevance with their labels.
pub fn render_svg(frame: &FrameRecord, field: &FieldState, model: &TopicModel) -> String {
    let bounds = field.bounds();
    let relevance: Vec<(NodeRef, f64)> = field
        .topic_ids()
        .map(|t| {
            let r = if field.doc_nodes().is_empty() {
                0.0
            } else {
                model.topic_relevance(field.doc_ids(), t).unwrap_or(0.0)
            };
            (NodeRef::Topic(t), r)
        })
        .collect();
    let rel_max = relevance.iter().map(|(_, r)| *r).fold(0.0, f64::max);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = bounds.width,
        h = bounds.height
    );
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    for (a, b) in field.visible_edges() {
        let pa = frame.position(&NodeRef::Document(a.clone()));
        let pb = frame.position(&NodeRef::Document(b.clone()));
        if let (Some((x1, y1)), Some((x2, y2))) = (pa, pb) {
            let _ = writeln!(
                svg,
                r##"<line class="citation" x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" stroke="#999999" stroke-width="1"/>"##
            );
        }
    }
    for (node, rel) in &relevance {
        if let Some((x, y)) = frame.position(node) {
            let r = magnet_radius(*rel, rel_max);
            let label = match node {
                NodeRef::Topic(t) => model.label(*t).unwrap_or_default(),
                NodeRef::Document(_) => "",
            };
            let _ = writeln!(
                svg,
                r##"<circle class="topic" data-ref="{}" cx="{x}" cy="{y}" r="{r}" fill="#f4a261" fill-opacity="0.8"/>"##,
                node.reference()
            );
            let _ = writeln!(
                svg,
                r##"<text x="{x}" y="{}" font-size="11" text-anchor="middle">{}</text>"##,
                y - r - 3.0,
                escape(label)
            );
        }
    }
    for rec in frame.nodes.iter().filter(|n| n.kind == crate::field::NodeKind::Document) {
        let _ = writeln!(
            svg,
            r##"<circle class="document" data-ref="{}" cx="{}" cy="{}" r="{DOCUMENT_RADIUS}" fill="#264653"/>"##,
            escape(&rec.reference),
            rec.x,
            rec.y
        );
    }
    svg.push_str("</svg>\n");
    svg
}
