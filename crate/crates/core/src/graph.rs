//! Merged concept graph with assessment colors, as JSON and DOT.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::concept::{ConceptId, Status};
use crate::engine::Session;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Color {
    Green,
    Red,
    Blue,
}

impl Color {
    pub fn of(status: Status) -> Self {
        match status {
            Status::Known => Color::Green,
            Status::Unknown => Color::Red,
            Status::Unassessed => Color::Blue,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Color::Green => "green",
            Color::Red => "red",
            Color::Blue => "blue",
        }
    }

    fn fill(self) -> &'static str {
        match self {
            Color::Green => "#8fd694",
            Color::Red => "#f08080",
            Color::Blue => "#8ab6f0",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub concept: ConceptId,
    pub label: String,
    pub min_depth: u32,
    pub status: Status,
    pub color: Color,
    /// `max_depth - min_depth`; larger means drawn bigger.
    pub size_rank: u32,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub target: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GraphEdge {
    /// The dependent concept.
    pub from: ConceptId,
    /// Its prerequisite.
    pub to: ConceptId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDoc {
    pub max_depth: u32,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

/// One node per surfaced concept and one edge per distinct
/// dependent/prerequisite pair, both sorted by concept key.
pub fn export_graph(session: &Session) -> GraphDoc {
    let tree = &session.tree;
    let root = &tree.root().concept;
    let mut depth: BTreeMap<&ConceptId, u32> = BTreeMap::new();
    for n in tree.nodes() {
        depth
            .entry(&n.concept)
            .and_modify(|d| *d = (*d).min(n.depth))
            .or_insert(n.depth);
    }
    let nodes = depth
        .into_iter()
        .map(|(concept, min_depth)| {
            let status = session.status_of(concept);
            GraphNode {
                concept: concept.clone(),
                label: tree.label(concept).to_string(),
                min_depth,
                status,
                color: Color::of(status),
                size_rank: session.max_depth.saturating_sub(min_depth),
                target: concept == root,
            }
        })
        .collect();
    let edges = tree
        .concept_edges()
        .into_iter()
        .map(|(from, to)| GraphEdge { from, to })
        .collect();
    GraphDoc {
        max_depth: session.max_depth,
        nodes,
        edges,
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// DOT digraph; identical documents render to identical bytes.
pub fn render_dot(doc: &GraphDoc) -> String {
    let mut out = String::from("digraph prerequisites {\n");
    out.push_str("  rankdir=TB;\n");
    out.push_str("  node [shape=ellipse, style=filled, fontname=\"Helvetica\"];\n");
    for n in &doc.nodes {
        let _ = writeln!(
            out,
            "  {} [label={}, fillcolor={}, fontsize={}, color={}{}];",
            quote(n.concept.as_str()),
            quote(&format!("{} (L{})", n.label, n.min_depth)),
            quote(n.color.fill()),
            10 + 2 * n.size_rank,
            n.color.as_str(),
            if n.target {
                ", shape=doubleoctagon"
            } else {
                ""
            },
        );
    }
    for e in &doc.edges {
        let _ = writeln!(
            out,
            "  {} -> {};",
            quote(e.from.as_str()),
            quote(e.to.as_str())
        );
    }
    out.push_str("}\n");
    out
}

/// Pretty JSON with a trailing newline.
pub fn render_json(doc: &GraphDoc) -> String {
    let mut text = serde_json::to_string_pretty(doc).expect("graph serializes");
    text.push('\n');
    text
}
