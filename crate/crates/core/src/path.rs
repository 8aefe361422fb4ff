//! Learning paths: the gap tree behind a question and a prerequisite-first
//! study sequence.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::concept::{ConceptId, NodeId, Occurrence, Status, TraceNode};
use crate::engine::Session;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Marker {
    Target,
    Unknown,
    Unassessed,
    Known,
}

impl Marker {
    pub fn symbol(self) -> &'static str {
        match self {
            Marker::Target => "◎",
            Marker::Unknown => "✗",
            Marker::Unassessed => "?",
            Marker::Known => "✓",
        }
    }

    fn from_status(status: Status) -> Self {
        match status {
            Status::Unassessed => Marker::Unassessed,
            Status::Known => Marker::Known,
            Status::Unknown => Marker::Unknown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathEntry {
    pub node_id: NodeId,
    pub concept: ConceptId,
    pub label: String,
    pub depth: u32,
    pub marker: Marker,
    /// Set on a repeat occurrence; its prerequisites are listed under the
    /// first occurrence.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub already_confirmed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<PathEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceItem {
    pub concept: ConceptId,
    pub label: String,
    pub marker: Marker,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PathOptions {
    /// Keep every surfaced concept, including known ones.
    pub include_known: bool,
}

/// Gap tree of the session: the target, its unknown concepts and their
/// unknown or not yet assessed prerequisites.
pub fn build_path(session: &Session) -> PathEntry {
    build_path_with(session, PathOptions::default())
}

pub fn build_path_with(session: &Session, options: PathOptions) -> PathEntry {
    entry(session, session.tree.root(), options)
}

fn entry(session: &Session, node: &TraceNode, options: PathOptions) -> PathEntry {
    let root = node.node_id == session.tree.root_id();
    let marker = if root {
        Marker::Target
    } else {
        Marker::from_status(session.status_of(&node.concept))
    };
    let children = node
        .children
        .iter()
        .filter_map(|id| session.tree.node(*id))
        .filter(|child| options.include_known || shown(session.status_of(&child.concept), root))
        .map(|child| entry(session, child, options))
        .collect();
    PathEntry {
        node_id: node.node_id,
        concept: node.concept.clone(),
        label: session.tree.label(&node.concept).to_string(),
        depth: node.depth,
        marker,
        already_confirmed: node.occurrence == Occurrence::DuplicateReference,
        children,
    }
}

/// Known concepts are not gaps. An unassessed concept is only a gap once a
/// concept that needs it is unknown, so the target's own unassessed concepts
/// are left out too.
fn shown(status: Status, parent_is_root: bool) -> bool {
    match status {
        Status::Known => false,
        Status::Unassessed => !parent_is_root,
        Status::Unknown => true,
    }
}

/// Post-order walk of the path with repeat occurrences resolved to their
/// first occurrence: every prerequisite comes before the concepts that need
/// it, each concept appears once, and the target comes last. Known concepts
/// are skipped.
pub fn flatten_sequence(path: &PathEntry) -> Vec<SequenceItem> {
    let mut primaries = BTreeMap::new();
    index(path, &mut primaries);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    visit(path, &primaries, &mut seen, &mut out);
    out
}

fn index<'a>(entry: &'a PathEntry, primaries: &mut BTreeMap<&'a ConceptId, &'a PathEntry>) {
    if !entry.already_confirmed {
        primaries.insert(&entry.concept, entry);
    }
    for child in &entry.children {
        index(child, primaries);
    }
}

fn visit<'a>(
    entry: &'a PathEntry,
    primaries: &BTreeMap<&'a ConceptId, &'a PathEntry>,
    seen: &mut BTreeSet<&'a ConceptId>,
    out: &mut Vec<SequenceItem>,
) {
    let entry = primaries.get(&entry.concept).copied().unwrap_or(entry);
    if !seen.insert(&entry.concept) {
        return;
    }
    for child in &entry.children {
        visit(child, primaries, seen, out);
    }
    if entry.marker != Marker::Known {
        out.push(SequenceItem {
            concept: entry.concept.clone(),
            label: entry.label.clone(),
            marker: entry.marker,
        });
    }
}

/// Indented text form of the path followed by the study sequence.
pub fn render_text(path: &PathEntry) -> String {
    let mut out = String::new();
    render_entry(path, 0, &mut out);
    out.push_str("\nStudy sequence:\n");
    for (i, item) in flatten_sequence(path).iter().enumerate() {
        let _ = writeln!(
            out,
            "  {:>2}. {} {}",
            i + 1,
            item.marker.symbol(),
            item.label
        );
    }
    out
}

fn render_entry(entry: &PathEntry, indent: usize, out: &mut String) {
    let _ = write!(
        out,
        "{}{} {} [L{}]",
        "  ".repeat(indent),
        entry.marker.symbol(),
        entry.label,
        entry.depth
    );
    if entry.marker == Marker::Known {
        out.push_str(" (known)");
    }
    if entry.already_confirmed {
        out.push_str(" (already confirmed, see above)");
    }
    out.push('\n');
    for child in &entry.children {
        render_entry(child, indent + 1, out);
    }
}

/// Pretty JSON with a trailing newline.
pub fn render_json(path: &PathEntry) -> String {
    let mut text = serde_json::to_string_pretty(path).expect("path serializes");
    text.push('\n');
    text
}
