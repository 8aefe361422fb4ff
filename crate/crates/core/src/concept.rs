//! Concept identity and the occurrence tree.
//!
//! Every concept surfaced during a session lives in a [`TraceTree`]. The tree
//! records each *occurrence* of a concept under the branch that surfaced it.
//! The first occurrence of a concept is its [`Occurrence::Primary`] node and
//! is the only one that can be expanded; later occurrences are
//! [`Occurrence::DuplicateReference`] leaves pointing back at it.
//!
//! Merging occurrences by concept yields the concept graph used by the graph
//! export. The tree refuses any placement that would close a cycle in that
//! graph, so the merged view is always a DAG.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConceptError {
    #[error("label {0:?} is empty after normalization")]
    EmptyLabel(String),
    #[error("node {0} does not exist")]
    NoSuchNode(NodeId),
    #[error("concept {concept:?} would form a cycle under node {parent}")]
    CycleDetected { parent: NodeId, concept: ConceptId },
    #[error("node {parent} is at depth {depth}, the maximum")]
    DepthExceeded { parent: NodeId, depth: u32 },
}

/// Canonical identity of a concept: lowercased, whitespace collapsed and
/// surrounding punctuation trimmed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptId(String);

impl ConceptId {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Wraps a string that is already in canonical form. Returns `None` when
    /// it is not.
    pub fn from_key(key: &str) -> Option<Self> {
        match normalize_label(key) {
            Ok(id) if id.0 == key => Some(id),
            _ => None,
        }
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for ConceptId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

// '+' and '#' stay so that "C++" and "C#" do not collapse into "c".
fn is_edge_punct(c: char) -> bool {
    !c.is_alphanumeric() && !matches!(c, '+' | '#')
}

/// Canonicalizes a raw concept label.
pub fn normalize_label(raw: &str) -> Result<ConceptId, ConceptError> {
    let collapsed = raw
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ");
    let key = collapsed.trim_matches(is_edge_punct).to_string();
    if key.is_empty() {
        return Err(ConceptError::EmptyLabel(raw.to_string()));
    }
    Ok(ConceptId(key))
}

/// A named concept as surfaced to the learner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub id: ConceptId,
    pub display_label: String,
    #[serde(default)]
    pub fundamental: bool,
}

impl Concept {
    pub fn new(label: &str) -> Result<Self, ConceptError> {
        let id = normalize_label(label)?;
        Ok(Self {
            id,
            display_label: label.split_whitespace().collect::<Vec<_>>().join(" "),
            fundamental: false,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occurrence {
    Primary,
    DuplicateReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expansion {
    Unexpanded,
    Expanded,
    DepthCapped,
    Fundamental,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceNode {
    pub node_id: NodeId,
    pub concept: ConceptId,
    pub depth: u32,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub occurrence: Occurrence,
    pub expansion: Expansion,
}

/// Binary knowledge state of a concept; absent entries are unassessed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Unassessed,
    Known,
    Unknown,
}

impl Status {
    pub fn from_known(known: bool) -> Self {
        if known {
            Status::Known
        } else {
            Status::Unknown
        }
    }
}

/// Per-concept knowledge state shared by all occurrences of the concept.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KnowledgeStatus(BTreeMap<ConceptId, bool>);

impl KnowledgeStatus {
    pub fn get(&self, id: &ConceptId) -> Status {
        match self.0.get(id) {
            None => Status::Unassessed,
            Some(&known) => Status::from_known(known),
        }
    }

    /// Records an assessment. Statuses never go back to unassessed.
    pub fn set(&mut self, id: ConceptId, known: bool) {
        self.0.insert(id, known);
    }

    pub fn is_assessed(&self, id: &ConceptId) -> bool {
        self.0.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ConceptId, Status)> {
        self.0.iter().map(|(k, &v)| (k, Status::from_known(v)))
    }
}

/// Occurrence tree rooted at the learner's question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceTree {
    root: NodeId,
    next_id: u64,
    #[serde(with = "node_list")]
    nodes: BTreeMap<NodeId, TraceNode>,
    concepts: BTreeMap<ConceptId, Concept>,
}

mod node_list {
    use super::{NodeId, TraceNode};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(
        nodes: &BTreeMap<NodeId, TraceNode>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let list: Vec<&TraceNode> = nodes.values().collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<NodeId, TraceNode>, D::Error> {
        let list = Vec::<TraceNode>::deserialize(d)?;
        Ok(list.into_iter().map(|n| (n.node_id, n)).collect())
    }
}

impl TraceTree {
    /// Creates a tree holding only the target node at depth 0.
    pub fn new(question: &str) -> Result<Self, ConceptError> {
        let concept = Concept::new(question)?;
        let root = NodeId(0);
        let mut nodes = BTreeMap::new();
        nodes.insert(
            root,
            TraceNode {
                node_id: root,
                concept: concept.id.clone(),
                depth: 0,
                parent: None,
                children: Vec::new(),
                occurrence: Occurrence::Primary,
                expansion: Expansion::Unexpanded,
            },
        );
        let mut concepts = BTreeMap::new();
        concepts.insert(concept.id.clone(), concept);
        Ok(Self {
            root,
            next_id: 1,
            nodes,
            concepts,
        })
    }

    pub fn root(&self) -> &TraceNode {
        &self.nodes[&self.root]
    }

    pub fn root_id(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> Option<&TraceNode> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &TraceNode> {
        self.nodes.values()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn concept(&self, id: &ConceptId) -> Option<&Concept> {
        self.concepts.get(id)
    }

    pub fn concept_mut(&mut self, id: &ConceptId) -> Option<&mut Concept> {
        self.concepts.get_mut(id)
    }

    /// Display label for a concept, falling back to its key.
    pub fn label<'a>(&'a self, id: &'a ConceptId) -> &'a str {
        self.concepts
            .get(id)
            .map(|c| c.display_label.as_str())
            .unwrap_or(id.as_str())
    }

    pub fn primary_of(&self, id: &ConceptId) -> Option<&TraceNode> {
        self.nodes
            .values()
            .find(|n| n.occurrence == Occurrence::Primary && &n.concept == id)
    }

    pub fn occurrences_of<'a>(&'a self, id: &'a ConceptId) -> impl Iterator<Item = &'a TraceNode> {
        self.nodes.values().filter(move |n| &n.concept == id)
    }

    /// Concepts on the path from the root down to `node`, root first.
    pub fn ancestor_chain(&self, node: NodeId) -> Vec<ConceptId> {
        let mut chain = Vec::new();
        let mut cursor = self.nodes.get(&node);
        while let Some(n) = cursor {
            chain.push(n.concept.clone());
            cursor = n.parent.and_then(|p| self.nodes.get(&p));
        }
        chain.reverse();
        chain
    }

    /// Distinct surfaced concepts, sorted by key.
    pub fn surfaced_concepts(&self) -> BTreeSet<ConceptId> {
        self.nodes.values().map(|n| n.concept.clone()).collect()
    }

    /// Merged prerequisite edges `(dependent, prerequisite)` over every
    /// placement, primary and duplicate alike.
    pub fn concept_edges(&self) -> BTreeSet<(ConceptId, ConceptId)> {
        self.nodes
            .values()
            .filter_map(|n| {
                let parent = self.nodes.get(&n.parent?)?;
                Some((parent.concept.clone(), n.concept.clone()))
            })
            .collect()
    }

    /// True when `from` already reaches `to` through merged edges.
    fn reaches(&self, from: &ConceptId, to: &ConceptId) -> bool {
        let mut adjacency: BTreeMap<&ConceptId, Vec<&ConceptId>> = BTreeMap::new();
        for n in self.nodes.values() {
            if let Some(parent) = n.parent.and_then(|p| self.nodes.get(&p)) {
                adjacency
                    .entry(&parent.concept)
                    .or_default()
                    .push(&n.concept);
            }
        }
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([from]);
        while let Some(c) = queue.pop_front() {
            if c == to {
                return true;
            }
            if !seen.insert(c) {
                continue;
            }
            if let Some(next) = adjacency.get(c) {
                queue.extend(next.iter().copied());
            }
        }
        false
    }

    /// Checks whether `concept` may be placed under `parent` without
    /// repeating an ancestor or closing a cycle in the merged graph.
    pub fn would_cycle(&self, parent: NodeId, concept: &ConceptId) -> bool {
        let Some(p) = self.nodes.get(&parent) else {
            return false;
        };
        self.ancestor_chain(parent).contains(concept) || self.reaches(concept, &p.concept)
    }

    /// Appends an occurrence of `concept` under `parent`.
    ///
    /// The node is a duplicate reference when a primary occurrence of the
    /// concept already exists anywhere in the tree.
    pub fn add_child(
        &mut self,
        parent: NodeId,
        concept: Concept,
        max_depth: u32,
    ) -> Result<(NodeId, Occurrence), ConceptError> {
        let parent_depth = self
            .nodes
            .get(&parent)
            .ok_or(ConceptError::NoSuchNode(parent))?
            .depth;
        if parent_depth >= max_depth {
            return Err(ConceptError::DepthExceeded {
                parent,
                depth: parent_depth,
            });
        }
        if self.would_cycle(parent, &concept.id) {
            return Err(ConceptError::CycleDetected {
                parent,
                concept: concept.id,
            });
        }
        let occurrence = if self.primary_of(&concept.id).is_some() {
            Occurrence::DuplicateReference
        } else {
            Occurrence::Primary
        };
        let id = NodeId(self.next_id);
        self.next_id += 1;
        let cid = concept.id.clone();
        self.concepts.entry(cid.clone()).or_insert(concept);
        self.nodes.insert(
            id,
            TraceNode {
                node_id: id,
                concept: cid,
                depth: parent_depth + 1,
                parent: Some(parent),
                children: Vec::new(),
                occurrence,
                expansion: Expansion::Unexpanded,
            },
        );
        self.nodes
            .get_mut(&parent)
            .expect("parent checked above")
            .children
            .push(id);
        Ok((id, occurrence))
    }

    pub(crate) fn set_expansion(&mut self, node: NodeId, expansion: Expansion) {
        if let Some(n) = self.nodes.get_mut(&node) {
            n.expansion = expansion;
        }
    }

    fn descendants(&self, node: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack: Vec<NodeId> = self.nodes[&node].children.iter().rev().copied().collect();
        while let Some(id) = stack.pop() {
            out.push(id);
            stack.extend(self.nodes[&id].children.iter().rev().copied());
        }
        out
    }

    /// Makes the duplicate `dup` the primary occurrence of its concept. The
    /// old primary's children move under `dup` and their depths shift
    /// accordingly; the old primary becomes a plain reference.
    ///
    /// Returns the nodes whose depth changed.
    pub(crate) fn promote(&mut self, dup: NodeId) -> Vec<NodeId> {
        let concept = self.nodes[&dup].concept.clone();
        let Some(old) = self.primary_of(&concept).map(|n| n.node_id) else {
            let n = self.nodes.get_mut(&dup).expect("dup exists");
            n.occurrence = Occurrence::Primary;
            return Vec::new();
        };
        let old_node = self.nodes[&old].clone();
        let shift = old_node.depth - self.nodes[&dup].depth;
        let moved = self.descendants(old);
        for id in &moved {
            self.nodes.get_mut(id).expect("descendant exists").depth -= shift;
        }
        for child in &old_node.children {
            self.nodes.get_mut(child).expect("child exists").parent = Some(dup);
        }
        {
            let n = self.nodes.get_mut(&dup).expect("dup exists");
            n.occurrence = Occurrence::Primary;
            n.children = old_node.children.clone();
            n.expansion = old_node.expansion;
        }
        let o = self.nodes.get_mut(&old).expect("old primary exists");
        o.occurrence = Occurrence::DuplicateReference;
        o.children.clear();
        o.expansion = Expansion::Unexpanded;
        moved
    }

    /// Removes every descendant of `node`. Returns the removed nodes.
    pub(crate) fn prune_children(&mut self, node: NodeId) -> Vec<TraceNode> {
        let doomed = self.descendants(node);
        if let Some(n) = self.nodes.get_mut(&node) {
            n.children.clear();
        }
        doomed
            .into_iter()
            .filter_map(|id| self.nodes.remove(&id))
            .collect()
    }

    /// Checks the structural invariants of the tree.
    pub fn check(&self, max_depth: u32) -> Result<(), String> {
        let root = self.nodes.get(&self.root).ok_or("missing root")?;
        if root.depth != 0 || root.parent.is_some() {
            return Err("root must be at depth 0 without a parent".into());
        }
        let mut primaries: BTreeMap<&ConceptId, usize> = BTreeMap::new();
        for n in self.nodes.values() {
            if n.node_id.0 >= self.next_id {
                return Err(format!("node {} beyond id counter", n.node_id));
            }
            if !self.concepts.contains_key(&n.concept) {
                return Err(format!("node {} has unregistered concept", n.node_id));
            }
            if n.depth > max_depth {
                return Err(format!("node {} deeper than {}", n.node_id, max_depth));
            }
            if let Some(p) = n.parent {
                let parent = self
                    .nodes
                    .get(&p)
                    .ok_or_else(|| format!("node {} has a missing parent", n.node_id))?;
                if parent.depth + 1 != n.depth {
                    return Err(format!("node {} depth mismatch", n.node_id));
                }
                if !parent.children.contains(&n.node_id) {
                    return Err(format!("node {} not listed by its parent", n.node_id));
                }
            } else if n.node_id != self.root {
                return Err(format!("node {} is detached", n.node_id));
            }
            for c in &n.children {
                if self.nodes.get(c).and_then(|c| c.parent) != Some(n.node_id) {
                    return Err(format!("child {} of {} is inconsistent", c, n.node_id));
                }
            }
            let chain = self.ancestor_chain(n.node_id);
            let distinct: BTreeSet<_> = chain.iter().collect();
            if distinct.len() != chain.len() {
                return Err(format!("node {} repeats an ancestor concept", n.node_id));
            }
            match n.occurrence {
                Occurrence::Primary => *primaries.entry(&n.concept).or_default() += 1,
                Occurrence::DuplicateReference => {
                    if !n.children.is_empty() || n.expansion != Expansion::Unexpanded {
                        return Err(format!("duplicate {} must stay a leaf", n.node_id));
                    }
                }
            }
        }
        for (concept, count) in primaries {
            if count != 1 {
                return Err(format!("{concept} has {count} primary occurrences"));
            }
        }
        for n in self.nodes.values() {
            if self.primary_of(&n.concept).is_none() {
                return Err(format!("{} has no primary occurrence", n.concept));
            }
        }
        Ok(())
    }
}
