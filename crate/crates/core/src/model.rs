//! Core domain types: the event-type hierarchy, events, entity records and
//! outcome-labeled cohorts.
//!
//! Hierarchy nodes are stored in preorder with children sorted by code, so a
//! node's subtree is the contiguous id range `id..subtree_end(id)` and every
//! child has a larger id than its parent. Bottom-up passes iterate ids in
//! reverse.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::query::QuerySpec;

/// Code of the synthetic root inserted when a hierarchy has no single root.
pub const ROOT_CODE: &str = "ROOT";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("duplicate event type code `{0}`")]
    DuplicateCode(String),
    #[error("event type `{code}` references missing parent `{parent}`")]
    MissingParent { code: String, parent: String },
    #[error("hierarchy has multiple roots: {0:?}")]
    MultipleRoots(Vec<String>),
    #[error("hierarchy contains a cycle through `{0}`")]
    CycleDetected(String),
    #[error("no event type codes supplied")]
    EmptyInput,
    #[error("unknown event type code `{0}`")]
    UnknownCode(String),
}

/// Index of a node in a [`TypeHierarchy`] (preorder position).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventType {
    pub code: String,
    pub label: String,
    pub parent: Option<String>,
    pub depth: u32,
}

/// One row of a hierarchy description: `code,parent,label`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyEdge {
    pub code: String,
    pub parent: Option<String>,
    pub label: String,
}

impl HierarchyEdge {
    pub fn new(code: impl Into<String>, parent: Option<&str>, label: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            parent: parent.filter(|p| !p.is_empty()).map(str::to_owned),
            label: label.into(),
        }
    }
}

/// Rooted tree of event-type codes.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeHierarchy {
    types: Vec<EventType>,
    parent: Vec<Option<NodeId>>,
    children: Vec<Vec<NodeId>>,
    subtree_end: Vec<u32>,
    index: HashMap<String, NodeId>,
}

impl TypeHierarchy {
    /// Builds a hierarchy from `code,parent,label` rows. Exactly one row must
    /// have an empty parent.
    pub fn build(edges: impl IntoIterator<Item = HierarchyEdge>) -> Result<Self, ModelError> {
        let edges: Vec<HierarchyEdge> = edges.into_iter().collect();
        if edges.is_empty() {
            return Err(ModelError::EmptyInput);
        }

        let mut by_code: BTreeMap<&str, &HierarchyEdge> = BTreeMap::new();
        for e in &edges {
            if by_code.insert(e.code.as_str(), e).is_some() {
                return Err(ModelError::DuplicateCode(e.code.clone()));
            }
        }
        for e in &edges {
            if let Some(p) = &e.parent {
                if !by_code.contains_key(p.as_str()) {
                    return Err(ModelError::MissingParent {
                        code: e.code.clone(),
                        parent: p.clone(),
                    });
                }
            }
        }
        let roots: Vec<&str> = by_code
            .values()
            .filter(|e| e.parent.is_none())
            .map(|e| e.code.as_str())
            .collect();
        if roots.len() > 1 {
            return Err(ModelError::MultipleRoots(roots.iter().map(|s| s.to_string()).collect()));
        }
        let Some(&root) = roots.first() else {
            // every node has a parent, so following parents must loop
            let first = by_code.keys().next().expect("non-empty");
            return Err(ModelError::CycleDetected(first.to_string()));
        };

        // BTreeMap iteration keeps each child list sorted by code.
        let mut kids: HashMap<&str, Vec<&str>> = HashMap::new();
        for e in by_code.values() {
            if let Some(p) = &e.parent {
                kids.entry(p.as_str()).or_default().push(e.code.as_str());
            }
        }

        let n = edges.len();
        let mut h = TypeHierarchy {
            types: Vec::with_capacity(n),
            parent: Vec::with_capacity(n),
            children: Vec::with_capacity(n),
            subtree_end: Vec::with_capacity(n),
            index: HashMap::with_capacity(n),
        };
        // (code, parent id, depth, exiting?)
        let mut stack: Vec<(&str, Option<NodeId>, u32, bool)> = vec![(root, None, 0, false)];
        let mut open: Vec<NodeId> = Vec::new();
        while let Some((code, parent, depth, exiting)) = stack.pop() {
            if exiting {
                let id = open.pop().expect("balanced traversal");
                h.subtree_end[id.index()] = h.types.len() as u32;
                continue;
            }
            let id = NodeId(h.types.len() as u32);
            let edge = by_code[code];
            h.types.push(EventType {
                code: code.to_owned(),
                label: edge.label.clone(),
                parent: edge.parent.clone(),
                depth,
            });
            h.parent.push(parent);
            h.children.push(Vec::new());
            h.subtree_end.push(0);
            h.index.insert(code.to_owned(), id);
            if let Some(p) = parent {
                h.children[p.index()].push(id);
            }
            open.push(id);
            stack.push((code, parent, depth, true));
            if let Some(cs) = kids.get(code) {
                for c in cs.iter().rev() {
                    stack.push((c, Some(id), depth + 1, false));
                }
            }
        }

        if h.types.len() != n {
            let unreachable = by_code
                .keys()
                .find(|c| !h.index.contains_key(**c))
                .expect("some node was not reached");
            return Err(ModelError::CycleDetected(unreachable.to_string()));
        }
        Ok(h)
    }

    /// Like [`TypeHierarchy::build`], but several top-level rows are placed
    /// under a synthetic [`ROOT_CODE`] node instead of being rejected.
    pub fn build_rooted(edges: impl IntoIterator<Item = HierarchyEdge>) -> Result<Self, ModelError> {
        let mut edges: Vec<HierarchyEdge> = edges.into_iter().collect();
        let tops = edges.iter().filter(|e| e.parent.is_none()).count();
        if tops > 1 {
            for e in edges.iter_mut().filter(|e| e.parent.is_none()) {
                e.parent = Some(ROOT_CODE.to_owned());
            }
            edges.push(HierarchyEdge::new(ROOT_CODE, None, "All event types"));
        }
        Self::build(edges)
    }

    /// Derives a hierarchy from dotted, prefix-structured codes such as
    /// ICD-10 (`I50.41` -> `I50.4` -> `I50`). Intermediate prefixes are
    /// inserted and every node's parent is its longest strict prefix present
    /// in the set. A synthetic root sits above all top-level codes.
    pub fn from_prefix_codes<S: AsRef<str>>(codes: &[S]) -> Result<Self, ModelError> {
        if codes.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let mut all: BTreeSet<String> = BTreeSet::new();
        for code in codes {
            let code = code.as_ref().trim();
            if code.is_empty() {
                continue;
            }
            all.extend(prefix_chain(code));
        }
        if all.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        if all.contains(ROOT_CODE) {
            return Err(ModelError::DuplicateCode(ROOT_CODE.to_owned()));
        }
        let mut edges = vec![HierarchyEdge::new(ROOT_CODE, None, "All event types")];
        for code in &all {
            let cuts: Vec<usize> = code.char_indices().skip(1).map(|(i, _)| i).collect();
            let parent = cuts
                .into_iter()
                .rev()
                .map(|i| &code[..i])
                .find(|p| all.contains(*p))
                .unwrap_or(ROOT_CODE);
            edges.push(HierarchyEdge::new(code.clone(), Some(parent), code.clone()));
        }
        Self::build(edges)
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn get(&self, id: NodeId) -> &EventType {
        &self.types[id.index()]
    }

    pub fn code(&self, id: NodeId) -> &str {
        &self.types[id.index()].code
    }

    pub fn label(&self, id: NodeId) -> &str {
        &self.types[id.index()].label
    }

    pub fn depth(&self, id: NodeId) -> u32 {
        self.types[id.index()].depth
    }

    pub fn id(&self, code: &str) -> Option<NodeId> {
        self.index.get(code).copied()
    }

    pub fn resolve(&self, code: &str) -> Result<NodeId, ModelError> {
        self.id(code).ok_or_else(|| ModelError::UnknownCode(code.to_owned()))
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parent[id.index()]
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.children[id.index()]
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.children[id.index()].is_empty()
    }

    /// Preorder id range covering `id` and all of its descendants.
    pub fn subtree_range(&self, id: NodeId) -> Range<usize> {
        id.index()..self.subtree_end[id.index()] as usize
    }

    /// True when `node` lies in the subtree rooted at `ancestor` (inclusive).
    #[inline]
    pub fn in_subtree(&self, ancestor: NodeId, node: NodeId) -> bool {
        self.subtree_range(ancestor).contains(&node.index())
    }

    /// All node ids in preorder.
    pub fn ids(&self) -> impl DoubleEndedIterator<Item = NodeId> + ExactSizeIterator {
        (0..self.types.len() as u32).map(NodeId)
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.ids().filter(|&id| self.is_leaf(id))
    }

    pub fn leaf_count(&self) -> usize {
        self.children.iter().filter(|c| c.is_empty()).count()
    }

    /// Ancestor ids from the root down to the parent of `id` (excludes `id`).
    pub fn ancestor_ids(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.depth(id) as usize);
        let mut cur = self.parent(id);
        while let Some(p) = cur {
            out.push(p);
            cur = self.parent(p);
        }
        out.reverse();
        out
    }

    /// Codes of the subtree rooted at `code`, including `code` itself.
    pub fn subtree(&self, code: &str) -> Result<BTreeSet<String>, ModelError> {
        let id = self.resolve(code)?;
        Ok(self
            .subtree_range(id)
            .map(|i| self.types[i].code.clone())
            .collect())
    }

    /// Ancestor codes ordered root first, excluding `code`.
    pub fn ancestors(&self, code: &str) -> Result<Vec<String>, ModelError> {
        let id = self.resolve(code)?;
        Ok(self
            .ancestor_ids(id)
            .into_iter()
            .map(|a| self.code(a).to_owned())
            .collect())
    }

    /// Rows that rebuild this hierarchy, in preorder.
    pub fn edges(&self) -> Vec<HierarchyEdge> {
        self.types
            .iter()
            .map(|t| HierarchyEdge {
                code: t.code.clone(),
                parent: t.parent.clone(),
                label: t.label.clone(),
            })
            .collect()
    }
}

/// `I50.41` -> [`I50`, `I50.4`, `I50.41`]; codes without a dot yield
/// themselves.
fn prefix_chain(code: &str) -> Vec<String> {
    let head_len = code.find('.').unwrap_or(code.len());
    let mut chain = vec![code[..head_len].to_owned()];
    for (i, _) in code.char_indices().skip(1) {
        if i <= head_len {
            continue;
        }
        let p = &code[..i];
        if !p.ends_with('.') {
            chain.push(p.to_owned());
        }
    }
    if head_len < code.len() && !code.ends_with('.') {
        chain.push(code.to_owned());
    }
    chain.dedup();
    chain
}

/// A single coded event. `node` resolves the event's type code in the
/// dataset hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Event {
    pub date: NaiveDate,
    pub node: NodeId,
}

/// Non-temporal entity attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttributeValue {
    Numeric(f64),
    Categorical(String),
}

impl AttributeValue {
    /// Numeric when the text parses as a finite number, categorical otherwise.
    pub fn parse(raw: &str) -> Self {
        match raw.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => AttributeValue::Numeric(v),
            _ => AttributeValue::Categorical(raw.trim().to_owned()),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            AttributeValue::Numeric(v) => Some(*v),
            AttributeValue::Categorical(_) => None,
        }
    }
}

impl fmt::Display for AttributeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttributeValue::Numeric(v) => write!(f, "{v}"),
            AttributeValue::Categorical(s) => f.write_str(s),
        }
    }
}

/// A dataset entity before any query has labeled it.
#[derive(Debug, Clone, PartialEq)]
pub struct EntitySequence {
    pub id: String,
    pub attributes: BTreeMap<String, AttributeValue>,
    /// Sorted by (date, node).
    pub events: Vec<Event>,
}

/// An entity as returned by a query: trimmed events, outcome label and the
/// dates at which each inclusion constraint was satisfied.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityRecord {
    pub id: String,
    pub attributes: BTreeMap<String, AttributeValue>,
    /// Events from `first anchor - lookback` to the end of the record.
    pub events: Vec<Event>,
    pub outcome: bool,
    pub anchors: Vec<NaiveDate>,
    /// Date of the first qualifying outcome event, when `outcome` is set.
    pub outcome_date: Option<NaiveDate>,
}

impl EntityRecord {
    pub fn final_anchor(&self) -> NaiveDate {
        *self.anchors.last().expect("included entities have anchors")
    }

    pub fn last_event_date(&self) -> Option<NaiveDate> {
        self.events.last().map(|e| e.date)
    }
}

/// An outcome-labeled set of entities. Entity order is fixed for the lifetime
/// of the cohort and indexes every occurrence vector computed from it.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub id: String,
    pub dataset_id: String,
    pub hierarchy: Arc<TypeHierarchy>,
    pub entities: Vec<EntityRecord>,
    pub outcome_vector: Vec<bool>,
    pub source_query: QuerySpec,
    /// Attribute names known to the source dataset.
    pub attribute_names: BTreeSet<String>,
    /// Set when the cohort came back empty.
    pub empty_warning: bool,
}

impl Cohort {
    pub(crate) fn new(
        id: String,
        dataset_id: String,
        hierarchy: Arc<TypeHierarchy>,
        entities: Vec<EntityRecord>,
        source_query: QuerySpec,
        attribute_names: BTreeSet<String>,
    ) -> Self {
        let outcome_vector = entities.iter().map(|e| e.outcome).collect();
        let empty_warning = entities.is_empty();
        Cohort {
            id,
            dataset_id,
            hierarchy,
            entities,
            outcome_vector,
            source_query,
            attribute_names,
            empty_warning,
        }
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.outcome_vector.iter().filter(|&&v| v).count()
    }

    pub fn outcome_rate(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.positives() as f64 / self.len() as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hf_edges() -> Vec<HierarchyEdge> {
        vec![
            HierarchyEdge::new("ROOT", None, "root"),
            HierarchyEdge::new("I50", Some("ROOT"), "Heart failure"),
            HierarchyEdge::new("I50.4", Some("I50"), "Systolic and diastolic"),
            HierarchyEdge::new("I50.41", Some("I50.4"), "Acute"),
        ]
    }

    #[test]
    fn builds_parent_chain_and_depths() {
        let h = TypeHierarchy::build(hf_edges()).unwrap();
        let leaf = h.resolve("I50.41").unwrap();
        assert_eq!(h.depth(leaf), 3);
        assert_eq!(h.ancestors("I50.41").unwrap(), vec!["ROOT", "I50", "I50.4"]);
        let chain: Vec<&str> = std::iter::successors(Some(leaf), |&n| h.parent(n))
            .map(|n| h.code(n))
            .collect();
        assert_eq!(chain, vec!["I50.41", "I50.4", "I50", "ROOT"]);
    }

    #[test]
    fn single_node_hierarchy() {
        let h = TypeHierarchy::build(vec![HierarchyEdge::new("ROOT", None, "r")]).unwrap();
        assert_eq!(h.len(), 1);
        assert!(h.children(h.root()).is_empty());
        assert_eq!(h.leaf_count(), 1);
    }

    #[test]
    fn rejects_multiple_roots() {
        let err = TypeHierarchy::build(vec![
            HierarchyEdge::new("A", None, ""),
            HierarchyEdge::new("B", Some("A"), ""),
            HierarchyEdge::new("A2", None, ""),
        ])
        .unwrap_err();
        assert_eq!(err, ModelError::MultipleRoots(vec!["A".into(), "A2".into()]));
    }

    #[test]
    fn rejects_duplicates_dangling_parents_and_cycles() {
        let dup = TypeHierarchy::build(vec![
            HierarchyEdge::new("A", None, ""),
            HierarchyEdge::new("A", None, ""),
        ]);
        assert_eq!(dup.unwrap_err(), ModelError::DuplicateCode("A".into()));

        let dangling = TypeHierarchy::build(vec![
            HierarchyEdge::new("A", None, ""),
            HierarchyEdge::new("B", Some("Z"), ""),
        ]);
        assert!(matches!(dangling.unwrap_err(), ModelError::MissingParent { .. }));

        let cycle = TypeHierarchy::build(vec![
            HierarchyEdge::new("R", None, ""),
            HierarchyEdge::new("A", Some("B"), ""),
            HierarchyEdge::new("B", Some("A"), ""),
        ]);
        assert_eq!(cycle.unwrap_err(), ModelError::CycleDetected("A".into()));

        let rootless = TypeHierarchy::build(vec![
            HierarchyEdge::new("A", Some("B"), ""),
            HierarchyEdge::new("B", Some("A"), ""),
        ]);
        assert!(matches!(rootless.unwrap_err(), ModelError::CycleDetected(_)));
    }

    #[test]
    fn synthetic_root_wraps_chapters() {
        let h = TypeHierarchy::build_rooted(vec![
            HierarchyEdge::new("DX", None, ""),
            HierarchyEdge::new("PX", None, ""),
            HierarchyEdge::new("DX.1", Some("DX"), ""),
        ])
        .unwrap();
        assert_eq!(h.code(h.root()), ROOT_CODE);
        assert_eq!(h.children(h.root()).len(), 2);
    }

    #[test]
    fn prefix_hierarchy_inserts_intermediates() {
        let h = TypeHierarchy::from_prefix_codes(&["I50.1", "I50.41", "I50.42"]).unwrap();
        let codes: BTreeSet<String> = h.ids().map(|id| h.code(id).to_owned()).collect();
        let expected: BTreeSet<String> = ["ROOT", "I50", "I50.1", "I50.4", "I50.41", "I50.42"]
            .into_iter()
            .map(String::from)
            .collect();
        assert_eq!(codes, expected);
        let p = h.parent(h.resolve("I50.41").unwrap()).unwrap();
        assert_eq!(h.code(p), "I50.4");
        let p = h.parent(h.resolve("I50.1").unwrap()).unwrap();
        assert_eq!(h.code(p), "I50");
    }

    #[test]
    fn prefix_hierarchy_edge_cases() {
        let h = TypeHierarchy::from_prefix_codes(&["X"]).unwrap();
        assert_eq!(h.len(), 2);
        let h = TypeHierarchy::from_prefix_codes(&["A.1", "A.1"]).unwrap();
        assert_eq!(h.subtree("A").unwrap().len(), 2);
        let empty: [&str; 0] = [];
        assert_eq!(TypeHierarchy::from_prefix_codes(&empty).unwrap_err(), ModelError::EmptyInput);
    }

    #[test]
    fn subtree_and_ancestor_queries() {
        let h = TypeHierarchy::build(hf_edges()).unwrap();
        assert_eq!(h.subtree("I50.41").unwrap().len(), 1);
        assert_eq!(h.subtree("ROOT").unwrap().len(), h.len());
        assert!(h.ancestors("ROOT").unwrap().is_empty());
        assert_eq!(h.subtree("NOPE").unwrap_err(), ModelError::UnknownCode("NOPE".into()));
    }

    #[test]
    fn children_sorted_by_code() {
        let h = TypeHierarchy::build(vec![
            HierarchyEdge::new("R", None, ""),
            HierarchyEdge::new("c", Some("R"), ""),
            HierarchyEdge::new("a", Some("R"), ""),
            HierarchyEdge::new("b", Some("R"), ""),
        ])
        .unwrap();
        let kids: Vec<&str> = h.children(h.root()).iter().map(|&c| h.code(c)).collect();
        assert_eq!(kids, vec!["a", "b", "c"]);
    }

    #[test]
    fn attribute_values_parse() {
        assert_eq!(AttributeValue::parse("65"), AttributeValue::Numeric(65.0));
        assert_eq!(AttributeValue::parse(" F "), AttributeValue::Categorical("F".into()));
        assert_eq!(AttributeValue::parse("NaN"), AttributeValue::Categorical("NaN".into()));
    }
}
