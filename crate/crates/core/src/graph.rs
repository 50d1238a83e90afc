//! AMR graph data model.
//!
//! Nodes are either concepts (`want-01`, `boy`) or constants (`-`, `"Paris"`,
//! `1990`). Constants live in the node table like concepts do, which lets the
//! transition system create them with ordinary node actions.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::penman::is_inverted_role;

/// Index of a node inside an [`AmrGraph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Concept,
    Constant,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Node {
    pub label: String,
    pub kind: NodeKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub source: NodeId,
    pub label: String,
    pub target: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("invalid edge label {0:?}: labels must start with ':' and be non-empty")]
    InvalidLabel(String),
    #[error("duplicate edge {0} {1} {2}")]
    DuplicateEdge(NodeId, String, NodeId),
    #[error("root {0} is not a node of the graph")]
    InvalidRoot(NodeId),
}

/// Labeled, rooted, directed graph. Edges keep their insertion order, which
/// the printer and the oracle rely on for determinism.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmrGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    root: Option<NodeId>,
}

impl AmrGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, label: impl Into<String>, kind: NodeKind) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            label: label.into(),
            kind,
        });
        id
    }

    pub fn add_concept(&mut self, label: impl Into<String>) -> NodeId {
        self.add_node(label, NodeKind::Concept)
    }

    pub fn add_constant(&mut self, value: impl Into<String>) -> NodeId {
        self.add_node(value, NodeKind::Constant)
    }

    /// Adds a node from its action symbol (see [`parse_node_symbol`]).
    pub fn add_symbol_node(&mut self, symbol: &str) -> NodeId {
        let (label, kind) = parse_node_symbol(symbol);
        self.add_node(label, kind)
    }

    pub(crate) fn set_label(&mut self, id: NodeId, label: String, kind: NodeKind) {
        self.nodes[id.0] = Node { label, kind };
    }

    pub fn add_edge(
        &mut self,
        source: NodeId,
        label: impl Into<String>,
        target: NodeId,
    ) -> Result<(), GraphError> {
        let label = label.into();
        self.check_node(source)?;
        self.check_node(target)?;
        if !is_valid_label(&label) {
            return Err(GraphError::InvalidLabel(label));
        }
        if self.has_edge(source, &label, target) {
            return Err(GraphError::DuplicateEdge(source, label, target));
        }
        self.edges.push(Edge {
            source,
            label,
            target,
        });
        Ok(())
    }

    pub fn set_root(&mut self, root: NodeId) -> Result<(), GraphError> {
        if root.0 >= self.nodes.len() {
            return Err(GraphError::InvalidRoot(root));
        }
        self.root = Some(root);
        Ok(())
    }

    pub fn clear_root(&mut self) {
        self.root = None;
    }

    fn check_node(&self, id: NodeId) -> Result<(), GraphError> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(GraphError::UnknownNode(id))
        }
    }

    pub fn root(&self) -> Option<NodeId> {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// True if the edge, or its inverse spelling (`b :ARG0-of a` for
    /// `a :ARG0 b`), is present.
    pub fn has_edge(&self, source: NodeId, label: &str, target: NodeId) -> bool {
        let key = canonical_edge(source, label, target);
        self.edges
            .iter()
            .any(|e| canonical_edge(e.source, &e.label, e.target) == key)
    }

    /// Outgoing edges of `id` in insertion order.
    pub fn outgoing(&self, id: NodeId) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter().filter(move |e| e.source == id)
    }

    /// Incoming edges of `id` in insertion order.
    pub fn incoming(&self, id: NodeId) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter().filter(move |e| e.target == id)
    }

    pub fn in_degree(&self, id: NodeId) -> usize {
        self.incoming(id).count()
    }

    pub fn out_degree(&self, id: NodeId) -> usize {
        self.outgoing(id).count()
    }

    /// A constant that can be written as a Penman attribute value: exactly one
    /// parent, no children, not the root.
    pub fn is_attribute(&self, id: NodeId) -> bool {
        self.node(id).kind == NodeKind::Constant
            && self.root != Some(id)
            && self.in_degree(id) == 1
            && self.out_degree(id) == 0
    }

    /// The action symbol that recreates node `id`.
    pub fn node_symbol(&self, id: NodeId) -> String {
        let node = self.node(id);
        node_symbol(&node.label, node.kind)
    }

    /// Node used as the top of a rootless graph or component: the first node
    /// without parents, else the first node.
    pub fn default_top(&self, component: &[NodeId]) -> Option<NodeId> {
        component
            .iter()
            .copied()
            .find(|&n| self.in_degree(n) == 0)
            .or_else(|| component.first().copied())
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<(), GraphError> {
        let mut seen = HashSet::new();
        for e in &self.edges {
            self.check_node(e.source)?;
            self.check_node(e.target)?;
            if !is_valid_label(&e.label) {
                return Err(GraphError::InvalidLabel(e.label.clone()));
            }
            if !seen.insert(canonical_edge(e.source, &e.label, e.target)) {
                return Err(GraphError::DuplicateEdge(
                    e.source,
                    e.label.clone(),
                    e.target,
                ));
            }
        }
        if let Some(root) = self.root {
            if root.0 >= self.nodes.len() {
                return Err(GraphError::InvalidRoot(root));
            }
        }
        Ok(())
    }

    /// Undirected connectivity partition. Components are sorted by their
    /// smallest node id and list their nodes in ascending order.
    pub fn connected_components(&self) -> Vec<Vec<NodeId>> {
        let n = self.nodes.len();
        let mut adjacency = vec![Vec::new(); n];
        for e in &self.edges {
            adjacency[e.source.0].push(e.target.0);
            adjacency[e.target.0].push(e.source.0);
        }
        let mut component = vec![usize::MAX; n];
        let mut out = Vec::new();
        for start in 0..n {
            if component[start] != usize::MAX {
                continue;
            }
            let index = out.len();
            let mut members = BTreeSet::new();
            let mut queue = VecDeque::from([start]);
            component[start] = index;
            while let Some(u) = queue.pop_front() {
                members.insert(NodeId(u));
                for &v in &adjacency[u] {
                    if component[v] == usize::MAX {
                        component[v] = index;
                        queue.push_back(v);
                    }
                }
            }
            out.push(members.into_iter().collect());
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.connected_components().len() <= 1
    }

    /// Induced subgraph over `members`; node ids are renumbered in the order
    /// given. The root is kept when it is a member.
    pub fn subgraph(&self, members: &[NodeId]) -> AmrGraph {
        let mut remap = vec![None; self.nodes.len()];
        let mut sub = AmrGraph::new();
        for &m in members {
            let node = self.node(m);
            remap[m.0] = Some(sub.add_node(node.label.clone(), node.kind));
        }
        for e in &self.edges {
            if let (Some(s), Some(t)) = (remap[e.source.0], remap[e.target.0]) {
                sub.edges.push(Edge {
                    source: s,
                    label: e.label.clone(),
                    target: t,
                });
            }
        }
        if let Some(r) = self.root.and_then(|r| remap[r.0]) {
            sub.root = Some(r);
        }
        sub
    }
}

/// Edge with inverse roles flipped to their base direction.
pub(crate) fn canonical_edge(
    source: NodeId,
    label: &str,
    target: NodeId,
) -> (NodeId, &str, NodeId) {
    if is_inverted_role(label) {
        (target, &label[..label.len() - 3], source)
    } else {
        (source, label, target)
    }
}

pub(crate) fn is_valid_label(label: &str) -> bool {
    label.len() > 1 && label.starts_with(':')
}

/// Numbers and the polarity/mode signs `-` and `+` are written bare.
pub fn is_bare_literal(value: &str) -> bool {
    if value == "-" || value == "+" {
        return true;
    }
    let digits = value.strip_prefix(['-', '+']).unwrap_or(value);
    digits.starts_with(|c: char| c.is_ascii_digit()) && value.parse::<f64>().is_ok()
}

/// Action symbol for a node: concepts verbatim, constants quoted unless they
/// are bare literals.
pub fn node_symbol(label: &str, kind: NodeKind) -> String {
    match kind {
        NodeKind::Concept => label.to_string(),
        NodeKind::Constant if is_bare_literal(label) => label.to_string(),
        NodeKind::Constant => format!("\"{label}\""),
    }
}

/// Inverse of [`node_symbol`].
pub fn parse_node_symbol(symbol: &str) -> (String, NodeKind) {
    if symbol.len() >= 3 && symbol.starts_with('"') && symbol.ends_with('"') {
        (symbol[1..symbol.len() - 1].to_string(), NodeKind::Constant)
    } else if is_bare_literal(symbol) {
        (symbol.to_string(), NodeKind::Constant)
    } else {
        (symbol.to_string(), NodeKind::Concept)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicate_and_bad_edges() {
        let mut g = AmrGraph::new();
        let a = g.add_concept("a");
        let b = g.add_concept("b");
        g.add_edge(a, ":ARG0", b).unwrap();
        assert!(matches!(
            g.add_edge(b, ":ARG0-of", a),
            Err(GraphError::DuplicateEdge(..))
        ));
        g.add_edge(b, ":consist-of", a).unwrap();
        assert!(matches!(
            g.add_edge(a, ":ARG0", b),
            Err(GraphError::DuplicateEdge(..))
        ));
        assert!(g.add_edge(a, ":ARG1", b).is_ok());
        assert!(matches!(
            g.add_edge(a, "ARG2", b),
            Err(GraphError::InvalidLabel(_))
        ));
        assert!(matches!(
            g.add_edge(a, ":", b),
            Err(GraphError::InvalidLabel(_))
        ));
        assert!(matches!(
            g.add_edge(a, ":x", NodeId(7)),
            Err(GraphError::UnknownNode(_))
        ));
        assert!(g.set_root(NodeId(2)).is_err());
        g.validate().unwrap();
    }

    #[test]
    fn components() {
        assert!(AmrGraph::new().connected_components().is_empty());
        let mut g = AmrGraph::new();
        let a = g.add_concept("a");
        let b = g.add_concept("b");
        assert_eq!(g.connected_components(), vec![vec![a], vec![b]]);
        g.add_edge(b, ":x", a).unwrap();
        assert_eq!(g.connected_components(), vec![vec![a, b]]);
    }

    #[test]
    fn symbols_round_trip() {
        for (label, kind) in [
            ("want-01", NodeKind::Concept),
            ("-", NodeKind::Constant),
            ("1990", NodeKind::Constant),
            ("-3.5", NodeKind::Constant),
            ("Paris", NodeKind::Constant),
            ("New York", NodeKind::Constant),
        ] {
            let sym = node_symbol(label, kind);
            assert_eq!(parse_node_symbol(&sym), (label.to_string(), kind));
        }
        assert_eq!(node_symbol("Paris", NodeKind::Constant), "\"Paris\"");
        assert!(!is_bare_literal("inf"));
        assert!(!is_bare_literal("-x"));
    }
}
