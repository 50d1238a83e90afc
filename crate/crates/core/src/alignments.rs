//! Node-to-token alignments and completion of partial alignments.
//!
//! Completion copies the alignment of a node's first child when one is
//! available and falls back to its first parent otherwise. It runs in
//! breadth-first rounds: child rounds until nothing changes, then one parent
//! round, repeated until a fixpoint. Within a round nodes are visited in id
//! order and read the alignment as it stood at the start of the round.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusEntry;
use crate::graph::{AmrGraph, NodeId};

/// Map from node to 0-based token index.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment(BTreeMap<NodeId, usize>);

impl Alignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, node: NodeId) -> Option<usize> {
        self.0.get(&node).copied()
    }

    pub fn insert(&mut self, node: NodeId, token: usize) -> Option<usize> {
        self.0.insert(node, token)
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.0.contains_key(&node)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, usize)> + '_ {
        self.0.iter().map(|(&n, &t)| (n, t))
    }

    /// True when every node of `graph` is aligned.
    pub fn is_total(&self, graph: &AmrGraph) -> bool {
        graph.node_ids().all(|n| self.contains(n))
    }

    pub fn unaligned(&self, graph: &AmrGraph) -> Vec<NodeId> {
        graph.node_ids().filter(|&n| !self.contains(n)).collect()
    }
}

impl FromIterator<(NodeId, usize)> for Alignment {
    fn from_iter<I: IntoIterator<Item = (NodeId, usize)>>(iter: I) -> Self {
        Alignment(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlignmentError {
    #[error("no node is aligned, nothing to propagate from")]
    NoSeed,
    #[error("nodes {0:?} cannot be aligned (component without any aligned node)")]
    Unalignable(Vec<NodeId>),
    #[error("node {node} aligned to token {token} but the sentence has {n_tokens} tokens")]
    OutOfRange {
        node: NodeId,
        token: usize,
        n_tokens: usize,
    },
    #[error("alignment mentions {0}, which is not a node of the graph")]
    UnknownNode(NodeId),
}

/// Extends `partial` to every node of `graph`. Existing alignments are kept.
pub fn complete_alignments(
    graph: &AmrGraph,
    partial: &Alignment,
    n_tokens: usize,
) -> Result<Alignment, AlignmentError> {
    for (node, token) in partial.iter() {
        if node.0 >= graph.len() {
            return Err(AlignmentError::UnknownNode(node));
        }
        if token >= n_tokens {
            return Err(AlignmentError::OutOfRange {
                node,
                token,
                n_tokens,
            });
        }
    }
    if graph.is_empty() {
        return Ok(Alignment::new());
    }
    if partial.is_empty() {
        return Err(AlignmentError::NoSeed);
    }

    let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); graph.len()];
    let mut parents: Vec<Vec<NodeId>> = vec![Vec::new(); graph.len()];
    for e in graph.edges() {
        children[e.source.0].push(e.target);
        parents[e.target.0].push(e.source);
    }

    let mut current: Vec<Option<usize>> = graph.node_ids().map(|n| partial.get(n)).collect();
    loop {
        if propagate_round(&mut current, &children) {
            continue;
        }
        if !propagate_round(&mut current, &parents) {
            break;
        }
    }

    let missing: Vec<NodeId> = graph
        .node_ids()
        .filter(|n| current[n.0].is_none())
        .collect();
    if !missing.is_empty() {
        return Err(AlignmentError::Unalignable(missing));
    }
    Ok(current
        .into_iter()
        .enumerate()
        .map(|(i, t)| (NodeId(i), t.expect("checked above")))
        .collect())
}

fn propagate_round(current: &mut [Option<usize>], neighbours: &[Vec<NodeId>]) -> bool {
    let snapshot = current.to_vec();
    let mut changed = false;
    for (node, slot) in current.iter_mut().enumerate() {
        if slot.is_some() {
            continue;
        }
        if let Some(token) = neighbours[node].iter().find_map(|n| snapshot[n.0]) {
            *slot = Some(token);
            changed = true;
        }
    }
    changed
}

/// Corpus-level view of how incomplete the given alignments are.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AlignmentReport {
    pub graphs: usize,
    pub graphs_with_unaligned: usize,
    /// `histogram[k]` = number of graphs with exactly `k` unaligned nodes.
    pub histogram: Vec<usize>,
    pub completed: usize,
    pub completion_failures: usize,
}

impl AlignmentReport {
    pub fn unaligned_graph_rate(&self) -> f64 {
        ratio(self.graphs_with_unaligned, self.graphs)
    }

    /// Share of graphs fully aligned after completion.
    pub fn completion_rate(&self) -> f64 {
        ratio(self.completed, self.graphs)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn alignment_stats<'a>(entries: impl IntoIterator<Item = &'a CorpusEntry>) -> AlignmentReport {
    let mut report = AlignmentReport::default();
    for entry in entries {
        report.graphs += 1;
        let missing = entry.alignment.unaligned(&entry.graph).len();
        if report.histogram.len() <= missing {
            report.histogram.resize(missing + 1, 0);
        }
        report.histogram[missing] += 1;
        if missing > 0 {
            report.graphs_with_unaligned += 1;
        }
        match complete_alignments(&entry.graph, &entry.alignment, entry.tokens.len()) {
            Ok(_) => report.completed += 1,
            Err(_) => report.completion_failures += 1,
        }
    }
    report
}
