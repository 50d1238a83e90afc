//! Rule-based oracle: derives the action sequence that rebuilds a gold graph.
//!
//! At every step the first applicable rule fires:
//!
//! 1. the next gold arc between the last created node and an earlier node,
//!    nearest partner first, followed by `ROOT` once the root node's arcs are
//!    done;
//! 2. the next gold node aligned to the cursor token (`COPY` when the
//!    lowercased token spells the node, otherwise a node action);
//! 3. `SHIFT` while the cursor is inside the sentence;
//! 4. `CLOSE`.
//!
//! Nodes sharing a token are created ancestors first; ties go to the node
//! mentioned first in the gold Penman.

use std::collections::VecDeque;

use serde::Serialize;
use thiserror::Error;

use crate::alignments::{complete_alignments, Alignment, AlignmentError};
use crate::corpus::CorpusEntry;
use crate::graph::{AmrGraph, NodeId};
use crate::metrics::{smatch, MatchCounts, SmatchOptions};
use crate::penman::{parse_penman, print_penman};
use crate::transition::{Action, ParserState, TransitionError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("empty sentence")]
    EmptySentence,
    #[error("node {0} has no alignment")]
    Unaligned(NodeId),
    #[error("node {node} is aligned to token {token} beyond the sentence")]
    OutOfRange { node: NodeId, token: usize },
    #[error("graph is not connected ({0} components)")]
    Disconnected(usize),
    #[error("self-loop on node {0} cannot be built")]
    SelfLoop(NodeId),
    #[error("alignment completion failed: {0}")]
    Alignment(#[from] AlignmentError),
    #[error("derived action rejected by the machine: {0}")]
    Machine(#[from] TransitionError),
}

/// Derives the gold action sequence; the alignment must be total.
pub fn derive_actions(
    tokens: &[String],
    graph: &AmrGraph,
    alignment: &Alignment,
) -> Result<Vec<Action>, OracleError> {
    if tokens.is_empty() {
        return Err(OracleError::EmptySentence);
    }
    for node in graph.node_ids() {
        match alignment.get(node) {
            None => return Err(OracleError::Unaligned(node)),
            Some(token) if token >= tokens.len() => {
                return Err(OracleError::OutOfRange { node, token })
            }
            Some(_) => {}
        }
    }
    let components = graph.connected_components().len();
    if components > 1 {
        return Err(OracleError::Disconnected(components));
    }
    if let Some(e) = graph.edges().iter().find(|e| e.source == e.target) {
        return Err(OracleError::SelfLoop(e.source));
    }

    let mut queues = token_queues(graph, alignment, tokens.len());
    let mut state = ParserState::new(tokens.to_vec())?;
    let mut actions = Vec::new();
    // gold node -> position of the action that created it
    let mut created: Vec<Option<usize>> = vec![None; graph.len()];
    let mut pending: VecDeque<Action> = VecDeque::new();

    let mut emit = |state: &mut ParserState, action: Action| -> Result<(), OracleError> {
        state.apply_in_place(&action)?;
        actions.push(action);
        Ok(())
    };

    loop {
        if let Some(action) = pending.pop_front() {
            emit(&mut state, action)?;
            continue;
        }
        let next_node = if state.at_end() {
            None
        } else {
            queues[state.cursor()].pop_front()
        };
        if let Some(node) = next_node {
            let token = tokens[state.cursor()].to_lowercase();
            let action = if token == graph.node_symbol(node) {
                Action::Copy
            } else {
                Action::Node(graph.node_symbol(node))
            };
            emit(&mut state, action)?;
            let position = state.history().len();
            created[node.0] = Some(position);
            pending.extend(arcs_for(graph, node, &created));
            if graph.root() == Some(node) {
                pending.push_back(Action::Root);
            }
            continue;
        }
        if !state.at_end() {
            emit(&mut state, Action::Shift)?;
            continue;
        }
        emit(&mut state, Action::Close)?;
        break;
    }
    Ok(actions)
}

/// Arcs between `node` and already created nodes, nearest partner first.
fn arcs_for(graph: &AmrGraph, node: NodeId, created: &[Option<usize>]) -> Vec<Action> {
    let mut arcs: Vec<(usize, usize, Action)> = graph
        .edges()
        .iter()
        .enumerate()
        .filter_map(|(index, e)| {
            if e.source == node && e.target != node {
                let p = created[e.target.0]?;
                Some((p, index, Action::la(p, e.label.clone())))
            } else if e.target == node && e.source != node {
                let p = created[e.source.0]?;
                Some((p, index, Action::ra(p, e.label.clone())))
            } else {
                None
            }
        })
        .collect();
    arcs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    arcs.into_iter().map(|(_, _, a)| a).collect()
}

/// For each token, the nodes aligned to it in top-down order.
fn token_queues(graph: &AmrGraph, alignment: &Alignment, n_tokens: usize) -> Vec<VecDeque<NodeId>> {
    let mut groups: Vec<Vec<NodeId>> = vec![Vec::new(); n_tokens];
    for node in graph.node_ids() {
        groups[alignment.get(node).expect("checked total")].push(node);
    }
    groups
        .into_iter()
        .map(|group| top_down(graph, group))
        .collect()
}

/// Kahn's algorithm over the subgraph induced by `group` (already in id
/// order); the smallest ready id goes first and cycles are broken the same way.
fn top_down(graph: &AmrGraph, group: Vec<NodeId>) -> VecDeque<NodeId> {
    if group.len() < 2 {
        return group.into();
    }
    let inside = |n: NodeId| group.binary_search(&n).is_ok();
    let mut parents: Vec<usize> = group
        .iter()
        .map(|&n| {
            graph
                .incoming(n)
                .filter(|e| e.source != n && inside(e.source))
                .count()
        })
        .collect();
    let mut placed = vec![false; group.len()];
    let mut order = VecDeque::with_capacity(group.len());
    while order.len() < group.len() {
        let next = (0..group.len())
            .find(|&i| !placed[i] && parents[i] == 0)
            .or_else(|| (0..group.len()).find(|&i| !placed[i]))
            .expect("some node is left");
        placed[next] = true;
        let node = group[next];
        order.push_back(node);
        for e in graph.outgoing(node) {
            if e.target != node {
                if let Ok(i) = group.binary_search(&e.target) {
                    parents[i] = parents[i].saturating_sub(1);
                }
            }
        }
    }
    order
}

/// Oracle statistics over a corpus.
#[derive(Clone, Debug, Default, Serialize)]
pub struct CoverageReport {
    pub sentences: usize,
    pub failures: usize,
    /// Actions excluding the final CLOSE.
    pub total_actions: usize,
    pub total_tokens: usize,
    /// Micro-averaged Smatch of replayed oracle graphs against gold.
    pub smatch: MatchCounts,
}

impl CoverageReport {
    pub fn derived(&self) -> usize {
        self.sentences - self.failures
    }

    pub fn avg_actions(&self) -> f64 {
        per(self.total_actions, self.derived())
    }

    pub fn avg_tokens(&self) -> f64 {
        per(self.total_tokens, self.derived())
    }

    pub fn actions_per_token(&self) -> f64 {
        per(self.total_actions, self.total_tokens)
    }

    /// Corpus-level (micro) Smatch of replayed graphs; 0 when nothing was
    /// derived.
    pub fn oracle_smatch(&self) -> f64 {
        if self.derived() == 0 {
            return 0.0;
        }
        self.smatch.f1()
    }
}

fn per(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Outcome of running the oracle on one entry.
#[derive(Clone, Debug)]
pub struct OracleOutcome {
    pub actions: Vec<Action>,
    /// Graph rebuilt from the actions, printed and parsed back.
    pub replayed: AmrGraph,
    pub smatch: MatchCounts,
}

/// Completes alignments, derives actions, replays them and scores the
/// Penman round-trip of the result against the gold graph.
pub fn run_oracle(entry: &CorpusEntry) -> Result<OracleOutcome, OracleError> {
    let alignment = complete_alignments(&entry.graph, &entry.alignment, entry.tokens.len())?;
    let actions = derive_actions(&entry.tokens, &entry.graph, &alignment)?;
    let mut state = ParserState::new(entry.tokens.clone())?;
    for action in &actions {
        state.apply_in_place(action)?;
    }
    let (graph, _) = state.extract_graph()?;
    let replayed = print_penman(&graph)
        .ok()
        .and_then(|text| parse_penman(&text).ok())
        .unwrap_or_default();
    let smatch = smatch(&replayed, &entry.graph, &SmatchOptions::default()).counts;
    Ok(OracleOutcome {
        actions,
        replayed,
        smatch,
    })
}

pub fn coverage_report<'a>(entries: impl IntoIterator<Item = &'a CorpusEntry>) -> CoverageReport {
    let mut report = CoverageReport::default();
    for entry in entries {
        report.add(entry, run_oracle(entry).as_ref());
    }
    report
}

impl CoverageReport {
    /// Folds one entry's outcome into the report.
    pub fn add(&mut self, entry: &CorpusEntry, outcome: Result<&OracleOutcome, &OracleError>) {
        self.sentences += 1;
        match outcome {
            Ok(o) => {
                self.total_actions += o
                    .actions
                    .iter()
                    .filter(|a| !matches!(a, Action::Close))
                    .count();
                self.total_tokens += entry.tokens.len();
                self.smatch += o.smatch;
            }
            Err(_) => self.failures += 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penman::parse_penman;
    use crate::transition::format_actions;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn boy_wants_to_go() {
        let g = parse_penman("(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-02 :ARG0 b))").unwrap();
        let a: Alignment = [(NodeId(1), 1), (NodeId(0), 2), (NodeId(2), 4)]
            .into_iter()
            .collect();
        let actions = derive_actions(&toks("The boy wants to go"), &g, &a).unwrap();
        assert_eq!(
            format_actions(&actions),
            "SHIFT COPY SHIFT want-01 LA(2,:ARG0) ROOT SHIFT SHIFT go-02 RA(4,:ARG1) LA(2,:ARG0) SHIFT CLOSE"
        );
    }

    #[test]
    fn single_node() {
        let g = parse_penman("(h / hello)").unwrap();
        let a: Alignment = [(NodeId(0), 0)].into_iter().collect();
        let actions = derive_actions(&toks("Hello"), &g, &a).unwrap();
        assert_eq!(format_actions(&actions), "COPY ROOT SHIFT CLOSE");
        let actions = derive_actions(&toks("Hi"), &g, &a).unwrap();
        assert_eq!(format_actions(&actions), "hello ROOT SHIFT CLOSE");
    }

    #[test]
    fn errors() {
        let g = parse_penman("(w / want-01 :ARG0 (b / boy))").unwrap();
        let partial: Alignment = [(NodeId(0), 0)].into_iter().collect();
        assert_eq!(
            derive_actions(&toks("a b"), &g, &partial),
            Err(OracleError::Unaligned(NodeId(1)))
        );
        let far: Alignment = [(NodeId(0), 0), (NodeId(1), 5)].into_iter().collect();
        assert!(matches!(
            derive_actions(&toks("a b"), &g, &far),
            Err(OracleError::OutOfRange { .. })
        ));
        let mut two = AmrGraph::new();
        two.add_concept("a");
        two.add_concept("b");
        let both: Alignment = [(NodeId(0), 0), (NodeId(1), 0)].into_iter().collect();
        assert_eq!(
            derive_actions(&toks("x"), &two, &both),
            Err(OracleError::Disconnected(2))
        );
        let looped = parse_penman("(a / x :mod a)").unwrap();
        let one: Alignment = [(NodeId(0), 0)].into_iter().collect();
        assert_eq!(
            derive_actions(&toks("x"), &looped, &one),
            Err(OracleError::SelfLoop(NodeId(0)))
        );
        assert_eq!(
            derive_actions(&[], &looped, &one),
            Err(OracleError::EmptySentence)
        );
    }

    #[test]
    fn unaligned_tokens_cost_one_shift() {
        let g = parse_penman("(b / boy)").unwrap();
        let a: Alignment = [(NodeId(0), 3)].into_iter().collect();
        let actions = derive_actions(&toks("a b c boy e"), &g, &a).unwrap();
        assert_eq!(
            format_actions(&actions),
            "SHIFT SHIFT SHIFT COPY ROOT SHIFT SHIFT CLOSE"
        );
    }

    #[test]
    fn empty_report() {
        let r = coverage_report(std::iter::empty());
        assert_eq!(r.sentences, 0);
        assert_eq!(r.avg_actions(), 0.0);
        assert_eq!(r.oracle_smatch(), 0.0);
    }
}
