//! Random generators shared by the property and acceptance suites.
#![allow(dead_code)]

use amr_transit::alignments::Alignment;
use amr_transit::graph::{AmrGraph, NodeId};
use amr_transit::transition::{Action, ActionKind, ParserState};
use rand::seq::SliceRandom;
use rand::Rng;

pub const LABELS: &[&str] = &[
    ":ARG0",
    ":ARG1",
    ":ARG2",
    ":mod",
    ":name",
    ":op1",
    ":op2",
    ":ARG0-of",
    ":ARG1-of",
    ":quant",
    ":polarity",
    ":consist-of",
    ":time",
];

const CONCEPTS: &[&str] = &[
    "boy",
    "girl",
    "want-01",
    "go-02",
    "person",
    "city",
    "name",
    "and",
    "thing",
    "have-03",
    "opine-01",
    "team",
    "like-01",
    "trip-03",
    "employ-01",
    "say-01",
    "see-01",
    "big",
];

const CONSTANTS: &[&str] = &[
    "\"Paris\"",
    "\"New York\"",
    "-",
    "+",
    "3",
    "1990",
    "\"Obama\"",
];

/// Random node symbol; `distinct` appends a unique suffix to concepts.
pub fn node_symbol<R: Rng>(rng: &mut R, index: usize, distinct: bool) -> String {
    if rng.gen_bool(0.2) {
        let c = *CONSTANTS.choose(rng).unwrap();
        if distinct && c.starts_with('"') {
            return format!("\"{}{index}\"", &c[1..c.len() - 1]);
        }
        return c.to_string();
    }
    let c = *CONCEPTS.choose(rng).unwrap();
    if distinct {
        format!("{c}-{index}")
    } else {
        c.to_string()
    }
}

pub fn words<R: Rng>(rng: &mut R, n: usize) -> Vec<String> {
    const WORDS: &[&str] = &[
        "the", "boy", "Paris", "went", "and", "a", "1990", "-", "saw", "New",
    ];
    (0..n)
        .map(|_| WORDS.choose(rng).unwrap().to_string())
        .collect()
}

/// Connected random graph with `n` nodes and a random root.
pub fn connected_graph<R: Rng>(rng: &mut R, n: usize, distinct: bool) -> AmrGraph {
    let mut g = AmrGraph::new();
    for i in 0..n {
        let sym = node_symbol(rng, i, distinct);
        g.add_symbol_node(&sym);
    }
    for i in 1..n {
        let j = rng.gen_range(0..i);
        let label = *LABELS.choose(rng).unwrap();
        let (s, t) = if rng.gen_bool(0.7) { (j, i) } else { (i, j) };
        g.add_edge(NodeId(s), label, NodeId(t)).unwrap();
    }
    let extra = rng.gen_range(0..=n / 2);
    for _ in 0..extra {
        let (s, t) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let label = *LABELS.choose(rng).unwrap();
        if s != t && !g.has_edge(NodeId(s), label, NodeId(t)) {
            g.add_edge(NodeId(s), label, NodeId(t)).unwrap();
        }
    }
    g.set_root(NodeId(rng.gen_range(0..n))).unwrap();
    g
}

/// Tokens plus a total alignment for `graph`. Some aligned tokens are set to
/// the node's symbol so COPY gets exercised.
pub fn aligned_sentence<R: Rng>(rng: &mut R, graph: &AmrGraph) -> (Vec<String>, Alignment) {
    let n_tokens = rng.gen_range(1..=graph.len().max(1) + 3);
    let mut tokens = words(rng, n_tokens);
    let mut alignment = Alignment::new();
    for id in graph.node_ids() {
        let t = rng.gen_range(0..n_tokens);
        alignment.insert(id, t);
        let sym = graph.node_symbol(id);
        if rng.gen_bool(0.3) && !sym.contains(char::is_whitespace) {
            tokens[t] = sym;
        }
    }
    (tokens, alignment)
}

/// Random mask-respecting action, biased so rollouts make progress.
pub fn random_action<R: Rng>(rng: &mut R, state: &ParserState, step: usize) -> Action {
    let mask = state.allowed_actions();
    let kinds: Vec<ActionKind> = mask.kinds().collect();
    let kind = if mask.allows(ActionKind::Shift) && rng.gen_bool(0.25) {
        ActionKind::Shift
    } else {
        *kinds
            .choose(rng)
            .expect("progress: some action is always allowed")
    };
    match kind {
        ActionKind::Shift => Action::Shift,
        ActionKind::Copy => Action::Copy,
        ActionKind::Root => Action::Root,
        ActionKind::Close => Action::Close,
        ActionKind::Node => Action::Node(node_symbol(rng, step, false)),
        ActionKind::LeftArc | ActionKind::RightArc => {
            let pointer = *mask.pointers.choose(rng).unwrap();
            let label = LABELS.choose(rng).unwrap().to_string();
            if kind == ActionKind::LeftArc {
                Action::LeftArc { pointer, label }
            } else {
                Action::RightArc { pointer, label }
            }
        }
    }
}

/// Runs a random rollout to completion; duplicate-edge rejections are
/// retried with a fresh action.
pub fn rollout<R: Rng>(rng: &mut R, tokens: Vec<String>) -> ParserState {
    let mut state = ParserState::new(tokens).unwrap();
    let mut step = 0;
    while !state.is_done() {
        let action = random_action(rng, &state, step);
        match state.apply(&action) {
            Ok(next) => state = next,
            Err(amr_transit::transition::TransitionError::DuplicateEdge(_)) => {}
            Err(e) => panic!("mask allowed {action} but apply failed: {e}"),
        }
        step += 1;
    }
    state
}
