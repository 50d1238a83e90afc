//! Smatch: F1 over instance, attribute and relation triples under the best
//! node mapping, found by hill climbing (with an exhaustive search for small
//! graphs as a reference).

use std::collections::HashMap;
use std::ops::{Add, AddAssign};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{AmrGraph, NodeId, NodeKind};
use crate::penman::is_inverted_role;

/// Triples of a graph over its variables (nodes that are not attribute
/// constants). Values and labels are lowercased.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Triples {
    /// Graph node behind each variable index.
    pub variables: Vec<NodeId>,
    pub instances: Vec<(usize, String)>,
    /// `(label, variable, value)`; includes the `TOP` triple of the root.
    pub attributes: Vec<(String, usize, String)>,
    pub relations: Vec<(String, usize, usize)>,
}

impl Triples {
    pub fn len(&self) -> usize {
        self.instances.len() + self.attributes.len() + self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same triples with every relation and attribute label (except `TOP`)
    /// replaced by one placeholder.
    pub fn unlabeled(&self) -> Triples {
        let mut out = self.clone();
        for (label, _, _) in &mut out.attributes {
            if label != "TOP" {
                *label = ":rel".to_string();
            }
        }
        for (label, _, _) in &mut out.relations {
            *label = ":rel".to_string();
        }
        dedup(&mut out.attributes);
        dedup(&mut out.relations);
        out
    }
}

fn dedup<T: PartialEq + Clone>(items: &mut Vec<T>) {
    let mut out: Vec<T> = Vec::with_capacity(items.len());
    for item in items.drain(..) {
        if !out.contains(&item) {
            out.push(item);
        }
    }
    *items = out;
}

pub fn triples(graph: &AmrGraph) -> Triples {
    // inverse roles are flipped before deciding which constants are
    // attributes, so `:op1-of 1990` and `1990 :op1` agree
    let edges: Vec<(NodeId, String, NodeId)> = graph
        .edges()
        .iter()
        .map(|e| {
            let label = e.label.to_lowercase();
            if is_inverted_role(&label) {
                (e.target, label[..label.len() - 3].to_string(), e.source)
            } else {
                (e.source, label, e.target)
            }
        })
        .collect();
    let mut in_degree = vec![0usize; graph.len()];
    let mut out_degree = vec![0usize; graph.len()];
    for (s, _, t) in &edges {
        out_degree[s.0] += 1;
        in_degree[t.0] += 1;
    }
    let is_attribute = |n: NodeId| {
        graph.node(n).kind == NodeKind::Constant
            && graph.root() != Some(n)
            && in_degree[n.0] == 1
            && out_degree[n.0] == 0
    };

    let mut out = Triples::default();
    let mut var_of = vec![None; graph.len()];
    for node in graph.node_ids() {
        if !is_attribute(node) {
            var_of[node.0] = Some(out.variables.len());
            out.variables.push(node);
            out.instances.push((
                out.variables.len() - 1,
                graph.node(node).label.to_lowercase(),
            ));
        }
    }
    if let Some(root) = graph.root() {
        let v = var_of[root.0].expect("the root is never an attribute");
        out.attributes
            .push(("TOP".to_string(), v, graph.node(root).label.to_lowercase()));
    }
    for (s, label, t) in edges {
        let source = var_of[s.0].expect("attributes have no outgoing edges");
        match var_of[t.0] {
            None => out
                .attributes
                .push((label, source, graph.node(t).label.to_lowercase())),
            Some(target) => out.relations.push((label, source, target)),
        }
    }
    dedup(&mut out.attributes);
    dedup(&mut out.relations);
    out
}

/// Matched triple counts; sums give corpus-level (micro) Smatch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MatchCounts {
    pub matched: usize,
    pub test: usize,
    pub gold: usize,
}

impl MatchCounts {
    pub fn precision(&self) -> f64 {
        match (self.test, self.gold) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            (t, _) => self.matched as f64 / t as f64,
        }
    }

    pub fn recall(&self) -> f64 {
        match (self.test, self.gold) {
            (0, 0) => 1.0,
            (_, 0) => 0.0,
            (_, g) => self.matched as f64 / g as f64,
        }
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

impl Add for MatchCounts {
    type Output = MatchCounts;

    fn add(self, rhs: MatchCounts) -> MatchCounts {
        MatchCounts {
            matched: self.matched + rhs.matched,
            test: self.test + rhs.test,
            gold: self.gold + rhs.gold,
        }
    }
}

impl AddAssign for MatchCounts {
    fn add_assign(&mut self, rhs: MatchCounts) {
        *self = *self + rhs;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmatchResult {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: MatchCounts,
    /// Node of the first graph -> node of the second graph.
    pub mapping: Vec<(NodeId, NodeId)>,
}

#[derive(Clone, Copy, Debug)]
pub struct SmatchOptions {
    /// Random restarts on top of the concept-matching start.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SmatchOptions {
    fn default() -> Self {
        SmatchOptions {
            restarts: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmatchError {
    #[error("exhaustive Smatch supports at most {max} variables on the smaller side, got {got}")]
    TooLarge { max: usize, got: usize },
}

/// Largest smaller-side variable count accepted by [`smatch_exact`].
pub const EXACT_LIMIT: usize = 8;

/// Pairwise match weights between the variables of two triple sets.
struct Weights {
    left: usize,
    right: usize,
    /// Instance and attribute matches (and self-loop relations) for `i -> j`.
    unary: Vec<u32>,
    /// For `i -> j`, partner assignments `(k, l)` that would satisfy one
    /// relation triple each.
    pairs: Vec<Vec<(usize, usize)>>,
    candidates: Vec<Vec<usize>>,
}

impl Weights {
    fn new(a: &Triples, b: &Triples) -> Weights {
        let (left, right) = (a.variables.len(), b.variables.len());
        let mut unary = vec![0u32; left * right];
        let mut pairs = vec![Vec::new(); left * right];

        let mut by_concept: HashMap<&str, Vec<usize>> = HashMap::new();
        for (v, c) in &b.instances {
            by_concept.entry(c).or_default().push(*v);
        }
        for (i, c) in &a.instances {
            for &j in by_concept.get(c.as_str()).into_iter().flatten() {
                unary[i * right + j] += 1;
            }
        }
        let mut by_attribute: HashMap<(&str, &str), Vec<usize>> = HashMap::new();
        for (l, v, val) in &b.attributes {
            by_attribute.entry((l, val)).or_default().push(*v);
        }
        for (l, i, val) in &a.attributes {
            for &j in by_attribute
                .get(&(l.as_str(), val.as_str()))
                .into_iter()
                .flatten()
            {
                unary[i * right + j] += 1;
            }
        }
        let mut by_label: HashMap<&str, Vec<(usize, usize)>> = HashMap::new();
        for (l, s, t) in &b.relations {
            by_label.entry(l).or_default().push((*s, *t));
        }
        for (l, s1, t1) in &a.relations {
            for &(s2, t2) in by_label.get(l.as_str()).into_iter().flatten() {
                match (s1 == t1, s2 == t2) {
                    (true, true) => unary[s1 * right + s2] += 1,
                    (false, false) => {
                        pairs[s1 * right + s2].push((*t1, t2));
                        pairs[t1 * right + t2].push((*s1, s2));
                    }
                    _ => {}
                }
            }
        }
        let candidates = (0..left)
            .map(|i| {
                (0..right)
                    .filter(|&j| unary[i * right + j] > 0 || !pairs[i * right + j].is_empty())
                    .collect()
            })
            .collect();
        Weights {
            left,
            right,
            unary,
            pairs,
            candidates,
        }
    }

    fn contrib(&self, i: usize, j: Option<usize>, mapping: &[Option<usize>]) -> i64 {
        let Some(j) = j else { return 0 };
        let idx = i * self.right + j;
        let linked = self.pairs[idx]
            .iter()
            .filter(|&&(k, l)| mapping[k] == Some(l))
            .count();
        self.unary[idx] as i64 + linked as i64
    }

    fn shared(&self, i: usize, j: Option<usize>, k: usize, l: Option<usize>) -> i64 {
        match (j, l) {
            (Some(j), Some(l)) => self.pairs[i * self.right + j]
                .iter()
                .filter(|&&p| p == (k, l))
                .count() as i64,
            _ => 0,
        }
    }

    fn score(&self, mapping: &[Option<usize>]) -> usize {
        let mut unary = 0i64;
        let mut linked = 0i64;
        for (i, &j) in mapping.iter().enumerate() {
            if let Some(j) = j {
                let idx = i * self.right + j;
                unary += self.unary[idx] as i64;
                linked += self.pairs[idx]
                    .iter()
                    .filter(|&&(k, l)| mapping[k] == Some(l))
                    .count() as i64;
            }
        }
        debug_assert!(linked % 2 == 0);
        (unary + linked / 2) as usize
    }

    fn smart_start(&self, a: &Triples, b: &Triples, rng: &mut ChaCha8Rng) -> Vec<Option<usize>> {
        let mut mapping = vec![None; self.left];
        let mut used = vec![false; self.right];
        for (i, c) in &a.instances {
            if let Some(&(j, _)) = b
                .instances
                .iter()
                .find(|(j, c2)| c2 == c && !used[*j] && self.unary[i * self.right + j] > 0)
            {
                mapping[*i] = Some(j);
                used[j] = true;
            }
        }
        self.fill_random(&mut mapping, &mut used, rng);
        mapping
    }

    fn random_start(&self, rng: &mut ChaCha8Rng) -> Vec<Option<usize>> {
        let mut mapping = vec![None; self.left];
        let mut used = vec![false; self.right];
        self.fill_random(&mut mapping, &mut used, rng);
        mapping
    }

    fn fill_random(&self, mapping: &mut [Option<usize>], used: &mut [bool], rng: &mut ChaCha8Rng) {
        for (slot, candidates) in mapping.iter_mut().zip(&self.candidates) {
            if slot.is_some() {
                continue;
            }
            let free: Vec<usize> = candidates.iter().copied().filter(|&j| !used[j]).collect();
            if let Some(&j) = free.choose(rng) {
                *slot = Some(j);
                used[j] = true;
            }
        }
    }

    /// Best-improvement hill climbing over remaps and swaps.
    fn climb(&self, mapping: &mut [Option<usize>]) {
        let mut used = vec![false; self.right];
        for j in mapping.iter().flatten() {
            used[*j] = true;
        }
        loop {
            let mut best: (i64, Option<Move>) = (0, None);
            for i in 0..self.left {
                let current = self.contrib(i, mapping[i], mapping);
                let options = self.candidates[i]
                    .iter()
                    .copied()
                    .filter(|&j| !used[j])
                    .map(Some)
                    .chain(std::iter::once(None));
                for j in options {
                    if j == mapping[i] {
                        continue;
                    }
                    let delta = self.contrib(i, j, mapping) - current;
                    if delta > best.0 {
                        best = (delta, Some(Move::Remap(i, j)));
                    }
                }
            }
            for i in 0..self.left {
                for k in i + 1..self.left {
                    let (a, b) = (mapping[i], mapping[k]);
                    if a == b {
                        continue;
                    }
                    let old = self.contrib(i, a, mapping) + self.contrib(k, b, mapping)
                        - self.shared(i, a, k, b);
                    mapping[i] = b;
                    mapping[k] = a;
                    let new = self.contrib(i, b, mapping) + self.contrib(k, a, mapping)
                        - self.shared(i, b, k, a);
                    mapping[i] = a;
                    mapping[k] = b;
                    if new - old > best.0 {
                        best = (new - old, Some(Move::Swap(i, k)));
                    }
                }
            }
            match best.1 {
                None => break,
                Some(Move::Remap(i, j)) => {
                    if let Some(old) = mapping[i] {
                        used[old] = false;
                    }
                    if let Some(j) = j {
                        used[j] = true;
                    }
                    mapping[i] = j;
                }
                Some(Move::Swap(i, k)) => mapping.swap(i, k),
            }
        }
    }

    /// Exhaustive injective assignment of every left variable (left must be
    /// the smaller side).
    fn exhaustive(&self) -> (usize, Vec<Option<usize>>) {
        debug_assert!(self.left <= self.right);
        let max_gain: Vec<i64> = (0..self.left)
            .map(|i| {
                (0..self.right)
                    .map(|j| {
                        let idx = i * self.right + j;
                        self.unary[idx] as i64 + self.pairs[idx].len() as i64
                    })
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut suffix = vec![0i64; self.left + 1];
        for i in (0..self.left).rev() {
            suffix[i] = suffix[i + 1] + max_gain[i];
        }
        let mut search = Exhaustive {
            weights: self,
            suffix,
            mapping: vec![None; self.left],
            used: vec![false; self.right],
            best: -1,
            best_mapping: vec![None; self.left],
        };
        search.run(0, 0);
        (search.best.max(0) as usize, search.best_mapping)
    }
}

enum Move {
    Remap(usize, Option<usize>),
    Swap(usize, usize),
}

struct Exhaustive<'a> {
    weights: &'a Weights,
    suffix: Vec<i64>,
    mapping: Vec<Option<usize>>,
    used: Vec<bool>,
    best: i64,
    best_mapping: Vec<Option<usize>>,
}

impl Exhaustive<'_> {
    fn run(&mut self, i: usize, score: i64) {
        if score + self.suffix[i] <= self.best {
            return;
        }
        let w = self.weights;
        if i == w.left {
            self.best = score;
            self.best_mapping = self.mapping.clone();
            return;
        }
        for j in 0..w.right {
            if self.used[j] {
                continue;
            }
            let idx = i * w.right + j;
            let gain = w.unary[idx] as i64
                + w.pairs[idx]
                    .iter()
                    .filter(|&&(k, l)| k < i && self.mapping[k] == Some(l))
                    .count() as i64;
            self.used[j] = true;
            self.mapping[i] = Some(j);
            self.run(i + 1, score + gain);
            self.mapping[i] = None;
            self.used[j] = false;
        }
    }
}

fn result(matched: usize, a: &Triples, b: &Triples, mapping: &[Option<usize>]) -> SmatchResult {
    let counts = MatchCounts {
        matched,
        test: a.len(),
        gold: b.len(),
    };
    SmatchResult {
        precision: counts.precision(),
        recall: counts.recall(),
        f1: counts.f1(),
        counts,
        mapping: mapping
            .iter()
            .enumerate()
            .filter_map(|(i, j)| j.map(|j| (a.variables[i], b.variables[j])))
            .collect(),
    }
}

/// Hill-climbing Smatch of `test` against `gold`.
pub fn smatch(test: &AmrGraph, gold: &AmrGraph, options: &SmatchOptions) -> SmatchResult {
    smatch_triples(&triples(test), &triples(gold), options)
}

pub fn smatch_triples(a: &Triples, b: &Triples, options: &SmatchOptions) -> SmatchResult {
    let weights = Weights::new(a, b);
    let mut best: Option<(usize, Vec<Option<usize>>)> = None;
    for start in 0..=options.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        rng.set_stream(start as u64);
        let mut mapping = if start == 0 {
            weights.smart_start(a, b, &mut rng)
        } else {
            weights.random_start(&mut rng)
        };
        weights.climb(&mut mapping);
        let score = weights.score(&mapping);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, mapping));
        }
        if score == a.len().min(b.len()) {
            break;
        }
    }
    let (matched, mapping) = best.expect("at least one start");
    result(matched, a, b, &mapping)
}

/// Exact Smatch by exhaustive search; the smaller graph may have at most
/// [`EXACT_LIMIT`] variables.
pub fn smatch_exact(test: &AmrGraph, gold: &AmrGraph) -> Result<SmatchResult, SmatchError> {
    smatch_exact_triples(&triples(test), &triples(gold))
}

pub fn smatch_exact_triples(a: &Triples, b: &Triples) -> Result<SmatchResult, SmatchError> {
    let smaller = a.variables.len().min(b.variables.len());
    if smaller > EXACT_LIMIT {
        return Err(SmatchError::TooLarge {
            max: EXACT_LIMIT,
            got: smaller,
        });
    }
    if a.variables.len() <= b.variables.len() {
        let (matched, mapping) = Weights::new(a, b).exhaustive();
        Ok(result(matched, a, b, &mapping))
    } else {
        let (matched, reverse) = Weights::new(b, a).exhaustive();
        let mut mapping = vec![None; a.variables.len()];
        for (j, i) in reverse.iter().enumerate() {
            if let Some(i) = i {
                mapping[*i] = Some(j);
            }
        }
        Ok(result(matched, a, b, &mapping))
    }
}

/// Fine-grained scores next to plain Smatch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Breakdown {
    pub smatch: SmatchResult,
    pub unlabeled: SmatchResult,
    pub concepts: SmatchResult,
}

pub fn breakdown(test: &AmrGraph, gold: &AmrGraph, options: &SmatchOptions) -> Breakdown {
    let (a, b) = (triples(test), triples(gold));
    let smatch = smatch_triples(&a, &b, options);
    let unlabeled = smatch_triples(&a.unlabeled(), &b.unlabeled(), options);
    let concepts = concept_match(&a, &b);
    Breakdown {
        smatch,
        unlabeled,
        concepts,
    }
}

/// F1 over the multisets of concepts.
fn concept_match(a: &Triples, b: &Triples) -> SmatchResult {
    let mut pool: HashMap<&str, usize> = HashMap::new();
    for (_, c) in &b.instances {
        *pool.entry(c).or_default() += 1;
    }
    let mut matched = 0;
    for (_, c) in &a.instances {
        if let Some(n) = pool.get_mut(c.as_str()) {
            if *n > 0 {
                *n -= 1;
                matched += 1;
            }
        }
    }
    let counts = MatchCounts {
        matched,
        test: a.instances.len(),
        gold: b.instances.len(),
    };
    SmatchResult {
        precision: counts.precision(),
        recall: counts.recall(),
        f1: counts.f1(),
        counts,
        mapping: Vec::new(),
    }
}
