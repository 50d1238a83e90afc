//! Constrained decoding over vocabulary symbols.
//!
//! [`SymbolState`] lifts the action-level [`ParserState`] to symbol level:
//! it tracks a node whose name is still being spelled with subword pieces and
//! the map between symbol positions and action positions. Its masks only
//! admit symbols that keep the hypothesis completable within the length
//! budget, so every finished hypothesis yields a rooted, connected-or-not
//! but well-formed graph.

use std::collections::{HashMap, HashSet};
use std::io::{self, BufRead, Write};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::alignments::Alignment;
use crate::graph::{canonical_edge, AmrGraph, NodeId};
use crate::penman::is_inverted_role;
use crate::transition::{escape, unescape, Action, ActionKind, ParserState, TransitionError};
use crate::vocab::{Encoded, SymbolId, SymbolKind, VocabError, Vocabulary};

pub const DEFAULT_BEAM: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("the sentence is empty")]
    EmptySentence,
    #[error("beam size must be at least 1")]
    ZeroBeam,
    #[error("max_len {max_len} is below the minimum {needed} for this sentence")]
    MaxLenTooSmall { max_len: usize, needed: usize },
    #[error("symbol id {0} out of range")]
    BadSymbol(SymbolId),
    #[error("symbol {0} cannot be applied here")]
    Disallowed(SymbolId),
    #[error("arc symbol needs a pointer to a node position, got {0:?}")]
    BadPointer(Option<usize>),
    #[error(transparent)]
    Transition(#[from] TransitionError),
}

#[derive(Clone, Debug)]
struct Pending {
    base: ParserState,
    name: String,
}

/// Symbol-level parser state.
#[derive(Clone, Debug)]
pub struct SymbolState {
    machine: ParserState,
    pending: Option<Pending>,
    symbols: Vec<SymbolId>,
    pointers: Vec<Option<usize>>,
    /// Symbol position of the first symbol of each node, by node id.
    node_starts: Vec<usize>,
}

impl SymbolState {
    pub fn new(tokens: Arc<Vec<String>>) -> Result<Self, DecodeError> {
        let machine = ParserState::from_shared(tokens).map_err(|e| match e {
            TransitionError::EmptySentence => DecodeError::EmptySentence,
            e => DecodeError::Transition(e),
        })?;
        Ok(SymbolState {
            machine,
            pending: None,
            symbols: Vec::new(),
            pointers: Vec::new(),
            node_starts: Vec::new(),
        })
    }

    pub fn machine(&self) -> &ParserState {
        &self.machine
    }

    pub fn tokens(&self) -> &[String] {
        self.machine.tokens()
    }

    pub fn cursor(&self) -> usize {
        self.machine.cursor()
    }

    /// Number of symbols emitted so far.
    pub fn step(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[SymbolId] {
        &self.symbols
    }

    pub fn is_done(&self) -> bool {
        self.machine.is_done()
    }

    pub fn encoded(&self) -> Encoded {
        Encoded {
            symbols: self.symbols.clone(),
            pointers: self.pointers.clone(),
        }
    }

    /// Node whose first symbol sits at symbol `position`.
    pub fn node_at(&self, position: usize) -> Option<NodeId> {
        self.node_starts.binary_search(&position).ok().map(NodeId)
    }

    /// Symbol position where `node` begins.
    pub fn node_start(&self, node: NodeId) -> Option<usize> {
        self.node_starts.get(node.0).copied()
    }

    /// Node symbol (concept or quoted constant) at symbol `position`.
    pub fn node_symbol_at(&self, position: usize) -> Option<String> {
        self.node_at(position)
            .map(|n| self.machine.graph().node_symbol(n))
    }

    /// Positions of every node except the last one.
    pub fn pointer_candidates(&self) -> Vec<usize> {
        let n = self.node_starts.len();
        self.node_starts[..n.saturating_sub(1)].to_vec()
    }

    /// Partners already linked to the last node, keyed by canonical label
    /// and whether the last node is the canonical source.
    fn linked(&self) -> HashMap<(&str, bool), HashSet<NodeId>> {
        let mut out: HashMap<(&str, bool), HashSet<NodeId>> = HashMap::new();
        let Some((last, _)) = self.machine.last_node() else {
            return out;
        };
        for e in self.machine.graph().edges() {
            let (s, label, t) = canonical_edge(e.source, &e.label, e.target);
            if s == last {
                out.entry((label, true)).or_default().insert(t);
            } else if t == last {
                out.entry((label, false)).or_default().insert(s);
            }
        }
        out
    }

    /// Key into [`linked`](Self::linked) for an arc template.
    fn arc_key(kind: ActionKind, label: &str) -> (&str, bool) {
        let (s_is_last, label) = if is_inverted_role(label) {
            (kind != ActionKind::LeftArc, &label[..label.len() - 3])
        } else {
            (kind == ActionKind::LeftArc, label)
        };
        (label, s_is_last)
    }

    /// Pointer positions that give `arc` a new edge.
    pub fn valid_pointers(&self, vocab: &Vocabulary, arc: SymbolId) -> Vec<usize> {
        let Some((kind, label)) = vocab.arc(arc) else {
            return Vec::new();
        };
        let Some((last, _)) = self.machine.last_node() else {
            return Vec::new();
        };
        let linked = self.linked();
        let taken = linked.get(&Self::arc_key(kind, label));
        self.node_starts
            .iter()
            .enumerate()
            .filter(|&(id, _)| id != last.0)
            .filter(|&(id, _)| !taken.is_some_and(|t| t.contains(&NodeId(id))))
            .map(|(_, &p)| p)
            .collect()
    }

    /// Minimum number of symbols still needed to finish.
    pub fn required_steps(&self) -> usize {
        if self.is_done() {
            return 0;
        }
        let m = &self.machine;
        let mut needed = m.tokens().len() - m.cursor() + 1;
        if !m.root_set() {
            needed += 1 + usize::from(m.last_node().is_none());
        }
        needed
    }

    /// Symbols that may be emitted next. With `remaining` set, only symbols
    /// that keep the hypothesis finishable within that many steps survive.
    pub fn allowed(&self, vocab: &Vocabulary, remaining: Option<usize>) -> Vec<SymbolId> {
        let mask = self.machine.allowed_actions();
        if mask.is_empty() {
            return Vec::new();
        }
        let m = &self.machine;
        let tight = remaining.is_some_and(|r| r <= self.required_steps());
        let final_token = m.cursor() + 1 == m.tokens().len();
        let (shift, copy, root, close) = (
            vocab.structural(ActionKind::Shift),
            vocab.structural(ActionKind::Copy),
            vocab.structural(ActionKind::Root),
            vocab.structural(ActionKind::Close),
        );
        if tight {
            let only = if m.at_end() {
                close
            } else if m.root_set() {
                shift
            } else if m.last_node().is_some() {
                root
            } else {
                copy
            };
            return vec![only];
        }
        let linked = self.linked();
        let partners = self.node_starts.len().saturating_sub(1);
        let mut out = Vec::new();
        for (id, symbol) in vocab.symbols().iter().enumerate() {
            let ok = match symbol.kind {
                SymbolKind::Structural => match id {
                    _ if id == shift => {
                        mask.allows(ActionKind::Shift) && !(final_token && !m.root_set())
                    }
                    _ if id == copy => mask.allows(ActionKind::Copy),
                    _ if id == root => mask.allows(ActionKind::Root),
                    _ if id == close => mask.allows(ActionKind::Close),
                    _ => false,
                },
                SymbolKind::Node | SymbolKind::PieceStart => mask.allows(ActionKind::Node),
                SymbolKind::PieceCont => self.pending.is_some(),
                SymbolKind::Arc => {
                    let (kind, label) = vocab.arc(id).expect("arc symbol");
                    let taken = linked
                        .get(&Self::arc_key(kind, label))
                        .map_or(0, HashSet::len);
                    mask.allows(kind) && taken < partners
                }
                SymbolKind::Unknown => false,
            };
            if ok {
                out.push(id);
            }
        }
        out
    }

    /// Emits one symbol. The machine checks legality; the decoder-only
    /// restrictions of [`allowed`](Self::allowed) are not re-checked here.
    pub fn apply(
        &mut self,
        vocab: &Vocabulary,
        symbol: SymbolId,
        pointer: Option<usize>,
    ) -> Result<(), DecodeError> {
        if symbol >= vocab.len() {
            return Err(DecodeError::BadSymbol(symbol));
        }
        let position = self.symbols.len() + 1;
        let s = vocab.symbol(symbol);
        let mut pending = None;
        let mut new_node = false;
        match s.kind {
            SymbolKind::Structural => {
                let action = match s.text.as_str() {
                    "SHIFT" => Action::Shift,
                    "COPY" => Action::Copy,
                    "ROOT" => Action::Root,
                    _ => Action::Close,
                };
                new_node = action == Action::Copy;
                self.machine.apply_in_place(&action)?;
            }
            SymbolKind::Node => {
                self.machine.apply_in_place(&Action::Node(s.text.clone()))?;
                new_node = true;
            }
            SymbolKind::PieceStart => {
                let base = self.machine.clone();
                self.machine.apply_in_place(&Action::Node(s.text.clone()))?;
                pending = Some(Pending {
                    base,
                    name: s.text.clone(),
                });
                new_node = true;
            }
            SymbolKind::PieceCont => {
                let Some(p) = self.pending.as_ref() else {
                    return Err(DecodeError::Disallowed(symbol));
                };
                let name = format!("{}{}", p.name, s.text);
                self.machine = p.base.apply(&Action::Node(name.clone()))?;
                pending = Some(Pending {
                    base: p.base.clone(),
                    name,
                });
            }
            SymbolKind::Arc => {
                let (kind, label) = vocab.arc(symbol).expect("arc symbol");
                let node = pointer
                    .and_then(|p| self.node_at(p))
                    .ok_or(DecodeError::BadPointer(pointer))?;
                let target = self
                    .machine
                    .position_of(node)
                    .expect("every node has a position");
                let action = match kind {
                    ActionKind::LeftArc => Action::la(target, label),
                    _ => Action::ra(target, label),
                };
                self.machine.apply_in_place(&action)?;
            }
            SymbolKind::Unknown => return Err(DecodeError::Disallowed(symbol)),
        }
        if new_node {
            self.node_starts.push(position);
        }
        self.pending = pending;
        self.symbols.push(symbol);
        self.pointers.push(if s.kind == SymbolKind::Arc {
            pointer
        } else {
            None
        });
        Ok(())
    }
}

/// What a scorer sees before each step.
#[derive(Clone, Copy, Debug)]
pub struct StepContext<'a> {
    pub state: &'a SymbolState,
    /// Symbols the decoder will accept, ascending.
    pub allowed: &'a [SymbolId],
}

impl<'a> StepContext<'a> {
    pub fn tokens(&self) -> &'a [String] {
        self.state.tokens()
    }

    pub fn cursor(&self) -> usize {
        self.state.cursor()
    }

    /// 1-based position of the symbol about to be predicted.
    pub fn step(&self) -> usize {
        self.state.step() + 1
    }

    pub fn history(&self) -> &'a [SymbolId] {
        self.state.symbols()
    }
}

/// Scoring seam for decoders: log-scores for the allowed symbols and, for
/// arc symbols, for the valid pointer positions.
pub trait Scorer {
    /// One log-score per entry of `ctx.allowed`.
    fn score_symbols(&self, ctx: &StepContext<'_>) -> Vec<f64>;

    /// One log-score per entry of `candidates`.
    fn score_pointers(
        &self,
        ctx: &StepContext<'_>,
        arc: SymbolId,
        candidates: &[usize],
    ) -> Vec<f64>;
}

/// Scores everything zero; ties then fall to the lowest symbol id.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformScorer;

impl Scorer for UniformScorer {
    fn score_symbols(&self, ctx: &StepContext<'_>) -> Vec<f64> {
        vec![0.0; ctx.allowed.len()]
    }

    fn score_pointers(&self, _: &StepContext<'_>, _: SymbolId, candidates: &[usize]) -> Vec<f64> {
        vec![0.0; candidates.len()]
    }
}

/// Seeded random scores, optionally sprinkled with NaN and infinities.
#[derive(Debug)]
pub struct RandomScorer {
    rng: Mutex<ChaCha8Rng>,
    adversarial: bool,
}

impl RandomScorer {
    pub fn new(seed: u64, adversarial: bool) -> Self {
        RandomScorer {
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
            adversarial,
        }
    }

    fn draw(&self, n: usize) -> Vec<f64> {
        let mut rng = self.rng.lock().expect("rng lock");
        (0..n)
            .map(|_| {
                if self.adversarial {
                    match rng.gen_range(0..10) {
                        0 => f64::NAN,
                        1 => f64::NEG_INFINITY,
                        2 => f64::INFINITY,
                        3 => rng.gen_range(-1e300..1e300),
                        _ => rng.gen_range(-20.0..0.0),
                    }
                } else {
                    rng.gen_range(-10.0..0.0)
                }
            })
            .collect()
    }
}

impl Scorer for RandomScorer {
    fn score_symbols(&self, ctx: &StepContext<'_>) -> Vec<f64> {
        self.draw(ctx.allowed.len())
    }

    fn score_pointers(&self, _: &StepContext<'_>, _: SymbolId, candidates: &[usize]) -> Vec<f64> {
        self.draw(candidates.len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecodeOptions {
    pub beam: usize,
    /// Symbol budget; defaults to `4 * tokens + 10`.
    pub max_len: Option<usize>,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            beam: DEFAULT_BEAM,
            max_len: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Decoded {
    pub actions: Vec<Action>,
    pub encoded: Encoded,
    pub graph: AmrGraph,
    pub alignment: Alignment,
    pub score: f64,
}

fn finite_or_floor(x: f64) -> f64 {
    if x.is_nan() {
        f64::NEG_INFINITY
    } else {
        x
    }
}

struct Candidate {
    score: f64,
    hyp: usize,
    symbol: SymbolId,
    pointer: Option<usize>,
}

/// Beam search under the symbol masks. Scores add up over steps; ties go to
/// the lower symbol id, then the lower pointer.
pub fn beam_decode(
    tokens: &[String],
    vocab: &Vocabulary,
    scorer: &dyn Scorer,
    options: &DecodeOptions,
) -> Result<Decoded, DecodeError> {
    if options.beam == 0 {
        return Err(DecodeError::ZeroBeam);
    }
    let start = SymbolState::new(Arc::new(tokens.to_vec()))?;
    let max_len = options.max_len.unwrap_or(4 * tokens.len() + 10);
    let needed = start.required_steps();
    if max_len < needed {
        return Err(DecodeError::MaxLenTooSmall { max_len, needed });
    }
    let close = vocab.structural(ActionKind::Close);
    let mut active = vec![(start, 0.0f64)];
    let mut finished: Vec<(SymbolState, f64)> = Vec::new();
    while !active.is_empty() && finished.len() < options.beam {
        let mut candidates = Vec::new();
        for (h, (state, score)) in active.iter().enumerate() {
            let allowed = state.allowed(vocab, Some(max_len - state.step()));
            let ctx = StepContext {
                state,
                allowed: &allowed,
            };
            let symbol_scores = scorer.score_symbols(&ctx);
            for (i, &symbol) in allowed.iter().enumerate() {
                let s = score + finite_or_floor(symbol_scores.get(i).copied().unwrap_or(f64::NAN));
                if vocab.symbol(symbol).kind == SymbolKind::Arc {
                    let valid = state.valid_pointers(vocab, symbol);
                    let pointer_scores = scorer.score_pointers(&ctx, symbol, &valid);
                    for (j, &p) in valid.iter().enumerate() {
                        let ps =
                            finite_or_floor(pointer_scores.get(j).copied().unwrap_or(f64::NAN));
                        candidates.push(Candidate {
                            score: finite_or_floor(s + ps),
                            hyp: h,
                            symbol,
                            pointer: Some(p),
                        });
                    }
                } else {
                    candidates.push(Candidate {
                        score: finite_or_floor(s),
                        hyp: h,
                        symbol,
                        pointer: None,
                    });
                }
            }
        }
        let order = |a: &Candidate, b: &Candidate| {
            b.score
                .total_cmp(&a.score)
                .then(a.symbol.cmp(&b.symbol))
                .then(a.pointer.cmp(&b.pointer))
                .then(a.hyp.cmp(&b.hyp))
        };
        if candidates.len() > options.beam {
            candidates.select_nth_unstable_by(options.beam - 1, order);
            candidates.truncate(options.beam);
        }
        candidates.sort_by(order);
        let mut next = Vec::with_capacity(options.beam);
        for c in candidates.into_iter().take(options.beam) {
            let mut state = active[c.hyp].0.clone();
            state.apply(vocab, c.symbol, c.pointer)?;
            if c.symbol == close {
                finished.push((state, c.score));
            } else {
                next.push((state, c.score));
            }
        }
        active = next;
    }
    let (best, score) = finished
        .into_iter()
        .reduce(|best, x| if x.1 > best.1 { x } else { best })
        .expect("the length budget always leaves a finishing path");
    let (graph, alignment) = best.machine.extract_graph()?;
    Ok(Decoded {
        actions: best.machine.history().to_vec(),
        encoded: best.encoded(),
        graph,
        alignment,
        score,
    })
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no training pairs")]
    EmptyTrainingSet,
    #[error("pair {index}: {source}")]
    Vocab { index: usize, source: VocabError },
    #[error("pair {index}: {source}")]
    Replay { index: usize, source: DecodeError },
    #[error("model file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub const BASELINE_ALPHA: f64 = 0.1;
const POINTER_TIE_BREAK: f64 = 1e-9;
const BOS: &str = "<s>";
const EOS: &str = "</s>";

#[derive(Clone, Debug, Default, PartialEq)]
struct Counter {
    total: u64,
    counts: HashMap<String, u64>,
}

impl Counter {
    fn add(&mut self, key: &str, n: u64) {
        self.total += n;
        *self.counts.entry(key.to_string()).or_default() += n;
    }

    fn get(&self, key: &str) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }
}

/// Count-based scorer standing in for a neural model.
///
/// Symbols are predicted from the lowercased cursor token and the previous
/// symbols, backing off through (previous token, token, previous two
/// symbols) → (token, previous two symbols) → (token, previous symbol) →
/// (token) → (). Each level puts an α-sized prior on the level below; the
/// bottom level is add-α over the vocabulary. Pointers are ranked by how
/// often the partner node took this label and direction, times how often
/// the partner sat at that nearness rank among the candidates (both also
/// keyed by the node receiving the arc); exact ties go to the nearest.
#[derive(Clone, Debug)]
pub struct BaselineScorer {
    alpha: f64,
    vocab: Vocabulary,
    keys: Vec<String>,
    /// Level k is keyed by its context; level 0 has the empty context.
    levels: [HashMap<Vec<String>, Counter>; LEVELS],
    /// Keyed by `partner` or `rank` tag, the partner symbol or its
    /// nearness rank, optionally the last node symbol, label and direction.
    pointers: HashMap<Vec<String>, u64>,
}

const LEVELS: usize = 5;
const LEVEL_NAMES: [&str; LEVELS] = ["uni", "tok", "prev", "prev2", "prevtok"];

fn symbol_key(vocab: &Vocabulary, id: SymbolId) -> String {
    let s = vocab.symbol(id);
    format!("{}:{}", s.kind.as_str(), s.text)
}

fn direction(kind: ActionKind) -> &'static str {
    if kind == ActionKind::LeftArc {
        "LA"
    } else {
        "RA"
    }
}

fn pointer_keys(partner: &str, last: &str, label: &str, kind: ActionKind) -> [Vec<String>; 2] {
    let dir = direction(kind).to_string();
    let tag = "partner".to_string();
    [
        vec![
            tag.clone(),
            partner.to_string(),
            label.to_string(),
            dir.clone(),
        ],
        vec![
            tag,
            partner.to_string(),
            last.to_string(),
            label.to_string(),
            dir,
        ],
    ]
}

fn rank_keys(rank: usize, last: &str, label: &str, kind: ActionKind) -> [Vec<String>; 2] {
    let dir = direction(kind).to_string();
    let (tag, rank) = ("rank".to_string(), rank.to_string());
    [
        vec![tag.clone(), rank.clone(), label.to_string(), dir.clone()],
        vec![tag, rank, last.to_string(), label.to_string(), dir],
    ]
}

/// Candidate positions, nearest first.
fn by_nearness(candidates: &[usize]) -> Vec<usize> {
    let mut nearest = candidates.to_vec();
    nearest.sort_unstable_by(|a, b| b.cmp(a));
    nearest
}

fn last_node_symbol(state: &SymbolState) -> String {
    state
        .machine()
        .last_node()
        .map(|(n, _)| state.machine().graph().node_symbol(n))
        .unwrap_or_default()
}

impl BaselineScorer {
    fn empty(vocab: &Vocabulary) -> Self {
        BaselineScorer {
            alpha: BASELINE_ALPHA,
            vocab: vocab.clone(),
            keys: (0..vocab.len()).map(|id| symbol_key(vocab, id)).collect(),
            levels: Default::default(),
            pointers: HashMap::new(),
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn contexts(&self, state: &SymbolState) -> [Vec<String>; LEVELS] {
        let token_at = |i: Option<usize>| match i {
            None => BOS.to_string(),
            Some(i) => state
                .tokens()
                .get(i)
                .map(|t| t.to_lowercase())
                .unwrap_or_else(|| EOS.to_string()),
        };
        let token = token_at(Some(state.cursor()));
        let previous = token_at(state.cursor().checked_sub(1));
        let history = state.symbols();
        let back = |k: usize| {
            history
                .len()
                .checked_sub(k)
                .map(|i| self.keys[history[i]].clone())
                .unwrap_or_else(|| BOS.to_string())
        };
        let (p1, p2) = (back(1), back(2));
        [
            vec![],
            vec![token.clone()],
            vec![token.clone(), p1.clone()],
            vec![token.clone(), p2.clone(), p1.clone()],
            vec![previous, token, p2, p1],
        ]
    }

    /// P(symbol | context) with backoff; normalized over the vocabulary.
    pub fn probability(&self, state: &SymbolState, symbol: SymbolId) -> f64 {
        let key = &self.keys[symbol];
        let contexts = self.contexts(state);
        let v = self.vocab.len() as f64;
        let mut p = 1.0 / v;
        for (level, ctx) in contexts.iter().enumerate() {
            let counter = self.levels[level].get(ctx);
            let (c, n) = counter.map_or((0.0, 0.0), |c| (c.get(key) as f64, c.total as f64));
            p = if level == 0 {
                (c + self.alpha) / (n + self.alpha * v)
            } else {
                (c + self.alpha * p) / (n + self.alpha)
            };
        }
        p
    }

    /// Training count of `partner` receiving a `label` arc in direction
    /// `kind`.
    pub fn pointer_count(&self, partner: &str, label: &str, kind: ActionKind) -> u64 {
        let [key, _] = pointer_keys(partner, "", label, kind);
        self.pointers.get(&key).copied().unwrap_or(0)
    }

    pub fn write<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "#baseline\tv1\talpha={}", self.alpha)?;
        for (level, name) in LEVEL_NAMES.iter().enumerate() {
            let mut rows: Vec<(String, u64)> = Vec::new();
            for (ctx, counter) in &self.levels[level] {
                for (sym, &n) in &counter.counts {
                    let mut fields: Vec<String> = ctx.iter().map(|c| escape(c)).collect();
                    fields.push(escape(sym));
                    rows.push((fields.join("\t"), n));
                }
            }
            rows.sort();
            for (fields, n) in rows {
                writeln!(out, "{name}\t{fields}\t{n}")?;
            }
        }
        let mut rows: Vec<(String, u64)> = self
            .pointers
            .iter()
            .map(|(key, &n)| {
                let fields: Vec<String> = key.iter().map(|f| escape(f)).collect();
                (fields.join("\t"), n)
            })
            .collect();
        rows.sort();
        for (fields, n) in rows {
            writeln!(out, "ptr\t{fields}\t{n}")?;
        }
        Ok(())
    }

    /// Reads a model written by [`write`](Self::write) for `vocab`.
    pub fn read<R: BufRead>(reader: R, vocab: &Vocabulary) -> Result<Self, TrainError> {
        let mut model = Self::empty(vocab);
        let bad = |line: usize, message: &str| TrainError::Format {
            line,
            message: message.to_string(),
        };
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if i == 0 {
                let alpha = line
                    .strip_prefix("#baseline\tv1\talpha=")
                    .ok_or_else(|| bad(lineno, "missing #baseline header"))?;
                model.alpha = alpha.parse().map_err(|_| bad(lineno, "bad alpha"))?;
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let (name, rest) = fields.split_first().expect("split yields one field");
            let (count, rest) = rest
                .split_last()
                .ok_or_else(|| bad(lineno, "missing count"))?;
            let count: u64 = count.parse().map_err(|_| bad(lineno, "bad count"))?;
            let rest = rest
                .iter()
                .map(|f| unescape(f))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| bad(lineno, "bad escape"))?;
            if *name == "ptr" {
                let dir_ok = matches!(rest.last().map(String::as_str), Some("LA" | "RA"));
                let tag_ok = matches!(rest.first().map(String::as_str), Some("partner" | "rank"));
                if !(rest.len() == 4 || rest.len() == 5) || !dir_ok || !tag_ok {
                    return Err(bad(lineno, "ptr rows are tag, key, [last,] label, LA|RA"));
                }
                *model.pointers.entry(rest).or_default() += count;
                continue;
            }
            let level = LEVEL_NAMES
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| bad(lineno, "unknown row kind"))?;
            if rest.len() != level.min(3) + 1 + usize::from(level == 4) {
                return Err(bad(lineno, "wrong number of fields"));
            }
            let (sym, ctx) = rest.split_last().expect("non-empty");
            model.levels[level]
                .entry(ctx.to_vec())
                .or_default()
                .add(sym, count);
        }
        Ok(model)
    }
}

impl Scorer for BaselineScorer {
    fn score_symbols(&self, ctx: &StepContext<'_>) -> Vec<f64> {
        let probs: Vec<f64> = ctx
            .allowed
            .iter()
            .map(|&s| self.probability(ctx.state, s))
            .collect();
        let total: f64 = probs.iter().sum();
        probs.into_iter().map(|p| (p / total).ln()).collect()
    }

    fn score_pointers(
        &self,
        ctx: &StepContext<'_>,
        arc: SymbolId,
        candidates: &[usize],
    ) -> Vec<f64> {
        let Some((kind, label)) = self.vocab.arc(arc) else {
            return vec![0.0; candidates.len()];
        };
        let last = last_node_symbol(ctx.state);
        let nearest = by_nearness(candidates);
        let count = |k: &Vec<String>| self.pointers.get(k).copied().unwrap_or(0) as f64;
        let backoff = |[coarse, fine]: [Vec<String>; 2]| {
            (count(&fine) + self.alpha * (count(&coarse) + self.alpha)).ln()
        };
        let raw: Vec<f64> = candidates
            .iter()
            .map(|&p| {
                let partner = ctx.state.node_symbol_at(p).unwrap_or_default();
                let rank = nearest.iter().position(|&q| q == p).unwrap_or(0);
                backoff(pointer_keys(&partner, &last, label, kind))
                    + backoff(rank_keys(rank, &last, label, kind))
                    - POINTER_TIE_BREAK * rank as f64
            })
            .collect();
        let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + raw.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        raw.into_iter().map(|x| x - log_z).collect()
    }
}

/// Accumulates baseline counts from (tokens, actions) pairs.
pub fn train_baseline<'a>(
    pairs: impl IntoIterator<Item = (&'a [String], &'a [Action])>,
    vocab: &Vocabulary,
) -> Result<BaselineScorer, TrainError> {
    let mut model = BaselineScorer::empty(vocab);
    let mut seen = 0;
    for (index, (tokens, actions)) in pairs.into_iter().enumerate() {
        seen += 1;
        let encoded = vocab
            .encode(actions)
            .map_err(|source| TrainError::Vocab { index, source })?;
        let replay = |source| TrainError::Replay { index, source };
        let mut state = SymbolState::new(Arc::new(tokens.to_vec())).map_err(replay)?;
        for (&symbol, &pointer) in encoded.symbols.iter().zip(&encoded.pointers) {
            let key = model.keys[symbol].clone();
            for (level, ctx) in model.contexts(&state).into_iter().enumerate() {
                model.levels[level].entry(ctx).or_default().add(&key, 1);
            }
            if let (Some((kind, label)), Some(p)) = (vocab.arc(symbol), pointer) {
                if let Some(partner) = state.node_symbol_at(p) {
                    let last = last_node_symbol(&state);
                    let valid = by_nearness(&state.valid_pointers(vocab, symbol));
                    let rank = valid.iter().position(|&q| q == p).unwrap_or(0);
                    let keys = pointer_keys(&partner, &last, label, kind)
                        .into_iter()
                        .chain(rank_keys(rank, &last, label, kind));
                    for k in keys {
                        *model.pointers.entry(k).or_default() += 1;
                    }
                }
            }
            state.apply(vocab, symbol, pointer).map_err(replay)?;
        }
    }
    if seen == 0 {
        return Err(TrainError::EmptyTrainingSet);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transition::parse_actions;
    use crate::vocab::build_sep_vocab;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn boston_trip() -> (Vec<String>, Vec<Action>) {
        (
            toks("Employees liked their Boston trip"),
            parse_actions(
                "person employ-01 RA(1,:ARG1-of) SHIFT like-01 LA(1,:ARG0) ROOT SHIFT SHIFT \
                 city name RA(10,:name) COPY RA(11,:op1) SHIFT trip-03 LA(10,:ARG1) RA(5,:ARG1) \
                 LA(1,:ARG0) SHIFT CLOSE",
            )
            .unwrap(),
        )
    }

    #[test]
    fn first_step_forbids_root_and_arcs() {
        let (tokens, actions) = boston_trip();
        let vocab = build_sep_vocab(&[actions]);
        let state = SymbolState::new(Arc::new(tokens)).unwrap();
        let allowed = state.allowed(&vocab, None);
        assert!(!allowed.contains(&vocab.structural(ActionKind::Root)));
        assert!(allowed
            .iter()
            .all(|&s| vocab.symbol(s).kind != SymbolKind::Arc));
        assert!(allowed.contains(&vocab.structural(ActionKind::Shift)));
    }

    #[test]
    fn final_shift_needs_root() {
        let vocab = build_sep_vocab(&[parse_actions("boy SHIFT").unwrap()]);
        let mut state = SymbolState::new(Arc::new(toks("boy"))).unwrap();
        let shift = vocab.structural(ActionKind::Shift);
        assert!(!state.allowed(&vocab, None).contains(&shift));
        state
            .apply(&vocab, vocab.structural(ActionKind::Copy), None)
            .unwrap();
        state
            .apply(&vocab, vocab.structural(ActionKind::Root), None)
            .unwrap();
        assert!(state.allowed(&vocab, None).contains(&shift));
    }

    #[test]
    fn tight_budget_forces_completion() {
        let vocab = build_sep_vocab(&[boston_trip().1]);
        let tokens = toks("a b c");
        let d = beam_decode(
            &tokens,
            &vocab,
            &UniformScorer,
            &DecodeOptions {
                beam: 3,
                max_len: Some(6),
            },
        )
        .unwrap();
        assert!(d.encoded.symbols.len() <= 6);
        assert!(d.graph.root().is_some());
        assert_eq!(
            beam_decode(
                &tokens,
                &vocab,
                &UniformScorer,
                &DecodeOptions {
                    beam: 1,
                    max_len: Some(5)
                }
            )
            .unwrap_err(),
            DecodeError::MaxLenTooSmall {
                max_len: 5,
                needed: 6
            }
        );
        assert_eq!(
            beam_decode(
                &tokens,
                &vocab,
                &UniformScorer,
                &DecodeOptions {
                    beam: 0,
                    max_len: None
                }
            )
            .unwrap_err(),
            DecodeError::ZeroBeam
        );
    }

    #[test]
    fn single_pair_is_memorized() {
        let (tokens, actions) = boston_trip();
        let vocab = build_sep_vocab(std::slice::from_ref(&actions));
        let model = train_baseline([(tokens.as_slice(), actions.as_slice())], &vocab).unwrap();
        let d = beam_decode(
            &tokens,
            &vocab,
            &model,
            &DecodeOptions {
                beam: 1,
                max_len: None,
            },
        )
        .unwrap();
        assert_eq!(d.actions, actions);
    }

    #[test]
    fn baseline_sees_shift_at_their() {
        let (tokens, actions) = boston_trip();
        let vocab = build_sep_vocab(std::slice::from_ref(&actions));
        let model = train_baseline([(tokens.as_slice(), actions.as_slice())], &vocab).unwrap();
        let mut state = SymbolState::new(Arc::new(tokens)).unwrap();
        let encoded = vocab.encode(&actions).unwrap();
        // replay up to the SHIFT over "their" (symbol 9, after a SHIFT)
        for i in 0..8 {
            state
                .apply(&vocab, encoded.symbols[i], encoded.pointers[i])
                .unwrap();
        }
        assert_eq!(state.cursor(), 2);
        let shift = vocab.structural(ActionKind::Shift);
        assert!(model.probability(&state, shift) > 0.5);
    }

    #[test]
    fn conditionals_are_normalized() {
        let (tokens, actions) = boston_trip();
        let vocab = build_sep_vocab(std::slice::from_ref(&actions));
        let model = train_baseline([(tokens.as_slice(), actions.as_slice())], &vocab).unwrap();
        let state = SymbolState::new(Arc::new(tokens)).unwrap();
        let total: f64 = (0..vocab.len()).map(|s| model.probability(&state, s)).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn model_file_round_trip() {
        let (tokens, actions) = boston_trip();
        let vocab = build_sep_vocab(std::slice::from_ref(&actions));
        let model = train_baseline([(tokens.as_slice(), actions.as_slice())], &vocab).unwrap();
        let mut buf = Vec::new();
        model.write(&mut buf).unwrap();
        let back = BaselineScorer::read(buf.as_slice(), &vocab).unwrap();
        assert_eq!(back.levels, model.levels);
        assert_eq!(back.pointers, model.pointers);
        assert!(matches!(
            train_baseline(std::iter::empty(), &vocab),
            Err(TrainError::EmptyTrainingSet)
        ));
    }
}
