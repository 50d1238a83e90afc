//! Target-side action vocabularies.
//!
//! Arc actions are factored into a label template (`LA(:ARG0)`) plus a
//! pointer value. In `sep` mode every node name seen in training is its own
//! symbol. In `joint` mode only names seen at least `min_node_freq` times are
//! kept whole; the rest are spelled with subword pieces, and pointers to such
//! a node address its first piece.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::segment::{SegmentError, Segmenter};
use crate::transition::{escape, unescape, Action, ActionKind};

pub type SymbolId = usize;

pub const UNKNOWN_NODE: &str = "<unk>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SymbolKind {
    /// SHIFT, COPY, ROOT, CLOSE.
    Structural,
    /// `LA(:label)` / `RA(:label)` templates.
    Arc,
    /// A whole node name.
    Node,
    /// First piece of a split node name.
    PieceStart,
    /// Continuation piece of a split node name.
    PieceCont,
    /// Stand-in for unseen node names (sep mode only).
    Unknown,
}

impl SymbolKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SymbolKind::Structural => "structural",
            SymbolKind::Arc => "arc",
            SymbolKind::Node => "node",
            SymbolKind::PieceStart => "piece-start",
            SymbolKind::PieceCont => "piece-cont",
            SymbolKind::Unknown => "unknown",
        }
    }

    /// Symbols that create a node (or begin one).
    pub fn creates_node(self) -> bool {
        matches!(self, SymbolKind::Node | SymbolKind::PieceStart)
    }
}

impl FromStr for SymbolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "structural" => SymbolKind::Structural,
            "arc" => SymbolKind::Arc,
            "node" => SymbolKind::Node,
            "piece-start" => SymbolKind::PieceStart,
            "piece-cont" => SymbolKind::PieceCont,
            "unknown" => SymbolKind::Unknown,
            other => return Err(other.to_string()),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VocabMode {
    Sep,
    Joint,
}

impl fmt::Display for VocabMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VocabMode::Sep => "sep",
            VocabMode::Joint => "joint",
        })
    }
}

impl FromStr for VocabMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sep" => Ok(VocabMode::Sep),
            "joint" => Ok(VocabMode::Joint),
            other => Err(format!("unknown vocabulary mode {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Symbol {
    pub text: String,
    pub kind: SymbolKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VocabError {
    #[error("segmenter failed on {name:?}: {source}")]
    Segmenter { name: String, source: SegmentError },
    #[error("symbol {0:?} is not in the vocabulary")]
    UnseenSymbol(String),
    #[error("piece {0:?} is not in the vocabulary")]
    UnknownPiece(String),
    #[error("pointer {0} does not address a node-creating position")]
    PointerTarget(usize),
    #[error("continuation piece at position {0} does not follow a node piece")]
    DanglingPiece(usize),
    #[error("position {0} holds the unknown-node symbol")]
    UnknownNode(usize),
    #[error("symbol id {0} out of range")]
    BadId(SymbolId),
    #[error("arc symbol at position {0} has no pointer")]
    MissingPointer(usize),
    #[error("joint vocabulary needs a segmenter")]
    MissingSegmenter,
    #[error("vocabulary file line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Symbol sequence plus the pointer attached to each position (1-based
/// symbol positions).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoded {
    pub symbols: Vec<SymbolId>,
    pub pointers: Vec<Option<usize>>,
}

#[derive(Clone, Debug)]
pub struct Vocabulary {
    symbols: Vec<Symbol>,
    index: HashMap<(SymbolKind, String), SymbolId>,
    mode: VocabMode,
    /// Joint mode threshold; `u64::MAX` means no name is kept whole.
    min_node_freq: Option<u64>,
    segmenter: Option<Arc<dyn Segmenter>>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.symbols == other.symbols
            && self.mode == other.mode
            && self.min_node_freq == other.min_node_freq
    }
}

const STRUCTURAL: [&str; 4] = ["SHIFT", "COPY", "ROOT", "CLOSE"];

pub fn arc_template(kind: ActionKind, label: &str) -> String {
    match kind {
        ActionKind::LeftArc => format!("LA({label})"),
        ActionKind::RightArc => format!("RA({label})"),
        _ => unreachable!("only arcs have templates"),
    }
}

/// Splits `LA(:label)` into its direction and label.
pub fn parse_arc_template(text: &str) -> Option<(ActionKind, &str)> {
    let (kind, rest) = if let Some(rest) = text.strip_prefix("LA(") {
        (ActionKind::LeftArc, rest)
    } else {
        (ActionKind::RightArc, text.strip_prefix("RA(")?)
    };
    Some((kind, rest.strip_suffix(')')?))
}

fn arc_templates(corpus: &[Vec<Action>]) -> BTreeSet<String> {
    corpus
        .iter()
        .flatten()
        .filter_map(|a| match a {
            Action::LeftArc { label, .. } => Some(arc_template(ActionKind::LeftArc, label)),
            Action::RightArc { label, .. } => Some(arc_template(ActionKind::RightArc, label)),
            _ => None,
        })
        .collect()
}

fn node_counts(corpus: &[Vec<Action>]) -> BTreeMap<&str, u64> {
    let mut counts = BTreeMap::new();
    for action in corpus.iter().flatten() {
        if let Action::Node(name) = action {
            *counts.entry(name.as_str()).or_default() += 1;
        }
    }
    counts
}

/// Builds a sep-mode vocabulary: one symbol per structural action, arc
/// template and node name, plus an unknown-node symbol.
pub fn build_sep_vocab(corpus: &[Vec<Action>]) -> Vocabulary {
    let mut vocab = Vocabulary::empty(VocabMode::Sep, None, None);
    vocab.push(UNKNOWN_NODE, SymbolKind::Unknown);
    for t in arc_templates(corpus) {
        vocab.push(&t, SymbolKind::Arc);
    }
    for name in node_counts(corpus).keys() {
        vocab.push(name, SymbolKind::Node);
    }
    vocab
}

/// Builds a joint-mode vocabulary. Names seen at least `min_node_freq` times
/// become whole symbols; every other name must be splittable by `segmenter`.
pub fn build_joint_vocab(
    corpus: &[Vec<Action>],
    segmenter: Arc<dyn Segmenter>,
    min_node_freq: u64,
) -> Result<Vocabulary, VocabError> {
    let mut vocab = Vocabulary::empty(
        VocabMode::Joint,
        Some(min_node_freq),
        Some(segmenter.clone()),
    );
    for t in arc_templates(corpus) {
        vocab.push(&t, SymbolKind::Arc);
    }
    let counts = node_counts(corpus);
    for (name, &count) in &counts {
        if count >= min_node_freq {
            vocab.push(name, SymbolKind::Node);
        }
    }
    let inventory = segmenter.inventory();
    for piece in &inventory {
        vocab.push(piece, SymbolKind::PieceStart);
    }
    for piece in &inventory {
        vocab.push(piece, SymbolKind::PieceCont);
    }
    for (name, &count) in &counts {
        if count < min_node_freq {
            vocab.split_name(name)?;
        }
    }
    Ok(vocab)
}

impl Vocabulary {
    fn empty(
        mode: VocabMode,
        min_node_freq: Option<u64>,
        segmenter: Option<Arc<dyn Segmenter>>,
    ) -> Self {
        let mut vocab = Vocabulary {
            symbols: Vec::new(),
            index: HashMap::new(),
            mode,
            min_node_freq,
            segmenter,
        };
        for s in STRUCTURAL {
            vocab.push(s, SymbolKind::Structural);
        }
        vocab
    }

    fn push(&mut self, text: &str, kind: SymbolKind) -> SymbolId {
        if let Some(&id) = self.index.get(&(kind, text.to_string())) {
            return id;
        }
        let id = self.symbols.len();
        self.symbols.push(Symbol {
            text: text.to_string(),
            kind,
        });
        self.index.insert((kind, text.to_string()), id);
        id
    }

    pub fn mode(&self) -> VocabMode {
        self.mode
    }

    pub fn min_node_freq(&self) -> Option<u64> {
        self.min_node_freq
    }

    pub fn segmenter(&self) -> Option<&Arc<dyn Segmenter>> {
        self.segmenter.as_ref()
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbol(&self, id: SymbolId) -> &Symbol {
        &self.symbols[id]
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn lookup(&self, kind: SymbolKind, text: &str) -> Option<SymbolId> {
        self.index.get(&(kind, text.to_string())).copied()
    }

    pub fn structural(&self, kind: ActionKind) -> SymbolId {
        let text = match kind {
            ActionKind::Shift => "SHIFT",
            ActionKind::Copy => "COPY",
            ActionKind::Root => "ROOT",
            ActionKind::Close => "CLOSE",
            _ => panic!("{kind:?} is not structural"),
        };
        self.lookup(SymbolKind::Structural, text)
            .expect("structural symbols are always present")
    }

    /// Direction and label of an arc symbol.
    pub fn arc(&self, id: SymbolId) -> Option<(ActionKind, &str)> {
        let s = &self.symbols[id];
        (s.kind == SymbolKind::Arc)
            .then(|| parse_arc_template(&s.text))
            .flatten()
    }

    /// Number of whole-node symbols.
    pub fn whole_nodes(&self) -> usize {
        self.symbols
            .iter()
            .filter(|s| s.kind == SymbolKind::Node)
            .count()
    }

    fn split_name(&self, name: &str) -> Result<Vec<SymbolId>, VocabError> {
        let segmenter = self
            .segmenter
            .as_ref()
            .ok_or(VocabError::MissingSegmenter)?;
        let pieces = segmenter
            .split(name)
            .map_err(|source| VocabError::Segmenter {
                name: name.to_string(),
                source,
            })?;
        pieces
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let kind = if i == 0 {
                    SymbolKind::PieceStart
                } else {
                    SymbolKind::PieceCont
                };
                self.lookup(kind, p)
                    .ok_or_else(|| VocabError::UnknownPiece(p.clone()))
            })
            .collect()
    }

    /// Symbols spelling a node name.
    pub fn node_symbols(&self, name: &str) -> Result<Vec<SymbolId>, VocabError> {
        if let Some(id) = self.lookup(SymbolKind::Node, name) {
            return Ok(vec![id]);
        }
        match self.mode {
            VocabMode::Sep => Ok(vec![self
                .lookup(SymbolKind::Unknown, UNKNOWN_NODE)
                .expect("sep vocabularies have an unknown symbol")]),
            VocabMode::Joint => self.split_name(name),
        }
    }

    pub fn encode(&self, actions: &[Action]) -> Result<Encoded, VocabError> {
        let mut out = Encoded::default();
        // action position (1-based) -> symbol position of the node's first symbol
        let mut starts: Vec<Option<usize>> = Vec::with_capacity(actions.len());
        for action in actions {
            let first = out.symbols.len() + 1;
            match action {
                Action::Shift | Action::Copy | Action::Root | Action::Close => {
                    out.symbols.push(self.structural(action.kind()));
                    out.pointers.push(None);
                }
                Action::Node(name) => {
                    for id in self.node_symbols(name)? {
                        out.symbols.push(id);
                        out.pointers.push(None);
                    }
                }
                Action::LeftArc { pointer, label } | Action::RightArc { pointer, label } => {
                    let text = arc_template(action.kind(), label);
                    let id = self
                        .lookup(SymbolKind::Arc, &text)
                        .ok_or(VocabError::UnseenSymbol(text))?;
                    let target = pointer
                        .checked_sub(1)
                        .and_then(|p| starts.get(p).copied().flatten())
                        .ok_or(VocabError::PointerTarget(*pointer))?;
                    out.symbols.push(id);
                    out.pointers.push(Some(target));
                }
            }
            starts.push(action.creates_node().then_some(first));
        }
        Ok(out)
    }

    pub fn decode(&self, encoded: &Encoded) -> Result<Vec<Action>, VocabError> {
        let mut actions: Vec<Action> = Vec::new();
        // symbol position -> action position for node starts
        let mut node_start: HashMap<usize, usize> = HashMap::new();
        let mut open_piece = false;
        for (i, &id) in encoded.symbols.iter().enumerate() {
            let position = i + 1;
            let symbol = self.symbols.get(id).ok_or(VocabError::BadId(id))?;
            if symbol.kind != SymbolKind::PieceCont {
                open_piece = false;
            }
            match symbol.kind {
                SymbolKind::Structural => {
                    let action = match symbol.text.as_str() {
                        "SHIFT" => Action::Shift,
                        "COPY" => Action::Copy,
                        "ROOT" => Action::Root,
                        _ => Action::Close,
                    };
                    if action == Action::Copy {
                        node_start.insert(position, actions.len() + 1);
                    }
                    actions.push(action);
                }
                SymbolKind::Node | SymbolKind::PieceStart => {
                    node_start.insert(position, actions.len() + 1);
                    actions.push(Action::Node(symbol.text.clone()));
                    open_piece = symbol.kind == SymbolKind::PieceStart;
                }
                SymbolKind::PieceCont => match (open_piece, actions.last_mut()) {
                    (true, Some(Action::Node(name))) => name.push_str(&symbol.text),
                    _ => return Err(VocabError::DanglingPiece(position)),
                },
                SymbolKind::Arc => {
                    let (kind, label) =
                        parse_arc_template(&symbol.text).expect("arc symbols are well formed");
                    let pointer = encoded
                        .pointers
                        .get(i)
                        .copied()
                        .flatten()
                        .ok_or(VocabError::MissingPointer(position))?;
                    let target = *node_start
                        .get(&pointer)
                        .ok_or(VocabError::PointerTarget(pointer))?;
                    actions.push(match kind {
                        ActionKind::LeftArc => Action::la(target, label),
                        _ => Action::ra(target, label),
                    });
                }
                SymbolKind::Unknown => return Err(VocabError::UnknownNode(position)),
            }
        }
        Ok(actions)
    }

    pub fn write<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let threshold = match self.min_node_freq {
            None => "-".to_string(),
            Some(u64::MAX) => "inf".to_string(),
            Some(n) => n.to_string(),
        };
        writeln!(out, "#vocab\tmode={}\tmin_node_freq={threshold}", self.mode)?;
        for s in &self.symbols {
            writeln!(out, "{}\t{}", escape(&s.text), s.kind.as_str())?;
        }
        Ok(())
    }

    /// Reads a vocabulary file; joint vocabularies need their segmenter.
    pub fn read<R: BufRead>(
        reader: R,
        segmenter: Option<Arc<dyn Segmenter>>,
    ) -> Result<Vocabulary, VocabError> {
        let format = |line: usize, message: String| VocabError::Format { line, message };
        let mut lines = reader.lines().enumerate();
        let header = match lines.next() {
            Some((_, Ok(h))) => h,
            _ => return Err(format(1, "missing header".into())),
        };
        let mut mode = None;
        let mut threshold = None;
        for field in header.split('\t').skip(1) {
            match field.split_once('=') {
                Some(("mode", m)) => mode = Some(m.parse::<VocabMode>().map_err(|e| format(1, e))?),
                Some(("min_node_freq", "-")) => {}
                Some(("min_node_freq", "inf")) => threshold = Some(u64::MAX),
                Some(("min_node_freq", n)) => {
                    threshold = Some(
                        n.parse()
                            .map_err(|_| format(1, format!("bad threshold {n:?}")))?,
                    )
                }
                _ => return Err(format(1, format!("bad header field {field:?}"))),
            }
        }
        if !header.starts_with("#vocab") {
            return Err(format(1, "missing #vocab header".into()));
        }
        let mode = mode.ok_or_else(|| format(1, "missing mode".into()))?;
        if mode == VocabMode::Joint && segmenter.is_none() {
            return Err(VocabError::MissingSegmenter);
        }
        let mut symbols = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| format(i + 1, e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let (text, kind) = line
                .split_once('\t')
                .ok_or_else(|| format(i + 1, "expected symbol<TAB>kind".into()))?;
            let text = unescape(text).map_err(|e| format(i + 1, format!("bad escape {e:?}")))?;
            let kind = kind
                .parse::<SymbolKind>()
                .map_err(|k| format(i + 1, format!("unknown kind {k:?}")))?;
            symbols.push(Symbol { text, kind });
        }
        let mut vocab = Vocabulary {
            symbols: Vec::new(),
            index: HashMap::new(),
            mode,
            min_node_freq: threshold,
            segmenter,
        };
        for s in symbols {
            vocab.push(&s.text, s.kind);
        }
        for s in STRUCTURAL {
            if vocab.lookup(SymbolKind::Structural, s).is_none() {
                return Err(format(0, format!("missing structural symbol {s}")));
            }
        }
        Ok(vocab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::BpeSegmenter;
    use crate::transition::parse_actions;

    fn boston_trip() -> Vec<Action> {
        parse_actions(
            "person employ-01 RA(1,:ARG1-of) SHIFT like-01 LA(1,:ARG0) ROOT SHIFT SHIFT city name \
             RA(10,:name) COPY RA(11,:op1) SHIFT trip-03 LA(10,:ARG1) RA(5,:ARG1) LA(1,:ARG0) SHIFT",
        )
        .unwrap()
    }

    #[test]
    fn sep_vocab_contents() {
        let v = build_sep_vocab(&[boston_trip()]);
        for (kind, text) in [
            (SymbolKind::Node, "person"),
            (SymbolKind::Node, "employ-01"),
            (SymbolKind::Arc, "RA(:ARG1-of)"),
            (SymbolKind::Structural, "SHIFT"),
            (SymbolKind::Structural, "COPY"),
            (SymbolKind::Unknown, UNKNOWN_NODE),
        ] {
            assert!(v.lookup(kind, text).is_some(), "{text}");
        }
        assert_eq!(v, build_sep_vocab(&[boston_trip(), boston_trip()]));
    }

    #[test]
    fn sep_encoding_keeps_pointers() {
        let v = build_sep_vocab(&[boston_trip()]);
        let e = v.encode(&boston_trip()).unwrap();
        assert_eq!(e.symbols.len(), 20);
        let pointers: Vec<(usize, usize)> = e
            .pointers
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|p| (i + 1, p)))
            .collect();
        assert_eq!(
            pointers,
            vec![
                (3, 1),
                (6, 1),
                (12, 10),
                (14, 11),
                (17, 10),
                (18, 5),
                (19, 1)
            ]
        );
        assert_eq!(v.decode(&e).unwrap(), boston_trip());
    }

    #[test]
    fn unseen_labels_and_names() {
        let v = build_sep_vocab(&[boston_trip()]);
        let e = v.encode(&parse_actions("zebra SHIFT").unwrap()).unwrap();
        assert_eq!(v.symbol(e.symbols[0]).kind, SymbolKind::Unknown);
        assert!(matches!(v.decode(&e), Err(VocabError::UnknownNode(1))));
        assert_eq!(
            v.encode(&parse_actions("a b LA(1,:new)").unwrap()),
            Err(VocabError::UnseenSymbol("LA(:new)".into()))
        );
        assert_eq!(
            v.encode(&parse_actions("a SHIFT LA(2,:ARG0)").unwrap()),
            Err(VocabError::PointerTarget(2))
        );
    }

    #[test]
    fn joint_threshold_is_inclusive() {
        let corpus: Vec<Vec<Action>> = (0..5)
            .map(|_| parse_actions("boy SHIFT CLOSE").unwrap())
            .chain([parse_actions("girl SHIFT CLOSE").unwrap()])
            .collect();
        let seg = Arc::new(BpeSegmenter::train(["boy", "girl"], 0));
        let v = build_joint_vocab(&corpus, seg.clone(), 5).unwrap();
        assert!(v.lookup(SymbolKind::Node, "boy").is_some());
        assert!(v.lookup(SymbolKind::Node, "girl").is_none());
        let v6 = build_joint_vocab(&corpus, seg.clone(), 6).unwrap();
        assert_eq!(v6.whole_nodes(), 0);
        let inf = build_joint_vocab(&corpus, seg, u64::MAX).unwrap();
        assert_eq!(inf.whole_nodes(), 0);
    }

    #[test]
    fn joint_pointers_target_first_piece() {
        let seg = Arc::new(BpeSegmenter::new("employ-01".chars(), vec![]));
        let corpus = vec![boston_trip()];
        let v = build_joint_vocab(&corpus, seg, u64::MAX).unwrap();
        let e = v.encode(&boston_trip()).unwrap();
        // no merges: every character is a piece
        let expected: usize = boston_trip()
            .iter()
            .map(|a| match a {
                Action::Node(n) => n.chars().count(),
                _ => 1,
            })
            .sum();
        assert_eq!(e.symbols.len(), expected);
        // person (6 pieces) then employ-01 (9 pieces), then RA(1,...)
        assert_eq!(e.pointers[6 + 9], Some(1));
        assert_eq!(v.decode(&e).unwrap(), boston_trip());
    }

    #[test]
    fn file_round_trip() {
        let v = build_sep_vocab(&[
            boston_trip(),
            parse_actions("\"New%20York\" 100%25 SHIFT").unwrap(),
        ]);
        let mut buf = Vec::new();
        v.write(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("#vocab\tmode=sep\tmin_node_freq=-\n"));
        let back = Vocabulary::read(buf.as_slice(), None).unwrap();
        assert_eq!(back, v);

        let seg: Arc<dyn Segmenter> = Arc::new(BpeSegmenter::train(["person"], 3));
        let j = build_joint_vocab(&[boston_trip()], seg.clone(), 5).unwrap();
        let mut buf = Vec::new();
        j.write(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("#vocab\tmode=joint\tmin_node_freq=5\n"));
        assert_eq!(
            Vocabulary::read(buf.as_slice(), None),
            Err(VocabError::MissingSegmenter)
        );
        assert_eq!(Vocabulary::read(buf.as_slice(), Some(seg)).unwrap(), j);
    }
}
