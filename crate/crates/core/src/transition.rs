//! The transition system: a token cursor scanning left to right, node actions
//! that create nodes at the cursor, and arc actions that point back into the
//! action history.
//!
//! Positions are 1-based over the whole history, arc actions included, so a
//! node is addressed by the position of the action that created it.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignments::Alignment;
use crate::graph::{is_valid_label, AmrGraph, NodeId};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    /// Move the cursor one token to the right.
    Shift,
    /// Create a node named after the lowercased token under the cursor.
    Copy,
    /// Create a node with the given name.
    Node(String),
    /// Edge from the last created node to the node created at `pointer`.
    LeftArc { pointer: usize, label: String },
    /// Edge from the node created at `pointer` to the last created node.
    RightArc { pointer: usize, label: String },
    /// Declare the last created node the root.
    Root,
    /// End of sequence.
    Close,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionKind {
    Shift,
    Copy,
    Node,
    LeftArc,
    RightArc,
    Root,
    Close,
}

impl ActionKind {
    pub const ALL: [ActionKind; 7] = [
        ActionKind::Shift,
        ActionKind::Copy,
        ActionKind::Node,
        ActionKind::LeftArc,
        ActionKind::RightArc,
        ActionKind::Root,
        ActionKind::Close,
    ];
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Shift => ActionKind::Shift,
            Action::Copy => ActionKind::Copy,
            Action::Node(_) => ActionKind::Node,
            Action::LeftArc { .. } => ActionKind::LeftArc,
            Action::RightArc { .. } => ActionKind::RightArc,
            Action::Root => ActionKind::Root,
            Action::Close => ActionKind::Close,
        }
    }

    pub fn creates_node(&self) -> bool {
        matches!(self, Action::Copy | Action::Node(_))
    }

    pub fn pointer(&self) -> Option<usize> {
        match self {
            Action::LeftArc { pointer, .. } | Action::RightArc { pointer, .. } => Some(*pointer),
            _ => None,
        }
    }

    pub fn node(name: impl Into<String>) -> Self {
        Action::Node(name.into())
    }

    pub fn la(pointer: usize, label: impl Into<String>) -> Self {
        Action::LeftArc {
            pointer,
            label: label.into(),
        }
    }

    pub fn ra(pointer: usize, label: impl Into<String>) -> Self {
        Action::RightArc {
            pointer,
            label: label.into(),
        }
    }
}

pub(crate) fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '%' => out.push_str("%25"),
            ' ' => out.push_str("%20"),
            '\t' => out.push_str("%09"),
            '\n' => out.push_str("%0A"),
            c => out.push(c),
        }
    }
    out
}

pub(crate) fn unescape(s: &str) -> Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('%') {
        out.push_str(&rest[..i]);
        let code = rest.get(i + 1..i + 3).ok_or_else(|| s.to_string())?;
        match code {
            "25" => out.push('%'),
            "20" => out.push(' '),
            "09" => out.push('\t'),
            "0A" | "0a" => out.push('\n'),
            _ => return Err(s.to_string()),
        }
        rest = &rest[i + 3..];
    }
    out.push_str(rest);
    Ok(out)
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Shift => f.write_str("SHIFT"),
            Action::Copy => f.write_str("COPY"),
            Action::Root => f.write_str("ROOT"),
            Action::Close => f.write_str("CLOSE"),
            Action::Node(name) => f.write_str(&escape(name)),
            Action::LeftArc { pointer, label } => write!(f, "LA({pointer},{label})"),
            Action::RightArc { pointer, label } => write!(f, "RA({pointer},{label})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse action {0:?}")]
pub struct ParseActionError(pub String);

fn parse_arc(body: &str) -> Option<(usize, String)> {
    let inner = body.strip_prefix('(')?.strip_suffix(')')?;
    let (pointer, label) = inner.split_once(',')?;
    let pointer: usize = pointer.trim().parse().ok()?;
    let label = label.trim();
    (pointer >= 1 && is_valid_label(label)).then(|| (pointer, label.to_string()))
}

impl FromStr for Action {
    type Err = ParseActionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseActionError(s.to_string());
        Ok(match s {
            "SHIFT" => Action::Shift,
            "COPY" => Action::Copy,
            "ROOT" => Action::Root,
            "CLOSE" => Action::Close,
            "" => return Err(err()),
            _ => {
                if let Some(body) = s.strip_prefix("LA") {
                    if let Some((pointer, label)) = parse_arc(body) {
                        return Ok(Action::LeftArc { pointer, label });
                    }
                }
                if let Some(body) = s.strip_prefix("RA") {
                    if let Some((pointer, label)) = parse_arc(body) {
                        return Ok(Action::RightArc { pointer, label });
                    }
                }
                Action::Node(unescape(s).map_err(|_| err())?)
            }
        })
    }
}

/// Formats a sequence as one line of space-separated actions.
pub fn format_actions(actions: &[Action]) -> String {
    actions
        .iter()
        .map(|a| a.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn parse_actions(line: &str) -> Result<Vec<Action>, ParseActionError> {
    line.split_whitespace().map(str::parse).collect()
}

/// Which actions the machine accepts next.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionMask {
    kinds: [bool; 7],
    /// Positions an arc may point to.
    pub pointers: Vec<usize>,
}

impl ActionMask {
    pub fn allows(&self, kind: ActionKind) -> bool {
        self.kinds[kind as usize]
    }

    pub fn kinds(&self) -> impl Iterator<Item = ActionKind> + '_ {
        ActionKind::ALL.into_iter().filter(|k| self.allows(*k))
    }

    pub fn is_empty(&self) -> bool {
        !self.kinds.iter().any(|&k| k)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransitionError {
    #[error("the sentence is empty")]
    EmptySentence,
    #[error("{0:?} is not allowed in the current state")]
    Disallowed(ActionKind),
    #[error("node actions need a non-empty name")]
    EmptyName,
    #[error("invalid arc label {0:?}")]
    InvalidLabel(String),
    #[error("position {0} did not create a node")]
    NotANode(usize),
    #[error("position {0} is the last node itself")]
    SelfLoop(usize),
    #[error("edge {0} already exists")]
    DuplicateEdge(String),
    #[error("root already set")]
    RootAlreadySet,
    #[error("the machine has finished")]
    Finished,
    #[error("the machine has not finished")]
    NotFinished,
}

/// Parser state. Cloning is cheap enough for beam search at sentence scale;
/// `apply` leaves the receiver untouched.
#[derive(Clone, Debug, PartialEq)]
pub struct ParserState {
    tokens: Arc<Vec<String>>,
    cursor: usize,
    history: Vec<Action>,
    /// `node_positions[k]` is the history position that created `NodeId(k)`.
    node_positions: Vec<usize>,
    graph: AmrGraph,
    alignment: Alignment,
    root_set: bool,
    done: bool,
}

impl ParserState {
    pub fn new(tokens: Vec<String>) -> Result<Self, TransitionError> {
        Self::from_shared(Arc::new(tokens))
    }

    pub fn from_shared(tokens: Arc<Vec<String>>) -> Result<Self, TransitionError> {
        if tokens.is_empty() {
            return Err(TransitionError::EmptySentence);
        }
        Ok(ParserState {
            tokens,
            cursor: 0,
            history: Vec::new(),
            node_positions: Vec::new(),
            graph: AmrGraph::new(),
            alignment: Alignment::new(),
            root_set: false,
            done: false,
        })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn shared_tokens(&self) -> &Arc<Vec<String>> {
        &self.tokens
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn at_end(&self) -> bool {
        self.cursor == self.tokens.len()
    }

    pub fn history(&self) -> &[Action] {
        &self.history
    }

    pub fn graph(&self) -> &AmrGraph {
        &self.graph
    }

    pub fn alignment(&self) -> &Alignment {
        &self.alignment
    }

    pub fn root_set(&self) -> bool {
        self.root_set
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// The most recently created node and its position.
    pub fn last_node(&self) -> Option<(NodeId, usize)> {
        self.node_positions
            .last()
            .map(|&p| (NodeId(self.node_positions.len() - 1), p))
    }

    /// Node created at history `position`, if any.
    pub fn node_at(&self, position: usize) -> Option<NodeId> {
        self.node_positions
            .binary_search(&position)
            .ok()
            .map(NodeId)
    }

    pub fn position_of(&self, node: NodeId) -> Option<usize> {
        self.node_positions.get(node.0).copied()
    }

    pub fn node_positions(&self) -> &[usize] {
        &self.node_positions
    }

    /// Edge that an arc action would add, as (source, target).
    pub fn arc_endpoints(&self, kind: ActionKind, pointer: usize) -> Option<(NodeId, NodeId)> {
        let (last, _) = self.last_node()?;
        let other = self.node_at(pointer)?;
        match kind {
            ActionKind::LeftArc => Some((last, other)),
            ActionKind::RightArc => Some((other, last)),
            _ => None,
        }
    }

    pub fn allowed_actions(&self) -> ActionMask {
        let mut kinds = [false; 7];
        let mut pointers = Vec::new();
        if !self.done {
            if self.at_end() {
                kinds[ActionKind::Close as usize] = true;
            } else {
                kinds[ActionKind::Shift as usize] = true;
                kinds[ActionKind::Copy as usize] = true;
                kinds[ActionKind::Node as usize] = true;
                if let Some((_, last_pos)) = self.last_node() {
                    pointers = self
                        .node_positions
                        .iter()
                        .copied()
                        .filter(|&p| p != last_pos)
                        .collect();
                    let arcs = !pointers.is_empty();
                    kinds[ActionKind::LeftArc as usize] = arcs;
                    kinds[ActionKind::RightArc as usize] = arcs;
                    kinds[ActionKind::Root as usize] = !self.root_set;
                }
            }
        }
        ActionMask { kinds, pointers }
    }

    /// Returns the successor state.
    pub fn apply(&self, action: &Action) -> Result<ParserState, TransitionError> {
        let mut next = self.clone();
        next.apply_in_place(action)?;
        Ok(next)
    }

    /// Applies `action`, leaving the state unchanged on error.
    pub fn apply_in_place(&mut self, action: &Action) -> Result<(), TransitionError> {
        if self.done {
            return Err(TransitionError::Finished);
        }
        let mask = self.allowed_actions();
        let kind = action.kind();
        if !mask.allows(kind) {
            return Err(TransitionError::Disallowed(kind));
        }
        let position = self.history.len() + 1;
        match action {
            Action::Shift => self.cursor += 1,
            Action::Close => self.done = true,
            Action::Copy => {
                let name = self.tokens[self.cursor].to_lowercase();
                if name.is_empty() {
                    return Err(TransitionError::EmptyName);
                }
                self.create_node(&name, position);
            }
            Action::Node(name) => {
                if name.is_empty() {
                    return Err(TransitionError::EmptyName);
                }
                self.create_node(name, position);
            }
            Action::LeftArc { pointer, label } | Action::RightArc { pointer, label } => {
                if !is_valid_label(label) {
                    return Err(TransitionError::InvalidLabel(label.clone()));
                }
                let (_, last_pos) = self.last_node().expect("arcs are masked without nodes");
                if *pointer == last_pos {
                    return Err(TransitionError::SelfLoop(*pointer));
                }
                let (source, target) = self
                    .arc_endpoints(kind, *pointer)
                    .ok_or(TransitionError::NotANode(*pointer))?;
                if self.graph.has_edge(source, label, target) {
                    return Err(TransitionError::DuplicateEdge(format!(
                        "{source} {label} {target}"
                    )));
                }
                self.graph
                    .add_edge(source, label.clone(), target)
                    .expect("endpoints and label were checked");
            }
            Action::Root => {
                if self.root_set {
                    return Err(TransitionError::RootAlreadySet);
                }
                let (last, _) = self.last_node().expect("root is masked without nodes");
                self.graph.set_root(last).expect("last node exists");
                self.root_set = true;
            }
        }
        self.history.push(action.clone());
        Ok(())
    }

    fn create_node(&mut self, symbol: &str, position: usize) {
        let id = self.graph.add_symbol_node(symbol);
        debug_assert_eq!(id.0, self.node_positions.len());
        self.node_positions.push(position);
        self.alignment.insert(id, self.cursor);
    }

    /// The finished graph and the alignment recorded at node creation.
    pub fn extract_graph(&self) -> Result<(AmrGraph, Alignment), TransitionError> {
        if !self.done {
            return Err(TransitionError::NotFinished);
        }
        Ok((self.graph.clone(), self.alignment.clone()))
    }
}

/// Runs `actions` from the initial state and returns the final state.
pub fn replay(tokens: &[String], actions: &[Action]) -> Result<ParserState, TransitionError> {
    let mut state = ParserState::new(tokens.to_vec())?;
    for action in actions {
        state.apply_in_place(action)?;
    }
    Ok(state)
}
