//! Penman notation reader and writer.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::graph::{is_bare_literal, AmrGraph, GraphError, NodeId, NodeKind};

/// Characters that may not appear in a printed concept.
const RESERVED: &[char] = &['(', ')', '/', ':', '~', '"'];

/// Roles ending in `-of` that are not inversions.
const NON_INVERTED_OF: &[&str] = &[":consist-of", ":prep-out-of", ":prep-on-behalf-of"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PenmanError {
    #[error("empty input")]
    Empty,
    #[error("unbalanced parentheses at byte {0}")]
    Unbalanced(usize),
    #[error("unterminated string at byte {0}")]
    UnterminatedString(usize),
    #[error("variable {var:?} defined twice (second definition at byte {offset})")]
    DuplicateVariable { var: String, offset: usize },
    #[error("role {role:?} at byte {offset} has no target")]
    MissingTarget { role: String, offset: usize },
    #[error("node at byte {0} has no concept")]
    MissingConcept(usize),
    #[error("unexpected {found} at byte {offset}")]
    Unexpected { found: String, offset: usize },
    #[error("invalid edge at byte {offset}: {source}")]
    InvalidEdge { offset: usize, source: GraphError },
    #[error("cannot print an empty graph")]
    EmptyGraph,
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Open,
    Close,
    Slash,
    Role(String),
    Str(String),
    Sym(String),
}

fn describe(token: &Option<(Token, usize)>) -> String {
    match token {
        None => "end of input".to_string(),
        Some((Token::Open, _)) => "'('".to_string(),
        Some((Token::Close, _)) => "')'".to_string(),
        Some((Token::Slash, _)) => "'/'".to_string(),
        Some((Token::Role(r), _)) => format!("role {r}"),
        Some((Token::Str(s), _)) => format!("string {s:?}"),
        Some((Token::Sym(s), _)) => format!("symbol {s:?}"),
    }
}

fn is_symbol_char(c: char) -> bool {
    !c.is_whitespace() && !matches!(c, '(' | ')' | '"' | '/')
}

/// Strips a trailing `~e.N` alignment marker.
fn strip_marker(s: &str) -> &str {
    match s.find('~') {
        Some(i) if i > 0 => &s[..i],
        _ => s,
    }
}

fn tokenize(text: &str) -> Result<Vec<(Token, usize)>, PenmanError> {
    let mut tokens = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(offset, c)) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '(' => {
                chars.next();
                tokens.push((Token::Open, offset));
            }
            ')' => {
                chars.next();
                tokens.push((Token::Close, offset));
            }
            '/' => {
                chars.next();
                tokens.push((Token::Slash, offset));
            }
            '"' => {
                chars.next();
                let mut value = String::new();
                let mut closed = false;
                while let Some((_, c)) = chars.next() {
                    match c {
                        '\\' => {
                            if let Some((_, escaped)) = chars.next() {
                                value.push(escaped);
                            }
                        }
                        '"' => {
                            closed = true;
                            break;
                        }
                        c => value.push(c),
                    }
                }
                if !closed {
                    return Err(PenmanError::UnterminatedString(offset));
                }
                // alignment marker glued to the string
                while let Some(&(_, c)) = chars.peek() {
                    if is_symbol_char(c) {
                        chars.next();
                    } else {
                        break;
                    }
                }
                tokens.push((Token::Str(value), offset));
            }
            _ => {
                let mut end = offset;
                while let Some(&(i, c)) = chars.peek() {
                    if is_symbol_char(c) {
                        end = i + c.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                let raw = strip_marker(&text[offset..end]);
                if raw.starts_with(':') {
                    tokens.push((Token::Role(raw.to_string()), offset));
                } else {
                    tokens.push((Token::Sym(raw.to_string()), offset));
                }
            }
        }
    }
    Ok(tokens)
}

#[derive(Debug)]
struct TreeNode {
    var: String,
    concept: (String, bool),
    offset: usize,
    children: Vec<(String, usize, TreeValue)>,
}

#[derive(Debug)]
enum TreeValue {
    Node(TreeNode),
    Str(String),
    Sym(String),
}

struct TreeParser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    end: usize,
}

impl TreeParser {
    fn peek(&self) -> Option<&(Token, usize)> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<(Token, usize)> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn node(&mut self, open_offset: usize) -> Result<TreeNode, PenmanError> {
        let var = match self.next() {
            Some((Token::Sym(v), _)) => v,
            None => return Err(PenmanError::Unbalanced(open_offset)),
            other => {
                return Err(PenmanError::Unexpected {
                    found: describe(&other),
                    offset: other.map_or(self.end, |t| t.1),
                })
            }
        };
        let concept = match self.peek() {
            Some((Token::Slash, _)) => {
                self.pos += 1;
                match self.next() {
                    Some((Token::Sym(c), _)) => (c, false),
                    Some((Token::Str(c), _)) => (c, true),
                    None => return Err(PenmanError::Unbalanced(open_offset)),
                    _ => return Err(PenmanError::MissingConcept(open_offset)),
                }
            }
            _ => return Err(PenmanError::MissingConcept(open_offset)),
        };
        let mut children = Vec::new();
        loop {
            match self.next() {
                Some((Token::Close, _)) => break,
                Some((Token::Role(role), offset)) => {
                    let value = match self.next() {
                        Some((Token::Open, o)) => TreeValue::Node(self.node(o)?),
                        Some((Token::Str(s), _)) => TreeValue::Str(s),
                        Some((Token::Sym(s), _)) => TreeValue::Sym(s),
                        None => return Err(PenmanError::Unbalanced(open_offset)),
                        Some(_) => return Err(PenmanError::MissingTarget { role, offset }),
                    };
                    children.push((role, offset, value));
                }
                None => return Err(PenmanError::Unbalanced(open_offset)),
                other => {
                    return Err(PenmanError::Unexpected {
                        found: describe(&other),
                        offset: other.map_or(self.end, |t| t.1),
                    })
                }
            }
        }
        Ok(TreeNode {
            var,
            concept,
            offset: open_offset,
            children,
        })
    }
}

/// A parsed graph together with the variable name of every node (constants
/// have none).
#[derive(Debug, Clone)]
pub struct ParsedPenman {
    pub graph: AmrGraph,
    pub variables: Vec<Option<String>>,
}

impl ParsedPenman {
    pub fn node_for_variable(&self, var: &str) -> Option<NodeId> {
        self.variables
            .iter()
            .position(|v| v.as_deref() == Some(var))
            .map(NodeId)
    }
}

/// Parses one Penman expression; the first variable becomes the root.
pub fn parse_penman(text: &str) -> Result<AmrGraph, PenmanError> {
    parse_penman_with_variables(text).map(|p| p.graph)
}

pub fn parse_penman_with_variables(text: &str) -> Result<ParsedPenman, PenmanError> {
    let tokens = tokenize(text)?;
    let mut parser = TreeParser {
        tokens,
        pos: 0,
        end: text.len(),
    };
    let tree = match parser.next() {
        None => return Err(PenmanError::Empty),
        Some((Token::Open, offset)) => parser.node(offset)?,
        Some((Token::Close, offset)) => return Err(PenmanError::Unbalanced(offset)),
        other => {
            let offset = other.as_ref().map_or(0, |t| t.1);
            return Err(PenmanError::Unexpected {
                found: describe(&other),
                offset,
            });
        }
    };
    if let Some((token, offset)) = parser.peek() {
        return Err(match token {
            Token::Close => PenmanError::Unbalanced(*offset),
            _ => PenmanError::Unexpected {
                found: describe(&Some((token.clone(), *offset))),
                offset: *offset,
            },
        });
    }

    let mut defined = HashMap::new();
    collect_variables(&tree, &mut defined)?;

    let mut builder = GraphBuilder {
        graph: AmrGraph::new(),
        variables: Vec::new(),
        ids: HashMap::new(),
        defined: &defined,
    };
    let root = builder.build(&tree)?;
    let mut graph = builder.graph;
    graph.set_root(root).expect("root was just created");
    Ok(ParsedPenman {
        graph,
        variables: builder.variables,
    })
}

fn collect_variables<'a>(
    node: &'a TreeNode,
    defined: &mut HashMap<&'a str, usize>,
) -> Result<(), PenmanError> {
    if defined.insert(node.var.as_str(), node.offset).is_some() {
        return Err(PenmanError::DuplicateVariable {
            var: node.var.clone(),
            offset: node.offset,
        });
    }
    for (_, _, value) in &node.children {
        if let TreeValue::Node(child) = value {
            collect_variables(child, defined)?;
        }
    }
    Ok(())
}

struct GraphBuilder<'a> {
    graph: AmrGraph,
    variables: Vec<Option<String>>,
    ids: HashMap<String, NodeId>,
    defined: &'a HashMap<&'a str, usize>,
}

impl GraphBuilder<'_> {
    fn variable(&mut self, var: &str) -> NodeId {
        if let Some(&id) = self.ids.get(var) {
            return id;
        }
        let id = self.graph.add_concept(String::new());
        self.variables.push(Some(var.to_string()));
        self.ids.insert(var.to_string(), id);
        id
    }

    fn constant(&mut self, value: &str) -> NodeId {
        self.variables.push(None);
        self.graph.add_constant(value)
    }

    fn build(&mut self, node: &TreeNode) -> Result<NodeId, PenmanError> {
        let id = self.variable(&node.var);
        let (concept, quoted) = &node.concept;
        let concept = strip_marker(concept).to_string();
        let kind = if *quoted {
            NodeKind::Constant
        } else {
            NodeKind::Concept
        };
        self.graph.set_label(id, concept, kind);
        for (role, offset, value) in &node.children {
            // edges are added before descending so they follow text order
            let target = match value {
                TreeValue::Node(child) => self.variable(&child.var),
                TreeValue::Str(s) => self.constant(s),
                TreeValue::Sym(s) if self.defined.contains_key(s.as_str()) => self.variable(s),
                TreeValue::Sym(s) => self.constant(s),
            };
            self.graph
                .add_edge(id, role.clone(), target)
                .map_err(|source| PenmanError::InvalidEdge {
                    offset: *offset,
                    source,
                })?;
            if let TreeValue::Node(child) = value {
                self.build(child)?;
            }
        }
        Ok(id)
    }
}

/// Replaces reserved characters and whitespace in a concept with `-`.
pub fn clean_concept(concept: &str) -> String {
    if concept.is_empty() {
        return "amr-unknown".to_string();
    }
    concept
        .chars()
        .map(|c| {
            if c.is_whitespace() || RESERVED.contains(&c) {
                '-'
            } else {
                c
            }
        })
        .collect()
}

fn quote(value: &str) -> String {
    let mut out = String::with_capacity(value.len() + 2);
    out.push('"');
    for c in value.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

fn render_constant(value: &str) -> String {
    if is_bare_literal(value) {
        value.to_string()
    } else {
        quote(value)
    }
}

/// True when `label` is an inverted role such as `:ARG0-of`.
pub fn is_inverted_role(label: &str) -> bool {
    label.ends_with("-of") && label.len() > 4 && !NON_INVERTED_OF.contains(&label)
}

/// Role to write when an edge is printed from its target.
fn invert_role(label: &str) -> String {
    if is_inverted_role(label) {
        label[..label.len() - 3].to_string()
    } else {
        format!("{label}-of")
    }
}

/// Prints `graph` as one Penman expression.
pub fn print_penman(graph: &AmrGraph) -> Result<String, PenmanError> {
    print_penman_with_variables(graph).map(|(text, _)| text)
}

/// Prints `graph` and returns the variable assigned to each node; attribute
/// constants get `None`.
///
/// Output is deterministic: children follow edge insertion order, variables
/// are `v0, v1, ...` in print order. Concepts are cleaned of reserved
/// characters and components not containing the top are attached to it with
/// `:rel`.
pub fn print_penman_with_variables(
    graph: &AmrGraph,
) -> Result<(String, Vec<Option<String>>), PenmanError> {
    if graph.is_empty() {
        return Err(PenmanError::EmptyGraph);
    }
    let mut g = graph.clone();
    let components = g.connected_components();
    let top = g
        .root()
        .or_else(|| g.default_top(&components[0]))
        .expect("non-empty graph has a top");
    for component in &components {
        if component.contains(&top) {
            continue;
        }
        let head = g.default_top(component).expect("components are non-empty");
        g.add_edge(top, ":rel", head)
            .expect("components are disjoint so the edge is new");
    }
    if g.root().is_none() {
        g.set_root(top).expect("top is a node");
    }

    let layout = Layout::new(&g, top);
    let mut printer = Printer {
        graph: &g,
        layout: &layout,
        out: String::new(),
    };
    printer.node(top, 0);
    Ok((printer.out, layout.variables))
}

/// Spanning tree used for printing: repeatedly take the lowest-index edge
/// with exactly one placed endpoint. Other edges are printed as references
/// from their source.
struct Layout {
    /// For tree edges, the endpoint placed through that edge.
    child: Vec<Option<NodeId>>,
    variables: Vec<Option<String>>,
}

impl Layout {
    fn new(graph: &AmrGraph, top: NodeId) -> Self {
        let mut placed = vec![false; graph.len()];
        placed[top.0] = true;
        let mut child = vec![None; graph.edges().len()];
        loop {
            let next = graph.edges().iter().enumerate().find_map(|(i, e)| {
                match (placed[e.source.0], placed[e.target.0]) {
                    (true, false) => Some((i, e.target)),
                    (false, true) => Some((i, e.source)),
                    _ => None,
                }
            });
            let Some((i, node)) = next else { break };
            placed[node.0] = true;
            child[i] = Some(node);
        }
        let mut layout = Layout {
            child,
            variables: vec![None; graph.len()],
        };
        let mut counter = 0;
        layout.assign(graph, top, &mut counter);
        layout
    }

    fn assign(&mut self, graph: &AmrGraph, id: NodeId, counter: &mut usize) {
        self.variables[id.0] = Some(format!("v{counter}"));
        *counter += 1;
        for (i, edge) in graph.edges().iter().enumerate() {
            match self.child[i] {
                Some(c)
                    if c != id
                        && (edge.source == id || edge.target == id)
                        && !(edge.source == id && graph.is_attribute(c)) =>
                {
                    self.assign(graph, c, counter);
                }
                _ => {}
            }
        }
    }
}

struct Printer<'a> {
    graph: &'a AmrGraph,
    layout: &'a Layout,
    out: String,
}

impl Printer<'_> {
    fn node(&mut self, id: NodeId, depth: usize) {
        let var = self.layout.variables[id.0].clone().expect("assigned");
        let node = self.graph.node(id);
        let concept = match node.kind {
            NodeKind::Concept => clean_concept(&node.label),
            NodeKind::Constant => quote(&node.label),
        };
        let _ = write!(self.out, "({var} / {concept}");
        for (index, edge) in self.graph.edges().iter().enumerate() {
            let tree_child = self.layout.child[index].filter(|&c| c != id);
            let (role, other) = match tree_child {
                Some(c) if edge.source == id && edge.target == c => (edge.label.clone(), c),
                Some(c) if edge.target == id && edge.source == c => (invert_role(&edge.label), c),
                // references are written at their source
                None if edge.source == id && self.layout.child[index].is_none() => {
                    (edge.label.clone(), edge.target)
                }
                _ => continue,
            };
            self.out.push('\n');
            self.out.push_str(&"    ".repeat(depth + 1));
            self.out.push_str(&role);
            self.out.push(' ');
            if tree_child.is_none() {
                let v = self.layout.variables[other.0].clone().expect("assigned");
                self.out.push_str(&v);
            } else if edge.source == id && self.graph.is_attribute(other) {
                let value = render_constant(&self.graph.node(other).label);
                self.out.push_str(&value);
            } else {
                self.node(other, depth + 1);
            }
        }
        self.out.push(')');
    }
}
