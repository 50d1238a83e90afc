//! Reading and writing AMR release-style block files.
//!
//! ```text
//! # ::id demo.1
//! # ::tok The boy
//! # ::alignments b=1
//! (b / boy)
//! ```

use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::alignments::Alignment;
use crate::graph::AmrGraph;
use crate::penman::{parse_penman_with_variables, print_penman_with_variables, PenmanError};

/// A sentence with its gold graph and (possibly partial) alignment.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusEntry {
    pub id: String,
    pub tokens: Vec<String>,
    pub graph: AmrGraph,
    pub alignment: Alignment,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ReadOptions {
    /// Accept `var=start-end` spans and keep only the first token.
    pub collapse_spans: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BlockError {
    #[error("block has metadata but no Penman graph")]
    MissingGraph,
    #[error("block has no tokens (neither # ::tok nor # ::snt)")]
    MissingTokens,
    #[error("malformed graph: {0}")]
    Penman(#[from] PenmanError),
    #[error("malformed alignment item {0:?}")]
    MalformedAlignment(String),
    #[error("span alignment {0:?} (enable span collapsing to accept it)")]
    SpanAlignment(String),
    #[error("alignment refers to unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("alignment {item:?} is outside the {n_tokens}-token sentence")]
    OutOfRange { item: String, n_tokens: usize },
}

/// A skipped block.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusWarning {
    /// `# ::id` of the block, or `line N` when the block has none.
    pub block: String,
    pub line: usize,
    pub error: BlockError,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub entries: Vec<CorpusEntry>,
    pub warnings: Vec<CorpusWarning>,
}

pub fn read_corpus<R: BufRead>(reader: R, options: ReadOptions) -> io::Result<Corpus> {
    let mut corpus = Corpus::default();
    let mut block: Vec<String> = Vec::new();
    let mut block_start = 1;
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            flush_block(&mut corpus, &block, block_start, options);
            block.clear();
            block_start = index + 2;
        } else {
            if block.is_empty() {
                block_start = index + 1;
            }
            block.push(line);
        }
    }
    flush_block(&mut corpus, &block, block_start, options);
    Ok(corpus)
}

pub fn read_corpus_str(text: &str, options: ReadOptions) -> Corpus {
    read_corpus(text.as_bytes(), options).expect("reading from memory cannot fail")
}

fn flush_block(corpus: &mut Corpus, block: &[String], line: usize, options: ReadOptions) {
    if block.is_empty() {
        return;
    }
    let has_metadata = block.iter().any(|l| l.trim_start().starts_with("# ::"));
    let has_graph = block.iter().any(|l| !l.trim_start().starts_with('#'));
    if !has_metadata && !has_graph {
        // file header comments
        return;
    }
    match parse_block(block, line, options) {
        Ok(entry) => corpus.entries.push(entry),
        Err((block_id, error)) => {
            log::warn!("skipping block {block_id}: {error}");
            corpus.warnings.push(CorpusWarning {
                block: block_id,
                line,
                error,
            });
        }
    }
}

fn metadata<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let rest = line.trim_start().strip_prefix("# ::")?;
    let rest = rest.strip_prefix(key)?;
    if rest.is_empty() {
        Some("")
    } else if rest.starts_with(char::is_whitespace) {
        Some(rest.trim())
    } else {
        None
    }
}

fn parse_block(
    block: &[String],
    line: usize,
    options: ReadOptions,
) -> Result<CorpusEntry, (String, BlockError)> {
    let mut id = None;
    let mut tok = None;
    let mut snt = None;
    let mut alignments = None;
    let mut graph_lines = Vec::new();
    for l in block {
        if l.trim_start().starts_with('#') {
            if let Some(v) = metadata(l, "id") {
                id = Some(v.split_whitespace().next().unwrap_or("").to_string());
            } else if let Some(v) = metadata(l, "tok") {
                tok = Some(v.to_string());
            } else if let Some(v) = metadata(l, "snt") {
                snt = Some(v.to_string());
            } else if let Some(v) = metadata(l, "alignments") {
                alignments = Some(v.to_string());
            }
        } else {
            graph_lines.push(l.as_str());
        }
    }
    let block_id = id.clone().unwrap_or_else(|| format!("line {line}"));
    let fail = |e: BlockError| (block_id.clone(), e);

    if graph_lines.is_empty() {
        return Err(fail(BlockError::MissingGraph));
    }
    let tokens: Vec<String> = tok
        .or(snt)
        .map(|t| t.split_whitespace().map(str::to_string).collect())
        .unwrap_or_default();
    if tokens.is_empty() {
        return Err(fail(BlockError::MissingTokens));
    }
    let parsed =
        parse_penman_with_variables(&graph_lines.join("\n")).map_err(|e| fail(e.into()))?;

    let mut alignment = Alignment::new();
    for item in alignments.as_deref().unwrap_or("").split_whitespace() {
        let (var, index) = item
            .split_once('=')
            .ok_or_else(|| fail(BlockError::MalformedAlignment(item.to_string())))?;
        let index = match index.split_once('-') {
            Some((start, _)) if options.collapse_spans => start,
            Some(_) => return Err(fail(BlockError::SpanAlignment(item.to_string()))),
            None => index,
        };
        let index: usize = index
            .parse()
            .map_err(|_| fail(BlockError::MalformedAlignment(item.to_string())))?;
        let node = parsed
            .node_for_variable(var)
            .ok_or_else(|| fail(BlockError::UnknownVariable(var.to_string())))?;
        if index >= tokens.len() {
            return Err(fail(BlockError::OutOfRange {
                item: item.to_string(),
                n_tokens: tokens.len(),
            }));
        }
        alignment.insert(node, index);
    }

    Ok(CorpusEntry {
        id: id.unwrap_or_else(|| format!("line{line}")),
        tokens,
        graph: parsed.graph,
        alignment,
    })
}

/// Writes one AMR block followed by a blank line. Alignments of attribute
/// constants are dropped since they have no variable to carry them.
pub fn write_entry<W: Write>(
    out: &mut W,
    id: &str,
    tokens: &[String],
    graph: &AmrGraph,
    alignment: &Alignment,
) -> io::Result<()> {
    let (text, variables) = print_penman_with_variables(graph)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    writeln!(out, "# ::id {id}")?;
    writeln!(out, "# ::tok {}", tokens.join(" "))?;
    let items: Vec<String> = alignment
        .iter()
        .filter_map(|(node, token)| {
            variables
                .get(node.0)
                .and_then(|v| v.as_ref())
                .map(|v| format!("{v}={token}"))
        })
        .collect();
    writeln!(out, "# ::alignments {}", items.join(" "))?;
    writeln!(out, "{text}")?;
    writeln!(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeId;

    #[test]
    fn reads_a_block() {
        let c = read_corpus_str(
            "# ::id a\n# ::tok The boy\n# ::alignments b=1\n(b / boy)\n",
            ReadOptions::default(),
        );
        assert!(c.warnings.is_empty());
        let e = &c.entries[0];
        assert_eq!(e.id, "a");
        assert_eq!(e.tokens, vec!["The", "boy"]);
        assert_eq!(e.alignment.get(NodeId(0)), Some(1));
    }

    #[test]
    fn missing_alignments_and_snt_fallback() {
        let c = read_corpus_str(
            "# AMR release header\n\n# ::id a\n# ::snt The  boy\n(b / boy)\n",
            ReadOptions::default(),
        );
        assert!(c.warnings.is_empty());
        assert_eq!(c.entries.len(), 1);
        assert!(c.entries[0].alignment.is_empty());
        assert_eq!(c.entries[0].tokens.len(), 2);
    }

    #[test]
    fn malformed_middle_block_is_skipped() {
        let text = "# ::id a\n# ::tok x\n(a / x)\n\n\
                    # ::id b\n# ::tok y\n(b / y\n\n\
                    # ::id c\n# ::tok z\n(c / z)\n";
        let c = read_corpus_str(text, ReadOptions::default());
        assert_eq!(c.entries.len(), 2);
        assert_eq!(c.warnings.len(), 1);
        assert_eq!(c.warnings[0].block, "b");
        assert_eq!(c.warnings[0].line, 5);
    }

    #[test]
    fn bad_alignments() {
        let read = |a: &str, options| {
            let text = format!("# ::id q\n# ::tok a b\n# ::alignments {a}\n(x / y)\n");
            read_corpus_str(&text, options)
        };
        let opts = ReadOptions::default();
        assert_eq!(
            read("z=0", opts).warnings[0].error,
            BlockError::UnknownVariable("z".into())
        );
        assert!(matches!(
            read("x=2", opts).warnings[0].error,
            BlockError::OutOfRange { .. }
        ));
        assert!(matches!(
            read("x=0-2", opts).warnings[0].error,
            BlockError::SpanAlignment(_)
        ));
        let collapsed = read(
            "x=1-2",
            ReadOptions {
                collapse_spans: true,
            },
        );
        assert_eq!(collapsed.entries[0].alignment.get(NodeId(0)), Some(1));
        assert!(matches!(
            read("x", opts).warnings[0].error,
            BlockError::MalformedAlignment(_)
        ));
    }

    #[test]
    fn metadata_without_graph() {
        let c = read_corpus_str("# ::id lonely\n# ::tok a\n", ReadOptions::default());
        assert_eq!(c.warnings[0].error, BlockError::MissingGraph);
    }

    #[test]
    fn write_then_read() {
        let c = read_corpus_str(
            "# ::id a\n# ::tok The boy left\n# ::alignments b=1 l=2\n(l / leave-11 :ARG0 (b / boy) :polarity -)\n",
            ReadOptions::default(),
        );
        let e = &c.entries[0];
        let mut buf = Vec::new();
        write_entry(&mut buf, &e.id, &e.tokens, &e.graph, &e.alignment).unwrap();
        let back = read_corpus_str(std::str::from_utf8(&buf).unwrap(), ReadOptions::default());
        assert_eq!(back.entries[0].graph, e.graph);
        assert_eq!(back.entries[0].alignment, e.alignment);
    }
}
