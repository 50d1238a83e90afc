//! Pointer-based transition system for AMR parsing.
//!
//! The pieces fit together as a pipeline: read a corpus ([`corpus`]), fill
//! in missing alignments ([`alignments`]), derive gold action sequences
//! ([`oracle`]) for the state machine ([`transition`]), map them to target
//! symbols ([`vocab`]), export training features ([`features`]), decode new
//! sentences under the machine's masks ([`decoder`]) and score the output
//! against gold graphs ([`metrics`]).

pub mod alignments;
pub mod corpus;
pub mod decoder;
pub mod features;
pub mod graph;
pub mod metrics;
pub mod oracle;
pub mod penman;
pub mod segment;
pub mod transition;
pub mod vocab;

pub use alignments::{complete_alignments, Alignment, AlignmentError};
pub use corpus::{read_corpus, read_corpus_str, write_entry, Corpus, CorpusEntry, ReadOptions};
pub use decoder::{
    beam_decode, train_baseline, BaselineScorer, DecodeError, DecodeOptions, Decoded, Scorer,
    StepContext, SymbolState,
};
pub use features::{export_features, word_piece_pooling_map, StepFeatures};
pub use graph::{AmrGraph, Edge, GraphError, Node, NodeId, NodeKind};
pub use metrics::{breakdown, smatch, Breakdown, MatchCounts, SmatchOptions, SmatchResult};
pub use oracle::{coverage_report, derive_actions, run_oracle, CoverageReport, OracleError};
pub use penman::{parse_penman, print_penman, PenmanError};
pub use segment::{BpeSegmenter, Segmenter};
pub use transition::{format_actions, parse_actions, replay, Action, ActionKind, ParserState};
pub use vocab::{build_joint_vocab, build_sep_vocab, Encoded, SymbolKind, VocabMode, Vocabulary};

/// Small hand-aligned corpus shipped with the crate, in the block format
/// read by [`read_corpus`].
pub const BUNDLED_CORPUS: &str = include_str!("../data/handcrafted.amr");

/// The bundled corpus, parsed.
pub fn bundled_corpus() -> Corpus {
    read_corpus_str(BUNDLED_CORPUS, ReadOptions::default())
}
