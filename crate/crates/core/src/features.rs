//! Per-step supervision records for external sequence-to-sequence trainers.

use std::io::{self, Write};
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoder::{DecodeError, SymbolState};
use crate::segment::{SegmentError, Segmenter};
use crate::transition::Action;
use crate::vocab::{SymbolId, SymbolKind, VocabError, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("the sentence is empty")]
    EmptySentence,
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("step {step}: {source}")]
    Replay { step: usize, source: DecodeError },
    #[error("token {index}: {source}")]
    Segment { index: usize, source: SegmentError },
}

/// Masks and targets for one symbol step. Positions are 1-based symbol
/// positions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFeatures {
    pub step: usize,
    pub target_symbol: SymbolId,
    pub target_pointer: Option<usize>,
    /// Token under the cursor; equals the token count once all are shifted.
    pub cursor: usize,
    pub allowed_symbols: Vec<SymbolId>,
    /// Pointers giving the target arc a new edge; for other symbols, every
    /// node position except the last node's.
    pub valid_pointer_positions: Vec<usize>,
}

/// Replays `actions` at symbol level, recording the masks before each step.
pub fn export_features(
    tokens: &[String],
    actions: &[Action],
    vocab: &Vocabulary,
) -> Result<Vec<StepFeatures>, FeatureError> {
    let encoded = vocab.encode(actions)?;
    let mut state = SymbolState::new(Arc::new(tokens.to_vec())).map_err(|e| match e {
        DecodeError::EmptySentence => FeatureError::EmptySentence,
        source => FeatureError::Replay { step: 0, source },
    })?;
    let mut out = Vec::with_capacity(encoded.symbols.len());
    for (i, (&symbol, &pointer)) in encoded.symbols.iter().zip(&encoded.pointers).enumerate() {
        let valid = if vocab.symbol(symbol).kind == SymbolKind::Arc {
            state.valid_pointers(vocab, symbol)
        } else {
            state.pointer_candidates()
        };
        out.push(StepFeatures {
            step: i + 1,
            target_symbol: symbol,
            target_pointer: pointer,
            cursor: state.cursor(),
            allowed_symbols: state.allowed(vocab, None),
            valid_pointer_positions: valid,
        });
        state
            .apply(vocab, symbol, pointer)
            .map_err(|source| FeatureError::Replay {
                step: i + 1,
                source,
            })?;
    }
    Ok(out)
}

/// Piece ranges of each token under `segmenter`, in order and contiguous.
pub fn word_piece_pooling_map(
    tokens: &[String],
    segmenter: &dyn Segmenter,
) -> Result<Vec<Range<usize>>, FeatureError> {
    if tokens.is_empty() {
        return Err(FeatureError::EmptySentence);
    }
    let mut start = 0;
    tokens
        .iter()
        .enumerate()
        .map(|(index, t)| {
            let n = segmenter
                .split(t)
                .map_err(|source| FeatureError::Segment { index, source })?
                .len();
            let range = start..start + n;
            start += n;
            Ok(range)
        })
        .collect()
}

#[derive(Serialize)]
struct Record<'a> {
    id: &'a str,
    tokens: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    pooling: Option<Vec<[usize; 2]>>,
    steps: &'a [StepFeatures],
}

/// Writes one JSON object per sentence: `id`, `tokens`, optional `pooling`
/// as `[start, end)` pairs, and `steps`.
pub fn write_jsonl<W: Write>(
    out: &mut W,
    id: &str,
    tokens: &[String],
    pooling: Option<&[Range<usize>]>,
    steps: &[StepFeatures],
) -> io::Result<()> {
    let record = Record {
        id,
        tokens,
        pooling: pooling.map(|p| p.iter().map(|r| [r.start, r.end]).collect()),
        steps,
    };
    serde_json::to_writer(&mut *out, &record)?;
    writeln!(out)
}
