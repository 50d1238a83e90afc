//! Subword segmentation used for joint vocabularies and source pooling maps.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Debug;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::transition::{escape, unescape};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SegmentError {
    #[error("cannot segment an empty string")]
    Empty,
    #[error("character {0:?} is not in the segmenter alphabet")]
    UnknownChar(char),
}

/// Lossless subword splitter: concatenating the pieces of `split(s)` gives
/// back `s`.
pub trait Segmenter: Debug + Send + Sync {
    fn split(&self, text: &str) -> Result<Vec<String>, SegmentError>;

    /// Every piece `split` can produce.
    fn inventory(&self) -> Vec<String>;
}

/// Byte-pair-style segmenter over characters, trained on node names.
///
/// The alphabet always contains printable ASCII so any ASCII name can be
/// split; other characters must have been seen in training.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpeSegmenter {
    alphabet: BTreeSet<char>,
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
}

impl BpeSegmenter {
    pub fn new(alphabet: impl IntoIterator<Item = char>, merges: Vec<(String, String)>) -> Self {
        let mut alphabet: BTreeSet<char> = alphabet.into_iter().collect();
        alphabet.extend((0x21u8..=0x7e).map(char::from));
        let ranks = merges
            .iter()
            .cloned()
            .enumerate()
            .map(|(rank, pair)| (pair, rank))
            .collect();
        BpeSegmenter {
            alphabet,
            merges,
            ranks,
        }
    }

    /// Learns up to `num_merges` merges from word frequencies. Ties between
    /// equally frequent pairs go to the lexicographically smallest pair.
    pub fn train<'a>(words: impl IntoIterator<Item = &'a str>, num_merges: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for w in words {
            if !w.is_empty() {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut alphabet = BTreeSet::new();
        let mut corpus: Vec<(Vec<String>, usize)> = counts
            .into_iter()
            .map(|(w, c)| {
                alphabet.extend(w.chars());
                (w.chars().map(String::from).collect(), c)
            })
            .collect();
        corpus.sort();

        let mut merges = Vec::new();
        for _ in 0..num_merges {
            let mut pairs: HashMap<(&str, &str), usize> = HashMap::new();
            for (pieces, count) in &corpus {
                for w in pieces.windows(2) {
                    *pairs.entry((&w[0], &w[1])).or_default() += count;
                }
            }
            let Some((best, freq)) = pairs
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
            else {
                break;
            };
            if freq < 2 {
                break;
            }
            let pair = (best.0.to_string(), best.1.to_string());
            for (pieces, _) in &mut corpus {
                *pieces = merge_pair(pieces, &pair);
            }
            merges.push(pair);
        }
        BpeSegmenter::new(alphabet, merges)
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn write<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "#bpe\tv1")?;
        for c in &self.alphabet {
            writeln!(out, "char\t{}", escape(&c.to_string()))?;
        }
        for (a, b) in &self.merges {
            writeln!(out, "merge\t{}\t{}", escape(a), escape(b))?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> io::Result<Self> {
        let bad = |line: usize, msg: &str| {
            io::Error::new(io::ErrorKind::InvalidData, format!("line {line}: {msg}"))
        };
        let mut alphabet = Vec::new();
        let mut merges = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                ["#bpe", _] | [""] => {}
                ["char", c] => {
                    let c = unescape(c).map_err(|_| bad(i + 1, "bad escape"))?;
                    let mut chars = c.chars();
                    match (chars.next(), chars.next()) {
                        (Some(c), None) => alphabet.push(c),
                        _ => return Err(bad(i + 1, "expected one character")),
                    }
                }
                ["merge", a, b] => {
                    let a = unescape(a).map_err(|_| bad(i + 1, "bad escape"))?;
                    let b = unescape(b).map_err(|_| bad(i + 1, "bad escape"))?;
                    merges.push((a, b));
                }
                _ => return Err(bad(i + 1, "unrecognized line")),
            }
        }
        Ok(BpeSegmenter::new(alphabet, merges))
    }
}

fn merge_pair(pieces: &[String], pair: &(String, String)) -> Vec<String> {
    let mut out = Vec::with_capacity(pieces.len());
    let mut i = 0;
    while i < pieces.len() {
        if i + 1 < pieces.len() && pieces[i] == pair.0 && pieces[i + 1] == pair.1 {
            out.push(format!("{}{}", pair.0, pair.1));
            i += 2;
        } else {
            out.push(pieces[i].clone());
            i += 1;
        }
    }
    out
}

impl Segmenter for BpeSegmenter {
    fn split(&self, text: &str) -> Result<Vec<String>, SegmentError> {
        if text.is_empty() {
            return Err(SegmentError::Empty);
        }
        let mut pieces = Vec::new();
        for c in text.chars() {
            if !self.alphabet.contains(&c) {
                return Err(SegmentError::UnknownChar(c));
            }
            pieces.push(c.to_string());
        }
        loop {
            let best = pieces
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0].clone(), w[1].clone())))
                .min()
                .copied();
            match best {
                Some(rank) => pieces = merge_pair(&pieces, &self.merges[rank]),
                None => break,
            }
        }
        Ok(pieces)
    }

    fn inventory(&self) -> Vec<String> {
        let mut out: Vec<String> = self.alphabet.iter().map(|c| c.to_string()).collect();
        out.extend(self.merges.iter().map(|(a, b)| format!("{a}{b}")));
        let mut seen = BTreeSet::new();
        out.retain(|p| seen.insert(p.clone()));
        out
    }
}
