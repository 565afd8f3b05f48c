//! Byte-pair encoding: learning merge rules and segmenting words with them.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::segment::SegmentError;
use crate::vocab::EOW_TOKEN;

pub const BPE_HEADER: &str = "#version: 1";

/// Ordered merge rules; index = learning order = priority.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "BpeRepr")]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    #[serde(skip)]
    ranks: HashMap<(String, String), Vec<usize>>,
}

#[derive(Deserialize)]
struct BpeRepr {
    merges: Vec<(String, String)>,
}

impl From<BpeRepr> for BpeModel {
    fn from(r: BpeRepr) -> Self {
        BpeModel::from_merges(r.merges)
    }
}

fn initial_symbols(word: &str) -> Vec<String> {
    word.chars()
        .map(|c| c.to_string())
        .chain(std::iter::once(EOW_TOKEN.to_string()))
        .collect()
}

/// Merges every non-overlapping occurrence of `(left, right)`, scanning left to right.
fn merge_pair(symbols: &mut Vec<String>, left: &str, right: &str) -> bool {
    let mut out = Vec::with_capacity(symbols.len());
    let mut changed = false;
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
            out.push(format!("{left}{right}"));
            i += 2;
            changed = true;
        } else {
            out.push(std::mem::take(&mut symbols[i]));
            i += 1;
        }
    }
    *symbols = out;
    changed
}

/// Learns up to `num_merges` rules from a word-frequency map.
///
/// Each round merges the most frequent adjacent pair (ties go to the
/// lexicographically smallest pair). Learning stops early once no pair
/// occurs at least twice.
pub fn learn_bpe(
    corpus: &BTreeMap<String, u64>,
    num_merges: usize,
) -> Result<BpeModel, SegmentError> {
    if corpus.is_empty() {
        return Err(SegmentError::EmptyCorpus);
    }
    let mut words: Vec<(Vec<String>, u64)> = corpus
        .iter()
        .map(|(w, &c)| (initial_symbols(w), c))
        .collect();
    let mut merges = Vec::new();
    while merges.len() < num_merges {
        let mut pairs: HashMap<(&str, &str), u64> = HashMap::new();
        for (syms, c) in &words {
            for w in syms.windows(2) {
                *pairs.entry((w[0].as_str(), w[1].as_str())).or_default() += c;
            }
        }
        let best = pairs
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
            .filter(|(_, c)| *c >= 2)
            .map(|((l, r), _)| (l.to_string(), r.to_string()));
        let Some((left, right)) = best else { break };
        for (syms, _) in &mut words {
            merge_pair(syms, &left, &right);
        }
        merges.push((left, right));
    }
    Ok(BpeModel::from_merges(merges))
}

impl BpeModel {
    pub fn from_merges(merges: Vec<(String, String)>) -> Self {
        let mut ranks = HashMap::with_capacity(merges.len());
        for (i, m) in merges.iter().enumerate() {
            ranks.entry(m.clone()).or_insert_with(Vec::new).push(i);
        }
        BpeModel { merges, ranks }
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }

    /// Segments one word: characters plus `</w>`, then every rule in learned
    /// order, each applied exhaustively left to right.
    ///
    /// Rules are visited by rank among the pairs actually present, which
    /// gives the same result as sweeping the whole rule list.
    pub fn apply(&self, word: &str) -> Vec<String> {
        let mut symbols = initial_symbols(word);
        let mut floor = 0usize;
        loop {
            let next = symbols
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0].clone(), w[1].clone())))
                .filter_map(|ranks| ranks.iter().copied().find(|&r| r >= floor))
                .min();
            let Some(rank) = next else { break };
            let (l, r) = &self.merges[rank];
            merge_pair(&mut symbols, l, r);
            floor = rank + 1;
        }
        symbols
    }

    /// Reference segmentation that sweeps every rule in order.
    pub fn apply_sequential(&self, word: &str) -> Vec<String> {
        let mut symbols = initial_symbols(word);
        for (l, r) in &self.merges {
            merge_pair(&mut symbols, l, r);
        }
        symbols
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{BPE_HEADER}\n");
        for (l, r) in &self.merges {
            let _ = writeln!(out, "{l} {r}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, SegmentError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.starts_with("#version") => {}
            _ => {
                return Err(SegmentError::Format {
                    line: 1,
                    message: "missing #version header".into(),
                })
            }
        }
        let mut merges = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                    merges.push((l.to_string(), r.to_string()))
                }
                _ => {
                    return Err(SegmentError::Format {
                        line: i + 1,
                        message: format!("expected \"left right\", got {line:?}"),
                    })
                }
            }
        }
        Ok(Self::from_merges(merges))
    }

    pub fn save(&self, path: &Path) -> Result<(), SegmentError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SegmentError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Joins subword units back into a word, dropping end-of-word markers.
pub fn join_units<S: AsRef<str>>(units: &[S]) -> String {
    units
        .iter()
        .map(|u| u.as_ref().strip_suffix(EOW_TOKEN).unwrap_or(u.as_ref()))
        .collect()
}
