//! Token ↔ index maps with fixed reserved symbols.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::segment::SegmentError;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
/// End of word; only present in character vocabularies.
pub const EOW: usize = 4;

pub const PAD_TOKEN: &str = "<pad>";
pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";
pub const UNK_TOKEN: &str = "<unk>";
pub const EOW_TOKEN: &str = "</w>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VocabKind {
    /// PAD, BOS, EOS, UNK.
    Token,
    /// PAD, BOS, EOS, UNK, EOW.
    Character,
}

impl VocabKind {
    pub fn reserved(self) -> &'static [&'static str] {
        match self {
            VocabKind::Token => &[PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN],
            VocabKind::Character => &[PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN, EOW_TOKEN],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabRepr")]
pub struct Vocabulary {
    kind: VocabKind,
    tokens: Vec<String>,
    counts: Vec<u64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_parts(
        kind: VocabKind,
        tokens: Vec<String>,
        counts: Vec<u64>,
    ) -> Result<Self, SegmentError> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(SegmentError::Format {
                    line: i + 1,
                    message: format!("duplicate token {t:?}"),
                });
            }
        }
        Ok(Vocabulary {
            kind,
            tokens,
            counts,
            index,
        })
    }

    /// Reserved symbols first, then tokens by descending count with ties in
    /// lexicographic order, truncated to `max_size` entries. Tokens seen
    /// fewer than `min_count` times are dropped.
    pub fn build<'a, I>(
        counts: I,
        kind: VocabKind,
        max_size: usize,
        min_count: u64,
    ) -> Result<Self, SegmentError>
    where
        I: IntoIterator<Item = (&'a str, u64)>,
    {
        let reserved = kind.reserved();
        if max_size <= reserved.len() {
            return Err(SegmentError::InvalidMaxSize {
                max_size,
                reserved: reserved.len(),
            });
        }
        let mut merged: HashMap<&str, u64> = HashMap::new();
        for (tok, c) in counts {
            *merged.entry(tok).or_default() += c;
        }
        let mut entries: Vec<(&str, u64)> = merged
            .into_iter()
            .filter(|(t, c)| *c >= min_count && *c > 0 && !reserved.contains(t))
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        entries.truncate(max_size - reserved.len());
        let mut tokens: Vec<String> = reserved.iter().map(|s| s.to_string()).collect();
        let mut cs = vec![0; reserved.len()];
        for (t, c) in entries {
            tokens.push(t.to_string());
            cs.push(c);
        }
        Self::from_parts(kind, tokens, cs)
    }

    /// Character vocabulary over every character of the given words.
    pub fn characters<'a, I>(
        words: I,
        max_size: usize,
        min_count: u64,
    ) -> Result<Self, SegmentError>
    where
        I: IntoIterator<Item = (&'a str, u64)>,
    {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for (w, c) in words {
            for ch in w.chars() {
                *counts.entry(ch.to_string()).or_default() += c;
            }
        }
        Self::build(
            counts.iter().map(|(k, v)| (k.as_str(), *v)),
            VocabKind::Character,
            max_size,
            min_count,
        )
    }

    pub fn kind(&self) -> VocabKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Index of `token`, or UNK.
    pub fn encode(&self, token: &str) -> usize {
        self.index_of(token).unwrap_or(UNK)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn count(&self, index: usize) -> Option<u64> {
        self.counts.get(index).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_reserved(&self, index: usize) -> bool {
        index < self.kind.reserved().len()
    }

    /// `token<TAB>count` per line, in index order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (t, c) in self.tokens.iter().zip(&self.counts) {
            let _ = writeln!(out, "{t}\t{c}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, SegmentError> {
        let mut tokens = Vec::new();
        let mut counts = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let (tok, count) = line.rsplit_once('\t').ok_or_else(|| SegmentError::Format {
                line: i + 1,
                message: "expected token<TAB>count".into(),
            })?;
            let count = count.parse().map_err(|_| SegmentError::Format {
                line: i + 1,
                message: format!("bad count {count:?}"),
            })?;
            tokens.push(tok.to_string());
            counts.push(count);
        }
        let is_reserved = |kind: VocabKind| {
            let r = kind.reserved();
            tokens.len() >= r.len()
                && r.iter().zip(&tokens).all(|(a, b)| a == b)
                && counts[..r.len()].iter().all(|&c| c == 0)
        };
        let kind = if is_reserved(VocabKind::Character) {
            VocabKind::Character
        } else if is_reserved(VocabKind::Token) {
            VocabKind::Token
        } else {
            return Err(SegmentError::Format {
                line: 1,
                message: "vocabulary must start with the reserved symbols".into(),
            });
        };
        Self::from_parts(kind, tokens, counts)
    }

    pub fn save(&self, path: &Path) -> Result<(), SegmentError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SegmentError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[derive(Deserialize)]
struct VocabRepr {
    kind: VocabKind,
    tokens: Vec<String>,
    counts: Vec<u64>,
}

impl From<VocabRepr> for Vocabulary {
    fn from(r: VocabRepr) -> Self {
        let index = r
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            kind: r.kind,
            tokens: r.tokens,
            counts: r.counts,
            index,
        }
    }
}
