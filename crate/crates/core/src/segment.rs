//! Word, subword and character views of sentences.

use thiserror::Error;

use crate::bpe::{join_units, BpeModel};
use crate::vocab::{Vocabulary, BOS, EOS, EOW, UNK};

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("vocabulary size {max_size} leaves no room beyond {reserved} reserved symbols")]
    InvalidMaxSize { max_size: usize, reserved: usize },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A sentence split into words and each word into units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    pub words: Vec<String>,
    pub units: Vec<Vec<String>>,
}

impl Segmentation {
    pub fn with_bpe(model: &BpeModel, sentence: &str) -> Self {
        let words: Vec<String> = sentence.split_whitespace().map(str::to_string).collect();
        let units = words.iter().map(|w| model.apply(w)).collect();
        Segmentation { words, units }
    }

    /// All units in sentence order.
    pub fn flat(&self) -> Vec<String> {
        self.units.iter().flatten().cloned().collect()
    }

    /// Joins units back into single-space separated text.
    pub fn detokenize(&self) -> String {
        detokenize_units(&self.flat())
    }
}

/// Rebuilds text from a flat unit sequence whose words end with `</w>`.
pub fn detokenize_units<S: AsRef<str>>(units: &[S]) -> String {
    let mut words = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for u in units {
        let u = u.as_ref();
        current.push(u);
        if u.ends_with(crate::vocab::EOW_TOKEN) {
            words.push(join_units(&current));
            current.clear();
        }
    }
    if !current.is_empty() {
        words.push(join_units(&current));
    }
    words.retain(|w| !w.is_empty());
    words.join(" ")
}

/// Character indices of each word with EOW appended; unknown characters
/// become UNK.
pub fn encode_words_as_chars<S: AsRef<str>>(sentence: &[S], vocab: &Vocabulary) -> Vec<Vec<usize>> {
    sentence
        .iter()
        .map(|w| {
            w.as_ref()
                .chars()
                .map(|c| vocab.encode(c.encode_utf8(&mut [0; 4])))
                .chain(std::iter::once(EOW))
                .collect()
        })
        .collect()
}

/// One character stream for the whole sentence: `BOS c… SEP c… EOS`, with
/// the EOW symbol as the word separator.
pub fn flatten_char_stream<S: AsRef<str>>(sentence: &[S], vocab: &Vocabulary) -> Vec<usize> {
    let mut out = vec![BOS];
    for (i, w) in sentence.iter().enumerate() {
        if i > 0 {
            out.push(EOW);
        }
        out.extend(
            w.as_ref()
                .chars()
                .map(|c| vocab.encode(c.encode_utf8(&mut [0; 4]))),
        );
    }
    out.push(EOS);
    out
}

/// Inverse of [`flatten_char_stream`]. BOS/EOS framing is optional; UNK
/// renders as `<unk>`.
pub fn unflatten_char_stream(stream: &[usize], vocab: &Vocabulary) -> String {
    let body = stream.strip_prefix(&[BOS]).unwrap_or(stream);
    let body = match body.iter().position(|&i| i == EOS) {
        Some(p) => &body[..p],
        None => body,
    };
    let mut words: Vec<String> = vec![String::new()];
    for &i in body {
        if i == EOW {
            words.push(String::new());
        } else if !vocab.is_reserved(i) || i == UNK {
            words
                .last_mut()
                .unwrap()
                .push_str(vocab.token(i).unwrap_or(crate::vocab::UNK_TOKEN));
        }
    }
    words.retain(|w| !w.is_empty());
    words.join(" ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenStats {
    pub tokens: usize,
    pub types: usize,
    /// Tokens per type; absent for an empty corpus.
    pub ratio: Option<f64>,
    /// Tokens per sentence; absent for an empty corpus.
    pub mean_sentence_length: Option<f64>,
}

pub fn token_type_stats<S: AsRef<str>>(corpus: &[Vec<S>]) -> TokenStats {
    let mut types = std::collections::HashSet::new();
    let mut tokens = 0;
    for sent in corpus {
        for t in sent {
            types.insert(t.as_ref());
            tokens += 1;
        }
    }
    TokenStats {
        tokens,
        types: types.len(),
        ratio: (!types.is_empty()).then(|| tokens as f64 / types.len() as f64),
        mean_sentence_length: (!corpus.is_empty()).then(|| tokens as f64 / corpus.len() as f64),
    }
}
