//! Text to index sequences and back, for both sides of a model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bpe::{learn_bpe, BpeModel};
use crate::model::Variant;
use crate::segment::{
    detokenize_units, encode_words_as_chars, flatten_char_stream, unflatten_char_stream,
    SegmentError,
};
use crate::vocab::{VocabKind, Vocabulary, EOS, EOW, UNK, UNK_TOKEN};

#[derive(Debug, Clone, PartialEq)]
pub struct CodecOptions {
    pub source_merges: usize,
    pub target_merges: usize,
    /// Learn one set of merges on source and target text together and
    /// use it for both sides (subword models only).
    pub joint_bpe: bool,
    pub source_vocab_max: usize,
    pub target_vocab_max: usize,
    pub min_count: u64,
}

impl Default for CodecOptions {
    fn default() -> Self {
        CodecOptions {
            source_merges: 16_000,
            target_merges: 16_000,
            joint_bpe: false,
            source_vocab_max: 50_000,
            target_vocab_max: 50_000,
            min_count: 1,
        }
    }
}

/// BPE-segmented source side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceCodec {
    pub bpe: BpeModel,
    pub vocab: Vocabulary,
}

impl SourceCodec {
    pub fn encode(&self, sentence: &str) -> Vec<usize> {
        sentence
            .split_whitespace()
            .flat_map(|w| self.bpe.apply(w))
            .map(|u| self.vocab.encode(&u))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TargetCodec {
    Subword { bpe: BpeModel, vocab: Vocabulary },
    Character { vocab: Vocabulary },
    Hierarchical { vocab: Vocabulary },
}

impl TargetCodec {
    pub fn vocab(&self) -> &Vocabulary {
        match self {
            TargetCodec::Subword { vocab, .. }
            | TargetCodec::Character { vocab }
            | TargetCodec::Hierarchical { vocab } => vocab,
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            TargetCodec::Subword { .. } => Variant::Subword,
            TargetCodec::Character { .. } => Variant::Character,
            TargetCodec::Hierarchical { .. } => Variant::Hierarchical,
        }
    }

    /// Unit sequence ending in EOS, framed for this decoder.
    pub fn encode(&self, sentence: &str) -> Vec<usize> {
        let words: Vec<&str> = sentence.split_whitespace().collect();
        match self {
            TargetCodec::Subword { bpe, vocab } => words
                .iter()
                .flat_map(|w| bpe.apply(w))
                .map(|u| vocab.encode(&u))
                .chain(std::iter::once(EOS))
                .collect(),
            TargetCodec::Character { vocab } => flatten_char_stream(&words, vocab)[1..].to_vec(),
            TargetCodec::Hierarchical { vocab } => encode_words_as_chars(&words, vocab)
                .into_iter()
                .flatten()
                .chain(std::iter::once(EOS))
                .collect(),
        }
    }

    /// Text for a unit sequence; anything after the first EOS is ignored.
    pub fn decode(&self, units: &[usize]) -> String {
        let body = match units.iter().position(|&u| u == EOS) {
            Some(p) => &units[..p],
            None => units,
        };
        match self {
            TargetCodec::Subword { vocab, .. } => {
                let toks: Vec<&str> = body
                    .iter()
                    .filter(|&&u| u == UNK || !vocab.is_reserved(u))
                    .map(|&u| vocab.token(u).unwrap_or(UNK_TOKEN))
                    .collect();
                detokenize_units(&toks)
            }
            TargetCodec::Character { vocab } => unflatten_char_stream(body, vocab),
            TargetCodec::Hierarchical { vocab } => {
                let mut words = vec![String::new()];
                for &u in body {
                    if u == EOW {
                        words.push(String::new());
                    } else if u == UNK || !vocab.is_reserved(u) {
                        words
                            .last_mut()
                            .unwrap()
                            .push_str(vocab.token(u).unwrap_or(UNK_TOKEN));
                    }
                }
                words.retain(|w| !w.is_empty());
                words.join(" ")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codec {
    pub source: SourceCodec,
    pub target: TargetCodec,
}

pub fn word_counts<'a, I: IntoIterator<Item = &'a str>>(sentences: I) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for s in sentences {
        for w in s.split_whitespace() {
            *counts.entry(w.to_string()).or_insert(0) += 1;
        }
    }
    counts
}

fn unit_counts(bpe: &BpeModel, words: &BTreeMap<String, u64>) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for (w, &c) in words {
        for u in bpe.apply(w) {
            *counts.entry(u).or_insert(0) += c;
        }
    }
    counts
}

impl Codec {
    /// Learns segmentation and vocabularies from parallel training text.
    pub fn build<S: AsRef<str>>(
        variant: Variant,
        sources: &[S],
        targets: &[S],
        opts: &CodecOptions,
    ) -> Result<Self, SegmentError> {
        let src_words = word_counts(sources.iter().map(AsRef::as_ref));
        let tgt_words = word_counts(targets.iter().map(AsRef::as_ref));
        if src_words.is_empty() || tgt_words.is_empty() {
            return Err(SegmentError::EmptyCorpus);
        }
        let joint = opts.joint_bpe && variant == Variant::Subword;
        let src_bpe = if joint {
            let mut all = src_words.clone();
            for (w, c) in &tgt_words {
                *all.entry(w.clone()).or_insert(0) += c;
            }
            learn_bpe(&all, opts.source_merges)?
        } else {
            learn_bpe(&src_words, opts.source_merges)?
        };
        let counts = unit_counts(&src_bpe, &src_words);
        let src_vocab = Vocabulary::build(
            counts.iter().map(|(k, v)| (k.as_str(), *v)),
            VocabKind::Token,
            opts.source_vocab_max,
            opts.min_count,
        )?;
        let target = match variant {
            Variant::Subword => {
                let bpe = if joint {
                    src_bpe.clone()
                } else {
                    learn_bpe(&tgt_words, opts.target_merges)?
                };
                let counts = unit_counts(&bpe, &tgt_words);
                let vocab = Vocabulary::build(
                    counts.iter().map(|(k, v)| (k.as_str(), *v)),
                    VocabKind::Token,
                    opts.target_vocab_max,
                    opts.min_count,
                )?;
                TargetCodec::Subword { bpe, vocab }
            }
            Variant::Character | Variant::Hierarchical => {
                let vocab = Vocabulary::characters(
                    tgt_words.iter().map(|(k, v)| (k.as_str(), *v)),
                    opts.target_vocab_max,
                    opts.min_count,
                )?;
                if variant == Variant::Character {
                    TargetCodec::Character { vocab }
                } else {
                    TargetCodec::Hierarchical { vocab }
                }
            }
        };
        Ok(Codec {
            source: SourceCodec {
                bpe: src_bpe,
                vocab: src_vocab,
            },
            target,
        })
    }
}
