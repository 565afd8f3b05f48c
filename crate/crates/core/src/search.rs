//! Greedy decoding, flat beam search and hierarchical beam search.
//!
//! All searches score hypotheses by raw cumulative log-probability using
//! the same floored logarithm as the training loss, so a returned score
//! equals the teacher-forced likelihood of the returned sequence. Ties are
//! broken by shorter sequence, then by the lexicographically smaller index
//! sequence. Among equally scored extensions of the same length, ending
//! the sentence counts as the shorter output.

use std::cmp::Ordering;

use thiserror::Error;

use crate::graph::{floored_ln, Graph, Var};
use crate::model::{
    DecoderState, EncodedSource, HierState, Model, ModelConfig, ModelError, Variant,
};
use crate::vocab::{BOS, EOS, EOW};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("beam size must be at least 1")]
    BeamSize,
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<crate::tensor::TensorError> for SearchError {
    fn from(e: crate::tensor::TensorError) -> Self {
        SearchError::Model(e.into())
    }
}

pub type Result<T> = std::result::Result<T, SearchError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    /// Flat models: units before EOS. Hierarchical: words before EOS.
    pub max_len: usize,
    /// Characters per word, hierarchical only.
    pub max_word_len: usize,
    /// Compare completed hypotheses by score per unit. Disables pruning.
    pub length_normalize: bool,
}

impl SearchOptions {
    pub fn from_config(c: &ModelConfig) -> Self {
        SearchOptions {
            max_len: c.max_sentence_length,
            max_word_len: c.max_word_length,
            length_normalize: false,
        }
    }
}

/// A finished search result. `seq` ends with EOS when `complete`; an
/// incomplete result is the best hypothesis cut off by a length limit.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub seq: Vec<usize>,
    pub score: f64,
    pub complete: bool,
}

impl Hypothesis {
    fn key(&self, normalize: bool) -> f64 {
        if normalize && !self.seq.is_empty() {
            self.score / self.seq.len() as f64
        } else {
            self.score
        }
    }

    /// True when `self` ranks strictly ahead of `other`.
    fn beats(&self, other: &Hypothesis, normalize: bool) -> bool {
        rank(
            self.key(normalize),
            &self.seq,
            other.key(normalize),
            &other.seq,
        ) == Ordering::Less
    }
}

/// Ordering where `Less` means "better": higher score, then shorter, then
/// lexicographically smaller.
pub fn rank(score_a: f64, seq_a: &[usize], score_b: f64, seq_b: &[usize]) -> Ordering {
    score_b
        .total_cmp(&score_a)
        .then(seq_a.len().cmp(&seq_b.len()))
        .then_with(|| seq_a.cmp(seq_b))
}

/// Something with a cumulative score.
pub trait Scored {
    fn score(&self) -> f64;
}

impl Scored for Hypothesis {
    fn score(&self) -> f64 {
        self.score
    }
}

/// Drops every hypothesis that cannot beat `best`: scores only decrease
/// as a sequence grows, so anything at or below the best completed score
/// is dominated.
pub fn prune<H: Scored>(hyps: Vec<H>, best: Option<f64>) -> Vec<H> {
    match best {
        None => hyps,
        Some(b) => hyps.into_iter().filter(|h| h.score() > b).collect(),
    }
}

struct Partial {
    seq: Vec<usize>,
    score: f64,
    prev: usize,
    state: DecoderState,
    /// Units of the word in progress (hierarchical).
    word: Vec<usize>,
    words_done: usize,
}

impl Scored for Partial {
    fn score(&self) -> f64 {
        self.score
    }
}

impl Partial {
    fn snapshot(&self, complete: bool) -> Hypothesis {
        Hypothesis {
            seq: self.seq.clone(),
            score: self.score,
            complete,
        }
    }
}

/// What happens when `unit` extends `p`.
enum Move {
    Finish,
    Continue,
    EndWord,
    /// Disallowed: EOS inside a word.
    Invalid,
    /// Over a length limit.
    Breach,
}

fn classify(variant: Variant, p: &Partial, unit: usize, opts: &SearchOptions) -> Move {
    if variant.is_flat() {
        return match unit {
            EOS => Move::Finish,
            _ if p.seq.len() >= opts.max_len => Move::Breach,
            _ => Move::Continue,
        };
    }
    let at_word_start = p.word.is_empty();
    match unit {
        EOS if at_word_start => Move::Finish,
        EOS => Move::Invalid,
        _ if at_word_start && p.words_done >= opts.max_len => Move::Breach,
        EOW => Move::EndWord,
        _ if p.word.len() >= opts.max_word_len => Move::Breach,
        _ => Move::Continue,
    }
}

/// Next-unit distribution for `p` and the state reached by consuming its
/// last unit.
fn expand(
    model: &Model,
    g: &mut Graph,
    enc: &EncodedSource,
    p: &Partial,
) -> Result<(Var, DecoderState)> {
    match &p.state {
        DecoderState::Flat { hidden } => {
            let (probs, h) = model.unit_step(g, p.prev, hidden, enc)?;
            Ok((probs, DecoderState::Flat { hidden: h }))
        }
        DecoderState::Hier(st) => {
            let (probs, h) = model.hier_char_step(g, p.prev, st.char_hidden)?;
            Ok((
                probs,
                DecoderState::Hier(HierState {
                    char_hidden: h,
                    ..st.clone()
                }),
            ))
        }
    }
}

/// Builds the child of `p` after `unit`; `next` is the state from
/// [`expand`].
fn advance(
    model: &Model,
    g: &mut Graph,
    enc: &EncodedSource,
    p: &Partial,
    unit: usize,
    score: f64,
    next: &DecoderState,
    end_word: bool,
) -> Result<Partial> {
    let mut seq = p.seq.clone();
    seq.push(unit);
    let mut word = p.word.clone();
    word.push(unit);
    if end_word {
        let DecoderState::Hier(st) = next else {
            unreachable!("word end in a flat model")
        };
        let st = model.start_word(g, &word, &st.word_hidden, enc)?;
        return Ok(Partial {
            seq,
            score,
            prev: BOS,
            state: DecoderState::Hier(st),
            word: Vec::new(),
            words_done: p.words_done + 1,
        });
    }
    Ok(Partial {
        seq,
        score,
        prev: unit,
        state: next.clone(),
        word: if model.variant().is_flat() {
            Vec::new()
        } else {
            word
        },
        words_done: p.words_done,
    })
}

fn start(model: &Model, g: &mut Graph, source: &[usize]) -> Result<(EncodedSource, Partial)> {
    let enc = model.encode_source(g, source)?;
    let state = model.initial_state(g, &enc)?;
    Ok((
        enc,
        Partial {
            seq: Vec::new(),
            score: 0.0,
            prev: BOS,
            state,
            word: Vec::new(),
            words_done: 0,
        },
    ))
}

/// Greedy decoding on a caller-supplied graph, so instrumentation
/// counters can be read afterwards.
pub fn greedy_decode_in(
    g: &mut Graph,
    model: &Model,
    source: &[usize],
    opts: &SearchOptions,
) -> Result<Hypothesis> {
    let (enc, mut p) = start(model, g, source)?;
    let variant = model.variant();
    loop {
        let (probs, next) = expand(model, g, &enc, &p)?;
        let mut choice: Option<(usize, f64)> = None;
        for (u, &pr) in g.value(probs).iter().enumerate() {
            if matches!(classify(variant, &p, u, opts), Move::Invalid) {
                continue;
            }
            let lp = floored_ln(pr);
            if choice.map_or(true, |(_, best)| lp > best || (lp == best && u == EOS)) {
                choice = Some((u, lp));
            }
        }
        let Some((u, lp)) = choice else {
            return Ok(p.snapshot(false));
        };
        let score = p.score + lp;
        match classify(variant, &p, u, opts) {
            Move::Finish => {
                let mut seq = p.seq;
                seq.push(EOS);
                return Ok(Hypothesis {
                    seq,
                    score,
                    complete: true,
                });
            }
            Move::Breach | Move::Invalid => return Ok(p.snapshot(false)),
            Move::EndWord => p = advance(model, g, &enc, &p, u, score, &next, true)?,
            Move::Continue => p = advance(model, g, &enc, &p, u, score, &next, false)?,
        }
    }
}

/// Argmax decoding. On exact ties EOS wins, then the lowest index.
pub fn greedy_decode(model: &Model, source: &[usize], opts: &SearchOptions) -> Result<Hypothesis> {
    let mut g = model.graph();
    greedy_decode_in(&mut g, model, source, opts)
}

/// Beam search over either decoder on a caller-supplied graph.
///
/// Each round expands every live hypothesis by one unit and keeps the top
/// `beam` extensions. Those ending the sentence replace the best solution
/// when strictly better; those completing a word advance the word-level
/// state; the rest stay live. Hypotheses no better than the best solution
/// are then pruned.
pub fn beam_search_in(
    g: &mut Graph,
    model: &Model,
    source: &[usize],
    beam: usize,
    opts: &SearchOptions,
) -> Result<Hypothesis> {
    if beam == 0 {
        return Err(SearchError::BeamSize);
    }
    let variant = model.variant();
    let norm = opts.length_normalize;
    let (enc, root) = start(model, g, source)?;
    let mut live = vec![root];
    let mut best: Option<Hypothesis> = None;
    let mut cutoff: Option<Hypothesis> = None;
    let mut keep_cutoff = |h: Hypothesis| {
        if cutoff.as_ref().map_or(true, |c| h.beats(c, norm)) {
            cutoff = Some(h);
        }
    };
    while !live.is_empty() {
        let mut nexts = Vec::with_capacity(live.len());
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for (i, p) in live.iter().enumerate() {
            let (probs, next) = expand(model, g, &enc, p)?;
            for (u, &pr) in g.value(probs).iter().enumerate() {
                if !matches!(classify(variant, p, u, opts), Move::Invalid) {
                    cands.push((p.score + floored_ln(pr), i, u));
                }
            }
            nexts.push(next);
        }
        cands.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then((a.2 != EOS).cmp(&(b.2 != EOS)))
                .then_with(|| live[a.1].seq.cmp(&live[b.1].seq))
                .then(a.2.cmp(&b.2))
        });
        cands.truncate(beam);
        let mut survivors = Vec::with_capacity(cands.len());
        for (score, i, u) in cands {
            let p = &live[i];
            match classify(variant, p, u, opts) {
                Move::Finish => {
                    let mut seq = p.seq.clone();
                    seq.push(EOS);
                    let h = Hypothesis {
                        seq,
                        score,
                        complete: true,
                    };
                    if best.as_ref().map_or(true, |b| h.beats(b, norm)) {
                        best = Some(h);
                    }
                }
                Move::Breach => keep_cutoff(p.snapshot(false)),
                Move::Invalid => unreachable!("filtered above"),
                Move::EndWord => {
                    survivors.push(advance(model, g, &enc, p, u, score, &nexts[i], true)?)
                }
                Move::Continue => {
                    survivors.push(advance(model, g, &enc, p, u, score, &nexts[i], false)?)
                }
            }
        }
        live = if norm {
            survivors
        } else {
            prune(survivors, best.as_ref().map(|b| b.score))
        };
    }
    Ok(best
        .or(cutoff)
        .expect("a breach or a solution ends every search"))
}

/// Beam search for subword and character models.
pub fn beam_search_flat(
    model: &Model,
    source: &[usize],
    beam: usize,
    opts: &SearchOptions,
) -> Result<Hypothesis> {
    if !model.variant().is_flat() {
        return Err(ModelError::VariantMismatch {
            expected: "flat",
            found: model.variant(),
        }
        .into());
    }
    let mut g = model.graph();
    beam_search_in(&mut g, model, source, beam, opts)
}

/// Hierarchical beam search: a character beam whose finished words update
/// the word-level state.
pub fn hierarchical_beam_search(
    model: &Model,
    source: &[usize],
    beam: usize,
    opts: &SearchOptions,
) -> Result<Hypothesis> {
    if model.variant() != Variant::Hierarchical {
        return Err(ModelError::VariantMismatch {
            expected: "hierarchical",
            found: model.variant(),
        }
        .into());
    }
    let mut g = model.graph();
    beam_search_in(&mut g, model, source, beam, opts)
}

/// Dispatches to the search matching the model variant. `beam == 1` is
/// greedy decoding.
pub fn translate(
    model: &Model,
    source: &[usize],
    beam: usize,
    opts: &SearchOptions,
) -> Result<Hypothesis> {
    match (beam, model.variant()) {
        (0, _) => Err(SearchError::BeamSize),
        (1, _) => greedy_decode(model, source, opts),
        (_, Variant::Hierarchical) => hierarchical_beam_search(model, source, beam, opts),
        _ => beam_search_flat(model, source, beam, opts),
    }
}
