//! Helpers shared by integration tests.
#![allow(dead_code)]

use hnmt::model::{Model, ModelConfig, Variant};
use hnmt::search::rank;
use hnmt::vocab::{EOS, EOW};

/// Every complete flat target with at most `max_len` units before EOS.
pub fn enumerate_flat(vocab: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut layer: Vec<Vec<usize>> = vec![vec![]];
    for depth in 0..=max_len {
        let mut next = Vec::new();
        for p in &layer {
            out.push([p.as_slice(), &[EOS]].concat());
            if depth < max_len {
                next.extend(
                    (0..vocab)
                        .filter(|&u| u != EOS)
                        .map(|u| [p.as_slice(), &[u]].concat()),
                );
            }
        }
        layer = next;
    }
    out
}

/// Every complete hierarchical target with at most `max_words` words of
/// at most `max_word_len` characters each.
pub fn enumerate_hier(vocab: usize, max_words: usize, max_word_len: usize) -> Vec<Vec<usize>> {
    let chars: Vec<usize> = (0..vocab).filter(|&u| u != EOS && u != EOW).collect();
    let mut words: Vec<Vec<usize>> = vec![vec![]];
    let mut frontier: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..max_word_len {
        frontier = frontier
            .iter()
            .flat_map(|w| chars.iter().map(move |&c| [w.as_slice(), &[c]].concat()))
            .collect();
        words.extend(frontier.iter().cloned());
    }
    let mut out = Vec::new();
    let mut sentences: Vec<Vec<usize>> = vec![vec![]];
    for n in 0..=max_words {
        for s in &sentences {
            out.push([s.as_slice(), &[EOS]].concat());
        }
        if n < max_words {
            sentences = sentences
                .iter()
                .flat_map(|s| {
                    words
                        .iter()
                        .map(move |w| [s.as_slice(), w, &[EOW]].concat())
                })
                .collect();
        }
    }
    out
}

/// Highest-likelihood target by brute force, with the search tie rules.
pub fn exhaustive_best(
    model: &Model,
    source: &[usize],
    targets: &[Vec<usize>],
) -> (Vec<usize>, f64) {
    let mut best: Option<(Vec<usize>, f64)> = None;
    for t in targets {
        let s = model.sentence_log_likelihood(source, t).unwrap();
        if best
            .as_ref()
            .map_or(true, |(bs, bsc)| rank(s, t, *bsc, bs).is_lt())
        {
            best = Some((t.clone(), s));
        }
    }
    best.unwrap()
}

/// A small random model for oracle comparisons.
pub fn tiny_model(variant: Variant, target_vocab: usize, seed: u64, scale: f64) -> Model {
    let mut c = ModelConfig::defaults(variant, 5, target_vocab).scaled(3, 4, 3);
    c.dropout = 0.0;
    c.init_scale = scale;
    c.seed = seed;
    c.max_word_length = 2;
    c.max_sentence_length = 4;
    Model::new(c).unwrap()
}
