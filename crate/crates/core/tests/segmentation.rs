use std::collections::BTreeMap;

use hnmt::bpe::{join_units, learn_bpe, BpeModel};
use hnmt::segment::{flatten_char_stream, token_type_stats, unflatten_char_stream, Segmentation};
use hnmt::vocab::{VocabKind, Vocabulary, BOS, EOS, UNK};
use proptest::prelude::*;

fn word() -> impl Strategy<Value = String> {
    "[a-eé]{1,8}"
}

fn corpus() -> impl Strategy<Value = BTreeMap<String, u64>> {
    prop::collection::btree_map(word(), 1u64..20, 1..25)
}

proptest! {
    #[test]
    fn segmentation_round_trips(c in corpus(), merges in 0usize..40, probe in word()) {
        let m = learn_bpe(&c, merges).unwrap();
        for w in c.keys().chain(std::iter::once(&probe)) {
            prop_assert_eq!(&join_units(&m.apply(w)), w);
        }
    }

    #[test]
    fn fast_apply_equals_sequential_replay(c in corpus(), merges in 0usize..40, probe in word()) {
        let m = learn_bpe(&c, merges).unwrap();
        for w in c.keys().chain(std::iter::once(&probe)) {
            prop_assert_eq!(m.apply(w), m.apply_sequential(w));
        }
    }

    #[test]
    fn more_merges_never_add_units(c in corpus(), k in 0usize..30) {
        let full = learn_bpe(&c, k + 1).unwrap();
        let prefix = BpeModel::from_merges(full.merges().iter().take(k).cloned().collect());
        for w in c.keys() {
            prop_assert!(full.apply(w).len() <= prefix.apply(w).len());
        }
    }

    #[test]
    fn text_form_round_trips(c in corpus(), merges in 0usize..20) {
        let m = learn_bpe(&c, merges).unwrap();
        prop_assert_eq!(BpeModel::from_text(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn vocabulary_encodes_what_it_saw(c in corpus()) {
        let v = Vocabulary::build(c.iter().map(|(k, n)| (k.as_str(), *n)), VocabKind::Token, 1000, 1).unwrap();
        for w in c.keys() {
            let i = v.encode(w);
            prop_assert_ne!(i, UNK);
            prop_assert_eq!(v.token(i), Some(w.as_str()));
        }
        prop_assert_eq!(v.encode("zzz-unseen"), UNK);
        prop_assert_eq!(Vocabulary::from_text(&v.to_text()).unwrap(), v);
    }

    #[test]
    fn char_stream_round_trips(words in prop::collection::vec(word(), 0..6)) {
        let counts: BTreeMap<String, u64> = words.iter().map(|w| (w.clone(), 1)).collect();
        let v = Vocabulary::characters(counts.iter().map(|(k, n)| (k.as_str(), *n)).chain([("abcdeé", 1)]), 100, 1).unwrap();
        let stream = flatten_char_stream(&words, &v);
        prop_assert_eq!(stream.first(), Some(&BOS));
        prop_assert_eq!(stream.last(), Some(&EOS));
        prop_assert_eq!(unflatten_char_stream(&stream[1..], &v), words.join(" "));
    }

    #[test]
    fn sentence_segmentation_detokenizes(words in prop::collection::vec(word(), 1..6), merges in 0usize..20) {
        let counts: BTreeMap<String, u64> = words.iter().map(|w| (w.clone(), 2)).collect();
        let m = learn_bpe(&counts, merges).unwrap();
        let s = words.join(" ");
        prop_assert_eq!(Segmentation::with_bpe(&m, &s).detokenize(), s);
    }
}

#[test]
fn token_stats_examples() {
    let s = token_type_stats(&[vec!["a", "a", "b"]]);
    assert_eq!(
        (s.tokens, s.types, s.ratio, s.mean_sentence_length),
        (3, 2, Some(1.5), Some(3.0))
    );
    assert_eq!(
        token_type_stats(&[vec!["a", "b"], vec!["c", "d", "e", "f"]]).mean_sentence_length,
        Some(3.0)
    );
    assert_eq!(token_type_stats(&[vec!["x", "y"]]).ratio, Some(1.0));
    let empty: Vec<Vec<&str>> = vec![];
    assert_eq!(token_type_stats(&empty).ratio, None);
}
