mod common;

use common::{enumerate_flat, enumerate_hier, exhaustive_best, tiny_model};
use hnmt::model::Variant;
use hnmt::search::{beam_search_flat, greedy_decode, hierarchical_beam_search, SearchOptions};
use proptest::prelude::*;

fn opts(max_len: usize) -> SearchOptions {
    SearchOptions {
        max_len,
        max_word_len: 2,
        length_normalize: false,
    }
}

#[test]
fn enumeration_sizes() {
    // 3 non-EOS symbols, up to 4 units: 1 + 3 + 9 + 27 + 81.
    assert_eq!(enumerate_flat(4, 4).len(), 121);
    // 3 characters, words of up to 2: 13 words; up to 2 words: 1 + 13 + 169.
    assert_eq!(enumerate_hier(5, 2, 2).len(), 183);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn saturated_flat_beam_is_exhaustive(seed in 0u64..100_000, src in prop::collection::vec(0usize..5, 1..3)) {
        for v in [Variant::Subword, Variant::Character] {
            let m = tiny_model(v, 4, seed, 1.5);
            let (seq, score) = exhaustive_best(&m, &src, &enumerate_flat(4, 4));
            let h = beam_search_flat(&m, &src, 10_000, &opts(4)).unwrap();
            prop_assert!(h.complete);
            prop_assert_eq!(&h.seq, &seq);
            prop_assert!((h.score - score).abs() < 1e-10);
            let ll = m.sentence_log_likelihood(&src, &h.seq).unwrap();
            prop_assert!((h.score - ll).abs() < 1e-10);
        }
    }

    #[test]
    fn saturated_hier_beam_is_exhaustive(seed in 0u64..100_000, src in prop::collection::vec(0usize..5, 1..3)) {
        let m = tiny_model(Variant::Hierarchical, 5, seed, 1.5);
        let (seq, score) = exhaustive_best(&m, &src, &enumerate_hier(5, 2, 2));
        let h = hierarchical_beam_search(&m, &src, 10_000, &opts(2)).unwrap();
        prop_assert_eq!(&h.seq, &seq);
        prop_assert!((h.score - score).abs() < 1e-10);
        prop_assert!((m.sentence_log_likelihood(&src, &h.seq).unwrap() - h.score).abs() < 1e-10);
    }

    #[test]
    fn beam_of_one_is_greedy(seed in 0u64..100_000, src in prop::collection::vec(0usize..5, 1..4), max_len in 0usize..5) {
        for v in Variant::ALL {
            let m = tiny_model(v, 6, seed, 1.0);
            let o = opts(max_len);
            let g = greedy_decode(&m, &src, &o).unwrap();
            let b = if v == Variant::Hierarchical {
                hierarchical_beam_search(&m, &src, 1, &o).unwrap()
            } else {
                beam_search_flat(&m, &src, 1, &o).unwrap()
            };
            prop_assert_eq!(g, b);
        }
    }

    #[test]
    fn search_is_deterministic(seed in 0u64..1000) {
        let m = tiny_model(Variant::Hierarchical, 6, seed, 1.0);
        let a = hierarchical_beam_search(&m, &[1, 2], 4, &opts(3)).unwrap();
        let b = hierarchical_beam_search(&m, &[1, 2], 4, &opts(3)).unwrap();
        prop_assert_eq!(a, b);
    }
}
