use std::collections::HashSet;

use hnmt::eval::{contrast_accuracy, read_contrast_pairs, write_contrast_pairs};
use hnmt::segment::token_type_stats;
use hnmt::synth::{
    generate_contrast_pairs, generate_corpus, gold_target, SynthLangSpec, SynthLanguage, Typology,
};
use proptest::prelude::*;

fn target_ratio(spec: &SynthLangSpec) -> f64 {
    let c = generate_corpus(spec, 1000).unwrap();
    let toks: Vec<Vec<&str>> = c
        .train
        .iter()
        .map(|p| p.target.split_whitespace().collect())
        .collect();
    token_type_stats(&toks).ratio.unwrap()
}

#[test]
fn fixed_seed_is_bit_identical() {
    let spec = SynthLangSpec::agglutinative(20, 3, 11);
    assert_eq!(
        generate_corpus(&spec, 300).unwrap(),
        generate_corpus(&spec, 300).unwrap()
    );
    let other = SynthLangSpec {
        seed: 12,
        ..spec.clone()
    };
    assert_ne!(
        generate_corpus(&spec, 300).unwrap(),
        generate_corpus(&other, 300).unwrap()
    );
}

#[test]
fn splits_are_disjoint_and_gold_is_exact() {
    let spec = SynthLangSpec::agglutinative(20, 3, 5);
    let lang = SynthLanguage::new(&spec).unwrap();
    let c = generate_corpus(&spec, 2000).unwrap();
    assert_eq!(
        (c.train.len(), c.valid.len(), c.test.len()),
        (2000, 100, 200)
    );
    let train: HashSet<&str> = c.train.iter().map(|p| p.source.as_str()).collect();
    assert_eq!(train.len(), 2000);
    for p in c.valid.iter().chain(&c.test) {
        assert!(!train.contains(p.source.as_str()));
    }
    let heldout: HashSet<&str> = c.valid.iter().map(|p| p.source.as_str()).collect();
    assert!(c.test.iter().all(|p| !heldout.contains(p.source.as_str())));
    for p in c.train.iter().chain(&c.test) {
        assert_eq!(
            gold_target(&lang, &p.source).as_deref(),
            Some(p.target.as_str())
        );
        for w in p.target.split_whitespace() {
            assert_eq!(lang.analyses(w).len(), 1, "{w}");
        }
    }
}

#[test]
fn isolating_control_is_less_sparse() {
    let agg = SynthLangSpec::agglutinative(50, 3, 8);
    let iso = agg.clone().with_typology(Typology::Isolating);
    assert!(target_ratio(&agg) < target_ratio(&iso));
}

#[test]
fn gold_outputs_score_full_marks_on_every_typology() {
    for t in [
        Typology::Agglutinative,
        Typology::Fusional,
        Typology::Isolating,
    ] {
        let spec = SynthLangSpec::agglutinative(20, 3, 2).with_typology(t);
        let lang = SynthLanguage::new(&spec).unwrap();
        for feature in ["number", "case", "possessive"] {
            let pairs = generate_contrast_pairs(&spec, feature, 100).unwrap();
            let gold: Vec<(String, String)> = pairs
                .iter()
                .map(|p| {
                    (
                        gold_target(&lang, &p.source_base).unwrap(),
                        gold_target(&lang, &p.source_variant).unwrap(),
                    )
                })
                .collect();
            assert_eq!(
                contrast_accuracy(&gold, &pairs).unwrap().accuracy(feature),
                Some(1.0),
                "{t:?} {feature}"
            );
            let constant: Vec<(String, String)> =
                gold.iter().map(|(b, _)| (b.clone(), b.clone())).collect();
            assert_eq!(
                contrast_accuracy(&constant, &pairs)
                    .unwrap()
                    .accuracy(feature),
                Some(0.0)
            );
            let constant: Vec<(String, String)> =
                gold.iter().map(|(_, v)| (v.clone(), v.clone())).collect();
            assert_eq!(
                contrast_accuracy(&constant, &pairs)
                    .unwrap()
                    .accuracy(feature),
                Some(0.0)
            );
        }
    }
}

#[test]
fn pairs_differ_in_exactly_one_tag() {
    let spec = SynthLangSpec::agglutinative(20, 3, 3);
    let plural = ["SG", "PL"];
    for p in generate_contrast_pairs(&spec, "number", 200).unwrap() {
        let a: Vec<&str> = p.source_base.split(' ').collect();
        let b: Vec<&str> = p.source_variant.split(' ').collect();
        assert_eq!(a.len(), b.len());
        let diffs: Vec<usize> = (0..a.len()).filter(|&i| a[i] != b[i]).collect();
        assert_eq!(diffs.len(), 1);
        assert_eq!((a[diffs[0]], b[diffs[0]]), (plural[0], plural[1]));
        assert!(p.variant_pattern.contains("ler"));
    }
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthLangSpec::agglutinative(10, 2, 1);
    let c = generate_corpus(&spec, 50).unwrap();
    c.write(dir.path()).unwrap();
    let tgt = std::fs::read_to_string(dir.path().join("test.tgt")).unwrap();
    assert_eq!(tgt.lines().count(), 200);
    assert_eq!(tgt.lines().next(), Some(c.test[0].target.as_str()));
    let pairs = generate_contrast_pairs(&spec, "case", 20).unwrap();
    let path = dir.path().join("pairs.tsv");
    write_contrast_pairs(&path, &pairs).unwrap();
    assert_eq!(read_contrast_pairs(&path).unwrap(), pairs);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn forms_segment_uniquely(seed in any::<u64>(), stems in 1usize..40, slots in 0usize..4, fus in any::<bool>()) {
        let t = if fus { Typology::Fusional } else { Typology::Agglutinative };
        let spec = SynthLangSpec::agglutinative(stems, slots, seed).with_typology(t);
        let c = generate_corpus(&SynthLangSpec { valid_size: 0, test_size: 0, sentence_length: (1, 2), ..spec.clone() }, 20.min(stems * stems)).unwrap();
        let lang = SynthLanguage::new(&spec).unwrap();
        for p in &c.train {
            for w in p.target.split_whitespace() {
                prop_assert_eq!(lang.analyses(w).len(), 1);
            }
        }
    }
}
