//! Acceptance suite: one PASS/FAIL line per criterion; exits non-zero if
//! any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use hnmt::bpe::{join_units, learn_bpe, BpeModel};
use hnmt::codec::{Codec, CodecOptions};
use hnmt::eval::{accuracy, bleu, bootstrap_significance, contrast_accuracy, Accuracy};
use hnmt::gradcheck::{check_params, GradCheckReport, DEFAULT_EPS};
use hnmt::graph::{Graph, Var};
use hnmt::layers::{attend_memory, BiRnn, GruCell, StackedRnn, WordComposer};
use hnmt::model::{Model, ModelConfig, Scope, Variant};
use hnmt::params::{Initializer, ParamStore};
use hnmt::search::{beam_search_flat, hierarchical_beam_search, translate, SearchOptions};
use hnmt::synth::{
    generate_contrast_pairs, generate_corpus, gold_target, SynthCorpus, SynthLangSpec,
    SynthLanguage,
};
use hnmt::tensor::{Result as TResult, Tensor};
use hnmt::train::{Checkpoint, Example, HookAction, TrainConfig, Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient fidelity", gradient_fidelity),
        ("search-oracle equivalence", search_oracle_equivalence),
        ("beam monotonicity", beam_monotonicity),
        ("BPE fixtures", bpe_fixtures),
        ("parameter counts", parameter_counts),
        ("attention-call efficiency", attention_calls),
        ("end-to-end learnability", learnability),
        ("contrast harness closure", contrast_closure),
        ("metric fixtures", metric_fixtures),
        ("determinism and checkpointing", determinism),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {n:>2} {name} ({secs:.1}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {n:>2} {name} ({secs:.1}s): {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- 1

fn weighted_sum(g: &mut Graph, outputs: &[Var], seed: u64) -> TResult<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total: Option<Var> = None;
    for &o in outputs {
        let n = g.value(o).len();
        let w = g.constant(Tensor::new(
            vec![n],
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )?);
        let p = g.mul(o, w)?;
        let s = g.sum(p)?;
        total = Some(match total {
            Some(t) => g.add(t, s)?,
            None => s,
        });
    }
    Ok(total.expect("at least one output"))
}

fn inputs(g: &mut Graph, n: usize, width: usize, seed: u64) -> Vec<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    (0..n)
        .map(|_| {
            g.constant(
                Tensor::new(
                    vec![width],
                    (0..width).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                )
                .unwrap(),
            )
        })
        .collect()
}

fn layer_check(draw: u64, which: usize) -> GradCheckReport {
    let mut store = ParamStore::new();
    let mut init = Initializer::new(draw, 0.6);
    let seed = draw * 31 + which as u64;
    match which {
        0 => {
            let cell = GruCell::new(&mut store, &mut init, "gru", 3, 4);
            check_params(
                &mut store,
                |g| {
                    let x = inputs(g, 3, 3, seed);
                    let mut h = inputs(g, 1, 4, seed + 1)[0];
                    let mut outs = vec![];
                    for &xi in &x {
                        h = cell.step(g, xi, h)?;
                        outs.push(h);
                    }
                    weighted_sum(g, &outs, seed)
                },
                3,
                DEFAULT_EPS,
                seed,
            )
        }
        1 => {
            let rnn = BiRnn::new(&mut store, &mut init, "bi", 3, 4);
            check_params(
                &mut store,
                |g| {
                    let x = inputs(g, 4, 3, seed);
                    let out = rnn.run(g, &x)?;
                    weighted_sum(g, &out.states, seed)
                },
                3,
                DEFAULT_EPS,
                seed,
            )
        }
        2 => {
            let comp = WordComposer::new(&mut store, &mut init, "comp", 3, 4, 5);
            check_params(
                &mut store,
                |g| {
                    let x = inputs(g, 3, 3, seed);
                    let w = comp.compose(g, &x)?;
                    weighted_sum(g, &[w], seed)
                },
                3,
                DEFAULT_EPS,
                seed,
            )
        }
        _ => {
            let stack = StackedRnn::new(
                &mut store,
                &mut init,
                "stack",
                3,
                4,
                3,
                Some(1),
                vec![(0, 1)],
            )
            .unwrap();
            check_params(
                &mut store,
                |g| {
                    let x = inputs(g, 3, 3, seed);
                    let mem_rows = inputs(g, 3, 4, seed + 7);
                    let memory = g.stack_rows(&mem_rows)?;
                    let mut h = stack.initial_state(g);
                    let mut outs = vec![];
                    for &xi in &x {
                        let s = stack.step(g, xi, &h, Some(memory))?;
                        let (c, _) = attend_memory(g, s.output, memory)?;
                        outs.push(s.output);
                        outs.push(c);
                        h = s.hidden;
                    }
                    weighted_sum(g, &outs, seed)
                },
                3,
                DEFAULT_EPS,
                seed,
            )
        }
    }
    .unwrap()
}

fn gradient_fidelity() -> Outcome {
    const DRAWS: u64 = 100;
    let names = ["gru", "birnn", "composer", "stacked+attention"];
    let mut summary = vec![];
    let mut check = |name: String, r: GradCheckReport| -> Result<(), String> {
        ensure!(
            r.max_relative_error < 1e-4,
            "{name}: relative error {:.2e} at {:?}",
            r.max_relative_error,
            r.worst
        );
        summary.push(format!("{name} {:.1e}", r.max_relative_error));
        Ok(())
    };
    for (k, name) in names.iter().enumerate() {
        let mut all = GradCheckReport::default();
        for d in 0..DRAWS {
            all.merge(layer_check(d, k));
        }
        check(name.to_string(), all)?;
    }
    for v in Variant::ALL {
        let mut all = GradCheckReport::default();
        for d in 0..DRAWS {
            let mut c = ModelConfig::defaults(v, 6, 10).scaled(4, 6, 4);
            c.init_scale = 0.5;
            c.seed = d;
            c.dropout = 0.0;
            c.max_word_length = 4;
            let model = Model::new(c).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(d);
            let src: Vec<usize> = (0..rng.gen_range(1..4))
                .map(|_| rng.gen_range(0..6))
                .collect();
            let tgt: Vec<usize> = if v == Variant::Hierarchical {
                let mut t = vec![];
                for _ in 0..rng.gen_range(1..3) {
                    t.extend((0..rng.gen_range(1..4)).map(|_| rng.gen_range(5..10)));
                    t.push(hnmt::vocab::EOW);
                }
                t.push(hnmt::vocab::EOS);
                t
            } else {
                let mut t: Vec<usize> = (0..rng.gen_range(1..5))
                    .map(|_| rng.gen_range(3..10))
                    .collect();
                t.push(hnmt::vocab::EOS);
                t
            };
            let mut store = model.params().clone();
            let r = check_params(
                &mut store,
                |g| Ok(model.sentence_nll(g, &src, &tgt).unwrap().0),
                2,
                DEFAULT_EPS,
                d,
            )
            .unwrap();
            all.merge(r);
        }
        check(format!("{v} model"), all)?;
    }
    Ok(format!(
        "{DRAWS} draws each; max relative error: {}",
        summary.join(", ")
    ))
}

// ---------------------------------------------------------------- 2

fn search_oracle_equivalence() -> Outcome {
    let opts = SearchOptions {
        max_len: 4,
        max_word_len: 2,
        length_normalize: false,
    };
    let hopts = SearchOptions { max_len: 2, ..opts };
    let flat_targets = common::enumerate_flat(4, 4);
    let hier_targets = common::enumerate_hier(5, 2, 2);
    let mut compared = 0;
    for seed in 0..50u64 {
        for v in Variant::ALL {
            let (m, targets) = if v == Variant::Hierarchical {
                (common::tiny_model(v, 5, seed, 1.5), &hier_targets)
            } else {
                (common::tiny_model(v, 4, seed, 1.5), &flat_targets)
            };
            for src in [vec![(seed % 5) as usize], vec![1, (seed % 4) as usize + 1]] {
                let (best, score) = common::exhaustive_best(&m, &src, targets);
                let h = match v {
                    Variant::Hierarchical => hierarchical_beam_search(&m, &src, 10_000, &hopts),
                    _ => beam_search_flat(&m, &src, 10_000, &opts),
                }
                .map_err(|e| e.to_string())?;
                ensure!(
                    h.seq == best,
                    "{v} seed {seed}: beam {:?} vs exhaustive {:?}",
                    h.seq,
                    best
                );
                let ll = m.sentence_log_likelihood(&src, &h.seq).unwrap();
                ensure!(
                    (h.score - ll).abs() < 1e-10 && (h.score - score).abs() < 1e-10,
                    "{v} seed {seed}: score {} vs {ll}",
                    h.score
                );
                compared += 1;
            }
        }
    }
    Ok(format!(
        "50 random models per variant, {compared} searches equal the exhaustive argmax"
    ))
}

// ---------------------------------------------------------------- 3, 7, 8

const TASK_SEED: u64 = 7;

struct Trained {
    codec: Codec,
    model: Model,
    params: usize,
    train_time: Duration,
    epochs: usize,
}

struct Task {
    corpus: SynthCorpus,
    spec: SynthLangSpec,
    hier: Trained,
    char: Trained,
    subword: Trained,
}

fn task_spec() -> SynthLangSpec {
    let mut spec = SynthLangSpec::agglutinative(20, 3, TASK_SEED);
    spec.sentence_length = (1, 2);
    spec
}

fn model_config(variant: Variant, codec: &Codec) -> ModelConfig {
    let mut c = ModelConfig::defaults(
        variant,
        codec.source.vocab.len(),
        codec.target.vocab().len(),
    );
    c = match variant {
        Variant::Hierarchical => {
            let mut c = c.scaled(32, 48, 48);
            c.decoder_layers = 2;
            c
        }
        Variant::Character => c.scaled(32, 62, 31),
        Variant::Subword => c.scaled(32, 48, 24),
    };
    c.encoder_layers = 1;
    c.dropout = 0.0;
    c.seed = TASK_SEED;
    c
}

fn train_variant(variant: Variant, corpus: &SynthCorpus, epochs: usize) -> Trained {
    let src: Vec<&str> = corpus.train.iter().map(|p| p.source.as_str()).collect();
    let tgt: Vec<&str> = corpus.train.iter().map(|p| p.target.as_str()).collect();
    let opts = CodecOptions {
        source_merges: 500,
        target_merges: 500,
        ..Default::default()
    };
    let codec = Codec::build(variant, &src, &tgt, &opts).unwrap();
    let examples = |ps: &[hnmt::synth::SentencePair]| -> Vec<Example> {
        ps.iter()
            .map(|p| {
                Example::new(
                    codec.source.encode(&p.source),
                    codec.target.encode(&p.target),
                )
            })
            .collect()
    };
    let (train, valid) = (examples(&corpus.train), examples(&corpus.valid));
    let model = Model::new(model_config(variant, &codec)).unwrap();
    let params = model.count_parameters(Scope::All);
    let config = TrainConfig {
        learning_rate: 0.003,
        // Halving on every stalled epoch starves the hierarchical decoder
        // long before it converges; a gentler decay reaches the target.
        decay: 0.8,
        patience: 10,
        batch_size: 20,
        dropout: 0.0,
        max_epochs: epochs,
        seed: TASK_SEED,
        ..Default::default()
    };
    let start = Instant::now();
    let mut t = Trainer::new(model, config).unwrap();
    t.fit(&train, &valid, |_, _| Ok(HookAction::Continue))
        .unwrap();
    Trained {
        codec,
        model: t.best_model().unwrap(),
        params,
        train_time: start.elapsed(),
        epochs: t.progress.history.len(),
    }
}

fn task() -> &'static Task {
    static TASK: OnceLock<Task> = OnceLock::new();
    TASK.get_or_init(|| {
        let spec = task_spec();
        let corpus = generate_corpus(&spec, 2000).unwrap();
        Task {
            hier: train_variant(Variant::Hierarchical, &corpus, 40),
            char: train_variant(Variant::Character, &corpus, 15),
            subword: train_variant(Variant::Subword, &corpus, 15),
            corpus,
            spec,
        }
    })
}

fn translate_text(t: &Trained, source: &str, beam: usize) -> (String, f64) {
    let opts = SearchOptions::from_config(t.model.config());
    let h = translate(&t.model, &t.codec.source.encode(source), beam, &opts).unwrap();
    (t.codec.target.decode(&h.seq), h.score)
}

fn beam_monotonicity() -> Outcome {
    let task = task();
    let sentences: Vec<&str> = task
        .corpus
        .test
        .iter()
        .take(100)
        .map(|p| p.source.as_str())
        .collect();
    let mut lines = vec![];
    for (v, t) in [
        (Variant::Subword, &task.subword),
        (Variant::Character, &task.char),
        (Variant::Hierarchical, &task.hier),
    ] {
        let means: Vec<f64> = [1, 2, 4, 8]
            .iter()
            .map(|&b| {
                sentences
                    .iter()
                    .map(|s| translate_text(t, s, b).1)
                    .sum::<f64>()
                    / sentences.len() as f64
            })
            .collect();
        ensure!(
            means.windows(2).all(|w| w[1] >= w[0]),
            "{v}: mean scores {means:?} decrease with beam size"
        );
        lines.push(format!("{v} {:.4}→{:.4}", means[0], means[3]));
    }
    Ok(format!(
        "mean log-prob non-decreasing over B=1,2,4,8 on 100 sentences: {}",
        lines.join(", ")
    ))
}

fn test_accuracy(t: &Trained, corpus: &SynthCorpus) -> Accuracy {
    let outs: Vec<String> = corpus
        .test
        .iter()
        .map(|p| translate_text(t, &p.source, 1).0)
        .collect();
    let refs: Vec<&str> = corpus.test.iter().map(|p| p.target.as_str()).collect();
    accuracy(&outs, &refs).unwrap()
}

fn learnability() -> Outcome {
    let task = task();
    let (h, c) = (&task.hier, &task.char);
    let ha = test_accuracy(h, &task.corpus);
    let ca = test_accuracy(c, &task.corpus);
    let detail = format!(
        "hierarchical {} params, {} epochs in {:.0}s: char {:.2}%, exact {:.1}%; character {} params: exact {:.1}%",
        h.params,
        h.epochs,
        h.train_time.as_secs_f64(),
        100.0 * ha.character,
        100.0 * ha.exact,
        c.params,
        100.0 * ca.exact
    );
    ensure!(
        h.params <= 100_000,
        "hierarchical model too large; {detail}"
    );
    ensure!(
        (c.params as f64 / h.params as f64 - 1.0).abs() <= 0.05,
        "parameter counts not matched; {detail}"
    );
    ensure!(
        h.train_time <= Duration::from_secs(15 * 60),
        "training exceeded 15 minutes; {detail}"
    );
    ensure!(
        ha.character >= 0.99 && ha.exact >= 0.90,
        "hierarchical below target; {detail}"
    );
    ensure!(
        ca.exact >= 0.80,
        "character baseline below target; {detail}"
    );
    Ok(detail)
}

fn contrast_closure() -> Outcome {
    let spec = task_spec();
    let lang = SynthLanguage::new(&spec).unwrap();
    let mut lines = vec![];
    for feature in ["number", "case", "possessive"] {
        let pairs = generate_contrast_pairs(&spec, feature, 200).unwrap();
        let gold: Vec<(String, String)> = pairs
            .iter()
            .map(|p| {
                (
                    gold_target(&lang, &p.source_base).unwrap(),
                    gold_target(&lang, &p.source_variant).unwrap(),
                )
            })
            .collect();
        let acc = contrast_accuracy(&gold, &pairs)
            .unwrap()
            .accuracy(feature)
            .unwrap();
        ensure!(acc == 1.0, "gold outputs score {acc} on {feature}");
        let constant: Vec<(&str, &str)> =
            gold.iter().map(|(b, _)| (b.as_str(), b.as_str())).collect();
        let acc = contrast_accuracy(&constant, &pairs)
            .unwrap()
            .accuracy(feature)
            .unwrap();
        ensure!(acc == 0.0, "constant system scores {acc} on {feature}");
    }
    lines.push("gold 100% and constant 0% on number, case, possessive".to_string());
    let task = task();
    let pairs = generate_contrast_pairs(&task.spec, "number", 200).unwrap();
    let outs: Vec<(String, String)> = pairs
        .iter()
        .map(|p| {
            (
                translate_text(&task.hier, &p.source_base, 1).0,
                translate_text(&task.hier, &p.source_variant, 1).0,
            )
        })
        .collect();
    let report = contrast_accuracy(&outs, &pairs).unwrap();
    let acc = report.accuracy("number").unwrap();
    ensure!(
        acc >= 0.90,
        "trained hierarchical model scores {:.1}% on plural contrast",
        100.0 * acc
    );
    lines.push(format!(
        "trained hierarchical model {:.1}% on plural contrast",
        100.0 * acc
    ));
    Ok(lines.join("; "))
}

// ---------------------------------------------------------------- 4

fn bpe_fixtures() -> Outcome {
    let fixture: BTreeMap<String, u64> = [("low".to_string(), 5), ("lowest".to_string(), 2)].into();
    let m = learn_bpe(&fixture, 3).unwrap();
    let want = [("l", "o"), ("lo", "w"), ("low", "</w>")];
    ensure!(
        m.merges()
            .iter()
            .map(|(a, b)| (a.as_str(), b.as_str()))
            .eq(want.iter().copied()),
        "fixture merges {:?}",
        m.merges()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let alphabet: Vec<char> = "abcdefghijklmnopqrstuvwxyzäöüç".chars().collect();
    let random_word = |rng: &mut ChaCha8Rng| -> String {
        (0..rng.gen_range(1..12))
            .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
            .collect()
    };
    let mut corpus = BTreeMap::new();
    for _ in 0..2000 {
        *corpus.entry(random_word(&mut rng)).or_insert(0) += rng.gen_range(1..5);
    }
    let model = learn_bpe(&corpus, 300).unwrap();
    for _ in 0..10_000 {
        let w = random_word(&mut rng);
        ensure!(
            join_units(&model.apply(&w)) == w,
            "round trip failed for {w:?}"
        );
    }

    let mut previous: Option<Vec<usize>> = None;
    for k in 0..=50 {
        let m: BpeModel = learn_bpe(&corpus, k).unwrap();
        let counts: Vec<usize> = corpus.keys().map(|w| m.apply(w).len()).collect();
        if let Some(p) = &previous {
            ensure!(
                counts.iter().zip(p).all(|(a, b)| a <= b),
                "unit count grew at {k} merges"
            );
        }
        previous = Some(counts);
    }
    Ok("fixture merges exact; 10^4 random words round-trip; unit counts monotone over 0..=50 merges".into())
}

// ---------------------------------------------------------------- 5

fn parameter_counts() -> Outcome {
    let sub = ModelConfig::defaults(Variant::Subword, 16_000, 16_000);
    let hier = ModelConfig::defaults(Variant::Hierarchical, 16_000, 300);
    let s = sub.parameter_count(Scope::DecoderOnly) as f64;
    let h = hier.parameter_count(Scope::DecoderOnly) as f64;
    let detail = format!(
        "subword decoder {:.2}M, hierarchical decoder {:.2}M, ratio {:.2}",
        s / 1e6,
        h / 1e6,
        s / h
    );
    ensure!(
        (s / 22e6 - 1.0).abs() <= 0.25,
        "subword off target; {detail}"
    );
    ensure!(
        (h / 7.3e6 - 1.0).abs() <= 0.25,
        "hierarchical off target; {detail}"
    );
    ensure!(
        (s / h / 3.0 - 1.0).abs() <= 0.25,
        "ratio off target; {detail}"
    );
    // Build the hierarchical decoder for real to confirm it stores no word embeddings.
    let small_source = ModelConfig {
        source_vocab: 10,
        ..hier.clone()
    };
    let m = Model::new(small_source).unwrap();
    ensure!(
        m.word_embedding_parameters() == 0,
        "hierarchical model has word embeddings"
    );
    ensure!(
        m.count_parameters(Scope::DecoderOnly) as f64 == h,
        "analytic count disagrees with the built model"
    );
    Ok(format!(
        "{detail}; hierarchical word-embedding parameters 0"
    ))
}

// ---------------------------------------------------------------- 6

fn attention_calls() -> Outcome {
    let words = ["abcdef", "ghijkl", "mnopqr", "stuvwx", "yzabcd"];
    let sentence = words.join(" ");
    assert_eq!(words.iter().map(|w| w.len()).sum::<usize>(), 30);
    let src = ["a b c d e"];
    let mut counts = vec![];
    for v in [Variant::Hierarchical, Variant::Character] {
        let codec = Codec::build(v, &src, &[sentence.as_str()], &CodecOptions::default()).unwrap();
        let mut c = ModelConfig::defaults(v, codec.source.vocab.len(), codec.target.vocab().len())
            .scaled(8, 8, 4);
        c.dropout = 0.0;
        let m = Model::new(c).unwrap();
        let mut g = m.graph();
        m.sentence_nll(
            &mut g,
            &codec.source.encode(src[0]),
            &codec.target.encode(&sentence),
        )
        .unwrap();
        counts.push(g.counters().attention_calls);
    }
    ensure!(
        counts[0] == 6,
        "hierarchical decoder made {} attention calls",
        counts[0]
    );
    ensure!(
        counts[1] >= 30,
        "character decoder made {} attention calls",
        counts[1]
    );
    Ok(format!(
        "5 words / 30 characters: hierarchical {} calls, character {} calls",
        counts[0], counts[1]
    ))
}

// ---------------------------------------------------------------- 9

fn metric_fixtures() -> Outcome {
    let corpus = generate_corpus(&SynthLangSpec::agglutinative(20, 3, 1), 100).unwrap();
    let refs: Vec<&str> = corpus.test.iter().map(|p| p.target.as_str()).collect();
    let (same, _) = bleu(&refs, &refs, 4).unwrap();
    ensure!(same == 1.0, "BLEU(x, x) = {same}");
    let (b3, _) = bleu(&["the cat sat"], &["the cat sat down"], 3).unwrap();
    ensure!((b3 - 0.71653).abs() < 1e-5, "BLEU-3 fixture {b3}");
    let mut min_p: f64 = 1.0;
    for seed in 0..20 {
        let r = bootstrap_significance(&refs, &refs, &refs, 1000, seed).unwrap();
        min_p = min_p.min(r.p_value);
    }
    ensure!(min_p >= 0.05, "identical systems reported p = {min_p}");
    let noisy: Vec<String> = refs
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if i % 3 == 0 {
                format!("{r} x")
            } else {
                r.to_string()
            }
        })
        .collect();
    let a = bootstrap_significance(
        &noisy,
        &refs.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
        &noisy,
        1000,
        77,
    )
    .unwrap();
    let b = bootstrap_significance(
        &noisy,
        &refs.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
        &noisy,
        1000,
        77,
    )
    .unwrap();
    ensure!(
        a.p_value.to_bits() == b.p_value.to_bits(),
        "bootstrap not reproducible"
    );
    Ok(format!("BLEU(x,x)=1, BLEU-3 fixture {b3:.5}, identical-system p ≥ {min_p}, fixed-seed p {} reproduced", a.p_value))
}

// ---------------------------------------------------------------- 10

fn determinism() -> Outcome {
    let corpus = generate_corpus(
        &SynthLangSpec {
            valid_size: 20,
            test_size: 1,
            ..SynthLangSpec::agglutinative(8, 2, 3)
        },
        60,
    )
    .unwrap();
    let src: Vec<&str> = corpus.train.iter().map(|p| p.source.as_str()).collect();
    let tgt: Vec<&str> = corpus.train.iter().map(|p| p.target.as_str()).collect();
    let mut checked = vec![];
    for v in Variant::ALL {
        let codec = Codec::build(
            v,
            &src,
            &tgt,
            &CodecOptions {
                source_merges: 50,
                target_merges: 50,
                ..Default::default()
            },
        )
        .unwrap();
        let ex = |ps: &[hnmt::synth::SentencePair]| -> Vec<Example> {
            ps.iter()
                .map(|p| {
                    Example::new(
                        codec.source.encode(&p.source),
                        codec.target.encode(&p.target),
                    )
                })
                .collect()
        };
        let (train, valid) = (ex(&corpus.train), ex(&corpus.valid));
        let mut c = ModelConfig::defaults(v, codec.source.vocab.len(), codec.target.vocab().len())
            .scaled(8, 10, 6);
        c.encoder_layers = 1;
        let config = TrainConfig {
            learning_rate: 0.01,
            batch_size: 16,
            dropout: 0.1,
            max_epochs: 4,
            seed: 9,
            ..Default::default()
        };
        let history = |t: &Trainer| -> Vec<(u64, Option<u64>)> {
            t.progress
                .history
                .iter()
                .map(|r| (r.train_loss.to_bits(), r.valid_loss.map(f64::to_bits)))
                .collect()
        };
        let run = |stop: Option<usize>| -> Trainer {
            let mut t = Trainer::new(Model::new(c.clone()).unwrap(), config.clone()).unwrap();
            t.fit(&train, &valid, |r, _| {
                Ok(if Some(r.epoch) == stop {
                    HookAction::Stop
                } else {
                    HookAction::Continue
                })
            })
            .unwrap();
            t
        };
        let (a, b) = (run(None), run(None));
        ensure!(
            history(&a) == history(&b),
            "{v}: loss histories differ between identical runs"
        );
        ensure!(
            a.model.params() == b.model.params(),
            "{v}: parameters differ between identical runs"
        );

        let half = run(Some(2));
        let bytes = half.checkpoint(Some(codec.clone())).to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        ensure!(
            back.to_bytes() == bytes,
            "{v}: checkpoint bytes change on round trip"
        );
        ensure!(
            back.params == *half.model.params(),
            "{v}: checkpoint parameters differ"
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("half.ckpt");
        back.save(&path).unwrap();
        let mut resumed = Trainer::from_checkpoint(Checkpoint::load(&path).unwrap(), None).unwrap();
        resumed
            .fit(&train, &valid, |_, _| Ok(HookAction::Continue))
            .unwrap();
        ensure!(
            history(&resumed) == history(&a),
            "{v}: resumed history differs from uninterrupted run"
        );
        ensure!(
            resumed.model.params() == a.model.params(),
            "{v}: resumed parameters differ"
        );
        ensure!(
            resumed.adam == a.adam,
            "{v}: resumed optimizer state differs"
        );
        checked.push(v.to_string());
    }
    Ok(format!(
        "bit-exact histories, checkpoint round trip and resume for {}",
        checked.join(", ")
    ))
}
