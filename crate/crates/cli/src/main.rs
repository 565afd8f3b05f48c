mod config;
mod error;

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use hnmt::bpe::{learn_bpe, BpeModel};
use hnmt::codec::{word_counts, Codec};
use hnmt::eval::{
    bleu, bootstrap_significance, contrast_accuracy, corpus_stats, read_contrast_pairs,
    write_contrast_pairs,
};
use hnmt::model::{Model, Scope, Variant};
use hnmt::search::{translate, SearchOptions};
use hnmt::synth::{generate_contrast_pairs, generate_corpus, SynthLangSpec, Typology};
use hnmt::train::{filter_by_length, Checkpoint, Example, HookAction, Trainer};
use hnmt::vocab::{VocabKind, Vocabulary};

use config::{parse_override, RunConfig, SEED_ENV, THREADS_ENV};
use error::CliError;

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "hnmt",
    version,
    about = "Hierarchical word-character neural machine translation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set hidden=256`; may repeat.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self, extra: &[(String, String)]) -> Result<RunConfig> {
        let mut overrides = self
            .set
            .iter()
            .map(|s| parse_override(s))
            .collect::<Result<Vec<_>>>()?;
        overrides.extend(extra.iter().cloned());
        RunConfig::resolve(self.config.as_deref(), &overrides)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Token,
    Char,
}

#[derive(Clone, Copy, ValueEnum)]
enum TypologyArg {
    Agglutinative,
    Fusional,
    Isolating,
}

#[derive(Subcommand)]
enum Command {
    /// Learn BPE merge rules from whitespace-tokenized text.
    LearnBpe {
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long, default_value_t = 16_000)]
        merges: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Segment text with learned merges; units are space-separated.
    ApplyBpe {
        #[arg(long)]
        codes: PathBuf,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build a frequency-ordered vocabulary file.
    BuildVocab {
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        /// Count BPE units produced by these merges instead of words.
        #[arg(long)]
        codes: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = KindArg::Token)]
        kind: KindArg,
        #[arg(long, default_value_t = 50_000)]
        max_size: usize,
        #[arg(long, default_value_t = 1)]
        min_count: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Generate a synthetic morphology task and optional contrast pairs.
    SynthGen {
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long, default_value_t = 20)]
        stems: usize,
        #[arg(long, default_value_t = 3)]
        slots: usize,
        #[arg(long, value_enum, default_value_t = TypologyArg::Agglutinative)]
        typology: TypologyArg,
        /// Training sentences.
        #[arg(long, default_value_t = 2000)]
        size: usize,
        #[arg(long, default_value_t = 100)]
        valid: usize,
        #[arg(long, default_value_t = 200)]
        test: usize,
        #[arg(long, default_value_t = 1)]
        min_words: usize,
        #[arg(long, default_value_t = 3)]
        max_words: usize,
        #[arg(long, default_value_t = 0.0)]
        zipf: f64,
        #[arg(long)]
        seed: Option<u64>,
        /// Feature to build contrast pairs for; may repeat.
        #[arg(long)]
        contrast: Vec<String>,
        #[arg(long, default_value_t = 200)]
        contrast_count: usize,
    },
    /// Train a model; writes run.conf, train.log.jsonl, last.ckpt and best.ckpt.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        output_dir: PathBuf,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Translate one sentence per line.
    Translate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        beam: usize,
        /// Worker threads; 0 uses every core.
        #[arg(long)]
        threads: Option<usize>,
        /// Also write each output's model log-probability, one per line.
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Decode with the final rather than the best parameters.
        #[arg(long)]
        use_last: bool,
        #[arg(long)]
        length_normalize: bool,
    },
    /// Corpus BLEU of hypotheses against references.
    EvaluateBleu {
        #[arg(long)]
        hypotheses: PathBuf,
        #[arg(long)]
        references: PathBuf,
        #[arg(long, default_value_t = 4)]
        max_n: usize,
    },
    /// Paired bootstrap test of system B against system A.
    Significance {
        #[arg(long)]
        system_a: PathBuf,
        #[arg(long)]
        system_b: PathBuf,
        #[arg(long)]
        references: PathBuf,
        #[arg(long, default_value_t = 1000)]
        resamples: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Contrast-pair accuracy; outputs alternate base and variant lines.
    EvaluateContrast {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        outputs: PathBuf,
    },
    /// Token, type and length statistics per file.
    Stats {
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
    },
    /// Analytic parameter counts for one or more variants.
    CountParams {
        #[command(flatten)]
        config: ConfigArgs,
        /// Variants to report; defaults to the configured one.
        #[arg(long)]
        variant: Vec<Variant>,
        #[arg(long, default_value_t = 16_000)]
        source_vocab: usize,
        /// Target vocabulary for the subword variant.
        #[arg(long, default_value_t = 16_000)]
        target_vocab: usize,
        /// Target vocabulary for the character and hierarchical variants.
        #[arg(long, default_value_t = 300)]
        char_vocab: usize,
    },
}

fn read_text(path: Option<&Path>) -> Result<String> {
    let mut s = String::new();
    match path {
        Some(p) => File::open(p)
            .and_then(|mut f| f.read_to_string(&mut s))
            .map_err(|e| CliError::io(p, e))?,
        None => std::io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| CliError::io(Path::new("<stdin>"), e))?,
    };
    Ok(s)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    BufReader::new(f)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| CliError::io(path, e))
}

fn require(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ))
    }
}

/// Refuses to write over any input.
fn guard_output(output: &Path, inputs: &[&Path]) -> Result<()> {
    let canon = |p: &Path| std::fs::canonicalize(p).ok();
    if let Some(o) = canon(output) {
        if inputs.iter().any(|i| canon(i).as_ref() == Some(&o)) {
            return Err(CliError::Config(format!(
                "output {} would overwrite an input",
                output.display()
            )));
        }
    }
    Ok(())
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

fn env_number<T: std::str::FromStr>(var: &str) -> Result<Option<T>> {
    match std::env::var(var) {
        Ok(v) => v
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{var}: cannot parse {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn seed_or_env(flag: Option<u64>, default: u64) -> Result<u64> {
    Ok(match flag {
        Some(s) => s,
        None => env_number(SEED_ENV)?.unwrap_or(default),
    })
}

fn log(record: serde_json::Value) {
    eprintln!("{record}");
}

fn cmd_learn_bpe(input: &[PathBuf], merges: usize, output: &Path) -> Result<()> {
    input.iter().try_for_each(|p| require(p))?;
    guard_output(
        output,
        &input.iter().map(PathBuf::as_path).collect::<Vec<_>>(),
    )?;
    let mut text = String::new();
    for p in input {
        text.push_str(&read_text(Some(p))?);
        text.push('\n');
    }
    let model = learn_bpe(&word_counts(text.lines()), merges).map_err(CliError::data)?;
    model.save(output).map_err(|e| CliError::data(e))?;
    log(
        json!({"event": "learn-bpe", "merges": model.len(), "output": output.display().to_string()}),
    );
    Ok(())
}

fn cmd_apply_bpe(codes: &Path, input: Option<&Path>, output: Option<&Path>) -> Result<()> {
    require(codes)?;
    if let (Some(o), Some(i)) = (output, input) {
        guard_output(o, &[i, codes])?;
    }
    let model = BpeModel::load(codes).map_err(CliError::data)?;
    let text = read_text(input)?;
    let mut out = String::new();
    for line in text.lines() {
        let units: Vec<String> = line
            .split_whitespace()
            .flat_map(|w| model.apply(w))
            .collect();
        out.push_str(&units.join(" "));
        out.push('\n');
    }
    write_out(output, &out)
}

fn cmd_build_vocab(
    input: &[PathBuf],
    codes: Option<&Path>,
    kind: KindArg,
    max_size: usize,
    min_count: u64,
    output: &Path,
) -> Result<()> {
    input.iter().try_for_each(|p| require(p))?;
    guard_output(
        output,
        &input.iter().map(PathBuf::as_path).collect::<Vec<_>>(),
    )?;
    let bpe = codes
        .map(BpeModel::load)
        .transpose()
        .map_err(CliError::data)?;
    let mut text = String::new();
    for p in input {
        text.push_str(&read_text(Some(p))?);
        text.push('\n');
    }
    let words = word_counts(text.lines());
    let vocab = match kind {
        KindArg::Char => Vocabulary::characters(
            words.iter().map(|(w, c)| (w.as_str(), *c)),
            max_size,
            min_count,
        ),
        KindArg::Token => {
            let mut counts = std::collections::BTreeMap::new();
            for (w, c) in &words {
                let units = bpe.as_ref().map_or_else(|| vec![w.clone()], |b| b.apply(w));
                for u in units {
                    *counts.entry(u).or_insert(0) += c;
                }
            }
            Vocabulary::build(
                counts.iter().map(|(u, c)| (u.as_str(), *c)),
                VocabKind::Token,
                max_size,
                min_count,
            )
        }
    }
    .map_err(CliError::data)?;
    vocab.save(output).map_err(CliError::data)?;
    log(
        json!({"event": "build-vocab", "size": vocab.len(), "output": output.display().to_string()}),
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth_gen(
    dir: &Path,
    stems: usize,
    slots: usize,
    typology: TypologyArg,
    size: usize,
    valid: usize,
    test: usize,
    words: (usize, usize),
    zipf: f64,
    seed: Option<u64>,
    contrast: &[String],
    contrast_count: usize,
) -> Result<()> {
    let typology = match typology {
        TypologyArg::Agglutinative => Typology::Agglutinative,
        TypologyArg::Fusional => Typology::Fusional,
        TypologyArg::Isolating => Typology::Isolating,
    };
    let max_slots = hnmt::synth::standard_slots().len();
    if slots > max_slots {
        return Err(CliError::Config(format!(
            "at most {max_slots} slots are built in"
        )));
    }
    let mut spec =
        SynthLangSpec::agglutinative(stems, slots, seed_or_env(seed, 1)?).with_typology(typology);
    spec.sentence_length = words;
    spec.zipf = zipf;
    spec.valid_size = valid;
    spec.test_size = test;
    for f in contrast {
        if !spec.slots.iter().any(|s| &s.feature == f) {
            return Err(CliError::Config(format!("unknown contrast feature {f:?}")));
        }
    }
    let corpus = generate_corpus(&spec, size).map_err(CliError::data)?;
    corpus.write(dir).map_err(CliError::data)?;
    let spec_json = serde_json::to_string_pretty(&spec).map_err(CliError::run)?;
    let spec_path = dir.join("spec.json");
    std::fs::write(&spec_path, spec_json).map_err(|e| CliError::io(&spec_path, e))?;
    for f in contrast {
        let pairs = generate_contrast_pairs(&spec, f, contrast_count).map_err(CliError::data)?;
        write_contrast_pairs(&dir.join(format!("contrast_{f}.tsv")), &pairs)
            .map_err(CliError::data)?;
    }
    log(
        json!({"event": "synth-gen", "train": corpus.train.len(), "valid": corpus.valid.len(), "test": corpus.test.len(), "dir": dir.display().to_string()}),
    );
    Ok(())
}

fn read_parallel(src: &Path, tgt: &Path) -> Result<(Vec<String>, Vec<String>)> {
    let (s, t) = (read_lines(src)?, read_lines(tgt)?);
    if s.len() != t.len() {
        return Err(CliError::Data(format!(
            "{} has {} lines but {} has {}",
            src.display(),
            s.len(),
            tgt.display(),
            t.len()
        )));
    }
    Ok((s, t))
}

fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    ckpt.save(path)
        .map_err(|e| CliError::Run(format!("saving {}: {e}", path.display())))
}

fn cmd_train(args: &ConfigArgs, dir: &Path, resume: Option<&Path>) -> Result<()> {
    let mut cfg = args.resolve(&[])?;
    let missing = |k: &str| CliError::Config(format!("{k} is required for training"));
    let train_src = cfg
        .train_source
        .clone()
        .ok_or_else(|| missing("train_source"))?;
    let train_tgt = cfg
        .train_target
        .clone()
        .ok_or_else(|| missing("train_target"))?;
    for p in [
        Some(&train_src),
        Some(&train_tgt),
        cfg.valid_source.as_ref(),
        cfg.valid_target.as_ref(),
    ]
    .into_iter()
    .flatten()
    {
        require(p)?;
    }
    if cfg.valid_source.is_some() != cfg.valid_target.is_some() {
        return Err(CliError::Config(
            "valid_source and valid_target must be given together".into(),
        ));
    }
    if let Some(r) = resume {
        require(r)?;
    }
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;

    let (src, tgt) = read_parallel(&train_src, &train_tgt)?;
    let (codec, trainer) = match resume {
        Some(r) => {
            let ckpt = Checkpoint::load(r).map_err(CliError::data)?;
            ckpt.expect_variant(cfg.model.variant)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let codec = ckpt
                .codec
                .clone()
                .ok_or_else(|| CliError::Data("checkpoint has no codec".into()))?;
            cfg.model = ckpt.model.clone();
            let t =
                Trainer::from_checkpoint(ckpt, Some(cfg.train.clone())).map_err(CliError::run)?;
            (codec, t)
        }
        None => {
            let codec =
                Codec::build(cfg.model.variant, &src, &tgt, &cfg.codec).map_err(CliError::data)?;
            cfg.model.source_vocab = codec.source.vocab.len();
            cfg.model.target_vocab = codec.target.vocab().len();
            let model =
                Model::new(cfg.model.clone()).map_err(|e| CliError::Config(e.to_string()))?;
            (
                codec,
                Trainer::new(model, cfg.train.clone())
                    .map_err(|e| CliError::Config(e.to_string()))?,
            )
        }
    };
    let conf_path = dir.join("run.conf");
    std::fs::write(&conf_path, cfg.to_text()).map_err(|e| CliError::io(&conf_path, e))?;

    let encode = |s: &[String], t: &[String]| -> Vec<Example> {
        s.iter()
            .zip(t)
            .map(|(a, b)| Example::new(codec.source.encode(a), codec.target.encode(b)))
            .collect()
    };
    let (train, dropped) = filter_by_length(&cfg.model, &encode(&src, &tgt));
    let valid = match (&cfg.valid_source, &cfg.valid_target) {
        (Some(s), Some(t)) => {
            let (s, t) = read_parallel(s, t)?;
            filter_by_length(&cfg.model, &encode(&s, &t)).0
        }
        _ => Vec::new(),
    };
    log(
        json!({"event": "train-start", "examples": train.len(), "filtered": dropped, "valid": valid.len(),
        "parameters": trainer.model.count_parameters(Scope::All), "variant": cfg.model.variant.name()}),
    );

    let log_path = dir.join("train.log.jsonl");
    let mut log_file = File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?;
    let last_path = dir.join("last.ckpt");
    let every = cfg.train.checkpoint_every.max(1);
    let mut trainer = trainer;
    let result = trainer.fit(&train, &valid, |r, t| {
        let line = r.to_json_line();
        eprintln!("{line}");
        let _ = writeln!(log_file, "{line}");
        if r.epoch % every == 0 {
            t.checkpoint(Some(codec.clone()))
                .save(&last_path)
                .map_err(|e| hnmt::train::TrainError::Corrupt(e.to_string()))?;
        }
        Ok(HookAction::Continue)
    });
    save_checkpoint(&trainer.checkpoint(Some(codec.clone())), &last_path)?;
    let stop = result.map_err(CliError::run)?;
    let best = trainer.best_model().map_err(CliError::run)?;
    save_checkpoint(
        &Checkpoint::for_model(&best, Some(codec)),
        &dir.join("best.ckpt"),
    )?;
    log(
        json!({"event": "train-end", "stop": format!("{stop:?}"), "epochs": trainer.progress.epoch,
        "best_epoch": trainer.progress.best_epoch, "best_loss": trainer.progress.best_loss}),
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_translate(
    checkpoint: &Path,
    input: Option<&Path>,
    output: Option<&Path>,
    beam: usize,
    threads: Option<usize>,
    scores: Option<&Path>,
    use_last: bool,
    length_normalize: bool,
) -> Result<()> {
    require(checkpoint)?;
    if beam == 0 {
        return Err(CliError::Config("beam must be at least 1".into()));
    }
    if let Some(i) = input {
        require(i)?;
    }
    for o in [output, scores].into_iter().flatten() {
        guard_output(o, &[checkpoint, input.unwrap_or(checkpoint)])?;
    }
    let threads = match threads {
        Some(t) => t,
        None => env_number(THREADS_ENV)?.unwrap_or(1),
    };
    let mut ckpt = Checkpoint::load(checkpoint).map_err(CliError::data)?;
    if !use_last {
        if let Some(best) = ckpt.best_params.take() {
            ckpt.params = best;
        }
    }
    let (model, codec) = ckpt.into_model().map_err(CliError::data)?;
    let codec = codec.ok_or_else(|| CliError::Data("checkpoint has no codec".into()))?;
    let mut opts = SearchOptions::from_config(model.config());
    opts.length_normalize = length_normalize;
    let lines: Vec<String> = read_text(input)?.lines().map(str::to_string).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(CliError::run)?;
    let results: Vec<Result<(String, f64)>> = pool.install(|| {
        lines
            .par_iter()
            .map(|line| {
                let src = codec.source.encode(line);
                if src.is_empty() {
                    return Ok((String::new(), 0.0));
                }
                let h = translate(&model, &src, beam, &opts).map_err(CliError::run)?;
                Ok((codec.target.decode(&h.seq), h.score))
            })
            .collect()
    });
    let mut out = String::new();
    let mut score_text = String::new();
    for r in results {
        let (t, s) = r?;
        out.push_str(&t);
        out.push('\n');
        score_text.push_str(&format!("{s:?}\n"));
    }
    write_out(output, &out)?;
    if let Some(p) = scores {
        std::fs::write(p, score_text).map_err(|e| CliError::io(p, e))?;
    }
    Ok(())
}

fn cmd_bleu(hyp: &Path, refs: &Path, max_n: usize) -> Result<()> {
    let (h, r) = (read_lines(hyp)?, read_lines(refs)?);
    let (score, stats) = bleu(&h, &r, max_n).map_err(CliError::data)?;
    let bp = if stats.candidate_len == 0 {
        0.0
    } else {
        (1.0 - stats.reference_len as f64 / stats.candidate_len as f64)
            .min(0.0)
            .exp()
    };
    println!(
        "{}",
        json!({"metric": format!("bleu-{max_n}"), "score": score, "brevity_penalty": bp, "stats": stats})
    );
    println!(
        "BLEU-{max_n} = {:.2} (BP = {bp:.3}, hyp_len = {}, ref_len = {})",
        100.0 * score,
        stats.candidate_len,
        stats.reference_len
    );
    Ok(())
}

fn cmd_significance(
    a: &Path,
    b: &Path,
    refs: &Path,
    resamples: usize,
    seed: Option<u64>,
) -> Result<()> {
    let (sa, sb, r) = (read_lines(a)?, read_lines(b)?, read_lines(refs)?);
    let res = bootstrap_significance(&sa, &sb, &r, resamples, seed_or_env(seed, 1)?)
        .map_err(CliError::data)?;
    println!(
        "{}",
        serde_json::to_string(&json!({"metric": "bootstrap", "result": res}))
            .map_err(CliError::run)?
    );
    println!(
        "BLEU A = {:.2}, BLEU B = {:.2}, delta = {:.2}, p(B >= A) = {:.4} over {} resamples",
        100.0 * res.bleu_a,
        100.0 * res.bleu_b,
        100.0 * res.delta,
        res.p_value,
        res.resamples
    );
    Ok(())
}

fn cmd_contrast(pairs: &Path, outputs: &Path) -> Result<()> {
    let pairs = read_contrast_pairs(pairs).map_err(CliError::data)?;
    let lines = read_lines(outputs)?;
    if lines.len() != 2 * pairs.len() {
        return Err(CliError::Data(format!(
            "expected {} output lines (base and variant per pair), found {}",
            2 * pairs.len(),
            lines.len()
        )));
    }
    let outs: Vec<(&str, &str)> = lines
        .chunks(2)
        .map(|c| (c[0].as_str(), c[1].as_str()))
        .collect();
    let report = contrast_accuracy(&outs, &pairs).map_err(CliError::data)?;
    for (f, (c, t)) in &report.features {
        println!(
            "{}",
            json!({"metric": "contrast", "feature": f, "correct": c, "total": t})
        );
    }
    print!("{}", report.table());
    Ok(())
}

fn cmd_stats(inputs: &[PathBuf]) -> Result<()> {
    let mut data = Vec::new();
    for p in inputs {
        data.push((p.display().to_string(), read_lines(p)?));
    }
    let sides: Vec<(&str, &[String])> = data
        .iter()
        .map(|(n, l)| (n.as_str(), l.as_slice()))
        .collect();
    let (rows, table) = corpus_stats(&sides);
    for (name, s) in rows {
        println!(
            "{}",
            json!({"metric": "stats", "corpus": name, "tokens": s.tokens, "types": s.types, "ratio": s.ratio, "mean_length": s.mean_sentence_length})
        );
    }
    print!("{table}");
    Ok(())
}

fn cmd_count_params(
    args: &ConfigArgs,
    variants: &[Variant],
    source_vocab: usize,
    target_vocab: usize,
    char_vocab: usize,
) -> Result<()> {
    let base = args.resolve(&[])?;
    let variants = if variants.is_empty() {
        vec![base.model.variant]
    } else {
        variants.to_vec()
    };
    println!(
        "{:<14} {:>12} {:>12} {:>16}",
        "variant", "total", "decoder", "word embeddings"
    );
    let mut decoders = Vec::new();
    for v in variants {
        let mut cfg = if v == base.model.variant {
            base.clone()
        } else {
            args.resolve(&[("variant".into(), v.name().into())])?
        };
        cfg.model.source_vocab = source_vocab;
        cfg.model.target_vocab = if v == Variant::Subword {
            target_vocab
        } else {
            char_vocab
        };
        cfg.model
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let total = cfg.model.parameter_count(Scope::All);
        let decoder = cfg.model.parameter_count(Scope::DecoderOnly);
        let word_emb = if v == Variant::Subword {
            cfg.model.target_vocab * cfg.model.embedding
        } else {
            0
        };
        println!(
            "{:<14} {:>12} {:>12} {:>16}",
            v.name(),
            total,
            decoder,
            word_emb
        );
        decoders.push((v, decoder));
    }
    if let (Some(s), Some(h)) = (
        decoders.iter().find(|d| d.0 == Variant::Subword),
        decoders.iter().find(|d| d.0 == Variant::Hierarchical),
    ) {
        println!(
            "subword / hierarchical decoder ratio: {:.2}",
            s.1 as f64 / h.1 as f64
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::LearnBpe {
            input,
            merges,
            output,
        } => cmd_learn_bpe(&input, merges, &output),
        Command::ApplyBpe {
            codes,
            input,
            output,
        } => cmd_apply_bpe(&codes, input.as_deref(), output.as_deref()),
        Command::BuildVocab {
            input,
            codes,
            kind,
            max_size,
            min_count,
            output,
        } => cmd_build_vocab(&input, codes.as_deref(), kind, max_size, min_count, &output),
        Command::SynthGen {
            output_dir,
            stems,
            slots,
            typology,
            size,
            valid,
            test,
            min_words,
            max_words,
            zipf,
            seed,
            contrast,
            contrast_count,
        } => cmd_synth_gen(
            &output_dir,
            stems,
            slots,
            typology,
            size,
            valid,
            test,
            (min_words, max_words),
            zipf,
            seed,
            &contrast,
            contrast_count,
        ),
        Command::Train {
            config,
            output_dir,
            resume,
        } => cmd_train(&config, &output_dir, resume.as_deref()),
        Command::Translate {
            checkpoint,
            input,
            output,
            beam,
            threads,
            scores,
            use_last,
            length_normalize,
        } => cmd_translate(
            &checkpoint,
            input.as_deref(),
            output.as_deref(),
            beam,
            threads,
            scores.as_deref(),
            use_last,
            length_normalize,
        ),
        Command::EvaluateBleu {
            hypotheses,
            references,
            max_n,
        } => cmd_bleu(&hypotheses, &references, max_n),
        Command::Significance {
            system_a,
            system_b,
            references,
            resamples,
            seed,
        } => cmd_significance(&system_a, &system_b, &references, resamples, seed),
        Command::EvaluateContrast { pairs, outputs } => cmd_contrast(&pairs, &outputs),
        Command::Stats { input } => cmd_stats(&input),
        Command::CountParams {
            config,
            variant,
            source_vocab,
            target_vocab,
            char_vocab,
        } => cmd_count_params(&config, &variant, source_vocab, target_vocab, char_vocab),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
