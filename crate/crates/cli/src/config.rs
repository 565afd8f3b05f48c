//! Run configuration: flat `key = value` text, layered as
//! variant defaults < file < environment < command-line `--set` pairs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hnmt::codec::CodecOptions;
use hnmt::model::{ModelConfig, Variant};
use hnmt::train::TrainConfig;

use crate::error::CliError;

pub const SEED_ENV: &str = "HNMT_SEED";
pub const THREADS_ENV: &str = "HNMT_THREADS";

/// Every documented key, in the order it is written out.
pub const KEYS: &[&str] = &[
    "variant",
    "embedding",
    "hidden",
    "char_width",
    "encoder_layers",
    "decoder_layers",
    "attention_index",
    "residual",
    "max_word_length",
    "max_sentence_length",
    "dropout",
    "init_scale",
    "learning_rate",
    "decay",
    "min_learning_rate",
    "batch_size",
    "max_epochs",
    "patience",
    "clip_norm",
    "seed",
    "threads",
    "checkpoint_every",
    "source_merges",
    "target_merges",
    "joint_bpe",
    "source_vocab_max",
    "target_vocab_max",
    "min_count",
    "beam",
    "train_source",
    "train_target",
    "valid_source",
    "valid_target",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub codec: CodecOptions,
    pub beam: usize,
    pub train_source: Option<PathBuf>,
    pub train_target: Option<PathBuf>,
    pub valid_source: Option<PathBuf>,
    pub valid_target: Option<PathBuf>,
}

/// `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str, origin: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("{origin}:{}: expected key = value", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_override(s: &str) -> Result<(String, String), CliError> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| CliError::Config(format!("override {s:?} is not key=value")))
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Config(format!(
            "{key}: expected true or false, found {v:?}"
        ))),
    }
}

/// `0-1,1-2` style residual list; empty means none.
fn parse_residual(v: &str) -> Result<Vec<(usize, usize)>, CliError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|p| {
            let (a, b) = p
                .split_once('-')
                .ok_or_else(|| CliError::Config(format!("residual: {p:?} is not from-to")))?;
            Ok((num("residual", a)?, num("residual", b)?))
        })
        .collect()
}

impl RunConfig {
    pub fn defaults(variant: Variant) -> Self {
        let mut model = ModelConfig::defaults(variant, 0, 0);
        let train = TrainConfig::default();
        model.seed = train.seed;
        RunConfig {
            model,
            train,
            codec: CodecOptions::default(),
            beam: 5,
            train_source: None,
            train_target: None,
            valid_source: None,
            valid_target: None,
        }
    }

    /// Resolves a configuration from an optional file, the environment and
    /// explicit overrides, then validates it.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut pairs = Vec::new();
        if let Some(f) = file {
            let text = std::fs::read_to_string(f).map_err(|e| CliError::io(f, e))?;
            pairs.extend(parse_pairs(&text, &f.display().to_string())?);
        }
        for (key, var) in [("seed", SEED_ENV), ("threads", THREADS_ENV)] {
            if let Ok(v) = std::env::var(var) {
                pairs.push((key.to_string(), v));
            }
        }
        pairs.extend(overrides.iter().cloned());
        Self::from_pairs(&pairs)
    }

    /// Applies pairs in order over the defaults of the last `variant` given.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self, CliError> {
        for (k, _) in pairs {
            if !KEYS.contains(&k.as_str()) {
                return Err(CliError::Config(format!("unknown key {k:?}")));
            }
        }
        let variant = match pairs.iter().rev().find(|(k, _)| k == "variant") {
            Some((_, v)) => v
                .parse::<Variant>()
                .map_err(|e| CliError::Config(e.to_string()))?,
            None => Variant::Hierarchical,
        };
        let mut c = RunConfig::defaults(variant);
        let mut seed_set = false;
        for (k, v) in pairs {
            let m = &mut c.model;
            let t = &mut c.train;
            match k.as_str() {
                "variant" => {}
                "embedding" => m.embedding = num(k, v)?,
                "hidden" => m.hidden = num(k, v)?,
                "char_width" => m.char_width = num(k, v)?,
                "encoder_layers" => m.encoder_layers = num(k, v)?,
                "decoder_layers" => m.decoder_layers = num(k, v)?,
                "attention_index" => m.attention_index = num(k, v)?,
                "residual" => m.residual = parse_residual(v)?,
                "max_word_length" => m.max_word_length = num(k, v)?,
                "max_sentence_length" => m.max_sentence_length = num(k, v)?,
                "dropout" => {
                    m.dropout = num(k, v)?;
                    t.dropout = m.dropout;
                }
                "init_scale" => m.init_scale = num(k, v)?,
                "learning_rate" => t.learning_rate = num(k, v)?,
                "decay" => t.decay = num(k, v)?,
                "min_learning_rate" => t.min_learning_rate = num(k, v)?,
                "batch_size" => t.batch_size = num(k, v)?,
                "max_epochs" => t.max_epochs = num(k, v)?,
                "patience" => t.patience = num(k, v)?,
                "clip_norm" => t.clip_norm = num(k, v)?,
                "seed" => {
                    t.seed = num(k, v)?;
                    seed_set = true;
                }
                "threads" => t.threads = num(k, v)?,
                "checkpoint_every" => t.checkpoint_every = num(k, v)?,
                "source_merges" => c.codec.source_merges = num(k, v)?,
                "target_merges" => c.codec.target_merges = num(k, v)?,
                "joint_bpe" => c.codec.joint_bpe = parse_bool(k, v)?,
                "source_vocab_max" => c.codec.source_vocab_max = num(k, v)?,
                "target_vocab_max" => c.codec.target_vocab_max = num(k, v)?,
                "min_count" => c.codec.min_count = num(k, v)?,
                "beam" => c.beam = num(k, v)?,
                "train_source" => c.train_source = Some(v.into()),
                "train_target" => c.train_target = Some(v.into()),
                "valid_source" => c.valid_source = Some(v.into()),
                "valid_target" => c.valid_target = Some(v.into()),
                _ => unreachable!("keys checked above"),
            }
        }
        if seed_set {
            c.model.seed = c.train.seed;
        }
        c.validate()?;
        Ok(c)
    }

    /// Checks everything that does not depend on data-derived vocabulary sizes.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut probe = self.model.clone();
        probe.source_vocab = probe.source_vocab.max(1);
        probe.target_vocab = probe.target_vocab.max(8);
        probe
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.train
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.beam == 0 {
            return Err(CliError::Config("beam must be at least 1".into()));
        }
        Ok(())
    }

    /// Flat text that [`RunConfig::from_pairs`] reads back to the same value.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let t = &self.train;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let residual: Vec<String> = m.residual.iter().map(|(a, b)| format!("{a}-{b}")).collect();
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("variant", m.variant.name().into());
        put("embedding", m.embedding.to_string());
        put("hidden", m.hidden.to_string());
        put("char_width", m.char_width.to_string());
        put("encoder_layers", m.encoder_layers.to_string());
        put("decoder_layers", m.decoder_layers.to_string());
        put("attention_index", m.attention_index.to_string());
        put("residual", residual.join(","));
        put("max_word_length", m.max_word_length.to_string());
        put("max_sentence_length", m.max_sentence_length.to_string());
        put("dropout", format!("{:?}", t.dropout));
        put("init_scale", format!("{:?}", m.init_scale));
        put("learning_rate", format!("{:?}", t.learning_rate));
        put("decay", format!("{:?}", t.decay));
        put("min_learning_rate", format!("{:?}", t.min_learning_rate));
        put("batch_size", t.batch_size.to_string());
        put("max_epochs", t.max_epochs.to_string());
        put("patience", t.patience.to_string());
        put("clip_norm", format!("{:?}", t.clip_norm));
        put("seed", t.seed.to_string());
        put("threads", t.threads.to_string());
        put("checkpoint_every", t.checkpoint_every.to_string());
        put("source_merges", self.codec.source_merges.to_string());
        put("target_merges", self.codec.target_merges.to_string());
        put("joint_bpe", self.codec.joint_bpe.to_string());
        put("source_vocab_max", self.codec.source_vocab_max.to_string());
        put("target_vocab_max", self.codec.target_vocab_max.to_string());
        put("min_count", self.codec.min_count.to_string());
        put("beam", self.beam.to_string());
        for (k, p) in [
            ("train_source", &self.train_source),
            ("train_target", &self.train_target),
            ("valid_source", &self.valid_source),
            ("valid_target", &self.valid_target),
        ] {
            if let Some(p) = path(p) {
                put(k, p);
            }
        }
        out
    }
}
