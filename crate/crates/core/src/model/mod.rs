//! Encoder and the subword, character and hierarchical decoders.

mod config;

pub use config::{ModelConfig, Variant};

use thiserror::Error;

use crate::graph::{Graph, Var};
use crate::layers::{BiRnn, GruCell, StackedRnn, WordComposer};
use crate::params::{Initializer, ParamId, ParamStore};
use crate::tensor::TensorError;
use crate::vocab::{BOS, EOS, EOW};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("token index {index} outside vocabulary of size {size}")]
    InvalidToken { index: usize, size: usize },
    #[error("malformed target: {0}")]
    Framing(String),
    #[error("word of {len} characters exceeds the limit of {max}")]
    WordTooLong { len: usize, max: usize },
    #[error("operation needs a {expected} model, this one is {found}")]
    VariantMismatch {
        expected: &'static str,
        found: Variant,
    },
    #[error("source sentence is empty")]
    EmptySource,
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    All,
    DecoderOnly,
}

/// Parameter-name prefix of everything on the target side.
pub const DECODER_PREFIX: &str = "decoder.";

#[derive(Debug, Clone, PartialEq)]
struct Encoder {
    embed: ParamId,
    layers: Vec<BiRnn>,
}

#[derive(Debug, Clone, PartialEq)]
enum Decoder {
    Flat {
        embed: ParamId,
        stack: StackedRnn,
        out_w: ParamId,
        out_b: ParamId,
    },
    Hier(HierDecoder),
}

#[derive(Debug, Clone, PartialEq)]
struct HierDecoder {
    char_embed: ParamId,
    composer: WordComposer,
    stack: StackedRnn,
    init_w: ParamId,
    init_b: ParamId,
    char_rnn: GruCell,
    out_w: ParamId,
    out_b: ParamId,
}

/// Encoder output for one source sentence.
#[derive(Debug, Clone)]
pub struct EncodedSource {
    /// Top-layer state per source token.
    pub states: Vec<Var>,
    /// The same states stacked into a `tokens × hidden` matrix.
    pub memory: Var,
}

#[derive(Debug, Clone)]
pub enum DecoderState {
    Flat { hidden: Vec<Var> },
    Hier(HierState),
}

#[derive(Debug, Clone)]
pub struct HierState {
    pub word_hidden: Vec<Var>,
    /// Attentional vector of the word being generated.
    pub attentional: Var,
    pub char_hidden: Var,
}

impl DecoderState {
    pub fn layers(&self) -> usize {
        match self {
            DecoderState::Flat { hidden } => hidden.len(),
            DecoderState::Hier(h) => h.word_hidden.len(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    encoder: Encoder,
    decoder: Decoder,
}

impl Model {
    /// Builds a freshly initialized model.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut init = Initializer::new(config.seed, config.init_scale);
        let c = &config;
        let enc_half = c.hidden / 2;
        let embed = store.insert("encoder.embed", init.weight(&[c.source_vocab, c.embedding]));
        let layers = (0..c.encoder_layers)
            .map(|l| {
                let input = if l == 0 { c.embedding } else { c.hidden };
                BiRnn::new(
                    &mut store,
                    &mut init,
                    &format!("encoder.l{l}"),
                    input,
                    enc_half,
                )
            })
            .collect();
        let encoder = Encoder { embed, layers };
        let decoder = match c.variant {
            Variant::Subword | Variant::Character => {
                let embed =
                    store.insert("decoder.embed", init.weight(&[c.target_vocab, c.embedding]));
                let stack = StackedRnn::new(
                    &mut store,
                    &mut init,
                    "decoder.stack",
                    c.embedding,
                    c.hidden,
                    c.decoder_layers,
                    Some(c.attention_index),
                    c.residual.clone(),
                )?;
                let out_w = store.insert("decoder.out.w", init.weight(&[c.target_vocab, c.hidden]));
                let out_b = store.insert("decoder.out.b", init.bias(c.target_vocab));
                Decoder::Flat {
                    embed,
                    stack,
                    out_w,
                    out_b,
                }
            }
            Variant::Hierarchical => {
                let cw = c.char_width;
                let char_embed =
                    store.insert("decoder.char_embed", init.weight(&[c.target_vocab, cw]));
                let composer = WordComposer::new(
                    &mut store,
                    &mut init,
                    "decoder.compose",
                    cw,
                    cw,
                    c.embedding,
                );
                let stack = StackedRnn::new(
                    &mut store,
                    &mut init,
                    "decoder.word",
                    c.embedding,
                    c.hidden,
                    c.decoder_layers,
                    Some(c.attention_index),
                    c.residual.clone(),
                )?;
                let init_w = store.insert("decoder.char_init.w", init.weight(&[cw, c.hidden]));
                let init_b = store.insert("decoder.char_init.b", init.bias(cw));
                let char_rnn = GruCell::new(&mut store, &mut init, "decoder.char_rnn", cw, cw);
                let out_w = store.insert("decoder.char_out.w", init.weight(&[c.target_vocab, cw]));
                let out_b = store.insert("decoder.char_out.b", init.bias(c.target_vocab));
                Decoder::Hier(HierDecoder {
                    char_embed,
                    composer,
                    stack,
                    init_w,
                    init_b,
                    char_rnn,
                    out_w,
                    out_b,
                })
            }
        };
        Ok(Model {
            config,
            params: store,
            encoder,
            decoder,
        })
    }

    /// Rebuilds a model around stored parameters; every expected tensor
    /// must be present with its expected shape.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let mut model = Model::new(config)?;
        if params.len() != model.params.len() {
            return Err(ModelError::Config(format!(
                "expected {} parameter tensors, found {}",
                model.params.len(),
                params.len()
            )));
        }
        for (id, name, t) in model.params.iter() {
            let other = params
                .id(name)
                .ok_or_else(|| ModelError::Config(format!("missing parameter {name}")))?;
            if params.get(other).shape() != t.shape() {
                return Err(ModelError::Config(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    params.get(other).shape(),
                    t.shape()
                )));
            }
            debug_assert_eq!(id.index(), other.index());
        }
        if !params.all_finite() {
            return Err(ModelError::Config("non-finite parameter values".into()));
        }
        model.params = params;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// A graph over this model's parameters.
    pub fn graph(&self) -> Graph<'_> {
        Graph::new(&self.params)
    }

    pub fn count_parameters(&self, scope: Scope) -> usize {
        self.params
            .iter()
            .filter(|(_, name, _)| scope == Scope::All || name.starts_with(DECODER_PREFIX))
            .map(|(_, _, t)| t.len())
            .sum()
    }

    /// Size of the target word/subword embedding table; zero for decoders
    /// that do not store one.
    pub fn word_embedding_parameters(&self) -> usize {
        match (&self.decoder, self.config.variant) {
            (Decoder::Flat { embed, .. }, Variant::Subword) => self.params.get(*embed).len(),
            _ => 0,
        }
    }

    fn check_target_index(&self, index: usize) -> Result<()> {
        if index >= self.config.target_vocab {
            return Err(ModelError::InvalidToken {
                index,
                size: self.config.target_vocab,
            });
        }
        Ok(())
    }

    pub fn encode_source(&self, g: &mut Graph, source: &[usize]) -> Result<EncodedSource> {
        if source.is_empty() {
            return Err(ModelError::EmptySource);
        }
        if let Some(&bad) = source.iter().find(|&&i| i >= self.config.source_vocab) {
            return Err(ModelError::InvalidToken {
                index: bad,
                size: self.config.source_vocab,
            });
        }
        let table = g.param(self.encoder.embed);
        let mut xs = source
            .iter()
            .map(|&i| g.row(table, i))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        for layer in &self.encoder.layers {
            xs = layer.run(g, &xs)?.states;
        }
        let memory = g.stack_rows(&xs)?;
        Ok(EncodedSource { states: xs, memory })
    }

    /// Decoder state before the first target unit. For the hierarchical
    /// decoder this runs the word step on the BOS pseudo-word.
    pub fn initial_state(&self, g: &mut Graph, enc: &EncodedSource) -> Result<DecoderState> {
        match &self.decoder {
            Decoder::Flat { stack, .. } => Ok(DecoderState::Flat {
                hidden: stack.initial_state(g),
            }),
            Decoder::Hier(d) => {
                let hidden = d.stack.initial_state(g);
                Ok(DecoderState::Hier(self.start_word(
                    g,
                    &[BOS],
                    &hidden,
                    enc,
                )?))
            }
        }
    }

    fn flat_step(
        &self,
        g: &mut Graph,
        prev: usize,
        hidden: &[Var],
        enc: &EncodedSource,
    ) -> Result<(Var, Vec<Var>)> {
        let Decoder::Flat {
            embed,
            stack,
            out_w,
            out_b,
        } = &self.decoder
        else {
            return Err(ModelError::VariantMismatch {
                expected: "flat",
                found: self.variant(),
            });
        };
        self.check_target_index(prev)?;
        let table = g.param(*embed);
        let x = g.row(table, prev)?;
        let step = stack.step(g, x, hidden, Some(enc.memory))?;
        let (w, b) = (g.param(*out_w), g.param(*out_b));
        let logits = g.affine(&[(w, step.output)], Some(b))?;
        Ok((g.softmax(logits)?, step.hidden))
    }

    /// Next-subword distribution given the previous subword.
    pub fn subword_decoder_step(
        &self,
        g: &mut Graph,
        prev: usize,
        hidden: &[Var],
        enc: &EncodedSource,
    ) -> Result<(Var, Vec<Var>)> {
        self.expect(Variant::Subword)?;
        self.flat_step(g, prev, hidden, enc)
    }

    /// Next-character distribution; attends on every call.
    pub fn char_decoder_step(
        &self,
        g: &mut Graph,
        prev: usize,
        hidden: &[Var],
        enc: &EncodedSource,
    ) -> Result<(Var, Vec<Var>)> {
        self.expect(Variant::Character)?;
        self.flat_step(g, prev, hidden, enc)
    }

    /// Either flat step, whichever this model is.
    pub fn unit_step(
        &self,
        g: &mut Graph,
        prev: usize,
        hidden: &[Var],
        enc: &EncodedSource,
    ) -> Result<(Var, Vec<Var>)> {
        self.flat_step(g, prev, hidden, enc)
    }

    fn expect(&self, v: Variant) -> Result<()> {
        if self.variant() != v {
            return Err(ModelError::VariantMismatch {
                expected: v.name(),
                found: self.variant(),
            });
        }
        Ok(())
    }

    fn hier(&self) -> Result<&HierDecoder> {
        match &self.decoder {
            Decoder::Hier(d) => Ok(d),
            Decoder::Flat { .. } => Err(ModelError::VariantMismatch {
                expected: "hierarchical",
                found: self.variant(),
            }),
        }
    }

    /// Composes the previous word from its units (characters plus EOW, or
    /// the lone BOS at sentence start), advances the word stack once and
    /// returns the attentional vector with the new word-level state.
    pub fn hier_word_step(
        &self,
        g: &mut Graph,
        prev_word: &[usize],
        word_hidden: &[Var],
        enc: &EncodedSource,
    ) -> Result<(Var, Vec<Var>)> {
        let d = self.hier()?;
        let chars = prev_word.iter().filter(|&&c| c != EOW).count();
        if chars > self.config.max_word_length {
            return Err(ModelError::WordTooLong {
                len: chars,
                max: self.config.max_word_length,
            });
        }
        for &c in prev_word {
            self.check_target_index(c)?;
        }
        let table = g.param(d.char_embed);
        let embs = prev_word
            .iter()
            .map(|&c| g.row(table, c))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let word = d.composer.compose(g, &embs)?;
        let step = d.stack.step(g, word, word_hidden, Some(enc.memory))?;
        Ok((step.output, step.hidden))
    }

    /// Initial character-RNN state from an attentional vector.
    pub fn hier_char_init(&self, g: &mut Graph, attentional: Var) -> Result<Var> {
        let d = self.hier()?;
        let (w, b) = (g.param(d.init_w), g.param(d.init_b));
        Ok(g.affine(&[(w, attentional)], Some(b))?)
    }

    /// Next-character distribution inside a word. The word's attentional
    /// vector enters only through the initial character state.
    pub fn hier_char_step(
        &self,
        g: &mut Graph,
        prev_char: usize,
        char_hidden: Var,
    ) -> Result<(Var, Var)> {
        let d = self.hier()?;
        self.check_target_index(prev_char)?;
        if g.shape(char_hidden) != [d.char_rnn.hidden] {
            return Err(TensorError::ShapeMismatch {
                op: "hier_char_step",
                left: vec![d.char_rnn.hidden],
                right: g.shape(char_hidden).to_vec(),
            }
            .into());
        }
        let table = g.param(d.char_embed);
        let x = g.row(table, prev_char)?;
        let x = g.dropout(x)?;
        let h = d.char_rnn.step(g, x, char_hidden)?;
        let (w, b) = (g.param(d.out_w), g.param(d.out_b));
        let logits = g.affine(&[(w, h)], Some(b))?;
        Ok((g.softmax(logits)?, h))
    }

    /// Word step followed by character-state initialization.
    pub fn start_word(
        &self,
        g: &mut Graph,
        prev_word: &[usize],
        word_hidden: &[Var],
        enc: &EncodedSource,
    ) -> Result<HierState> {
        let (attentional, word_hidden) = self.hier_word_step(g, prev_word, word_hidden, enc)?;
        let char_hidden = self.hier_char_init(g, attentional)?;
        Ok(HierState {
            word_hidden,
            attentional,
            char_hidden,
        })
    }

    /// Checks that `target` is a well-framed unit sequence for this model.
    pub fn check_target(&self, target: &[usize]) -> Result<()> {
        let fail = |m: String| Err(ModelError::Framing(m));
        match target.last() {
            Some(&EOS) => {}
            Some(_) => return fail("target must end with EOS".into()),
            None => return fail("target is empty".into()),
        }
        for &t in target {
            self.check_target_index(t)?;
        }
        if let Some(p) = target[..target.len() - 1].iter().position(|&t| t == EOS) {
            return fail(format!("EOS before the end, at position {p}"));
        }
        if self.variant() == Variant::Hierarchical {
            let mut len = 0;
            for &t in &target[..target.len() - 1] {
                if t == EOW {
                    len = 0;
                } else {
                    len += 1;
                    if len > self.config.max_word_length {
                        return Err(ModelError::WordTooLong {
                            len,
                            max: self.config.max_word_length,
                        });
                    }
                }
            }
            if len != 0 {
                return fail("EOS must start a word".into());
            }
        }
        Ok(())
    }

    /// Summed negative log-likelihood of `target` under teacher forcing,
    /// with the number of scored units.
    pub fn sentence_nll(
        &self,
        g: &mut Graph,
        source: &[usize],
        target: &[usize],
    ) -> Result<(Var, usize)> {
        self.check_target(target)?;
        let enc = self.encode_source(g, source)?;
        let mut terms = Vec::with_capacity(target.len());
        match self.initial_state(g, &enc)? {
            DecoderState::Flat { mut hidden } => {
                let mut prev = BOS;
                for &y in target {
                    let (p, h) = self.flat_step(g, prev, &hidden, &enc)?;
                    terms.push(g.cross_entropy(p, y)?);
                    hidden = h;
                    prev = y;
                }
            }
            DecoderState::Hier(mut st) => {
                let mut prev = BOS;
                let mut word = Vec::new();
                for &y in target {
                    let (p, h) = self.hier_char_step(g, prev, st.char_hidden)?;
                    terms.push(g.cross_entropy(p, y)?);
                    match y {
                        EOS => break,
                        EOW => {
                            word.push(EOW);
                            st = self.start_word(g, &word, &st.word_hidden, &enc)?;
                            word.clear();
                            prev = BOS;
                        }
                        c => {
                            word.push(c);
                            st.char_hidden = h;
                            prev = c;
                        }
                    }
                }
            }
        }
        let n = terms.len();
        let mut total = terms[0];
        for &t in &terms[1..] {
            total = g.add(total, t)?;
        }
        Ok((total, n))
    }

    /// `log p(target | source)` under teacher forcing.
    pub fn sentence_log_likelihood(&self, source: &[usize], target: &[usize]) -> Result<f64> {
        let mut g = self.graph();
        let (nll, _) = self.sentence_nll(&mut g, source, target)?;
        Ok(-g.scalar(nll))
    }
}

impl ModelConfig {
    /// Parameter count derived from the configuration alone, without
    /// allocating any tensors.
    pub fn parameter_count(&self, scope: Scope) -> usize {
        let gru = GruCell::num_params;
        let c = self;
        let half = c.hidden / 2;
        let stack = |input: usize| -> usize {
            (0..c.decoder_layers)
                .map(|l| gru(if l == 0 { input } else { c.hidden }, c.hidden))
                .sum::<usize>()
                + c.hidden * 2 * c.hidden
        };
        let decoder = match c.variant {
            Variant::Subword | Variant::Character => {
                c.target_vocab * c.embedding
                    + stack(c.embedding)
                    + c.target_vocab * c.hidden
                    + c.target_vocab
            }
            Variant::Hierarchical => {
                let cw = c.char_width;
                c.target_vocab * cw
                    + 2 * gru(cw, cw)
                    + 2 * c.embedding * cw
                    + c.embedding
                    + stack(c.embedding)
                    + cw * c.hidden
                    + cw
                    + gru(cw, cw)
                    + c.target_vocab * cw
                    + c.target_vocab
            }
        };
        let encoder = c.source_vocab * c.embedding
            + (0..c.encoder_layers)
                .map(|l| 2 * gru(if l == 0 { c.embedding } else { c.hidden }, half))
                .sum::<usize>();
        match scope {
            Scope::All => encoder + decoder,
            Scope::DecoderOnly => decoder,
        }
    }
}
