use serde::{Deserialize, Serialize};

use super::ModelError;

/// Decoding granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Subword,
    Character,
    Hierarchical,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Subword, Variant::Character, Variant::Hierarchical];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Subword => "subword",
            Variant::Character => "character",
            Variant::Hierarchical => "hierarchical",
        }
    }

    /// True when the decoder emits one flat unit sequence.
    pub fn is_flat(self) -> bool {
        !matches!(self, Variant::Hierarchical)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "subword" => Ok(Variant::Subword),
            "character" | "char" => Ok(Variant::Character),
            "hierarchical" | "hier" => Ok(Variant::Hierarchical),
            _ => Err(ModelError::Config(format!("unknown variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Source/target token embedding width; also the width of composed
    /// words in the hierarchical decoder.
    pub embedding: usize,
    /// Decoder hidden width. Each encoder direction uses half of it so the
    /// concatenated encoder states match the decoder width.
    pub hidden: usize,
    /// Character embedding width, per-direction width of the word
    /// composition bi-RNN, and character RNN width (hierarchical only).
    pub char_width: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    /// Decoder layer whose output queries the source.
    pub attention_index: usize,
    /// `(from, to)` decoder residual connections.
    pub residual: Vec<(usize, usize)>,
    pub source_vocab: usize,
    pub target_vocab: usize,
    /// Characters per word, excluding EOW.
    pub max_word_length: usize,
    /// Units per sentence excluding EOS (flat variants) or words per
    /// sentence (hierarchical).
    pub max_sentence_length: usize,
    pub dropout: f64,
    pub init_scale: f64,
    pub seed: u64,
}

impl ModelConfig {
    /// Defaults at the published scale: 512-wide layers, a 2-layer
    /// subword decoder and 3-layer character and hierarchical decoders.
    pub fn defaults(variant: Variant, source_vocab: usize, target_vocab: usize) -> Self {
        let (layers, attention_index, residual) = match variant {
            Variant::Subword => (2, 0, vec![(0, 1)]),
            Variant::Character => (3, 0, vec![(1, 2)]),
            Variant::Hierarchical => (3, 1, vec![(0, 1)]),
        };
        ModelConfig {
            variant,
            embedding: 512,
            hidden: 512,
            char_width: 256,
            encoder_layers: 2,
            decoder_layers: layers,
            attention_index,
            residual,
            source_vocab,
            target_vocab,
            max_word_length: 32,
            max_sentence_length: match variant {
                Variant::Subword => 100,
                Variant::Character => 400,
                Variant::Hierarchical => 100,
            },
            dropout: 0.2,
            init_scale: crate::params::Initializer::DEFAULT_SCALE,
            seed: 1,
        }
    }

    /// Same architecture shape at a smaller width.
    pub fn scaled(mut self, embedding: usize, hidden: usize, char_width: usize) -> Self {
        self.embedding = embedding;
        self.hidden = hidden;
        self.char_width = char_width;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.embedding == 0
            || self.hidden == 0
            || self.encoder_layers == 0
            || self.decoder_layers == 0
        {
            return fail("widths and layer counts must be positive".into());
        }
        if self.hidden % 2 != 0 {
            return fail(format!("hidden width {} must be even", self.hidden));
        }
        if self.variant == Variant::Hierarchical && self.char_width == 0 {
            return fail("char_width must be positive".into());
        }
        if self.attention_index >= self.decoder_layers {
            return fail(format!(
                "attention index {} must be below decoder layer count {}",
                self.attention_index, self.decoder_layers
            ));
        }
        if let Some((f, t)) = self
            .residual
            .iter()
            .find(|(f, t)| f >= t || *t >= self.decoder_layers)
        {
            return fail(format!("invalid residual connection {f}->{t}"));
        }
        let min_target = if self.variant == Variant::Hierarchical {
            5
        } else {
            3
        };
        if self.target_vocab < min_target || self.source_vocab == 0 {
            return fail(format!(
                "vocabulary sizes too small (source {}, target {})",
                self.source_vocab, self.target_vocab
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} must lie in [0, 1)", self.dropout));
        }
        if self.max_word_length == 0 {
            return fail("max_word_length must be positive".into());
        }
        Ok(())
    }
}
