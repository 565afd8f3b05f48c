//! Toy translation tasks with controllable morphology: tagged analytic
//! sources, inflected targets, and contrast pairs with gold evidence.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::ContrastPair;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("stem inventory is empty")]
    NoStems,
    #[error("corpus size must be at least 1")]
    EmptyCorpus,
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("invalid specification: {0}")]
    Spec(String),
    #[error("could not find {wanted} distinct sentences after {attempts} draws")]
    Exhausted { wanted: usize, attempts: usize },
    #[error("no unambiguous {0} found after repeated draws")]
    Ambiguous(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Typology {
    /// One suffix per feature, concatenated in slot order.
    Agglutinative,
    /// One fused suffix per feature combination.
    Fusional,
    /// Each non-empty morpheme is a separate word after the stem.
    Isolating,
}

/// One inflectional feature. The first value is the default.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub feature: String,
    /// (source tag, morpheme); the morpheme may be empty.
    pub values: Vec<(String, String)>,
}

impl Slot {
    pub fn new(feature: &str, values: &[(&str, &str)]) -> Self {
        Slot {
            feature: feature.into(),
            values: values.iter().map(|&(t, m)| (t.into(), m.into())).collect(),
        }
    }
}

/// Built-in slots, in the order they are added by [`SynthLangSpec::agglutinative`].
pub fn standard_slots() -> Vec<Slot> {
    vec![
        Slot::new("number", &[("SG", ""), ("PL", "ler")]),
        Slot::new(
            "case",
            &[("NOM", ""), ("ACC", "i"), ("DAT", "e"), ("LOC", "de")],
        ),
        Slot::new(
            "possessive",
            &[("NPOSS", ""), ("P1", "im"), ("P2", "in"), ("P3", "si")],
        ),
        Slot::new("tense", &[("PRS", ""), ("PST", "di"), ("FUT", "ecek")]),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthLangSpec {
    pub stems: usize,
    /// Syllables per generated stem, inclusive range.
    pub stem_syllables: (usize, usize),
    pub slots: Vec<Slot>,
    pub typology: Typology,
    /// Words per sentence, inclusive range.
    pub sentence_length: (usize, usize),
    /// Zipf exponent for stem frequencies; 0 is uniform.
    pub zipf: f64,
    pub valid_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl SynthLangSpec {
    /// Agglutinative language using the first `slots` built-in slots.
    pub fn agglutinative(stems: usize, slots: usize, seed: u64) -> Self {
        SynthLangSpec {
            stems,
            stem_syllables: (2, 3),
            slots: standard_slots().into_iter().take(slots).collect(),
            typology: Typology::Agglutinative,
            sentence_length: (1, 3),
            zipf: 0.0,
            valid_size: 100,
            test_size: 200,
            seed,
        }
    }

    pub fn with_typology(mut self, typology: Typology) -> Self {
        self.typology = typology;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.stems == 0 {
            return Err(SynthError::NoStems);
        }
        let bad = |m: &str| Err(SynthError::Spec(m.into()));
        if self.stem_syllables.0 == 0 || self.stem_syllables.0 > self.stem_syllables.1 {
            return bad("stem syllable range must be non-empty and start at 1 or more");
        }
        if self.sentence_length.0 == 0 || self.sentence_length.0 > self.sentence_length.1 {
            return bad("sentence length range must be non-empty and start at 1 or more");
        }
        if !(self.zipf >= 0.0 && self.zipf.is_finite()) {
            return bad("zipf exponent must be finite and non-negative");
        }
        let mut tags = HashSet::new();
        let mut features = HashSet::new();
        for s in &self.slots {
            if s.values.len() < 2 {
                return bad("every slot needs at least two values");
            }
            if !features.insert(&s.feature) {
                return bad("duplicate feature name");
            }
            for (t, m) in &s.values {
                if t.is_empty()
                    || !t
                        .chars()
                        .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit())
                {
                    return bad("tags must be non-empty uppercase ASCII");
                }
                if !tags.insert(t) {
                    return bad("duplicate tag");
                }
                if !m.chars().all(|c| c.is_ascii_lowercase()) {
                    return bad("morphemes must be lowercase ASCII letters");
                }
            }
        }
        Ok(())
    }
}

const CONSONANTS: &[u8] = b"bcdfghklmnprstvyz";
const VOWELS: &[u8] = b"aeiou";
const LETTERS: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
const MAX_DRAWS: usize = 10_000;

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A word's analysis: stem index and one value index per slot.
pub type Analysis = (usize, Vec<usize>);

/// A concrete language drawn from a spec: stems, suffix realizations and
/// the surface-to-analysis table used for the unambiguity check.
#[derive(Debug, Clone)]
pub struct SynthLanguage {
    spec: SynthLangSpec,
    stems: Vec<String>,
    /// Fused suffix per feature combination (fusional only).
    fused: HashMap<Vec<usize>, String>,
    surfaces: HashMap<String, Vec<Analysis>>,
    stem_weights: WeightedIndex<f64>,
}

fn combinations(slots: &[Slot]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for s in slots {
        out = out
            .into_iter()
            .flat_map(|c| {
                (0..s.values.len()).map(move |v| {
                    let mut c = c.clone();
                    c.push(v);
                    c
                })
            })
            .collect();
    }
    out
}

impl SynthLanguage {
    pub fn new(spec: &SynthLangSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let combos = combinations(&spec.slots);
        let mut fused = HashMap::new();
        if spec.typology == Typology::Fusional {
            let mut used = HashSet::new();
            for c in &combos {
                let suffix = if c.iter().all(|&v| v == 0) {
                    String::new()
                } else {
                    (0..MAX_DRAWS)
                        .map(|_| {
                            let len = rng.gen_range(1..=3);
                            (0..len)
                                .map(|_| LETTERS[rng.gen_range(0..26)] as char)
                                .collect::<String>()
                        })
                        .find(|s| !used.contains(s))
                        .ok_or(SynthError::Ambiguous("fused suffix table"))?
                };
                used.insert(suffix.clone());
                fused.insert(c.clone(), suffix);
            }
        }
        let weights: Vec<f64> = (0..spec.stems)
            .map(|r| 1.0 / ((r + 1) as f64).powf(spec.zipf))
            .collect();
        let mut lang = SynthLanguage {
            spec: spec.clone(),
            stems: Vec::with_capacity(spec.stems),
            fused,
            surfaces: HashMap::new(),
            stem_weights: WeightedIndex::new(weights).expect("positive weights"),
        };
        for _ in 0..spec.stems {
            let mut placed = false;
            for _ in 0..MAX_DRAWS {
                let syl = rng.gen_range(spec.stem_syllables.0..=spec.stem_syllables.1);
                let stem: String = (0..syl)
                    .flat_map(|_| {
                        [
                            CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char,
                            VOWELS[rng.gen_range(0..VOWELS.len())] as char,
                        ]
                    })
                    .collect();
                if lang.try_add_stem(stem, &combos) {
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(SynthError::Ambiguous("stem inventory"));
            }
        }
        Ok(lang)
    }

    /// Adds a stem only if none of its word forms collide with an
    /// existing form and its own forms are pairwise distinct.
    fn try_add_stem(&mut self, stem: String, combos: &[Vec<usize>]) -> bool {
        if self.stems.contains(&stem) {
            return false;
        }
        let idx = self.stems.len();
        self.stems.push(stem);
        let forms: Vec<String> = combos.iter().map(|c| self.realize(idx, c)).collect();
        let distinct: HashSet<&String> = forms.iter().collect();
        if distinct.len() != forms.len() || forms.iter().any(|f| self.surfaces.contains_key(f)) {
            self.stems.pop();
            return false;
        }
        for (f, c) in forms.into_iter().zip(combos) {
            self.surfaces.entry(f).or_default().push((idx, c.clone()));
        }
        true
    }

    pub fn spec(&self) -> &SynthLangSpec {
        &self.spec
    }

    pub fn stems(&self) -> &[String] {
        &self.stems
    }

    /// Surface form of a stem with the given slot values.
    pub fn realize(&self, stem: usize, values: &[usize]) -> String {
        let s = &self.stems[stem];
        match self.spec.typology {
            Typology::Agglutinative => {
                let mut w = s.clone();
                for (slot, &v) in self.spec.slots.iter().zip(values) {
                    w.push_str(&slot.values[v].1);
                }
                w
            }
            Typology::Fusional => format!("{s}{}", self.fused[values]),
            Typology::Isolating => {
                let mut w = s.clone();
                for (slot, &v) in self.spec.slots.iter().zip(values) {
                    let m = &slot.values[v].1;
                    if !m.is_empty() {
                        w.push(' ');
                        w.push_str(m);
                    }
                }
                w
            }
        }
    }

    /// Source group: one tag per slot followed by the stem.
    pub fn source_group(&self, stem: usize, values: &[usize]) -> String {
        let mut parts: Vec<&str> = self
            .spec
            .slots
            .iter()
            .zip(values)
            .map(|(s, &v)| s.values[v].0.as_str())
            .collect();
        parts.push(&self.stems[stem]);
        parts.join(" ")
    }

    /// Every analysis of a surface form.
    pub fn analyses(&self, form: &str) -> &[Analysis] {
        self.surfaces.get(form).map_or(&[], Vec::as_slice)
    }

    fn sample_words(&self, rng: &mut ChaCha8Rng) -> Vec<Analysis> {
        let (lo, hi) = self.spec.sentence_length;
        let n = rng.gen_range(lo..=hi);
        (0..n)
            .map(|_| {
                let stem = self.stem_weights.sample(rng);
                let values = self
                    .spec
                    .slots
                    .iter()
                    .map(|s| rng.gen_range(0..s.values.len()))
                    .collect();
                (stem, values)
            })
            .collect()
    }

    fn render(&self, words: &[Analysis]) -> (String, String) {
        let src: Vec<String> = words
            .iter()
            .map(|(s, v)| self.source_group(*s, v))
            .collect();
        let tgt: Vec<String> = words.iter().map(|(s, v)| self.realize(*s, v)).collect();
        (src.join(" "), tgt.join(" "))
    }

    fn feature_index(&self, feature: &str) -> Result<usize> {
        self.spec
            .slots
            .iter()
            .position(|s| s.feature == feature)
            .ok_or_else(|| SynthError::UnknownFeature(feature.into()))
    }

    /// `(^| )(form|form|...)( |$)` over every form of `stem` whose
    /// `slot` has value `value`.
    pub fn evidence_pattern(&self, stem: usize, slot: usize, value: usize) -> String {
        let mut forms: Vec<String> = combinations(&self.spec.slots)
            .into_iter()
            .filter(|c| c[slot] == value)
            .map(|c| regex::escape(&self.realize(stem, &c)))
            .collect();
        // Longest first so alternation never stops at a shorter prefix.
        forms.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        format!("(^| )({})( |$)", forms.join("|"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePair {
    pub source: String,
    pub target: String,
}

/// Train, validation and test splits with no sentence shared between them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthCorpus {
    pub train: Vec<SentencePair>,
    pub valid: Vec<SentencePair>,
    pub test: Vec<SentencePair>,
}

impl SynthCorpus {
    /// Writes `{split}.src` and `{split}.tgt`, one sentence per line.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, split) in [
            ("train", &self.train),
            ("valid", &self.valid),
            ("test", &self.test),
        ] {
            let join = |f: fn(&SentencePair) -> &str| {
                split
                    .iter()
                    .map(|p| format!("{}\n", f(p)))
                    .collect::<String>()
            };
            std::fs::write(dir.join(format!("{name}.src")), join(|p| &p.source))?;
            std::fs::write(dir.join(format!("{name}.tgt")), join(|p| &p.target))?;
        }
        Ok(())
    }
}

/// Draws `size` training sentences plus the language's validation and test
/// sizes, all distinct by source.
pub fn generate_corpus(spec: &SynthLangSpec, size: usize) -> Result<SynthCorpus> {
    if size == 0 {
        return Err(SynthError::EmptyCorpus);
    }
    let lang = SynthLanguage::new(spec)?;
    let wanted = size + spec.valid_size + spec.test_size;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, 1));
    let mut seen = HashSet::new();
    let mut all = Vec::with_capacity(wanted);
    let limit = 50 * wanted + 1000;
    let mut attempts = 0;
    while all.len() < wanted {
        if attempts == limit {
            return Err(SynthError::Exhausted { wanted, attempts });
        }
        attempts += 1;
        let (source, target) = lang.render(&lang.sample_words(&mut rng));
        if seen.insert(source.clone()) {
            all.push(SentencePair { source, target });
        }
    }
    let test = all.split_off(size + spec.valid_size);
    let valid = all.split_off(size);
    Ok(SynthCorpus {
        train: all,
        valid,
        test,
    })
}

/// Pairs of sources that differ only in `feature` on one word: the base
/// carries the default value, the variant another value.
pub fn generate_contrast_pairs(
    spec: &SynthLangSpec,
    feature: &str,
    count: usize,
) -> Result<Vec<ContrastPair>> {
    let lang = SynthLanguage::new(spec)?;
    let slot = lang.feature_index(feature)?;
    let nvalues = spec.slots[slot].values.len();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, 2 + slot as u64));
    let mut pairs = Vec::with_capacity(count);
    while pairs.len() < count {
        let mut words = lang.sample_words(&mut rng);
        let k = rng.gen_range(0..words.len());
        let stem = words[k].0;
        // Another word with the same stem would blur the evidence.
        if words.iter().enumerate().any(|(i, w)| i != k && w.0 == stem) {
            if spec.stems == 1 {
                words.truncate(1);
            } else {
                continue;
            }
        }
        let k = k.min(words.len() - 1);
        let variant_value = rng.gen_range(1..nvalues);
        words[k].1[slot] = 0;
        let (source_base, _) = lang.render(&words);
        words[k].1[slot] = variant_value;
        let (source_variant, _) = lang.render(&words);
        pairs.push(ContrastPair {
            source_base,
            source_variant,
            feature: feature.into(),
            base_pattern: lang.evidence_pattern(stem, slot, 0),
            variant_pattern: lang.evidence_pattern(stem, slot, variant_value),
        });
    }
    Ok(pairs)
}

/// Gold target for a tagged source sentence.
pub fn gold_target(lang: &SynthLanguage, source: &str) -> Option<String> {
    let toks: Vec<&str> = source.split_whitespace().collect();
    let per = lang.spec.slots.len() + 1;
    if toks.is_empty() || toks.len() % per != 0 {
        return None;
    }
    let mut out = Vec::new();
    for g in toks.chunks(per) {
        let stem = lang.stems.iter().position(|s| s == g[per - 1])?;
        let values: Option<Vec<usize>> = lang
            .spec
            .slots
            .iter()
            .zip(g)
            .map(|(s, t)| s.values.iter().position(|(tag, _)| tag == t))
            .collect();
        out.push(lang.realize(stem, &values?));
    }
    Some(out.join(" "))
}
