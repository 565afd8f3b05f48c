//! BLEU, paired bootstrap significance, contrast-pair accuracy and corpus
//! statistics.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::segment::{token_type_stats, TokenStats};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{what}: {left} items vs {right}")]
    Misaligned {
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error("max n-gram order must be at least 1")]
    Order,
    #[error("invalid pattern {pattern:?}: {message}")]
    Pattern { pattern: String, message: String },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Clipped n-gram matches and candidate n-gram totals per order, plus
/// lengths. Sums over sentences give corpus statistics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuStats {
    pub matches: Vec<u64>,
    pub totals: Vec<u64>,
    pub candidate_len: u64,
    pub reference_len: u64,
}

impl BleuStats {
    pub fn zero(max_n: usize) -> Self {
        BleuStats {
            matches: vec![0; max_n],
            totals: vec![0; max_n],
            candidate_len: 0,
            reference_len: 0,
        }
    }

    /// Statistics of one whitespace-tokenized candidate against one
    /// reference.
    pub fn sentence(candidate: &str, reference: &str, max_n: usize) -> Self {
        let c: Vec<&str> = candidate.split_whitespace().collect();
        let r: Vec<&str> = reference.split_whitespace().collect();
        let mut s = BleuStats::zero(max_n);
        s.candidate_len = c.len() as u64;
        s.reference_len = r.len() as u64;
        for n in 1..=max_n {
            let cn = count_ngrams(&c, n);
            let rn = count_ngrams(&r, n);
            s.totals[n - 1] = c.len().saturating_sub(n - 1) as u64;
            s.matches[n - 1] = cn
                .iter()
                .map(|(g, &k)| k.min(rn.get(g).copied().unwrap_or(0)))
                .sum();
        }
        s
    }

    pub fn add(&mut self, other: &BleuStats) {
        for (a, b) in self.matches.iter_mut().zip(&other.matches) {
            *a += b;
        }
        for (a, b) in self.totals.iter_mut().zip(&other.totals) {
            *a += b;
        }
        self.candidate_len += other.candidate_len;
        self.reference_len += other.reference_len;
    }

    /// Geometric mean of the precisions times the brevity penalty.
    ///
    /// An order with no matches uses `1 / (total + 1)`; no unigram
    /// matches at all gives 0, as does an empty candidate.
    pub fn score(&self) -> f64 {
        if self.candidate_len == 0 || self.matches.first().copied().unwrap_or(0) == 0 {
            return 0.0;
        }
        let n = self.matches.len() as f64;
        let log_p: f64 = self
            .matches
            .iter()
            .zip(&self.totals)
            .map(|(&m, &t)| {
                if m == 0 {
                    (1.0 / (t as f64 + 1.0)).ln()
                } else {
                    (m as f64 / t as f64).ln()
                }
            })
            .sum::<f64>()
            / n;
        let bp = (1.0 - self.reference_len as f64 / self.candidate_len as f64)
            .min(0.0)
            .exp();
        bp * log_p.exp()
    }
}

fn count_ngrams<'a>(tokens: &[&'a str], n: usize) -> HashMap<Vec<&'a str>, u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

fn check_aligned(what: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(EvalError::Misaligned {
            what,
            left: a,
            right: b,
        });
    }
    Ok(())
}

/// Per-sentence statistics for aligned candidate and reference lists.
pub fn sentence_stats<S: AsRef<str>, T: AsRef<str>>(
    candidates: &[S],
    references: &[T],
    max_n: usize,
) -> Result<Vec<BleuStats>> {
    if max_n == 0 {
        return Err(EvalError::Order);
    }
    check_aligned(
        "candidates vs references",
        candidates.len(),
        references.len(),
    )?;
    Ok(candidates
        .iter()
        .zip(references)
        .map(|(c, r)| BleuStats::sentence(c.as_ref(), r.as_ref(), max_n))
        .collect())
}

/// Corpus BLEU from summed sentence statistics.
pub fn bleu<S: AsRef<str>, T: AsRef<str>>(
    candidates: &[S],
    references: &[T],
    max_n: usize,
) -> Result<(f64, BleuStats)> {
    let mut total = BleuStats::zero(max_n);
    for s in sentence_stats(candidates, references, max_n)? {
        total.add(&s);
    }
    Ok((total.score(), total))
}

/// Levenshtein distance over characters.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let b: Vec<char> = b.chars().collect();
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.chars().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for j in 0..b.len() {
            let next = (diag + (ca != b[j]) as usize)
                .min(row[j] + 1)
                .min(row[j + 1] + 1);
            diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    /// 1 − total edit distance / total reference characters, floored at 0.
    pub character: f64,
    /// Fraction of outputs identical to their reference.
    pub exact: f64,
}

pub fn accuracy<S: AsRef<str>, T: AsRef<str>>(outputs: &[S], references: &[T]) -> Result<Accuracy> {
    check_aligned("outputs vs references", outputs.len(), references.len())?;
    let (mut dist, mut chars, mut exact) = (0usize, 0usize, 0usize);
    for (o, r) in outputs.iter().zip(references) {
        let (o, r) = (o.as_ref(), r.as_ref());
        dist += edit_distance(o, r);
        chars += r.chars().count();
        exact += (o == r) as usize;
    }
    let n = outputs.len().max(1) as f64;
    Ok(Accuracy {
        character: if chars == 0 {
            (dist == 0) as u8 as f64
        } else {
            (1.0 - dist as f64 / chars as f64).max(0.0)
        },
        exact: exact as f64 / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Fraction of resamples where system B scores at least system A.
    pub p_value: f64,
    pub bleu_a: f64,
    pub bleu_b: f64,
    /// BLEU(A) − BLEU(B) on the full sets.
    pub delta: f64,
    pub resamples: usize,
}

/// Paired bootstrap resampling over sentence indices.
pub fn bootstrap_significance<S: AsRef<str>>(
    outputs_a: &[S],
    outputs_b: &[S],
    references: &[S],
    resamples: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    check_aligned("system A vs system B", outputs_a.len(), outputs_b.len())?;
    let sa = sentence_stats(outputs_a, references, 4)?;
    let sb = sentence_stats(outputs_b, references, 4)?;
    let sum = |s: &[BleuStats], idx: &mut dyn Iterator<Item = usize>| {
        let mut t = BleuStats::zero(4);
        for i in idx {
            t.add(&s[i]);
        }
        t.score()
    };
    let n = sa.len();
    let bleu_a = sum(&sa, &mut (0..n));
    let bleu_b = sum(&sb, &mut (0..n));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wins_b = 0usize;
    for _ in 0..resamples {
        let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n.max(1))).collect();
        let a = sum(&sa, &mut idx.iter().copied().filter(|&i| i < n));
        let b = sum(&sb, &mut idx.iter().copied().filter(|&i| i < n));
        if b >= a {
            wins_b += 1;
        }
    }
    Ok(BootstrapResult {
        p_value: if resamples == 0 {
            1.0
        } else {
            wins_b as f64 / resamples as f64
        },
        bleu_a,
        bleu_b,
        delta: bleu_a - bleu_b,
        resamples,
    })
}

/// Two sources differing in one feature, with the target evidence that
/// each translation must show.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastPair {
    pub source_base: String,
    pub source_variant: String,
    pub feature: String,
    /// Regex the base translation must match.
    pub base_pattern: String,
    /// Regex the variant translation must match and the base must not.
    pub variant_pattern: String,
}

impl ContrastPair {
    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.source_base,
            self.source_variant,
            self.feature,
            self.base_pattern,
            self.variant_pattern
        )
    }
}

pub fn write_contrast_pairs(path: &Path, pairs: &[ContrastPair]) -> Result<()> {
    let mut out = String::new();
    for p in pairs {
        let _ = writeln!(out, "{}", p.to_tsv());
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn parse_contrast_pairs(text: &str) -> Result<Vec<ContrastPair>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != 5 {
                return Err(EvalError::Format {
                    line: i + 1,
                    message: format!("expected 5 tab-separated fields, found {}", f.len()),
                });
            }
            Ok(ContrastPair {
                source_base: f[0].into(),
                source_variant: f[1].into(),
                feature: f[2].into(),
                base_pattern: f[3].into(),
                variant_pattern: f[4].into(),
            })
        })
        .collect()
}

pub fn read_contrast_pairs(path: &Path) -> Result<Vec<ContrastPair>> {
    parse_contrast_pairs(&std::fs::read_to_string(path)?)
}

/// Correct and total pair counts per feature.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContrastReport {
    pub features: BTreeMap<String, (usize, usize)>,
}

impl ContrastReport {
    pub fn accuracy(&self, feature: &str) -> Option<f64> {
        self.features
            .get(feature)
            .filter(|(_, t)| *t > 0)
            .map(|&(c, t)| c as f64 / t as f64)
    }

    /// Feature / correct / total / accuracy table.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<16} {:>8} {:>8} {:>9}\n",
            "feature", "correct", "total", "accuracy"
        );
        for (f, &(c, t)) in &self.features {
            let acc = if t > 0 {
                100.0 * c as f64 / t as f64
            } else {
                0.0
            };
            let _ = writeln!(out, "{f:<16} {c:>8} {t:>8} {acc:>8.1}%");
        }
        out
    }
}

fn compile(pattern: &str) -> Result<Regex> {
    Regex::new(pattern).map_err(|e| EvalError::Pattern {
        pattern: pattern.into(),
        message: e.to_string(),
    })
}

/// Scores translations of contrast pairs; `outputs[i]` holds the base and
/// variant translations of `pairs[i]`.
///
/// A pair is correct when the variant output matches the variant pattern,
/// the base output matches the base pattern, and the base output does not
/// match the variant pattern.
pub fn contrast_accuracy<S: AsRef<str>>(
    outputs: &[(S, S)],
    pairs: &[ContrastPair],
) -> Result<ContrastReport> {
    check_aligned("outputs vs contrast pairs", outputs.len(), pairs.len())?;
    let mut report = ContrastReport::default();
    for ((base, variant), p) in outputs.iter().zip(pairs) {
        let (bp, vp) = (compile(&p.base_pattern)?, compile(&p.variant_pattern)?);
        let (base, variant) = (base.as_ref(), variant.as_ref());
        let ok = vp.is_match(variant) && bp.is_match(base) && !vp.is_match(base);
        let e = report.features.entry(p.feature.clone()).or_insert((0, 0));
        e.0 += ok as usize;
        e.1 += 1;
    }
    Ok(report)
}

/// Token statistics per named corpus side, with a comparison table.
pub fn corpus_stats<S: AsRef<str>>(sides: &[(&str, &[S])]) -> (Vec<(String, TokenStats)>, String) {
    let mut rows = Vec::new();
    let mut table = format!(
        "{:<20} {:>10} {:>8} {:>10} {:>10}\n",
        "corpus", "tokens", "types", "tok/type", "mean len"
    );
    for (name, sentences) in sides {
        let tokenized: Vec<Vec<&str>> = sentences
            .iter()
            .map(|s| s.as_ref().split_whitespace().collect())
            .collect();
        let st = token_type_stats(&tokenized);
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
        let _ = writeln!(
            table,
            "{:<20} {:>10} {:>8} {:>10} {:>10}",
            name,
            st.tokens,
            st.types,
            fmt(st.ratio),
            fmt(st.mean_sentence_length)
        );
        rows.push((name.to_string(), st));
    }
    (rows, table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_one() {
        let (b, _) = bleu(&["a b c d e"], &["a b c d e"], 4).unwrap();
        assert_eq!(b, 1.0);
    }

    #[test]
    fn hand_computed_bleu3() {
        let (b, s) = bleu(&["the cat sat"], &["the cat sat down"], 3).unwrap();
        assert_eq!(s.matches, vec![3, 2, 1]);
        assert_eq!(s.totals, vec![3, 2, 1]);
        assert!((b - (1.0f64 - 4.0 / 3.0).exp()).abs() < 1e-12);
        assert!((b - 0.71653).abs() < 1e-5);
    }

    #[test]
    fn degenerate_cases() {
        assert_eq!(bleu(&[""], &["a b"], 4).unwrap().0, 0.0);
        assert_eq!(bleu(&["x y"], &["a b"], 4).unwrap().0, 0.0);
        assert!(matches!(
            bleu(&["a"], &["a", "b"], 4),
            Err(EvalError::Misaligned { .. })
        ));
        assert!(matches!(bleu(&["a"], &["a"], 0), Err(EvalError::Order)));
    }

    #[test]
    fn zero_match_order_smoothing() {
        // Unigrams 2/3, bigrams 0/2 -> 1/3, no brevity penalty.
        let (b, _) = bleu(&["a x b"], &["a y b"], 2).unwrap();
        assert!((b - ((2.0f64 / 3.0) * (1.0 / 3.0)).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn clipping() {
        let s = BleuStats::sentence("the the the", "the cat", 1);
        assert_eq!((s.matches[0], s.totals[0]), (1, 3));
    }

    #[test]
    fn edit_distance_and_accuracy() {
        assert_eq!(edit_distance("kitten", "sitting"), 3);
        assert_eq!(edit_distance("", "abc"), 3);
        let a = accuracy(&["kediler", "ev"], &["kediler", "evi"]).unwrap();
        assert_eq!(a.exact, 0.5);
        assert!((a.character - 0.9).abs() < 1e-12);
        assert!(accuracy(&["a"], &["a", "b"]).is_err());
    }

    #[test]
    fn bootstrap_rules() {
        let refs = ["a b c", "d e f", "g h i", "j k l"];
        let same = bootstrap_significance(&refs, &refs, &refs, 200, 3).unwrap();
        assert_eq!(same.p_value, 1.0);
        let worse = ["x y z", "x y z", "x y z", "x y z"];
        let r = bootstrap_significance(&refs, &worse, &refs, 200, 3).unwrap();
        assert_eq!(r.p_value, 0.0);
        assert_eq!(r.delta, 1.0);
        let mixed = ["a b c", "x y z", "g h z", "j k l"];
        let p1 = bootstrap_significance(&mixed, &worse, &refs, 300, 9).unwrap();
        let p2 = bootstrap_significance(&mixed, &worse, &refs, 300, 9).unwrap();
        assert_eq!(p1.p_value.to_bits(), p2.p_value.to_bits());
        assert!(bootstrap_significance(&refs, &worse[..2], &refs, 10, 0).is_err());
    }

    fn pair() -> ContrastPair {
        ContrastPair {
            source_base: "SG kedi".into(),
            source_variant: "PL kedi".into(),
            feature: "number".into(),
            base_pattern: "(^| )(kedi)( |$)".into(),
            variant_pattern: "(^| )(kediler)( |$)".into(),
        }
    }

    #[test]
    fn contrast_rules() {
        let pairs = vec![pair(), pair()];
        let gold = contrast_accuracy(&[("kedi", "kediler"), ("kedi", "kediler")], &pairs).unwrap();
        assert_eq!(gold.accuracy("number"), Some(1.0));
        let null = contrast_accuracy(&[("kedi", "kedi"), ("kediler", "kediler")], &pairs).unwrap();
        assert_eq!(null.accuracy("number"), Some(0.0));
        assert!(contrast_accuracy(&[("kedi", "kediler")], &pairs).is_err());
        assert!(gold.table().contains("number"));
    }

    #[test]
    fn contrast_file_round_trip() {
        let text = format!("{}\n{}\n", pair().to_tsv(), pair().to_tsv());
        assert_eq!(parse_contrast_pairs(&text).unwrap(), vec![pair(), pair()]);
        assert!(parse_contrast_pairs("a\tb\n").is_err());
    }

    #[test]
    fn stats_table() {
        let a = ["a a b"];
        let (rows, table) = corpus_stats(&[("target", &a[..])]);
        assert_eq!(rows[0].1.ratio, Some(1.5));
        assert!(table.contains("target"));
    }
}
