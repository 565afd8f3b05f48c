use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::TrainError;
use crate::vocab::PAD;

/// One source/target pair as index sequences.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Example {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

impl Example {
    pub fn new(source: Vec<usize>, target: Vec<usize>) -> Self {
        Example { source, target }
    }
}

/// Padded rectangular view of a group of examples.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Position of each row in the corpus the batch was drawn from.
    pub indices: Vec<usize>,
    pub source: Vec<Vec<usize>>,
    pub source_mask: Vec<Vec<bool>>,
    pub target: Vec<Vec<usize>>,
    pub target_mask: Vec<Vec<bool>>,
    pub source_lengths: Vec<usize>,
    pub target_lengths: Vec<usize>,
}

fn pad(rows: &[&[usize]]) -> (Vec<Vec<usize>>, Vec<Vec<bool>>, Vec<usize>) {
    let width = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let padded = rows
        .iter()
        .map(|r| {
            r.iter()
                .copied()
                .chain(std::iter::repeat(PAD))
                .take(width)
                .collect()
        })
        .collect();
    let masks = rows
        .iter()
        .map(|r| (0..width).map(|i| i < r.len()).collect())
        .collect();
    (padded, masks, rows.iter().map(|r| r.len()).collect())
}

impl Batch {
    pub fn new(corpus: &[Example], indices: Vec<usize>) -> Self {
        let src: Vec<&[usize]> = indices
            .iter()
            .map(|&i| corpus[i].source.as_slice())
            .collect();
        let tgt: Vec<&[usize]> = indices
            .iter()
            .map(|&i| corpus[i].target.as_slice())
            .collect();
        let (source, source_mask, source_lengths) = pad(&src);
        let (target, target_mask, target_lengths) = pad(&tgt);
        Batch {
            indices,
            source,
            source_mask,
            target,
            target_mask,
            source_lengths,
            target_lengths,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// The unpadded examples, in batch order.
    pub fn examples(&self) -> Vec<Example> {
        (0..self.len())
            .map(|r| Example {
                source: self.source[r][..self.source_lengths[r]].to_vec(),
                target: self.target[r][..self.target_lengths[r]].to_vec(),
            })
            .collect()
    }

    /// Scored target units; padding contributes nothing.
    pub fn target_units(&self) -> usize {
        self.target_mask.iter().flatten().filter(|&&m| m).count()
    }
}

/// Splits a corpus into padded batches for one epoch.
///
/// Sentences are shuffled under `seed`, grouped by source length so each
/// batch holds similar lengths, and the batch order is shuffled again.
pub fn make_batches(
    corpus: &[Example],
    batch_size: usize,
    seed: u64,
) -> Result<Vec<Batch>, TrainError> {
    if batch_size == 0 {
        return Err(TrainError::Config("batch size must be at least 1".into()));
    }
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut rng);
    order.sort_by_key(|&i| corpus[i].source.len());
    let mut batches: Vec<Batch> = order
        .chunks(batch_size)
        .map(|c| Batch::new(corpus, c.to_vec()))
        .collect();
    batches.shuffle(&mut rng);
    Ok(batches)
}
