//! Dense row-major `f64` tensors with at most three axes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported rank (batch × time × feature).
pub const MAX_RANK: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: index {index} at position {position} is out of range for extent {bound}")]
    IndexOutOfRange {
        op: &'static str,
        position: usize,
        index: usize,
        bound: usize,
    },
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("{0}: produced a non-finite value")]
    NonFinite(&'static str),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("backward already ran on this record; reset it first")]
    BackwardTwice,
    #[error("invalid shape {0:?}: extents must be positive and rank at most 3")]
    InvalidShape(Vec<usize>),
    #[error("dropout rate {0} must lie in [0, 1)")]
    InvalidRate(f64),
}

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that `data` fills `shape` exactly.
    ///
    /// A zero extent is allowed only on the leading axis, which is how an
    /// empty row gather (`0 × d`) is represented.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() && data.len() == 1 {
            return Ok(Tensor { shape, data });
        }
        if shape.len() > MAX_RANK || shape.iter().skip(1).any(|&d| d == 0) {
            return Err(TensorError::InvalidShape(shape));
        }
        if shape.iter().product::<usize>() != data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "tensor",
                left: shape,
                right: vec![data.len()],
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Element at a row-major multi-index.
    pub fn at(&self, index: &[usize]) -> f64 {
        let mut flat = 0;
        for (i, &d) in index.iter().zip(&self.shape) {
            flat = flat * d + i;
        }
        self.data[flat]
    }
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise
/// `1 / (1 - rate)`.
pub fn dropout_mask(shape: &[usize], rate: f64, seed: u64) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dropout_mask_with(shape, rate, &mut rng)
}

pub(crate) fn dropout_mask_with<R: Rng>(shape: &[usize], rate: f64, rng: &mut R) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(TensorError::InvalidRate(rate));
    }
    let n: usize = shape.iter().product();
    if rate == 0.0 {
        return Ok(Tensor {
            shape: shape.to_vec(),
            data: vec![1.0; n],
        });
    }
    let keep = 1.0 / (1.0 - rate);
    let data = (0..n)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    Ok(Tensor {
        shape: shape.to_vec(),
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![2, 2, 2, 2], vec![0.0; 16]).is_err());
        assert!(Tensor::new(vec![0, 3], vec![]).is_ok());
    }

    #[test]
    fn dropout_rate_zero_is_identity() {
        let m = dropout_mask(&[4, 5], 0.0, 7).unwrap();
        assert!(m.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn dropout_is_deterministic() {
        let a = dropout_mask(&[100], 0.3, 11).unwrap();
        let b = dropout_mask(&[100], 0.3, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_mean_is_one() {
        let m = dropout_mask(&[100_000], 0.2, 5).unwrap();
        let mean = m.data().iter().sum::<f64>() / m.len() as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        assert!(m
            .data()
            .iter()
            .all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-15));
    }

    #[test]
    fn dropout_rejects_rate_one() {
        assert_eq!(
            dropout_mask(&[3], 1.0, 0).unwrap_err(),
            TensorError::InvalidRate(1.0)
        );
    }
}
