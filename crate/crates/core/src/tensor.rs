//! Dense row-major `f64` tensors and the handful of kernels the computation
//! graph evaluates.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Value returned by [`maxpool`] for every column when there are no rows.
pub const EMPTY_POOL_SENTINEL: f64 = -1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("concat of an empty list")]
    EmptyConcat,
    #[error("index {index} out of range for tensor with {len} elements")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("{len} values do not fill shape {shape:?}")]
    BadLength { shape: Vec<usize>, len: usize },
}

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}{:?}", self.shape, self.values)
    }
}

fn element_count(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, TensorError> {
        if element_count(&shape) != values.len() {
            return Err(TensorError::BadLength {
                shape,
                len: values.len(),
            });
        }
        Ok(Self { shape, values })
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![],
            values: vec![v],
        }
    }

    pub fn vector(values: Vec<f64>) -> Self {
        Self {
            shape: vec![values.len()],
            values,
        }
    }

    /// Builds a rank-2 tensor from equal-length rows.
    pub fn matrix(rows: &[&[f64]]) -> Result<Self, TensorError> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(TensorError::ShapeMismatch {
                    op: "matrix",
                    left: vec![cols],
                    right: vec![row.len()],
                });
            }
            values.extend_from_slice(row);
        }
        Ok(Self {
            shape: vec![rows.len(), cols],
            values,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            values: vec![v; element_count(shape)],
        }
    }

    /// I.i.d. uniform entries in `[-scale, scale]`, reproducible from `seed`.
    pub fn random_uniform(shape: &[usize], scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..element_count(shape))
            .map(|_| {
                if scale == 0.0 {
                    0.0
                } else {
                    rng.random_range(-scale..=scale)
                }
            })
            .collect();
        Self {
            shape: shape.to_vec(),
            values,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn get(&self, i: usize) -> Result<f64, TensorError> {
        self.values
            .get(i)
            .copied()
            .ok_or(TensorError::IndexOutOfRange {
                index: i,
                len: self.values.len(),
            })
    }

    /// One-hot tensor of this tensor's shape with `weight` at flat index `i`.
    pub fn one_hot_like(&self, i: usize, weight: f64) -> Result<Tensor, TensorError> {
        let mut out = Tensor::zeros(&self.shape);
        let len = out.values.len();
        *out
            .values
            .get_mut(i)
            .ok_or(TensorError::IndexOutOfRange { index: i, len })? = weight;
        Ok(out)
    }

    /// In-place `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Tensor) -> Result<(), TensorError> {
        same_shape("axpy", self, other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&self, alpha: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            values: self.values.iter().map(|v| v * alpha).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.values.iter().enumerate() {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| i)
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), TensorError> {
    if a.shape != b.shape {
        return Err(TensorError::ShapeMismatch {
            op,
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    Ok(())
}

fn expect_rank(op: &'static str, t: &Tensor, rank: usize) -> Result<(), TensorError> {
    if t.rank() != rank {
        return Err(TensorError::Rank {
            op,
            expected: rank,
            shape: t.shape.clone(),
        });
    }
    Ok(())
}

pub fn matvec(a: &Tensor, x: &Tensor) -> Result<Tensor, TensorError> {
    expect_rank("matvec", a, 2)?;
    expect_rank("matvec", x, 1)?;
    let (m, n) = (a.shape[0], a.shape[1]);
    if x.shape[0] != n {
        return Err(TensorError::ShapeMismatch {
            op: "matvec",
            left: a.shape.clone(),
            right: x.shape.clone(),
        });
    }
    let values = if n == 0 {
        vec![0.0; m]
    } else {
        a.values
            .chunks_exact(n)
            .map(|row| row.iter().zip(&x.values).map(|(w, v)| w * v).sum())
            .collect()
    };
    Ok(Tensor::vector(values))
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    same_shape("add", a, b)?;
    Ok(Tensor {
        shape: a.shape.clone(),
        values: a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect(),
    })
}

pub fn tanh(a: &Tensor) -> Tensor {
    Tensor {
        shape: a.shape.clone(),
        values: a.values.iter().map(|v| v.tanh()).collect(),
    }
}

pub fn concat(parts: &[&Tensor]) -> Result<Tensor, TensorError> {
    if parts.is_empty() {
        return Err(TensorError::EmptyConcat);
    }
    let mut values = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    for p in parts {
        expect_rank("concat", p, 1)?;
        values.extend_from_slice(&p.values);
    }
    Ok(Tensor::vector(values))
}

/// Column-wise maximum over rank-1 rows of length `width`.
///
/// No rows yields a vector of [`EMPTY_POOL_SENTINEL`].
pub fn maxpool(rows: &[&Tensor], width: usize) -> Result<Tensor, TensorError> {
    Ok(Tensor::vector(
        maxpool_with_argmax(rows, width)?
            .into_iter()
            .map(|(_, v)| v)
            .collect(),
    ))
}

/// Per column, the winning row (lowest index on ties) and its value.
pub(crate) fn maxpool_with_argmax(
    rows: &[&Tensor],
    width: usize,
) -> Result<Vec<(Option<usize>, f64)>, TensorError> {
    let mut best = vec![(None, EMPTY_POOL_SENTINEL); width];
    for (r, row) in rows.iter().enumerate() {
        expect_rank("maxpool", row, 1)?;
        if row.len() != width {
            return Err(TensorError::ShapeMismatch {
                op: "maxpool",
                left: vec![width],
                right: row.shape.clone(),
            });
        }
        for (slot, &v) in best.iter_mut().zip(&row.values) {
            if slot.0.is_none() || v > slot.1 {
                *slot = (Some(r), v);
            }
        }
    }
    Ok(best)
}
