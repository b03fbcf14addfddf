//! Non-overlapping max-pooling that records argmax positions, and the
//! matching unpooling that scatters values back to those positions.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor2D};

/// Absolute time index of each window maximum, `channels × pooled`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndices {
    channels: usize,
    pooled: usize,
    pool: usize,
    idx: Vec<usize>,
}

impl PoolIndices {
    pub fn new(channels: usize, pooled: usize, pool: usize, idx: Vec<usize>) -> Result<Self> {
        if idx.len() != channels * pooled {
            return Err(Error::shape(
                "pool index count differs from channels × pooled",
            ));
        }
        for (i, &v) in idx.iter().enumerate() {
            let w = i % pooled;
            if v < w * pool || v >= (w + 1) * pool {
                return Err(Error::invalid(format!(
                    "pool index {v} lies outside window {w} of size {pool}"
                )));
            }
        }
        Ok(Self {
            channels,
            pooled,
            pool,
            idx,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn pooled(&self) -> usize {
        self.pooled
    }
    pub fn pool(&self) -> usize {
        self.pool
    }
    pub fn time(&self) -> usize {
        self.pooled * self.pool
    }
    pub fn as_slice(&self) -> &[usize] {
        &self.idx
    }
    pub fn get(&self, c: usize, w: usize) -> usize {
        self.idx[c * self.pooled + w]
    }
}

/// Ties resolve to the smallest index.
pub fn maxpool_forward<T: Real>(
    x: &Tensor2D<T>,
    pool: usize,
) -> Result<(Tensor2D<T>, PoolIndices)> {
    if pool == 0 || !x.time().is_multiple_of(pool) {
        return Err(Error::invalid(format!(
            "length {} is not divisible by pool size {pool}",
            x.time()
        )));
    }
    let pooled = x.time() / pool;
    let mut z = Tensor2D::zeros(x.channels(), pooled);
    let mut idx = Vec::with_capacity(x.channels() * pooled);
    for c in 0..x.channels() {
        let row = x.row(c);
        for w in 0..pooled {
            let start = w * pool;
            let mut best = start;
            for t in start + 1..start + pool {
                if row[t] > row[best] {
                    best = t;
                }
            }
            z.set(c, w, row[best]);
            idx.push(best);
        }
    }
    Ok((
        z,
        PoolIndices {
            channels: x.channels(),
            pooled,
            pool,
            idx,
        },
    ))
}

/// `out[c, idx[c, w]] = zh[c, w]`; zero elsewhere.
pub fn unpool<T: Real>(zh: &Tensor2D<T>, idx: &PoolIndices) -> Result<Tensor2D<T>> {
    if zh.channels() != idx.channels || zh.time() != idx.pooled {
        return Err(Error::shape(format!(
            "unpool: values {}x{} vs indices {}x{}",
            zh.channels(),
            zh.time(),
            idx.channels,
            idx.pooled
        )));
    }
    let mut out = Tensor2D::zeros(idx.channels, idx.time());
    for c in 0..idx.channels {
        let row = out.row_mut(c);
        for w in 0..idx.pooled {
            row[idx.get(c, w)] = zh.get(c, w);
        }
    }
    Ok(out)
}

/// Gradient routing of max-pooling: each pooled gradient goes to its stored index.
pub fn maxpool_backward<T: Real>(
    grad_pooled: &Tensor2D<T>,
    idx: &PoolIndices,
) -> Result<Tensor2D<T>> {
    unpool(grad_pooled, idx)
}

/// Backward of [`unpool`]: gathers the gradient at the stored indices.
pub fn unpool_backward<T: Real>(grad: &Tensor2D<T>, idx: &PoolIndices) -> Result<Tensor2D<T>> {
    if grad.channels() != idx.channels || grad.time() != idx.time() {
        return Err(Error::shape(
            "unpool backward: gradient shape differs from indices",
        ));
    }
    Ok(Tensor2D::from_fn(idx.channels, idx.pooled, |c, w| {
        grad.get(c, idx.get(c, w))
    }))
}
