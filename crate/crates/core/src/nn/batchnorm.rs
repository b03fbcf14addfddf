//! Per-channel batch normalization over (batch × time).
//!
//! The forward passes here are pure: train mode returns the batch statistics
//! and the caller decides when to fold them into the running estimates.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor2D};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    Train,
    Infer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    /// Weight kept on the old running estimate at each update.
    pub momentum: T,
    pub epsilon: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Biased (population) variance.
    pub var: Vec<T>,
    pub count: usize,
}

#[derive(Clone, Debug)]
pub struct BnCache<T> {
    pub xhat: Vec<Tensor2D<T>>,
    pub inv_std: Vec<T>,
}

impl<T: Real> BatchNormState<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: T::lit(0.9),
            epsilon: T::lit(1e-5),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        if self.beta.len() != c || self.running_mean.len() != c || self.running_var.len() != c {
            return Err(Error::shape("batchnorm state arrays differ in length"));
        }
        if !(self.epsilon > T::zero()) {
            return Err(Error::invalid("batchnorm epsilon must be > 0"));
        }
        if !(self.momentum > T::zero() && self.momentum < T::one()) {
            return Err(Error::invalid("batchnorm momentum must lie in (0, 1)"));
        }
        if self.running_var.iter().any(|&v| v < T::zero()) {
            return Err(Error::invalid("batchnorm running variance must be >= 0"));
        }
        Ok(())
    }

    /// Folds batch statistics into the running estimates (unbiased variance).
    pub fn update_running(&mut self, stats: &BatchStats<T>) {
        let m = self.momentum;
        let n = T::from_usize(stats.count).unwrap_or_else(T::one);
        let unbias = if stats.count > 1 {
            n / (n - T::one())
        } else {
            T::one()
        };
        for c in 0..self.channels() {
            self.running_mean[c] = m * self.running_mean[c] + (T::one() - m) * stats.mean[c];
            self.running_var[c] = m * self.running_var[c] + (T::one() - m) * stats.var[c] * unbias;
        }
    }
}

fn check_batch<T: Real>(xs: &[Tensor2D<T>], channels: usize) -> Result<usize> {
    let first = xs
        .first()
        .ok_or_else(|| Error::invalid("batchnorm on an empty batch"))?;
    if xs.iter().any(|x| !x.same_shape(first)) || first.channels() != channels {
        return Err(Error::shape(
            "batchnorm batch items must share the state's channel count and length",
        ));
    }
    Ok(first.time())
}

/// Normalizes with batch statistics; returns `(outputs, cache, stats)`.
pub fn batchnorm_train<T: Real>(
    xs: &[Tensor2D<T>],
    s: &BatchNormState<T>,
) -> Result<(Vec<Tensor2D<T>>, BnCache<T>, BatchStats<T>)> {
    let channels = s.channels();
    let time = check_batch(xs, channels)?;
    let count = xs.len() * time;
    if count < 2 {
        return Err(Error::invalid(
            "batchnorm train mode needs at least 2 samples per channel",
        ));
    }
    let n = T::from_usize(count).expect("count fits");
    let mut mean = vec![T::zero(); channels];
    let mut var = vec![T::zero(); channels];
    for c in 0..channels {
        let sum: T = xs.iter().map(|x| x.row(c).iter().copied().sum::<T>()).sum();
        let mu = sum / n;
        let ss: T = xs
            .iter()
            .map(|x| x.row(c).iter().map(|&v| (v - mu) * (v - mu)).sum::<T>())
            .sum();
        mean[c] = mu;
        var[c] = ss / n;
    }
    let inv_std: Vec<T> = var
        .iter()
        .map(|&v| T::one() / (v + s.epsilon).sqrt())
        .collect();
    let mut outs = Vec::with_capacity(xs.len());
    let mut xhats = Vec::with_capacity(xs.len());
    for x in xs {
        let mut xhat = x.clone();
        let mut y = x.clone();
        for c in 0..channels {
            let (mu, is, g, b) = (mean[c], inv_std[c], s.gamma[c], s.beta[c]);
            for (h, o) in xhat.row_mut(c).iter_mut().zip(y.row_mut(c).iter_mut()) {
                *h = (*h - mu) * is;
                *o = g * *h + b;
            }
        }
        xhats.push(xhat);
        outs.push(y);
    }
    Ok((
        outs,
        BnCache {
            xhat: xhats,
            inv_std,
        },
        BatchStats { mean, var, count },
    ))
}

pub fn batchnorm_infer<T: Real>(x: &Tensor2D<T>, s: &BatchNormState<T>) -> Result<Tensor2D<T>> {
    if x.channels() != s.channels() {
        return Err(Error::shape(
            "batchnorm input channel count differs from state",
        ));
    }
    let mut y = x.clone();
    for c in 0..s.channels() {
        let is = T::one() / (s.running_var[c] + s.epsilon).sqrt();
        let (mu, g, b) = (s.running_mean[c], s.gamma[c], s.beta[c]);
        y.row_mut(c)
            .iter_mut()
            .for_each(|v| *v = g * (*v - mu) * is + b);
    }
    Ok(y)
}

/// Mode-dispatching form; train mode also updates the running statistics.
pub fn batchnorm_apply<T: Real>(
    xs: &[Tensor2D<T>],
    s: &mut BatchNormState<T>,
    mode: NormMode,
) -> Result<Vec<Tensor2D<T>>> {
    match mode {
        NormMode::Train => {
            let (out, _, stats) = batchnorm_train(xs, s)?;
            s.update_running(&stats);
            Ok(out)
        }
        NormMode::Infer => xs.iter().map(|x| batchnorm_infer(x, s)).collect(),
    }
}

/// Train-mode backward: returns `(grad_x, grad_gamma, grad_beta)`.
pub fn batchnorm_backward<T: Real>(
    cache: &BnCache<T>,
    grads: &[Tensor2D<T>],
    gamma: &[T],
) -> Result<(Vec<Tensor2D<T>>, Vec<T>, Vec<T>)> {
    if grads.len() != cache.xhat.len()
        || grads.iter().zip(&cache.xhat).any(|(g, h)| !g.same_shape(h))
    {
        return Err(Error::shape(
            "batchnorm backward: cache/gradient shape mismatch",
        ));
    }
    let channels = gamma.len();
    let time = grads.first().map_or(0, Tensor2D::time);
    let n = T::from_usize(grads.len() * time).expect("count fits");
    let mut dgamma = vec![T::zero(); channels];
    let mut dbeta = vec![T::zero(); channels];
    for c in 0..channels {
        for (g, h) in grads.iter().zip(&cache.xhat) {
            for (&gv, &hv) in g.row(c).iter().zip(h.row(c)) {
                dgamma[c] += gv * hv;
                dbeta[c] += gv;
            }
        }
    }
    let mut gx: Vec<Tensor2D<T>> = grads.to_vec();
    for c in 0..channels {
        // dxhat = g·gamma; dx = inv_std/N · (N·dxhat − Σdxhat − xhat·Σ(dxhat·xhat))
        let sum_dxhat = dbeta[c] * gamma[c];
        let sum_dxhat_xhat = dgamma[c] * gamma[c];
        let k = cache.inv_std[c] / n;
        for (out, h) in gx.iter_mut().zip(&cache.xhat) {
            for (o, &hv) in out.row_mut(c).iter_mut().zip(h.row(c)) {
                let dxhat = *o * gamma[c];
                *o = k * (n * dxhat - sum_dxhat - hv * sum_dxhat_xhat);
            }
        }
    }
    Ok((gx, dgamma, dbeta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{rand_vec, rng};

    fn batch(seed: u64, b: usize, c: usize, t: usize) -> Vec<Tensor2D<f64>> {
        let mut r = rng(seed);
        (0..b)
            .map(|i| {
                let v: Vec<f64> = rand_vec(&mut r, c * t, 2.0)
                    .iter()
                    .map(|x| x + i as f64)
                    .collect();
                Tensor2D::from_vec(c, t, v).unwrap()
            })
            .collect()
    }

    #[test]
    fn train_output_is_standardized() {
        let xs = batch(1, 3, 4, 50);
        let s = BatchNormState::<f64>::new(4);
        let (ys, _, _) = batchnorm_train(&xs, &s).unwrap();
        for c in 0..4 {
            let vals: Vec<f64> = ys.iter().flat_map(|y| y.row(c).to_vec()).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-4);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn infer_with_unit_stats_is_identity() {
        let xs = batch(2, 1, 3, 10);
        let s = BatchNormState::<f64>::new(3);
        let y = batchnorm_infer(&xs[0], &s).unwrap();
        for (a, b) in y.data().iter().zip(xs[0].data()) {
            assert!((a - b / (1.0 + 1e-5f64).sqrt()).abs() < 1e-12);
            assert!((a - b).abs() < 1e-4 * b.abs().max(1.0));
        }
    }

    #[test]
    fn constant_channel_maps_to_beta() {
        let mut s = BatchNormState::<f32>::new(2);
        s.beta = vec![0.25, -0.5];
        let xs = vec![Tensor2D::filled(2, 8, 3.0f32), Tensor2D::filled(2, 8, 3.0)];
        let ys = batchnorm_apply(&xs, &mut s, NormMode::Train).unwrap();
        for y in &ys {
            assert!(y.row(0).iter().all(|&v| v == 0.25));
            assert!(y.row(1).iter().all(|&v| v == -0.5));
        }
        assert!(s.running_var.iter().all(|&v| v >= 0.0));
        assert!((s.running_mean[0] - 0.3).abs() < 1e-6);
    }

    #[test]
    fn train_needs_two_samples() {
        let s = BatchNormState::<f32>::new(1);
        assert!(batchnorm_train(&[Tensor2D::zeros(1, 1)], &s).is_err());
        assert!(batchnorm_train(&[Tensor2D::zeros(1, 1), Tensor2D::zeros(1, 1)], &s).is_ok());
    }
}
