//! Locally connected (depthwise) convolution: one filter per channel row,
//! no mixing across channels.

use super::conv::same_padding;
use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, Real, Tensor2D};

#[derive(Clone, Debug, PartialEq)]
pub struct LocalKernel<T> {
    pub channels: usize,
    pub taps: usize,
    /// `channels × taps`, row-major.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> LocalKernel<T> {
    pub fn new(channels: usize, taps: usize, weights: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if channels == 0 || taps == 0 {
            return Err(Error::invalid(
                "local kernel needs channels >= 1 and taps >= 1",
            ));
        }
        if weights.len() != channels * taps || bias.len() != channels {
            return Err(Error::shape(format!(
                "local kernel {channels}x{taps}: got {} weights, {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            channels,
            taps,
            weights,
            bias,
        })
    }

    pub fn zeros(channels: usize, taps: usize) -> Self {
        Self {
            channels,
            taps,
            weights: vec![T::zero(); channels * taps],
            bias: vec![T::zero(); channels],
        }
    }

    fn filter(&self, c: usize) -> &[T] {
        &self.weights[c * self.taps..(c + 1) * self.taps]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalGrads<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

fn padded_row<T: Real>(row: &[T], taps: usize) -> Vec<T> {
    let (left, right) = same_padding(taps);
    let mut p = vec![T::zero(); row.len() + left + right];
    p[left..left + row.len()].copy_from_slice(row);
    p
}

pub fn local_conv1d_forward<T: Real>(x: &Tensor2D<T>, k: &LocalKernel<T>) -> Result<Tensor2D<T>> {
    if x.channels() != k.channels {
        return Err(Error::shape(format!(
            "local conv: input has {} channels, kernel has {}",
            x.channels(),
            k.channels
        )));
    }
    let n = x.time();
    let mut out = Tensor2D::zeros(k.channels, n);
    for c in 0..k.channels {
        let xp = padded_row(x.row(c), k.taps);
        let o = out.row_mut(c);
        o.iter_mut().for_each(|v| *v = k.bias[c]);
        for (tau, &w) in k.filter(c).iter().enumerate() {
            axpy(o, w, &xp[tau..tau + n]);
        }
    }
    Ok(out)
}

/// Returns `(grad_x, grad_kernel)`.
pub fn local_conv1d_backward<T: Real>(
    x: &Tensor2D<T>,
    grad_out: &Tensor2D<T>,
    k: &LocalKernel<T>,
) -> Result<(Tensor2D<T>, LocalGrads<T>)> {
    if !x.same_shape(grad_out) || x.channels() != k.channels {
        return Err(Error::shape(
            "local conv backward: cache/gradient shape mismatch",
        ));
    }
    let n = x.time();
    let (left, _) = same_padding(k.taps);
    let mut gx = Tensor2D::zeros(k.channels, n);
    let mut gw = vec![T::zero(); k.channels * k.taps];
    let mut gb = vec![T::zero(); k.channels];
    for c in 0..k.channels {
        let g = grad_out.row(c);
        let xp = padded_row(x.row(c), k.taps);
        let mut gxp = vec![T::zero(); xp.len()];
        for (tau, &w) in k.filter(c).iter().enumerate() {
            gw[c * k.taps + tau] = dot(g, &xp[tau..tau + n]);
            axpy(&mut gxp[tau..tau + n], w, g);
        }
        gx.row_mut(c).copy_from_slice(&gxp[left..left + n]);
        gb[c] = g.iter().copied().sum();
    }
    Ok((
        gx,
        LocalGrads {
            weights: gw,
            bias: gb,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{rand_vec, rng};

    fn random_case(
        seed: u64,
        channels: usize,
        taps: usize,
        n: usize,
    ) -> (Tensor2D<f64>, LocalKernel<f64>) {
        let mut r = rng(seed);
        let x = Tensor2D::from_vec(channels, n, rand_vec(&mut r, channels * n, 1.0)).unwrap();
        let k = LocalKernel::new(
            channels,
            taps,
            rand_vec(&mut r, channels * taps, 0.5),
            rand_vec(&mut r, channels, 0.5),
        )
        .unwrap();
        (x, k)
    }

    #[test]
    fn zero_row_gives_bias() {
        let (mut x, k) = random_case(1, 4, 128, 40);
        x.row_mut(2).iter_mut().for_each(|v| *v = 0.0);
        let out = local_conv1d_forward(&x, &k).unwrap();
        assert!(out.row(2).iter().all(|&v| v == k.bias[2]));
    }

    #[test]
    fn perturbing_one_row_is_local() {
        let (x, k) = random_case(2, 8, 128, 48);
        let base = local_conv1d_forward(&x, &k).unwrap();
        let mut x2 = x.clone();
        x2.row_mut(3).iter_mut().for_each(|v| *v += 0.7);
        let out = local_conv1d_forward(&x2, &k).unwrap();
        for c in 0..8 {
            if c == 3 {
                assert_ne!(out.row(c), base.row(c));
            } else {
                assert_eq!(out.row(c), base.row(c));
            }
        }
    }

    #[test]
    fn matches_direct_per_row_sum() {
        let (x, k) = random_case(3, 5, 128, 37);
        let out = local_conv1d_forward(&x, &k).unwrap();
        let n = x.time() as isize;
        for c in 0..5 {
            for t in 0..n {
                let mut acc = k.bias[c];
                for tau in 0..128isize {
                    let s = t + tau - 64;
                    if (0..n).contains(&s) {
                        acc += k.weights[c * 128 + tau as usize] * x.get(c, s as usize);
                    }
                }
                assert!((out.get(c, t as usize) - acc).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn channel_mismatch() {
        let k = LocalKernel::<f32>::zeros(4, 3);
        assert!(local_conv1d_forward(&Tensor2D::zeros(3, 5), &k).is_err());
    }
}
