//! Single-input-channel 1-D convolution bank and its exact adjoint.
//!
//! Layout: input `x[T]`, weights `[filters, taps]`, output `[filters, T]`.
//! Padding is "same" with `taps / 2` zeros on the left and the rest on the
//! right, so the output keeps length `T`.

use crate::error::{Error, Result};
use crate::tensor::{all_finite, matmul, MatRef, Real, Tensor2D};

/// `(left, right)` zero padding that keeps the output length equal to the input.
pub fn same_padding(taps: usize) -> (usize, usize) {
    let left = taps / 2;
    (left, taps - 1 - left)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel<T> {
    pub filters: usize,
    pub taps: usize,
    /// `filters × taps`, row-major.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvKernel<T> {
    pub fn new(filters: usize, taps: usize, weights: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if filters == 0 || taps == 0 {
            return Err(Error::invalid(
                "conv kernel needs filters >= 1 and taps >= 1",
            ));
        }
        if weights.len() != filters * taps || bias.len() != filters {
            return Err(Error::shape(format!(
                "conv kernel {filters}x{taps}: got {} weights, {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            filters,
            taps,
            weights,
            bias,
        })
    }

    pub fn zeros(filters: usize, taps: usize) -> Self {
        Self {
            filters,
            taps,
            weights: vec![T::zero(); filters * taps],
            bias: vec![T::zero(); filters],
        }
    }

    fn weight_mat(&self) -> MatRef<'_, T> {
        MatRef::new(&self.weights, self.filters, self.taps)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// `cols[τ, t] = x[t + τ - left]`, zero outside the signal.
fn im2col<T: Real>(x: &[T], taps: usize) -> Vec<T> {
    let n = x.len();
    let (left, _) = same_padding(taps);
    let mut cols = vec![T::zero(); taps * n];
    for tau in 0..taps {
        let row = &mut cols[tau * n..(tau + 1) * n];
        // t + tau - left in [0, n)
        let t_lo = left.saturating_sub(tau);
        let t_hi = (n + left).saturating_sub(tau).min(n);
        if t_lo < t_hi {
            let s_lo = t_lo + tau - left;
            row[t_lo..t_hi].copy_from_slice(&x[s_lo..s_lo + (t_hi - t_lo)]);
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-adds `cols` back onto a length-`n` signal.
fn col2im<T: Real>(cols: &[T], taps: usize, n: usize) -> Vec<T> {
    let (left, _) = same_padding(taps);
    let mut x = vec![T::zero(); n];
    for tau in 0..taps {
        let row = &cols[tau * n..(tau + 1) * n];
        let t_lo = left.saturating_sub(tau);
        let t_hi = (n + left).saturating_sub(tau).min(n);
        if t_lo < t_hi {
            let s_lo = t_lo + tau - left;
            for (xs, &c) in x[s_lo..s_lo + (t_hi - t_lo)]
                .iter_mut()
                .zip(&row[t_lo..t_hi])
            {
                *xs += c;
            }
        }
    }
    x
}

fn check_input<T: Real>(x: &[T]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::invalid("conv1d input must have at least one sample"));
    }
    if !all_finite(x) {
        return Err(Error::NonFinite {
            stage: "conv1d input".into(),
        });
    }
    Ok(())
}

/// Linear part of the convolution (no bias).
pub fn conv1d_linear<T: Real>(x: &[T], k: &ConvKernel<T>) -> Result<Tensor2D<T>> {
    check_input(x)?;
    let n = x.len();
    let cols = im2col(x, k.taps);
    let mut out = vec![T::zero(); k.filters * n];
    matmul(
        k.weight_mat(),
        MatRef::new(&cols, k.taps, n),
        &mut out,
        false,
    );
    Tensor2D::from_vec(k.filters, n, out)
}

/// `out[c, t] = bias[c] + Σ_τ weights[c, τ] · x_padded[t + τ]`.
pub fn conv1d_forward<T: Real>(x: &[T], k: &ConvKernel<T>) -> Result<Tensor2D<T>> {
    let mut out = conv1d_linear(x, k)?;
    for c in 0..k.filters {
        let b = k.bias[c];
        out.row_mut(c).iter_mut().for_each(|v| *v += b);
    }
    Ok(out)
}

/// Exact adjoint of [`conv1d_linear`]: the transposed first-layer transform.
pub fn conv1d_adjoint<T: Real>(g: &Tensor2D<T>, k: &ConvKernel<T>) -> Result<Vec<T>> {
    if g.channels() != k.filters {
        return Err(Error::shape(format!(
            "conv1d adjoint: gradient has {} channels, kernel has {} filters",
            g.channels(),
            k.filters
        )));
    }
    let n = g.time();
    let mut cols = vec![T::zero(); k.taps * n];
    matmul(
        k.weight_mat().t(),
        MatRef::new(g.data(), k.filters, n),
        &mut cols,
        false,
    );
    Ok(col2im(&cols, k.taps, n))
}

/// `Σ_t g[c, t] · x_padded[t + τ]`, shared by both uses of the tied kernel.
fn correlate_weight_grad<T: Real>(x: &[T], g: &Tensor2D<T>, taps: usize) -> Vec<T> {
    let n = x.len();
    let cols = im2col(x, taps);
    let mut gw = vec![T::zero(); g.channels() * taps];
    matmul(
        MatRef::new(g.data(), g.channels(), n),
        MatRef::new(&cols, taps, n).t(),
        &mut gw,
        false,
    );
    gw
}

/// Backward of [`conv1d_forward`]: returns `(grad_x, grad_kernel)`.
pub fn conv1d_backward<T: Real>(
    x: &[T],
    grad_out: &Tensor2D<T>,
    k: &ConvKernel<T>,
) -> Result<(Vec<T>, ConvGrads<T>)> {
    if grad_out.channels() != k.filters || grad_out.time() != x.len() {
        return Err(Error::shape(format!(
            "conv1d backward: gradient {}x{} vs expected {}x{}",
            grad_out.channels(),
            grad_out.time(),
            k.filters,
            x.len()
        )));
    }
    let gx = conv1d_adjoint(grad_out, k)?;
    let weights = correlate_weight_grad(x, grad_out, k.taps);
    let bias = (0..k.filters)
        .map(|c| grad_out.row(c).iter().copied().sum())
        .collect();
    Ok((gx, ConvGrads { weights, bias }))
}

/// Backward of `y = conv1d_adjoint(input, k)`: returns `(grad_input, grad_weights)`.
pub fn conv1d_adjoint_backward<T: Real>(
    input: &Tensor2D<T>,
    grad_y: &[T],
    k: &ConvKernel<T>,
) -> Result<(Tensor2D<T>, Vec<T>)> {
    if input.channels() != k.filters || input.time() != grad_y.len() {
        return Err(Error::shape(format!(
            "conv1d adjoint backward: input {}x{}, gradient length {}",
            input.channels(),
            input.time(),
            grad_y.len()
        )));
    }
    let g_input = conv1d_linear(grad_y, k)?;
    let gw = correlate_weight_grad(grad_y, input, k.taps);
    Ok((g_input, gw))
}
