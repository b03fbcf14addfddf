//! Fully connected layers in three orientations:
//!
//! * [`dense_forward`]: a single vector.
//! * [`Dense::forward_columns`]: the same matrix applied to every column of a
//!   `features × time` tensor (the back-end stack, one time step at a time).
//! * [`Dense::forward_rows`] / [`LocalDense`]: applied along each channel row,
//!   either shared across rows or with one matrix per row.

use crate::error::{Error, Result};
use crate::tensor::{matmul, MatRef, Real, Tensor2D};

/// `W·v + b`, with `W` stored `n_out × n_in` row-major.
pub fn dense_forward<T: Real>(v: &[T], w: &[T], b: &[T]) -> Result<Vec<T>> {
    let n_out = b.len();
    if n_out == 0 || w.len() != n_out * v.len() {
        return Err(Error::shape(format!(
            "dense: {} weights for {} outputs and {} inputs",
            w.len(),
            n_out,
            v.len()
        )));
    }
    let mut out = b.to_vec();
    matmul(
        MatRef::new(w, n_out, v.len()),
        MatRef::new(v, v.len(), 1),
        &mut out,
        true,
    );
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub n_out: usize,
    pub n_in: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrads<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn new(n_out: usize, n_in: usize, weights: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if weights.len() != n_out * n_in || bias.len() != n_out {
            return Err(Error::shape(format!(
                "dense {n_out}x{n_in}: got {} weights, {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            n_out,
            n_in,
            weights,
            bias,
        })
    }

    pub fn zeros(n_out: usize, n_in: usize) -> Self {
        Self {
            n_out,
            n_in,
            weights: vec![T::zero(); n_out * n_in],
            bias: vec![T::zero(); n_out],
        }
    }

    fn w(&self) -> MatRef<'_, T> {
        MatRef::new(&self.weights, self.n_out, self.n_in)
    }

    /// `out[:, t] = W·x[:, t] + b`.
    pub fn forward_columns(&self, x: &Tensor2D<T>) -> Result<Tensor2D<T>> {
        if x.channels() != self.n_in {
            return Err(Error::shape(format!(
                "dense columns: input has {} rows, layer expects {}",
                x.channels(),
                self.n_in
            )));
        }
        let n = x.time();
        let mut out = Tensor2D::zeros(self.n_out, n);
        for (o, &b) in self.bias.iter().enumerate() {
            out.row_mut(o).iter_mut().for_each(|v| *v = b);
        }
        matmul(
            self.w(),
            MatRef::new(x.data(), self.n_in, n),
            out.data_mut(),
            true,
        );
        Ok(out)
    }

    pub fn backward_columns(
        &self,
        x: &Tensor2D<T>,
        grad_out: &Tensor2D<T>,
    ) -> Result<(Tensor2D<T>, DenseGrads<T>)> {
        if x.channels() != self.n_in
            || grad_out.channels() != self.n_out
            || x.time() != grad_out.time()
        {
            return Err(Error::shape(
                "dense columns backward: cache/gradient shape mismatch",
            ));
        }
        let n = x.time();
        let g = MatRef::new(grad_out.data(), self.n_out, n);
        let mut gx = Tensor2D::zeros(self.n_in, n);
        matmul(self.w().t(), g, gx.data_mut(), false);
        let mut gw = vec![T::zero(); self.n_out * self.n_in];
        matmul(g, MatRef::new(x.data(), self.n_in, n).t(), &mut gw, false);
        let gb = (0..self.n_out)
            .map(|o| grad_out.row(o).iter().copied().sum())
            .collect();
        Ok((
            gx,
            DenseGrads {
                weights: gw,
                bias: gb,
            },
        ))
    }

    /// `out[c, :] = W·x[c, :] + b` for every row `c`.
    pub fn forward_rows(&self, x: &Tensor2D<T>) -> Result<Tensor2D<T>> {
        if x.time() != self.n_in {
            return Err(Error::shape(format!(
                "dense rows: input rows have {} entries, layer expects {}",
                x.time(),
                self.n_in
            )));
        }
        let rows = x.channels();
        let mut out = Tensor2D::zeros(rows, self.n_out);
        for c in 0..rows {
            out.row_mut(c).copy_from_slice(&self.bias);
        }
        matmul(
            MatRef::new(x.data(), rows, self.n_in),
            self.w().t(),
            out.data_mut(),
            true,
        );
        Ok(out)
    }

    pub fn backward_rows(
        &self,
        x: &Tensor2D<T>,
        grad_out: &Tensor2D<T>,
    ) -> Result<(Tensor2D<T>, DenseGrads<T>)> {
        if x.time() != self.n_in
            || grad_out.time() != self.n_out
            || x.channels() != grad_out.channels()
        {
            return Err(Error::shape(
                "dense rows backward: cache/gradient shape mismatch",
            ));
        }
        let rows = x.channels();
        let g = MatRef::new(grad_out.data(), rows, self.n_out);
        let mut gx = Tensor2D::zeros(rows, self.n_in);
        matmul(g, self.w(), gx.data_mut(), false);
        let mut gw = vec![T::zero(); self.n_out * self.n_in];
        matmul(
            g.t(),
            MatRef::new(x.data(), rows, self.n_in),
            &mut gw,
            false,
        );
        let mut gb = vec![T::zero(); self.n_out];
        for c in 0..rows {
            for (b, &v) in gb.iter_mut().zip(grad_out.row(c)) {
                *b += v;
            }
        }
        Ok((
            gx,
            DenseGrads {
                weights: gw,
                bias: gb,
            },
        ))
    }
}

/// One `units × units_in` matrix and bias per channel row.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalDense<T> {
    pub channels: usize,
    pub n_out: usize,
    pub n_in: usize,
    /// `channels × n_out × n_in`.
    pub weights: Vec<T>,
    /// `channels × n_out`.
    pub bias: Vec<T>,
}

impl<T: Real> LocalDense<T> {
    pub fn zeros(channels: usize, n_out: usize, n_in: usize) -> Self {
        Self {
            channels,
            n_out,
            n_in,
            weights: vec![T::zero(); channels * n_out * n_in],
            bias: vec![T::zero(); channels * n_out],
        }
    }

    fn block(&self, c: usize) -> &[T] {
        let sz = self.n_out * self.n_in;
        &self.weights[c * sz..(c + 1) * sz]
    }

    pub fn forward(&self, x: &Tensor2D<T>) -> Result<Tensor2D<T>> {
        if x.channels() != self.channels || x.time() != self.n_in {
            return Err(Error::shape(format!(
                "local dense: input {}x{}, layer expects {}x{}",
                x.channels(),
                x.time(),
                self.channels,
                self.n_in
            )));
        }
        let mut out = Tensor2D::zeros(self.channels, self.n_out);
        for c in 0..self.channels {
            let o = out.row_mut(c);
            o.copy_from_slice(&self.bias[c * self.n_out..(c + 1) * self.n_out]);
            matmul(
                MatRef::new(self.block(c), self.n_out, self.n_in),
                MatRef::new(x.row(c), self.n_in, 1),
                o,
                true,
            );
        }
        Ok(out)
    }

    /// Returns `(grad_x, grad_weights, grad_bias)`.
    pub fn backward(
        &self,
        x: &Tensor2D<T>,
        grad_out: &Tensor2D<T>,
    ) -> Result<(Tensor2D<T>, Vec<T>, Vec<T>)> {
        if x.channels() != self.channels
            || x.time() != self.n_in
            || grad_out.channels() != self.channels
            || grad_out.time() != self.n_out
        {
            return Err(Error::shape(
                "local dense backward: cache/gradient shape mismatch",
            ));
        }
        let sz = self.n_out * self.n_in;
        let mut gx = Tensor2D::zeros(self.channels, self.n_in);
        let mut gw = vec![T::zero(); self.channels * sz];
        for c in 0..self.channels {
            let g = grad_out.row(c);
            matmul(
                MatRef::new(self.block(c), self.n_out, self.n_in).t(),
                MatRef::new(g, self.n_out, 1),
                gx.row_mut(c),
                false,
            );
            matmul(
                MatRef::new(g, self.n_out, 1),
                MatRef::new(x.row(c), 1, self.n_in),
                &mut gw[c * sz..(c + 1) * sz],
                false,
            );
        }
        Ok((gx, gw, grad_out.data().to_vec()))
    }
}
