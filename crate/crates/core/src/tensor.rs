//! Scalar abstraction and the channels × time container used by every layer.
//!
//! Every layer is written once against [`Real`]. Training instantiates it at
//! `f32`; gradient verification instantiates the same code at `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, NumCast};

use crate::error::{Error, Result};

pub trait Real:
    Float
    + FromPrimitive
    + Default
    + Debug
    + Display
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Send
    + Sync
    + 'static
{
    /// `c = alpha * a·b + beta * c` with arbitrary strides (see `matrixmultiply`).
    #[allow(clippy::too_many_arguments)]
    fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        <f64 as NumCast>::from(self).unwrap_or(f64::NAN)
    }
}

fn check_extent(len: usize, rows: usize, cols: usize, rs: isize, cs: isize, what: &str) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows as isize - 1) * rs + (cols as isize - 1) * cs;
    assert!(
        rs >= 0 && cs >= 0 && (last as usize) < len,
        "gemm operand {what} out of bounds"
    );
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            fn gemm_raw(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                check_extent(a.len(), m, k, rsa, csa, "a");
                check_extent(b.len(), k, n, rsb, csb, "b");
                check_extent(c.len(), m, n, rsc, csc, "c");
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every operand extent was bounds-checked above.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// Row-major matrix operand: `(data, rows, cols)`, optionally transposed.
#[derive(Clone, Copy)]
pub struct MatRef<'a, T> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
}

impl<'a, T> MatRef<'a, T> {
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self {
            data,
            rows,
            cols,
            transposed: false,
        }
    }

    pub fn t(self) -> Self {
        Self {
            transposed: !self.transposed,
            ..self
        }
    }

    fn shape(&self) -> (usize, usize) {
        if self.transposed {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.cols as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `out = a·b + (accumulate ? out : 0)`; `out` is row-major `m × n`.
pub fn matmul<T: Real>(a: MatRef<'_, T>, b: MatRef<'_, T>, out: &mut [T], accumulate: bool) {
    let (m, k) = a.shape();
    let (k2, n) = b.shape();
    assert_eq!(k, k2, "matmul inner dimensions");
    assert_eq!(out.len(), m * n, "matmul output size");
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    let beta = if accumulate { T::one() } else { T::zero() };
    T::gemm_raw(
        m,
        k,
        n,
        T::one(),
        a.data,
        rsa,
        csa,
        b.data,
        rsb,
        csb,
        beta,
        out,
        n as isize,
        1,
    );
}

#[inline]
pub(crate) fn axpy<T: Real>(y: &mut [T], alpha: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn all_finite<T: Real>(data: &[T]) -> bool {
    data.iter().all(|v| v.is_finite())
}

pub fn cast_slice<A: Real, B: Real>(src: &[A]) -> Vec<B> {
    src.iter()
        .map(|&v| B::from_f64(v.to_f64_lossy()).unwrap_or_else(B::nan))
        .collect()
}

/// Dense `channels × time` array, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor2D<T> {
    channels: usize,
    time: usize,
    data: Vec<T>,
}

impl<T: Real> Tensor2D<T> {
    pub fn zeros(channels: usize, time: usize) -> Self {
        Self {
            channels,
            time,
            data: vec![T::zero(); channels * time],
        }
    }

    pub fn filled(channels: usize, time: usize, value: T) -> Self {
        Self {
            channels,
            time,
            data: vec![value; channels * time],
        }
    }

    pub fn from_vec(channels: usize, time: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * time {
            return Err(Error::shape(format!(
                "tensor data length {} != {channels}x{time}",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            time,
            data,
        })
    }

    pub fn from_fn(channels: usize, time: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(channels * time);
        for c in 0..channels {
            for t in 0..time {
                data.push(f(c, t));
            }
        }
        Self {
            channels,
            time,
            data,
        }
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn time(&self) -> usize {
        self.time
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, c: usize) -> &[T] {
        &self.data[c * self.time..(c + 1) * self.time]
    }

    #[inline]
    pub fn row_mut(&mut self, c: usize) -> &mut [T] {
        &mut self.data[c * self.time..(c + 1) * self.time]
    }

    #[inline]
    pub fn get(&self, c: usize, t: usize) -> T {
        self.data[c * self.time + t]
    }

    #[inline]
    pub fn set(&mut self, c: usize, t: usize, v: T) {
        self.data[c * self.time + t] = v;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            channels: self.channels,
            time: self.time,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.channels == other.channels && self.time == other.time
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(Error::shape(format!(
                "hadamard {}x{} vs {}x{}",
                self.channels, self.time, other.channels, other.time
            )));
        }
        Ok(Self {
            channels: self.channels,
            time: self.time,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a * b)
                .collect(),
        })
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.data)
    }

    pub fn check_finite(&self, stage: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite {
                stage: stage.to_string(),
            })
        }
    }

    pub fn cast<U: Real>(&self) -> Tensor2D<U> {
        Tensor2D {
            channels: self.channels,
            time: self.time,
            data: cast_slice(&self.data),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matches_naive_with_transposes() {
        let a: Vec<f64> = (0..6).map(|v| v as f64 * 0.5 - 1.0).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|v| (v as f64).sin()).collect(); // 3x4
        let mut out = vec![0.0; 8];
        matmul(
            MatRef::new(&a, 2, 3),
            MatRef::new(&b, 3, 4),
            &mut out,
            false,
        );
        for i in 0..2 {
            for j in 0..4 {
                let want: f64 = (0..3).map(|k| a[i * 3 + k] * b[k * 4 + j]).sum();
                assert!((out[i * 4 + j] - want).abs() < 1e-12);
            }
        }
        // aᵀ·a is 3x3 and symmetric
        let mut ata = vec![0.0; 9];
        matmul(
            MatRef::new(&a, 2, 3).t(),
            MatRef::new(&a, 2, 3),
            &mut ata,
            false,
        );
        for i in 0..3 {
            for j in 0..3 {
                let want: f64 = (0..2).map(|k| a[k * 3 + i] * a[k * 3 + j]).sum();
                assert!((ata[i * 3 + j] - want).abs() < 1e-12);
            }
        }
        // accumulate doubles the result
        matmul(
            MatRef::new(&a, 2, 3).t(),
            MatRef::new(&a, 2, 3),
            &mut ata,
            true,
        );
        let want: f64 = 2.0 * (0..2).map(|k| a[k * 3] * a[k * 3]).sum::<f64>();
        assert!((ata[0] - want).abs() < 1e-12);
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Tensor2D::<f32>::from_vec(2, 3, vec![0.0; 5]).is_err());
        let t = Tensor2D::<f32>::from_vec(2, 3, vec![1.0; 6]).unwrap();
        assert_eq!(t.row(1).len(), 3);
    }

    #[test]
    fn check_finite_names_stage() {
        let t = Tensor2D::<f32>::from_vec(1, 2, vec![1.0, f32::NAN]).unwrap();
        let err = t.check_finite("softplus").unwrap_err();
        assert!(err.to_string().contains("softplus"));
    }
}
