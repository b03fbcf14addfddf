//! Smooth adaptive activation functions.
//!
//! A SAAF is parameterized by its derivative: learnable slope values
//! `d_0..d_K` sit at fixed, strictly increasing breakpoints `a_0..a_K`, the
//! derivative is their piecewise-linear interpolant (held constant outside
//! `[a_0, a_K]`), and
//!
//! ```text
//! f(x) = c + ∫₀ˣ d(t) dt
//! ```
//!
//! Each segment is therefore a quadratic, consecutive pieces share value and
//! slope at every breakpoint, and `|f'| ≤ max_k |d_k|` bounds the Lipschitz
//! constant. The function is linear in `(c, d)`, which makes both the
//! parameter gradient and least-squares fitting exact.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tensor::Real;

/// Fixed breakpoint grid shared by every channel's SAAF.
#[derive(Clone, Debug, PartialEq)]
pub struct Breakpoints<T> {
    points: Vec<T>,
}

impl<T: Real> Breakpoints<T> {
    pub fn new(points: Vec<T>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("a SAAF needs at least two breakpoints"));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) || points.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid(
                "SAAF breakpoints must be finite and strictly increasing",
            ));
        }
        Ok(Self { points })
    }

    /// `segments` equal-width segments over `[lo, hi]`.
    pub fn uniform(segments: usize, lo: T, hi: T) -> Result<Self> {
        if segments == 0 {
            return Err(Error::invalid("SAAF needs at least one segment"));
        }
        let n = T::from_usize(segments).expect("segment count fits");
        let points = (0..=segments)
            .map(|k| lo + (hi - lo) * T::from_usize(k).expect("fits") / n)
            .collect();
        Self::new(points)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.points
    }

    pub fn segments(&self) -> usize {
        self.points.len() - 1
    }

    pub fn cast<U: Real>(&self) -> Breakpoints<U> {
        Breakpoints {
            points: crate::tensor::cast_slice(&self.points),
        }
    }
}

/// One standalone SAAF: breakpoints plus its learnable slopes and offset.
#[derive(Clone, Debug, PartialEq)]
pub struct SaafParams<T> {
    pub breakpoints: Breakpoints<T>,
    pub slopes: Vec<T>,
    pub offset: T,
}

impl<T: Real> SaafParams<T> {
    pub fn identity(breakpoints: Breakpoints<T>) -> Self {
        let slopes = vec![T::one(); breakpoints.as_slice().len()];
        Self {
            breakpoints,
            slopes,
            offset: T::zero(),
        }
    }

    pub fn evaluator(&self) -> Result<Saaf<T>> {
        Saaf::new(self.breakpoints.as_slice(), &self.slopes, self.offset)
    }
}

/// Evaluation-ready SAAF with prefix integrals precomputed.
#[derive(Clone, Debug)]
pub struct Saaf<T> {
    bps: Vec<T>,
    slopes: Vec<T>,
    offset: T,
    /// `prefix[k] = ∫_{a_0}^{a_k} d`.
    prefix: Vec<T>,
    /// `∫_{a_0}^{0} d`, so that `f(0) = c`.
    g0: T,
    /// Set when every slope is equal; the function is then exactly `c + s·x`.
    uniform: Option<T>,
}

/// Where `x` falls relative to the breakpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Piece {
    Below,
    Segment(usize),
    Above,
}

impl<T: Real> Saaf<T> {
    pub fn new(bps: &[T], slopes: &[T], offset: T) -> Result<Self> {
        if bps.len() < 2 || slopes.len() != bps.len() {
            return Err(Error::shape(format!(
                "SAAF with {} breakpoints needs as many slope values, got {}",
                bps.len(),
                slopes.len()
            )));
        }
        let mut prefix = Vec::with_capacity(bps.len());
        let mut acc = T::zero();
        prefix.push(acc);
        for k in 0..bps.len() - 1 {
            acc += (bps[k + 1] - bps[k]) * (slopes[k] + slopes[k + 1]) * T::lit(0.5);
            prefix.push(acc);
        }
        let mut s = Self {
            bps: bps.to_vec(),
            slopes: slopes.to_vec(),
            offset,
            prefix,
            g0: T::zero(),
            uniform: slopes.iter().all(|&d| d == slopes[0]).then_some(slopes[0]),
        };
        s.g0 = s.integral_from_start(T::zero());
        Ok(s)
    }

    fn locate(&self, x: T) -> Piece {
        let k_last = self.bps.len() - 1;
        if x < self.bps[0] {
            Piece::Below
        } else if x >= self.bps[k_last] {
            Piece::Above
        } else {
            // largest k with a_k <= x
            let k = self.bps.partition_point(|&a| a <= x) - 1;
            Piece::Segment(k)
        }
    }

    fn integral_from_start(&self, x: T) -> T {
        self.piece_integral(self.locate(x), x)
    }

    fn piece_integral(&self, piece: Piece, x: T) -> T {
        let kl = self.bps.len() - 1;
        match piece {
            Piece::Below => self.slopes[0] * (x - self.bps[0]),
            Piece::Above => self.prefix[kl] + self.slopes[kl] * (x - self.bps[kl]),
            Piece::Segment(k) => {
                let h = self.bps[k + 1] - self.bps[k];
                let u = x - self.bps[k];
                let dd = self.slopes[k + 1] - self.slopes[k];
                self.prefix[k] + self.slopes[k] * u + dd * u * u / (h + h)
            }
        }
    }

    fn piece_slope(&self, piece: Piece, x: T) -> T {
        let kl = self.bps.len() - 1;
        match piece {
            Piece::Below => self.slopes[0],
            Piece::Above => self.slopes[kl],
            Piece::Segment(k) => {
                let h = self.bps[k + 1] - self.bps[k];
                let u = x - self.bps[k];
                self.slopes[k] + (self.slopes[k + 1] - self.slopes[k]) * u / h
            }
        }
    }

    #[inline]
    pub fn eval(&self, x: T) -> T {
        if let Some(s) = self.uniform {
            return self.offset + s * x;
        }
        self.offset + self.integral_from_start(x) - self.g0
    }

    /// `(f(x), f'(x))`.
    #[inline]
    pub fn eval_with_slope(&self, x: T) -> (T, T) {
        if let Some(s) = self.uniform {
            return (self.offset + s * x, s);
        }
        let p = self.locate(x);
        (
            self.offset + self.piece_integral(p, x) - self.g0,
            self.piece_slope(p, x),
        )
    }

    /// Value and slope of piece `i` evaluated at `x` (possibly outside it).
    /// Piece `0` is the left linear extension, pieces `1..=K` are the quadratic
    /// segments, piece `K + 1` is the right linear extension.
    pub fn piece_at(&self, i: usize, x: T) -> (T, T) {
        let kl = self.bps.len() - 1;
        let p = match i {
            0 => Piece::Below,
            i if i > kl => Piece::Above,
            i => Piece::Segment(i - 1),
        };
        (
            self.offset + self.piece_integral(p, x) - self.g0,
            self.piece_slope(p, x),
        )
    }

    pub fn max_abs_slope(&self) -> T {
        self.slopes.iter().fold(T::zero(), |m, &d| m.max(d.abs()))
    }

    /// Accumulates `Σ_i g_i ∂f(x_i)/∂(slopes, offset)` into the given buffers.
    pub fn accumulate_param_grad(
        &self,
        xs: &[T],
        gs: &[T],
        grad_slopes: &mut [T],
        grad_offset: &mut T,
    ) {
        let nb = self.bps.len();
        debug_assert_eq!(grad_slopes.len(), nb);
        // full[k]: total weight of points that have integrated over the
        // first k complete segments
        let mut full = vec![T::zero(); nb];
        let mut g_sum = T::zero();
        for (&x, &g) in xs.iter().zip(gs) {
            if g == T::zero() {
                continue;
            }
            g_sum += g;
            self.add_partial(self.locate(x), x, g, grad_slopes, &mut full);
        }
        // subtract the ∂G(0) term for every point at once
        if g_sum != T::zero() {
            self.add_partial(
                self.locate(T::zero()),
                T::zero(),
                -g_sum,
                grad_slopes,
                &mut full,
            );
        }
        let mut tail = T::zero();
        for j in (0..nb - 1).rev() {
            tail += full[j + 1];
            if tail != T::zero() {
                let half_h = (self.bps[j + 1] - self.bps[j]) * T::lit(0.5);
                grad_slopes[j] += half_h * tail;
                grad_slopes[j + 1] += half_h * tail;
            }
        }
        *grad_offset += g_sum;
    }

    fn add_partial(&self, p: Piece, x: T, g: T, grad: &mut [T], full: &mut [T]) {
        let kl = self.bps.len() - 1;
        match p {
            Piece::Below => grad[0] += g * (x - self.bps[0]),
            Piece::Above => {
                grad[kl] += g * (x - self.bps[kl]);
                full[kl] += g;
            }
            Piece::Segment(k) => {
                let h = self.bps[k + 1] - self.bps[k];
                let u = x - self.bps[k];
                let q = u * u / (h + h);
                grad[k] += g * (u - q);
                grad[k + 1] += g * q;
                full[k] += g;
            }
        }
    }
}

/// `∂f(x)/∂slopes` at a single point.
pub fn saaf_basis<T: Real>(x: T, bps: &[T]) -> Vec<T> {
    let zeros = vec![T::zero(); bps.len()];
    let s = Saaf::new(bps, &zeros, T::zero()).expect("valid breakpoints");
    let mut g = vec![T::zero(); bps.len()];
    let mut off = T::zero();
    s.accumulate_param_grad(&[x], &[T::one()], &mut g, &mut off);
    g
}

pub fn saaf_eval<T: Real>(x: T, p: &SaafParams<T>) -> Result<T> {
    Ok(p.evaluator()?.eval(x))
}

/// `λ·Σ_k (d_{k+1} − d_k)²`.
pub fn saaf_smoothness_penalty<T: Real>(slopes: &[T], lambda: T) -> T {
    lambda
        * slopes
            .windows(2)
            .map(|w| (w[1] - w[0]) * (w[1] - w[0]))
            .sum::<T>()
}

/// Adds the penalty gradient into `grad`.
pub fn saaf_penalty_grad<T: Real>(slopes: &[T], lambda: T, grad: &mut [T]) {
    let two_l = lambda + lambda;
    for k in 0..slopes.len().saturating_sub(1) {
        let d = two_l * (slopes[k + 1] - slopes[k]);
        grad[k + 1] += d;
        grad[k] -= d;
    }
}

/// Largest `|d_{k+1} − d_k|` over adjacent slope values.
pub fn max_slope_difference<T: Real>(slopes: &[T]) -> T {
    slopes
        .windows(2)
        .fold(T::zero(), |m, w| m.max((w[1] - w[0]).abs()))
}

/// Least-squares fit of `(offset, slopes)` to samples `(xs, ys)`.
pub fn fit_saaf(breakpoints: &Breakpoints<f64>, xs: &[f64], ys: &[f64]) -> Result<SaafParams<f64>> {
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(Error::shape(
            "SAAF fit needs matching, non-empty sample arrays",
        ));
    }
    let nb = breakpoints.as_slice().len();
    let mut a = DMatrix::<f64>::zeros(xs.len(), nb + 1);
    for (i, &x) in xs.iter().enumerate() {
        a[(i, 0)] = 1.0;
        for (k, v) in saaf_basis(x, breakpoints.as_slice())
            .into_iter()
            .enumerate()
        {
            a[(i, k + 1)] = v;
        }
    }
    let b = DVector::from_column_slice(ys);
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::invalid(format!("SAAF least-squares solve failed: {e}")))?;
    Ok(SaafParams {
        breakpoints: breakpoints.clone(),
        slopes: sol.iter().skip(1).copied().collect(),
        offset: sol[0],
    })
}
