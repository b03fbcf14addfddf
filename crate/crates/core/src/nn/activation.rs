use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor2D};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Abs,
    Softplus,
}

/// `ln(1 + e^x)` without overflow for large `|x|`.
#[inline]
pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Derivative of `|x|`, with subgradient 0 at the origin.
#[inline]
pub fn abs_grad<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Abs => x.abs(),
            Activation::Softplus => softplus(x),
        }
    }

    #[inline]
    pub fn derivative<T: Real>(self, x: T) -> T {
        match self {
            Activation::Abs => abs_grad(x),
            Activation::Softplus => sigmoid(x),
        }
    }
}

pub fn activation_eval<T: Real>(x: &Tensor2D<T>, kind: Activation) -> Result<Tensor2D<T>> {
    if !x.is_finite() {
        return Err(Error::NonFinite {
            stage: format!("{kind:?} input"),
        });
    }
    Ok(x.map(|v| kind.apply(v)))
}

/// `grad_in = grad_out ⊙ f'(pre)`, where `pre` is the forward input.
pub fn activation_backward<T: Real>(
    pre: &Tensor2D<T>,
    grad_out: &Tensor2D<T>,
    kind: Activation,
) -> Result<Tensor2D<T>> {
    if !pre.same_shape(grad_out) {
        return Err(Error::shape(
            "activation backward: cache/gradient shape mismatch",
        ));
    }
    let data = pre
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| g * kind.derivative(x))
        .collect();
    Tensor2D::from_vec(pre.channels(), pre.time(), data)
}
