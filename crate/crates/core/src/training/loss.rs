use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::nn::saaf::{saaf_penalty_grad, saaf_smoothness_penalty};
use crate::tensor::Real;

fn check_batch<T>(yhat: &[Vec<T>], y: &[Vec<T>]) -> Result<usize> {
    if yhat.len() != y.len() || yhat.iter().zip(y).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::shape("output and target batches differ in shape"));
    }
    let n: usize = y.iter().map(Vec::len).sum();
    if n == 0 {
        return Err(Error::invalid("loss on an empty batch"));
    }
    Ok(n)
}

/// Mean absolute error over every sample of the batch.
pub fn mae<T: Real>(yhat: &[Vec<T>], y: &[Vec<T>]) -> Result<f64> {
    let n = check_batch(yhat, y)?;
    let s: f64 = yhat
        .iter()
        .zip(y)
        .flat_map(|(a, b)| a.iter().zip(b))
        .map(|(&a, &b)| (a - b).to_f64_lossy().abs())
        .sum();
    Ok(s / n as f64)
}

/// Gradient of [`mae`] with respect to `yhat` (zero where the residual is zero).
pub fn mae_grad<T: Real>(yhat: &[Vec<T>], y: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
    let n = T::lit(check_batch(yhat, y)? as f64);
    Ok(yhat
        .iter()
        .zip(y)
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(&a, &b)| {
                    let d = a - b;
                    if d > T::zero() {
                        T::one() / n
                    } else if d < T::zero() {
                        -T::one() / n
                    } else {
                        T::zero()
                    }
                })
                .collect()
        })
        .collect())
}

/// Summed smoothness penalty of every channel's SAAF.
pub fn saaf_penalty<T: Real>(p: &ModelParams<T>, lambda: f64) -> f64 {
    (0..p.channels())
        .map(|c| saaf_smoothness_penalty(p.saaf_slopes_of(c), T::lit(lambda)).to_f64_lossy())
        .sum()
}

/// Adds the penalty gradient into `grad_slopes` (laid out like `saaf_slopes`).
pub fn saaf_penalty_grad_all<T: Real>(p: &ModelParams<T>, lambda: f64, grad_slopes: &mut [T]) {
    let k = p.saaf_points();
    for c in 0..p.channels() {
        saaf_penalty_grad(
            p.saaf_slopes_of(c),
            T::lit(lambda),
            &mut grad_slopes[c * k..(c + 1) * k],
        );
    }
}

/// Training objective: MAE plus the SAAF smoothness penalty.
pub fn loss_eval<T: Real>(
    yhat: &[Vec<T>],
    y: &[Vec<T>],
    p: &ModelParams<T>,
    lambda: f64,
) -> Result<f64> {
    Ok(mae(yhat, y)? + saaf_penalty(p, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::testutil::{rand_vec, rng};

    fn params() -> ModelParams<f64> {
        ModelParams::<f32>::init(&ModelConfig::tiny(), 0)
            .unwrap()
            .cast()
    }

    #[test]
    fn zero_for_equal_batches_with_identity_saafs() {
        let y = vec![vec![0.1, -0.2], vec![0.3, 0.0]];
        assert_eq!(loss_eval(&y, &y, &params(), 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset() {
        let y = vec![vec![0.1, -0.2, 0.7]];
        let yh = vec![y[0].iter().map(|v| v + 0.5).collect()];
        assert!((loss_eval(&yh, &y, &params(), 0.0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn matches_naive_sum() {
        let mut r = rng(4);
        let y: Vec<Vec<f64>> = (0..3).map(|_| rand_vec(&mut r, 50, 1.0)).collect();
        let yh: Vec<Vec<f64>> = (0..3).map(|_| rand_vec(&mut r, 50, 1.0)).collect();
        let mut p = params();
        p.saaf_slopes
            .iter_mut()
            .for_each(|s| *s = rand_vec(&mut r, 1, 1.0)[0]);
        let lambda = 0.01;
        let mut naive = 0.0;
        for b in 0..3 {
            for t in 0..50 {
                naive += (yh[b][t] - y[b][t]).abs();
            }
        }
        naive /= 150.0;
        let k = p.saaf_points();
        for c in 0..p.channels() {
            for j in 0..k - 1 {
                let d = p.saaf_slopes[c * k + j + 1] - p.saaf_slopes[c * k + j];
                naive += lambda * d * d;
            }
        }
        assert!((loss_eval(&yh, &y, &p, lambda).unwrap() - naive).abs() < 1e-7);
    }

    #[test]
    fn shape_mismatch() {
        let p = params();
        assert!(loss_eval(&[vec![0.0; 3]], &[vec![0.0; 4]], &p, 0.0).is_err());
        assert!(loss_eval(&[vec![0.0; 3]], &[], &p, 0.0).is_err());
    }

    #[test]
    fn gradient_signs() {
        let g = mae_grad(&[vec![1.0, 0.0, -1.0f64]], &[vec![0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(g, vec![vec![1.0 / 3.0, 0.0, -1.0 / 3.0]]);
    }
}
