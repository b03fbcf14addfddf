//! Central finite-difference verification of the hand-written backward passes.
//!
//! Checks run on the `f64` instantiation of the layer code. Each evaluation
//! also returns a signature of the discrete choices made during the forward
//! pass (argmax positions, signs at `|x|`); a coordinate whose `±h`
//! perturbation changes that signature straddles a kink and is skipped rather
//! than reported as a mismatch.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::activation::{activation_backward, activation_eval, Activation};
use super::batchnorm::{batchnorm_backward, batchnorm_train, BatchNormState};
use super::conv::{
    conv1d_adjoint, conv1d_adjoint_backward, conv1d_backward, conv1d_forward, ConvKernel,
};
use super::dense::{Dense, LocalDense};
use super::local::{local_conv1d_backward, local_conv1d_forward, LocalKernel};
use super::pool::{maxpool_backward, maxpool_forward, unpool, unpool_backward, PoolIndices};
use super::saaf::{Breakpoints, Saaf};
use crate::error::Result;
use crate::tensor::Tensor2D;

#[derive(Clone, Copy, Debug)]
pub struct GradcheckConfig {
    pub step: f64,
    /// Coordinates checked per group (all of them for smaller groups).
    pub samples_per_group: usize,
    /// Lower bound on the relative-error denominator.
    pub denom_floor: f64,
    /// Absolute rounding error expected in a central difference; this much
    /// of each discrepancy is not counted.
    pub noise_floor: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            samples_per_group: 24,
            denom_floor: 1e-6,
            noise_floor: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupReport {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradcheckReport {
    pub groups: Vec<GroupReport>,
}

impl GradcheckReport {
    /// Worst error over all groups; infinite if some group checked nothing.
    pub fn max_rel_error(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| {
                if g.checked == 0 {
                    f64::INFINITY
                } else {
                    g.max_rel_error
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        !self.groups.is_empty() && self.max_rel_error() < tol
    }
}

/// Loss value plus a signature of discrete forward-pass decisions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub signature: u64,
}

impl Evaluation {
    pub fn smooth(loss: f64) -> Self {
        Self { loss, signature: 0 }
    }
}

pub fn signature_of<H: Hash>(v: &H) -> u64 {
    let mut h = DefaultHasher::new();
    v.hash(&mut h);
    h.finish()
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Rounding bound of a central difference with step `h` on a loss whose
/// terms have absolute sum `abs_sum`.
pub fn rounding_bound(abs_sum: f64, h: f64) -> f64 {
    f64::EPSILON * abs_sum / h
}

/// Compares `analytic[g]` against central differences of `f` for sampled
/// coordinates of every group in `values`.
pub fn check_groups<F>(
    names: &[&str],
    values: &mut [Vec<f64>],
    analytic: &[Vec<f64>],
    cfg: &GradcheckConfig,
    mut f: F,
) -> Result<GradcheckReport>
where
    F: FnMut(&[Vec<f64>]) -> Result<Evaluation>,
{
    assert_eq!(names.len(), values.len());
    assert_eq!(values.len(), analytic.len());
    let base = f(values)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut report = GradcheckReport::default();
    for g in 0..values.len() {
        assert_eq!(values[g].len(), analytic[g].len(), "group {}", names[g]);
        let mut order: Vec<usize> = (0..values[g].len()).collect();
        order.shuffle(&mut rng);
        let mut group = GroupReport {
            name: names[g].to_string(),
            max_rel_error: 0.0,
            checked: 0,
            skipped: 0,
        };
        for i in order {
            if group.checked >= cfg.samples_per_group {
                break;
            }
            let orig = values[g][i];
            values[g][i] = orig + cfg.step;
            let plus = f(values)?;
            values[g][i] = orig - cfg.step;
            let minus = f(values)?;
            values[g][i] = orig;
            if plus.signature != base.signature || minus.signature != base.signature {
                group.skipped += 1;
                continue;
            }
            let numeric = (plus.loss - minus.loss) / (2.0 * cfg.step);
            let a = analytic[g][i];
            let excess = ((a - numeric).abs() - cfg.noise_floor).max(0.0);
            let err = excess / a.abs().max(numeric.abs()).max(cfg.denom_floor);
            group.max_rel_error = group.max_rel_error.max(err);
            group.checked += 1;
        }
        report.groups.push(group);
    }
    Ok(report)
}

fn random(r: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    use rand::Rng;
    (0..n).map(|_| r.random_range(-scale..scale)).collect()
}

fn weighted_sum(out: &[f64], w: &[f64]) -> f64 {
    out.iter().zip(w).map(|(a, b)| a * b).sum()
}

fn tensor(c: usize, t: usize, v: &[f64]) -> Tensor2D<f64> {
    Tensor2D::from_vec(c, t, v.to_vec()).expect("shape")
}

/// Runs the finite-difference check on every layer kind and returns one
/// report per layer.
pub fn layer_gradchecks(seed: u64) -> Result<Vec<(String, GradcheckReport)>> {
    let cfg = GradcheckConfig {
        seed,
        ..GradcheckConfig::default()
    };
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    // conv1d (front-end)
    {
        let (f, k, n) = (3, 16, 24);
        let x = random(&mut r, n, 1.0);
        let w = random(&mut r, f * k, 0.5);
        let b = random(&mut r, f, 0.5);
        let rw = random(&mut r, f * n, 1.0);
        let kern = ConvKernel::new(f, k, w.clone(), b.clone())?;
        let (gx, gk) = conv1d_backward(&x, &tensor(f, n, &rw), &kern)?;
        let mut vals = vec![x, w, b];
        let rep = check_groups(
            &["input", "weights", "bias"],
            &mut vals,
            &[gx, gk.weights, gk.bias],
            &cfg,
            |v| {
                let k = ConvKernel::new(f, k, v[1].clone(), v[2].clone())?;
                Ok(Evaluation::smooth(weighted_sum(
                    conv1d_forward(&v[0], &k)?.data(),
                    &rw,
                )))
            },
        )?;
        out.push(("conv1d".to_string(), rep));
    }

    // conv1d adjoint (synthesis)
    {
        let (f, k, n) = (3, 16, 24);
        let xin = random(&mut r, f * n, 1.0);
        let w = random(&mut r, f * k, 0.5);
        let rw = random(&mut r, n, 1.0);
        let kern = ConvKernel::new(f, k, w.clone(), vec![0.0; f])?;
        let (gi, gw) = conv1d_adjoint_backward(&tensor(f, n, &xin), &rw, &kern)?;
        let mut vals = vec![xin, w];
        let rep = check_groups(
            &["input", "weights"],
            &mut vals,
            &[gi.into_vec(), gw],
            &cfg,
            |v| {
                let k = ConvKernel::new(f, k, v[1].clone(), vec![0.0; f])?;
                Ok(Evaluation::smooth(weighted_sum(
                    &conv1d_adjoint(&tensor(f, n, &v[0]), &k)?,
                    &rw,
                )))
            },
        )?;
        out.push(("conv1d_adjoint".to_string(), rep));
    }

    // locally connected conv
    {
        let (c, k, n) = (3, 12, 20);
        let x = random(&mut r, c * n, 1.0);
        let w = random(&mut r, c * k, 0.5);
        let b = random(&mut r, c, 0.5);
        let rw = random(&mut r, c * n, 1.0);
        let kern = LocalKernel::new(c, k, w.clone(), b.clone())?;
        let (gx, gk) = local_conv1d_backward(&tensor(c, n, &x), &tensor(c, n, &rw), &kern)?;
        let mut vals = vec![x, w, b];
        let rep = check_groups(
            &["input", "weights", "bias"],
            &mut vals,
            &[gx.into_vec(), gk.weights, gk.bias],
            &cfg,
            |v| {
                let k = LocalKernel::new(c, k, v[1].clone(), v[2].clone())?;
                let o = local_conv1d_forward(&tensor(c, n, &v[0]), &k)?;
                Ok(Evaluation::smooth(weighted_sum(o.data(), &rw)))
            },
        )?;
        out.push(("local_conv1d".to_string(), rep));
    }

    // dense along columns and along rows
    for rows in [false, true] {
        let (no, ni, n) = (4, 5, 6);
        let layer = Dense::new(
            no,
            ni,
            random(&mut r, no * ni, 0.5),
            random(&mut r, no, 0.5),
        )?;
        let (xc, xt) = if rows { (n, ni) } else { (ni, n) };
        let (oc, ot) = if rows { (n, no) } else { (no, n) };
        let x = random(&mut r, xc * xt, 1.0);
        let rw = random(&mut r, oc * ot, 1.0);
        let (gx, gl) = if rows {
            layer.backward_rows(&tensor(xc, xt, &x), &tensor(oc, ot, &rw))?
        } else {
            layer.backward_columns(&tensor(xc, xt, &x), &tensor(oc, ot, &rw))?
        };
        let mut vals = vec![x, layer.weights.clone(), layer.bias.clone()];
        let rep = check_groups(
            &["input", "weights", "bias"],
            &mut vals,
            &[gx.into_vec(), gl.weights, gl.bias],
            &cfg,
            |v| {
                let l = Dense::new(no, ni, v[1].clone(), v[2].clone())?;
                let o = if rows {
                    l.forward_rows(&tensor(xc, xt, &v[0]))?
                } else {
                    l.forward_columns(&tensor(xc, xt, &v[0]))?
                };
                Ok(Evaluation::smooth(weighted_sum(o.data(), &rw)))
            },
        )?;
        let name = if rows { "dense_rows" } else { "dense_columns" };
        out.push((name.to_string(), rep));
    }

    // locally connected dense
    {
        let (c, no, ni) = (3, 4, 5);
        let mut layer = LocalDense::zeros(c, no, ni);
        layer.weights = random(&mut r, c * no * ni, 0.5);
        layer.bias = random(&mut r, c * no, 0.5);
        let x = random(&mut r, c * ni, 1.0);
        let rw = random(&mut r, c * no, 1.0);
        let (gx, gw, gb) = layer.backward(&tensor(c, ni, &x), &tensor(c, no, &rw))?;
        let mut vals = vec![x, layer.weights.clone(), layer.bias.clone()];
        let rep = check_groups(
            &["input", "weights", "bias"],
            &mut vals,
            &[gx.into_vec(), gw, gb],
            &cfg,
            |v| {
                let mut l = LocalDense::zeros(c, no, ni);
                l.weights = v[1].clone();
                l.bias = v[2].clone();
                Ok(Evaluation::smooth(weighted_sum(
                    l.forward(&tensor(c, ni, &v[0]))?.data(),
                    &rw,
                )))
            },
        )?;
        out.push(("local_dense".to_string(), rep));
    }

    // elementwise activations
    for kind in [Activation::Abs, Activation::Softplus] {
        let (c, n) = (3, 10);
        let x = random(&mut r, c * n, 2.0);
        let rw = random(&mut r, c * n, 1.0);
        let gx = activation_backward(&tensor(c, n, &x), &tensor(c, n, &rw), kind)?;
        let mut vals = vec![x];
        let rep = check_groups(&["input"], &mut vals, &[gx.into_vec()], &cfg, |v| {
            let o = activation_eval(&tensor(c, n, &v[0]), kind)?;
            let signs: Vec<bool> = v[0].iter().map(|&x| x > 0.0).collect();
            Ok(Evaluation {
                loss: weighted_sum(o.data(), &rw),
                signature: signature_of(&signs),
            })
        })?;
        let name = match kind {
            Activation::Abs => "abs",
            Activation::Softplus => "softplus",
        };
        out.push((name.to_string(), rep));
    }

    // batch normalization, train mode over a fixed batch of two
    {
        let (c, n) = (3, 8);
        let mut s = BatchNormState::<f64>::new(c);
        s.gamma = random(&mut r, c, 1.0).iter().map(|v| v + 1.5).collect();
        s.beta = random(&mut r, c, 0.5);
        let x: Vec<f64> = random(&mut r, 2 * c * n, 1.0);
        let rw = random(&mut r, 2 * c * n, 1.0);
        let split = |v: &[f64]| vec![tensor(c, n, &v[..c * n]), tensor(c, n, &v[c * n..])];
        let (_, cache, _) = batchnorm_train(&split(&x), &s)?;
        let (gx, gg, gb) = batchnorm_backward(&cache, &split(&rw), &s.gamma)?;
        let gx: Vec<f64> = gx.into_iter().flat_map(Tensor2D::into_vec).collect();
        let mut vals = vec![x, s.gamma.clone(), s.beta.clone()];
        let rep = check_groups(
            &["input", "gamma", "beta"],
            &mut vals,
            &[gx, gg, gb],
            &cfg,
            |v| {
                let mut st = BatchNormState::<f64>::new(c);
                st.gamma = v[1].clone();
                st.beta = v[2].clone();
                let (ys, _, _) = batchnorm_train(&split(&v[0]), &st)?;
                let flat: Vec<f64> = ys.into_iter().flat_map(Tensor2D::into_vec).collect();
                Ok(Evaluation::smooth(weighted_sum(&flat, &rw)))
            },
        )?;
        out.push(("batchnorm".to_string(), rep));
    }

    // max-pooling and unpooling
    {
        let (c, n, p) = (3, 16, 4);
        let x = random(&mut r, c * n, 1.0);
        let rw = random(&mut r, c * n / p, 1.0);
        let (_, idx) = maxpool_forward(&tensor(c, n, &x), p)?;
        let gx = maxpool_backward(&tensor(c, n / p, &rw), &idx)?;
        let mut vals = vec![x];
        let rep = check_groups(&["input"], &mut vals, &[gx.into_vec()], &cfg, |v| {
            let (z, idx) = maxpool_forward(&tensor(c, n, &v[0]), p)?;
            Ok(Evaluation {
                loss: weighted_sum(z.data(), &rw),
                signature: signature_of(&idx.as_slice()),
            })
        })?;
        out.push(("maxpool".to_string(), rep));

        let idx = PoolIndices::new(c, n / p, p, idx.as_slice().to_vec())?;
        let zh = random(&mut r, c * n / p, 1.0);
        let rw = random(&mut r, c * n, 1.0);
        let gz = unpool_backward(&tensor(c, n, &rw), &idx)?;
        let mut vals = vec![zh];
        let rep = check_groups(&["input"], &mut vals, &[gz.into_vec()], &cfg, |v| {
            Ok(Evaluation::smooth(weighted_sum(
                unpool(&tensor(c, n / p, &v[0]), &idx)?.data(),
                &rw,
            )))
        })?;
        out.push(("unpool".to_string(), rep));
    }

    // elementwise multiply (residual combination)
    {
        let (c, n) = (3, 10);
        let a = random(&mut r, c * n, 1.0);
        let b = random(&mut r, c * n, 1.0);
        let rw = random(&mut r, c * n, 1.0);
        let ga: Vec<f64> = rw.iter().zip(&b).map(|(g, b)| g * b).collect();
        let gb: Vec<f64> = rw.iter().zip(&a).map(|(g, a)| g * a).collect();
        let mut vals = vec![a, b];
        let rep = check_groups(
            &["residual", "upsampled"],
            &mut vals,
            &[ga, gb],
            &cfg,
            |v| {
                let o = tensor(c, n, &v[0]).hadamard(&tensor(c, n, &v[1]))?;
                Ok(Evaluation::smooth(weighted_sum(o.data(), &rw)))
            },
        )?;
        out.push(("multiply".to_string(), rep));
    }

    // SAAF
    {
        let bps = Breakpoints::uniform(25, -1.0, 1.0)?;
        let slopes = random(&mut r, 26, 1.5);
        let xs = random(&mut r, 40, 1.5);
        let rw = random(&mut r, 40, 1.0);
        let s = Saaf::new(bps.as_slice(), &slopes, 0.1)?;
        let gx: Vec<f64> = xs
            .iter()
            .zip(&rw)
            .map(|(&x, &g)| g * s.eval_with_slope(x).1)
            .collect();
        let mut gs = vec![0.0; 26];
        let mut go = 0.0;
        s.accumulate_param_grad(&xs, &rw, &mut gs, &mut go);
        let mut vals = vec![xs, slopes, vec![0.1]];
        let rep = check_groups(
            &["input", "slopes", "offset"],
            &mut vals,
            &[gx, gs, vec![go]],
            &cfg,
            |v| {
                let s = Saaf::new(bps.as_slice(), &v[1], v[2][0])?;
                Ok(Evaluation::smooth(
                    v[0].iter().zip(&rw).map(|(&x, &g)| g * s.eval(x)).sum(),
                ))
            },
        )?;
        out.push(("saaf".to_string(), rep));
    }

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_dense_is_at_noise_level() {
        let eye: Vec<f64> = (0..9).map(|i| if i % 4 == 0 { 1.0 } else { 0.0 }).collect();
        let layer = Dense::new(3, 3, eye, vec![0.0; 3]).unwrap();
        let x = vec![0.3, -0.2, 0.9];
        let rw = vec![1.0, 2.0, -1.0];
        let (gx, gl) = layer
            .backward_columns(&tensor(3, 1, &x), &tensor(3, 1, &rw))
            .unwrap();
        let mut vals = vec![x, layer.weights.clone(), layer.bias.clone()];
        let rep = check_groups(
            &["input", "weights", "bias"],
            &mut vals,
            &[gx.into_vec(), gl.weights, gl.bias],
            &GradcheckConfig::default(),
            |v| {
                let l = Dense::new(3, 3, v[1].clone(), v[2].clone())?;
                Ok(Evaluation::smooth(weighted_sum(
                    l.forward_columns(&tensor(3, 1, &v[0]))?.data(),
                    &rw,
                )))
            },
        )
        .unwrap();
        assert_eq!(rep.groups.len(), 3);
        assert!(rep.max_rel_error() < 1e-6, "{rep:?}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let mut vals = vec![vec![1.0, 2.0]];
        let rep = check_groups(
            &["x"],
            &mut vals,
            &[vec![2.0, 5.0]],
            &GradcheckConfig::default(),
            |v| Ok(Evaluation::smooth(v[0][0] * v[0][0] + v[0][1] * v[0][1])),
        )
        .unwrap();
        assert!(!rep.passes(1e-4));
    }

    #[test]
    fn every_layer_passes() {
        for seed in 0..3 {
            for (name, rep) in layer_gradchecks(seed).unwrap() {
                assert!(rep.passes(1e-4), "{name} seed {seed}: {rep:?}");
            }
        }
    }
}
