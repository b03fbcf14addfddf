//! The optimized forward pass against a straight-line implementation with
//! plain loops and no shared code.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nafx::model::params::ModelParams;
use nafx::model::{model_forward, model_infer, ForwardOptions, ModelConfig};

fn softplus(x: f64) -> f64 {
    (1.0 + x.exp()).ln()
}

/// `f(x) = c + ∫₀ˣ d`, with `d` interpolated linearly between breakpoints
/// and held constant outside them.
fn saaf(x: f64, a: &[f64], d: &[f64], c: f64) -> f64 {
    let prim = |x: f64| -> f64 {
        let k = a.len() - 1;
        if x < a[0] {
            return d[0] * (x - a[0]);
        }
        let mut acc = 0.0;
        for i in 0..k {
            if x >= a[i + 1] {
                acc += (a[i + 1] - a[i]) * (d[i] + d[i + 1]) / 2.0;
            } else {
                let dx = d[i] + (d[i + 1] - d[i]) * (x - a[i]) / (a[i + 1] - a[i]);
                return acc + (x - a[i]) * (d[i] + dx) / 2.0;
            }
        }
        acc + d[k] * (x - a[k])
    };
    c + prim(x) - prim(0.0)
}

/// `out[n][o] = b[o] + Σ_i w[o·n_in + i]·x[n][i]`.
fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    (0..b.len())
        .map(|o| b[o] + (0..n_in).map(|i| w[o * n_in + i] * x[i]).sum::<f64>())
        .collect()
}

/// Straight-line network on a batch. `batch_stats` selects batch statistics
/// for batchnorm (training mode without dropout) instead of running ones.
fn naive(
    frames: &[Vec<f64>],
    p: &ModelParams<f64>,
    cfg: &ModelConfig,
    batch_stats: bool,
) -> Vec<Vec<f64>> {
    let (c_n, t_n, k1, k2, pool) = (
        cfg.channels,
        cfg.frame_size,
        cfg.kernel1_taps,
        cfg.kernel2_taps,
        cfg.pool_size,
    );
    let l1 = k1 / 2;
    let l2 = k2 / 2;

    // front end
    let mut x1s = Vec::new();
    let mut x2s = Vec::new();
    for x in frames {
        let mut x1 = vec![vec![0.0; t_n]; c_n];
        for c in 0..c_n {
            for t in 0..t_n {
                let mut s = p.conv1.bias[c];
                for tau in 0..k1 {
                    let j = t as isize + tau as isize - l1 as isize;
                    if j >= 0 && (j as usize) < t_n {
                        s += p.conv1.weights[c * k1 + tau] * x[j as usize];
                    }
                }
                x1[c][t] = s;
            }
        }
        let mut x2 = vec![vec![0.0; t_n]; c_n];
        for c in 0..c_n {
            for t in 0..t_n {
                let mut s = p.local.bias[c];
                for tau in 0..k2 {
                    let j = t as isize + tau as isize - l2 as isize;
                    if j >= 0 && (j as usize) < t_n {
                        s += p.local.weights[c * k2 + tau] * x1[c][j as usize].abs();
                    }
                }
                x2[c][t] = softplus(s);
            }
        }
        x1s.push(x1);
        x2s.push(x2);
    }

    // batchnorm statistics
    let bn = &p.bn;
    let (mean, var): (Vec<f64>, Vec<f64>) = if batch_stats {
        (0..c_n)
            .map(|c| {
                let vals: Vec<f64> = x2s.iter().flat_map(|x2| x2[c].iter().copied()).collect();
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                let v = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64;
                (m, v)
            })
            .unzip()
    } else {
        (bn.running_mean.clone(), bn.running_var.clone())
    };

    let mut outs = Vec::new();
    for (x1, x2) in x1s.iter().zip(&x2s) {
        let b: Vec<Vec<f64>> = (0..c_n)
            .map(|c| {
                x2[c]
                    .iter()
                    .map(|v| {
                        bn.gamma[c] * (v - mean[c]) / (var[c] + bn.epsilon).sqrt() + bn.beta[c]
                    })
                    .collect()
            })
            .collect();

        // max pool with first-maximum ties
        let w_n = t_n / pool;
        let mut z = vec![vec![0.0; w_n]; c_n];
        let mut arg = vec![vec![0usize; w_n]; c_n];
        for c in 0..c_n {
            for w in 0..w_n {
                let mut best = w * pool;
                for t in w * pool..(w + 1) * pool {
                    if b[c][t] > b[c][best] {
                        best = t;
                    }
                }
                z[c][w] = b[c][best];
                arg[c][w] = best;
            }
        }

        // latent: per-channel dense over pooled time, then one shared dense
        let u = cfg.latent_units;
        let mut zh = vec![vec![0.0; u]; c_n];
        for c in 0..c_n {
            let w = &p.latent1.weights[c * u * w_n..(c + 1) * u * w_n];
            let bias = &p.latent1.bias[c * u..(c + 1) * u];
            let h: Vec<f64> = affine(w, bias, &z[c]).into_iter().map(softplus).collect();
            zh[c] = affine(&p.latent2.weights, &p.latent2.bias, &h)
                .into_iter()
                .map(softplus)
                .collect();
        }

        // unpool and residual product
        let mut x1h = vec![vec![0.0; t_n]; c_n];
        for c in 0..c_n {
            for w in 0..w_n {
                x1h[c][arg[c][w]] = zh[c][w] * x1[c][arg[c][w]];
            }
        }

        // dense stack per time step, then per-channel SAAF
        let a = p.breakpoints.as_slice();
        let nb = a.len();
        let mut x0 = vec![vec![0.0; t_n]; c_n];
        for t in 0..t_n {
            let mut v: Vec<f64> = (0..c_n).map(|c| x1h[c][t]).collect();
            for (i, d) in p.dense.iter().enumerate() {
                v = affine(&d.weights, &d.bias, &v);
                if i < 3 {
                    v = v.into_iter().map(softplus).collect();
                }
            }
            for c in 0..c_n {
                x0[c][t] = saaf(
                    v[c],
                    a,
                    &p.saaf_slopes[c * nb..(c + 1) * nb],
                    p.saaf_offset[c],
                );
            }
        }

        // transposed analysis convolution
        let mut y = vec![0.0; t_n];
        for c in 0..c_n {
            for t in 0..t_n {
                for tau in 0..k1 {
                    let j = t as isize + tau as isize - l1 as isize;
                    if j >= 0 && (j as usize) < t_n {
                        y[j as usize] += p.conv1.weights[c * k1 + tau] * x0[c][t];
                    }
                }
            }
        }
        outs.push(y);
    }
    outs
}

/// Initialized parameters with every array perturbed away from its
/// special initial value.
fn scrambled(cfg: &ModelConfig, seed: u64) -> ModelParams<f64> {
    let mut p = ModelParams::<f32>::init(cfg, seed).unwrap().cast::<f64>();
    let mut r = ChaCha8Rng::seed_from_u64(seed + 100);
    for (name, arr) in p.groups_mut() {
        for v in arr.iter_mut() {
            *v = match name {
                "bn.running_var" => r.random_range(0.5..2.0),
                "bn.gamma" | "saaf.slopes" => r.random_range(0.5..1.5),
                _ if name.ends_with("bias") || name.starts_with("bn.") || name == "saaf.offset" => {
                    r.random_range(-0.2..0.2)
                }
                _ => *v,
            };
        }
    }
    p
}

fn max_rel_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let scale = b
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-12);
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        / scale
}

fn frames(n: usize, len: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..len).map(|_| r.random_range(-0.8..0.8)).collect())
        .collect()
}

#[test]
fn infer_matches_straight_line_oracle() {
    let cfg = ModelConfig::tiny();
    for seed in 0..3 {
        let p = scrambled(&cfg, seed);
        let x = frames(3, cfg.frame_size, seed);
        let fast = model_infer(&x, &p, &cfg).unwrap();
        let slow = naive(&x, &p, &cfg, false);
        let d = max_rel_diff(&fast, &slow);
        assert!(d < 1e-5, "seed {seed}: {d:e}");
    }
}

#[test]
fn train_mode_without_dropout_matches_oracle() {
    let cfg = ModelConfig::tiny();
    let p = scrambled(&cfg, 7);
    let x = frames(4, cfg.frame_size, 7);
    let (fast, _) = model_forward(&x, &p, &cfg, &ForwardOptions::train(0.0, 1)).unwrap();
    let d = max_rel_diff(&fast, &naive(&x, &p, &cfg, true));
    assert!(d < 1e-5, "{d:e}");
}

#[test]
fn single_precision_path_tracks_oracle() {
    let cfg = ModelConfig::tiny();
    let p = scrambled(&cfg, 4);
    let x = frames(2, cfg.frame_size, 4);
    let x32: Vec<Vec<f32>> = x
        .iter()
        .map(|f| f.iter().map(|&v| v as f32).collect())
        .collect();
    let fast: Vec<Vec<f64>> = model_infer(&x32, &p.cast::<f32>(), &cfg)
        .unwrap()
        .into_iter()
        .map(|f| f.into_iter().map(f64::from).collect())
        .collect();
    let slow = naive(&x, &p.cast::<f32>().cast::<f64>(), &cfg, false);
    let d = max_rel_diff(&fast, &slow);
    assert!(d < 1e-4, "{d:e}");
}
