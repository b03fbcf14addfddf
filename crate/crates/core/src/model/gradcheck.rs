use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::forward::{model_backward, model_forward, ForwardOptions, Topology};
use super::params::{is_trainable, ModelParams};
use crate::error::Result;
use crate::nn::gradcheck::{
    check_groups, rounding_bound, signature_of, Evaluation, GradcheckConfig, GradcheckReport,
};

fn with_trainable(base: &ModelParams<f64>, values: &[Vec<f64>]) -> ModelParams<f64> {
    let mut p = base.clone();
    let mut it = values.iter();
    for (name, slot) in p.groups_mut() {
        if is_trainable(name) {
            slot.copy_from_slice(it.next().expect("one value vector per trainable group"));
        }
    }
    p
}

fn trainable_values(p: &ModelParams<f64>) -> Vec<Vec<f64>> {
    p.groups()
        .into_iter()
        .filter(|g| is_trainable(g.name))
        .map(|g| g.data.to_vec())
        .collect()
}

/// Finite-difference check of the whole network in double precision.
///
/// The loss is a fixed random linear functional of the output batch, so
/// every output sample contributes. Train mode is used, with dropout
/// masks held fixed by the seed. The report has one group per trainable
/// array plus `input`.
pub fn model_gradcheck(
    cfg: &ModelConfig,
    topology: Topology,
    seed: u64,
) -> Result<GradcheckReport> {
    let batch = 2;
    let params = ModelParams::<f32>::init(cfg, seed)?.cast::<f64>();
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let frames: Vec<Vec<f64>> = (0..batch)
        .map(|_| {
            (0..cfg.frame_size)
                .map(|_| r.random_range(-0.5..0.5))
                .collect()
        })
        .collect();
    let weights: Vec<Vec<f64>> = (0..batch)
        .map(|_| {
            (0..cfg.frame_size)
                .map(|_| r.random_range(-1.0..1.0))
                .collect()
        })
        .collect();
    let opts =
        ForwardOptions::train(f64::from(cfg.dropout_rate).max(0.1), seed).with_topology(topology);

    let (y0, cache) = model_forward(&frames, &params, cfg, &opts)?;
    // the loss sums every output sample; its rounding error bounds how well
    // a central difference can resolve small gradients
    let abs_sum: f64 = y0
        .iter()
        .zip(&weights)
        .flat_map(|(y, w)| y.iter().zip(w).map(|(a, b)| (a * b).abs()))
        .sum();
    let mut gc = GradcheckConfig {
        seed,
        ..GradcheckConfig::default()
    };
    gc.noise_floor = rounding_bound(abs_sum, gc.step);
    let grads = model_backward(&cache.expect("train mode"), &weights, &params)?;

    let mut names: Vec<&str> = params.trainable_group_names();
    names.push("input");
    let mut values = trainable_values(&params);
    values.push(frames.concat());
    let mut analytic = trainable_values(&grads.params);
    analytic.push(grads.input.concat());

    if topology == Topology::Autoencoder {
        // unused blocks have identically zero gradient; only the front-end is checked
        let keep: Vec<bool> = names
            .iter()
            .map(|n| *n == "input" || super::params::PRETRAIN_GROUPS.contains(n))
            .collect();
        let mut k = keep.iter();
        names.retain(|_| *k.next().unwrap());
        let mut k = keep.iter();
        values.retain(|_| *k.next().unwrap());
        let mut k = keep.iter();
        analytic.retain(|_| *k.next().unwrap());
    }
    let n_groups = values.len();
    let checked_names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    let full_names = params.trainable_group_names();

    check_groups(&names, &mut values, &analytic, &gc, |v| {
        // rebuild the full trainable set, substituting the checked groups
        let mut all = trainable_values(&params);
        for (name, vals) in checked_names.iter().zip(v).take(n_groups - 1) {
            let idx = full_names
                .iter()
                .position(|n| n == name)
                .expect("known group");
            all[idx].clone_from(vals);
        }
        let p = with_trainable(&params, &all);
        let input = &v[n_groups - 1];
        let fr: Vec<Vec<f64>> = input.chunks(cfg.frame_size).map(<[f64]>::to_vec).collect();
        let (ys, cache) = model_forward(&fr, &p, cfg, &opts)?;
        let loss = ys
            .iter()
            .zip(&weights)
            .map(|(y, w)| y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        let cache = cache.expect("train mode");
        let mut sig = Vec::new();
        for f in &cache.frames {
            sig.extend(f.pool_idx.as_slice().iter().map(|&i| i as u64));
            sig.extend(f.x1.data().iter().map(|v| u64::from(v.is_sign_positive())));
        }
        Ok(Evaluation {
            loss,
            signature: signature_of(&sig),
        })
    })
}
