use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::framing::slice_frames;
use super::loss::{mae, mae_grad, saaf_penalty, saaf_penalty_grad_all};
use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::model::params::{is_trainable, PRETRAIN_GROUPS};
use crate::model::{
    model_backward, model_forward, ForwardOptions, ModelConfig, ModelParams, Topology,
};
use crate::nn::{AdamConfig, AdamState};

/// Which tolerance path `gradcheck` runs on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub frame_size: usize,
    pub hop: usize,
    pub batch_size: usize,
    /// Mini-batch updates per training step.
    pub iterations: usize,
    pub learning_rate: f64,
    /// Cosine decay from `learning_rate` down to this fraction of it at the
    /// last update. 1 keeps the rate constant.
    pub final_lr_scale: f64,
    pub saaf_lambda: f64,
    pub dropout_rate: f64,
    pub seed: u64,
    /// 0 disables periodic checkpoint callbacks.
    pub checkpoint_every: usize,
    /// Scale both clips of a pair by one gain so the louder peaks at 1.
    pub peak_normalize: bool,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            frame_size: 1024,
            hop: 64,
            batch_size: 32,
            iterations: 1000,
            learning_rate: AdamConfig::default().learning_rate,
            final_lr_scale: 1.0,
            saaf_lambda: 1e-3,
            dropout_rate: 0.25,
            seed: 0,
            checkpoint_every: 500,
            peak_normalize: false,
            precision: Precision::F64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        if self.hop == 0 || self.hop > self.frame_size {
            return Err(Error::Config(format!(
                "hop {} must lie in 1..={}",
                self.hop, self.frame_size
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.frame_size != model.frame_size {
            return Err(Error::Config(format!(
                "training frame size {} differs from model frame size {}",
                self.frame_size, model.frame_size
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("dropout_rate must lie in [0, 1)".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be finite and > 0".into()));
        }
        if !(self.final_lr_scale > 0.0 && self.final_lr_scale <= 1.0) {
            return Err(Error::Config("final_lr_scale must lie in (0, 1]".into()));
        }
        if !(self.saaf_lambda >= 0.0 && self.saaf_lambda.is_finite()) {
            return Err(Error::Config("saaf_lambda must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Reported after every update.
pub struct Progress<'a> {
    /// 1-based update count.
    pub iteration: usize,
    pub loss: f64,
    pub params: &'a ModelParams<f32>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams<f32>,
    /// `(iteration, loss)` for every update.
    pub log: Vec<(usize, f64)>,
}

/// Training examples as parallel input/target frame lists.
struct FramePool {
    inputs: Vec<Vec<f32>>,
    targets: Vec<Vec<f32>>,
}

fn pair_gain(raw: &AudioClip, fx: &AudioClip, normalize: bool) -> f32 {
    let peak = raw.peak().max(fx.peak());
    if normalize && peak > 0.0 {
        1.0 / peak
    } else {
        1.0
    }
}

fn frames_of(clip: &AudioClip, gain: f32, cfg: &TrainConfig) -> Result<Vec<Vec<f32>>> {
    let scaled: Vec<f32> = clip.samples.iter().map(|v| v * gain).collect();
    Ok(slice_frames(&scaled, cfg.frame_size, cfg.hop)?.frames)
}

fn check_pairs(pairs: &[(AudioClip, AudioClip)]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::invalid("training needs at least one clip pair"));
    }
    for (i, (raw, fx)) in pairs.iter().enumerate() {
        if raw.len() != fx.len() {
            return Err(Error::shape(format!(
                "pair {i}: raw clip has {} samples, effected clip {}",
                raw.len(),
                fx.len()
            )));
        }
    }
    Ok(())
}

/// Autoencoder examples: every raw and every effected frame maps to itself.
fn autoencoder_pool(pairs: &[(AudioClip, AudioClip)], cfg: &TrainConfig) -> Result<FramePool> {
    let mut inputs = Vec::new();
    for (raw, fx) in pairs {
        let g = pair_gain(raw, fx, cfg.peak_normalize);
        inputs.extend(frames_of(raw, g, cfg)?);
        inputs.extend(frames_of(fx, g, cfg)?);
    }
    Ok(FramePool {
        targets: inputs.clone(),
        inputs,
    })
}

/// Supervised examples: raw frame in, effected frame out.
fn supervised_pool(pairs: &[(AudioClip, AudioClip)], cfg: &TrainConfig) -> Result<FramePool> {
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for (raw, fx) in pairs {
        let g = pair_gain(raw, fx, cfg.peak_normalize);
        inputs.extend(frames_of(raw, g, cfg)?);
        targets.extend(frames_of(fx, g, cfg)?);
    }
    Ok(FramePool { inputs, targets })
}

/// Seeded sampling without replacement, reshuffled after each pass.
struct Sampler {
    order: Vec<usize>,
    next: usize,
    rng: ChaCha8Rng,
}

impl Sampler {
    fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Self {
            order,
            next: 0,
            rng,
        }
    }

    fn batch(&mut self, size: usize) -> Vec<usize> {
        (0..size)
            .map(|_| {
                if self.next == self.order.len() {
                    self.order.shuffle(&mut self.rng);
                    self.next = 0;
                }
                self.next += 1;
                self.order[self.next - 1]
            })
            .collect()
    }
}

/// Step size for update `it` (1-based) of `n`.
pub fn learning_rate_at(cfg: &TrainConfig, it: usize) -> f64 {
    if cfg.final_lr_scale == 1.0 || cfg.iterations < 2 {
        return cfg.learning_rate;
    }
    let phase = (it - 1) as f64 / (cfg.iterations - 1) as f64;
    let w = 0.5 * (1.0 + (std::f64::consts::PI * phase).cos());
    cfg.learning_rate * (cfg.final_lr_scale + (1.0 - cfg.final_lr_scale) * w)
}

fn iteration_seed(seed: u64, iteration: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(iteration as u64)
}

struct Step<'a> {
    model: &'a ModelConfig,
    cfg: &'a TrainConfig,
    topology: Topology,
    groups: Vec<&'static str>,
    lambda: f64,
}

fn run_updates(
    step: &Step<'_>,
    pool: &FramePool,
    mut params: ModelParams<f32>,
    on_progress: &mut dyn FnMut(&Progress<'_>) -> Result<()>,
) -> Result<TrainOutcome> {
    let cfg = step.cfg;
    let sizes: Vec<usize> = params
        .groups()
        .iter()
        .filter(|g| step.groups.contains(&g.name))
        .map(|g| g.data.len())
        .collect();
    let mut adam = AdamState::<f32>::new(
        &sizes,
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut sampler = Sampler::new(pool.inputs.len(), cfg.seed);
    let mut log = Vec::with_capacity(cfg.iterations);
    for it in 1..=cfg.iterations {
        adam.config.learning_rate = learning_rate_at(cfg, it);
        let idx = sampler.batch(cfg.batch_size);
        let xs: Vec<Vec<f32>> = idx.iter().map(|&i| pool.inputs[i].clone()).collect();
        let ys: Vec<Vec<f32>> = idx.iter().map(|&i| pool.targets[i].clone()).collect();
        let opts = ForwardOptions::train(cfg.dropout_rate, iteration_seed(cfg.seed, it))
            .with_topology(step.topology);
        let (yhat, cache) = model_forward(&xs, &params, step.model, &opts)?;
        let cache = cache.ok_or(Error::MissingCache("train-mode forward"))?;
        let loss = mae(&yhat, &ys)? + saaf_penalty(&params, step.lambda);
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                stage: format!("loss at iteration {it}"),
            });
        }
        let mut grads = model_backward(&cache, &mae_grad(&yhat, &ys)?, &params)?.params;
        if step.lambda > 0.0 {
            saaf_penalty_grad_all(&params, step.lambda, &mut grads.saaf_slopes);
        }
        params.bn.update_running(&cache.batch_stats);
        {
            let grad_groups = grads.groups();
            let g: Vec<&[f32]> = grad_groups
                .iter()
                .filter(|g| step.groups.contains(&g.name))
                .map(|g| g.data)
                .collect();
            let mut p: Vec<&mut [f32]> = params
                .groups_mut()
                .into_iter()
                .filter(|(n, _)| step.groups.contains(n))
                .map(|(_, s)| s)
                .collect();
            adam.update(&mut p, &g)?;
        }
        if it % 100 == 0 && !params.is_finite() {
            return Err(Error::NonFinite {
                stage: format!("parameters after iteration {it}"),
            });
        }
        log.push((it, loss));
        on_progress(&Progress {
            iteration: it,
            loss,
            params: &params,
        })?;
    }
    if !params.is_finite() {
        return Err(Error::NonFinite {
            stage: "parameters after training".into(),
        });
    }
    Ok(TrainOutcome { params, log })
}

/// First step: the front-end autoencoder (latent DNN and DNN-SAAF bypassed)
/// learns to reproduce raw and effected frames. Only the convolution kernels
/// and the batchnorm affine parameters are updated.
pub fn pretrain_run(
    pairs: &[(AudioClip, AudioClip)],
    model: &ModelConfig,
    cfg: &TrainConfig,
    on_progress: &mut dyn FnMut(&Progress<'_>) -> Result<()>,
) -> Result<TrainOutcome> {
    pretrain_from(
        pairs,
        model,
        cfg,
        ModelParams::init(model, cfg.seed)?,
        on_progress,
    )
}

/// [`pretrain_run`] starting from given parameters instead of a fresh
/// initialization.
pub fn pretrain_from(
    pairs: &[(AudioClip, AudioClip)],
    model: &ModelConfig,
    cfg: &TrainConfig,
    params: ModelParams<f32>,
    on_progress: &mut dyn FnMut(&Progress<'_>) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate(model)?;
    check_pairs(pairs)?;
    params.check_shapes(model)?;
    let pool = autoencoder_pool(pairs, cfg)?;
    let step = Step {
        model,
        cfg,
        topology: Topology::Autoencoder,
        groups: PRETRAIN_GROUPS.to_vec(),
        lambda: 0.0,
    };
    run_updates(&step, &pool, params, on_progress)
}

/// Second step: supervised training of every parameter, raw frame in,
/// effected frame out.
pub fn train_run(
    pairs: &[(AudioClip, AudioClip)],
    model: &ModelConfig,
    cfg: &TrainConfig,
    pretrained: ModelParams<f32>,
    on_progress: &mut dyn FnMut(&Progress<'_>) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate(model)?;
    check_pairs(pairs)?;
    pretrained.check_shapes(model)?;
    let pool = supervised_pool(pairs, cfg)?;
    let groups = pretrained
        .groups()
        .iter()
        .map(|g| g.name)
        .filter(|n| is_trainable(n))
        .collect();
    let step = Step {
        model,
        cfg,
        topology: Topology::Full,
        groups,
        lambda: cfg.saaf_lambda,
    };
    // a different sampling stream from pretraining
    let cfg2 = TrainConfig {
        seed: cfg.seed ^ 0x7472_6169_6e00,
        ..cfg.clone()
    };
    let step = Step { cfg: &cfg2, ..step };
    run_updates(&step, &pool, pretrained, on_progress)
}

/// Progress callback that does nothing.
pub fn no_progress(_: &Progress<'_>) -> Result<()> {
    Ok(())
}
