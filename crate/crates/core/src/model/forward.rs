//! Full pipeline forward and backward over a batch of frames.
//!
//! ```text
//! x ─conv1─► X1 ─|·|─► A ─local─► softplus ─► X2 ─bn─► B ─maxpool─► Z
//!            │                                               │ idx
//!            R                                latent DNN ◄───┘
//!            │                                    │ Ẑ
//!            └──────────► X̂1 = R ⊙ unpool(Ẑ) ◄────┘
//!                              │
//!                dense stack + per-channel SAAF ─► X̂0 ─conv1ᵀ─► ŷ
//! ```
//!
//! Batch items are processed in parallel; every reduction over the batch
//! runs in item order, so results do not depend on the thread count.

use rayon::prelude::*;

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::nn::activation::{sigmoid, softplus};
use crate::nn::batchnorm::{
    batchnorm_backward, batchnorm_infer, batchnorm_train, BatchStats, BnCache,
};
use crate::nn::conv::{conv1d_adjoint, conv1d_adjoint_backward, conv1d_backward, conv1d_forward};
use crate::nn::dropout::{dropout_mask, item_rng};
use crate::nn::local::{local_conv1d_backward, local_conv1d_forward};
use crate::nn::pool::{maxpool_backward, maxpool_forward, unpool, unpool_backward, PoolIndices};
use crate::nn::saaf::Saaf;
use crate::tensor::{Real, Tensor2D};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batchnorm, dropout active, cache returned.
    Train,
    /// Running statistics, no dropout, no cache.
    Infer,
}

/// Which blocks of the network are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Topology {
    Full,
    /// Pretraining autoencoder: `Ẑ = Z` and `X̂0 = X̂1`.
    Autoencoder,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardOptions {
    pub mode: Mode,
    pub topology: Topology,
    /// Applied in train mode only.
    pub dropout_rate: f64,
    /// Seeds the per-item dropout streams.
    pub seed: u64,
}

impl ForwardOptions {
    pub fn infer() -> Self {
        Self {
            mode: Mode::Infer,
            topology: Topology::Full,
            dropout_rate: 0.0,
            seed: 0,
        }
    }

    pub fn train(dropout_rate: f64, seed: u64) -> Self {
        Self {
            mode: Mode::Train,
            topology: Topology::Full,
            dropout_rate,
            seed,
        }
    }

    pub fn with_topology(self, topology: Topology) -> Self {
        Self { topology, ..self }
    }
}

/// Softplus layer output with an optional dropout mask.
#[derive(Clone, Debug)]
struct Hidden<T> {
    pre: Tensor2D<T>,
    /// Post-activation, post-dropout (the next layer's input).
    out: Tensor2D<T>,
    mask: Option<Vec<T>>,
}

#[derive(Clone, Debug)]
struct LatentCache<T> {
    l1: Hidden<T>,
    l2: Hidden<T>,
}

#[derive(Clone, Debug)]
struct BackendCache<T> {
    h: [Hidden<T>; 3],
    /// Output of the last dense layer, the SAAF input.
    h4: Tensor2D<T>,
}

/// Intermediates of one frame.
#[derive(Clone, Debug)]
pub struct FrameCache<T> {
    pub x: Vec<T>,
    /// First feature map; also the residual `R`.
    pub x1: Tensor2D<T>,
    pub local_pre: Tensor2D<T>,
    pub z: Tensor2D<T>,
    pub pool_idx: PoolIndices,
    pub z_hat: Tensor2D<T>,
    pub x2_hat: Tensor2D<T>,
    pub x1_hat: Tensor2D<T>,
    pub x0_hat: Tensor2D<T>,
    latent: Option<LatentCache<T>>,
    backend: Option<BackendCache<T>>,
}

#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    pub frames: Vec<FrameCache<T>>,
    pub bn: BnCache<T>,
    pub batch_stats: BatchStats<T>,
    pub topology: Topology,
}

/// Which uses of the tied first-layer kernel contribute to its gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct W1Paths {
    /// Front-end convolution (through `X1` and the residual).
    pub analysis: bool,
    /// Output deconvolution.
    pub synthesis: bool,
}

impl W1Paths {
    pub const BOTH: Self = Self {
        analysis: true,
        synthesis: true,
    };
}

#[derive(Clone, Debug)]
pub struct ModelGrads<T> {
    /// Same layout as the parameters; running statistics stay zero.
    pub params: ModelParams<T>,
    pub input: Vec<Vec<T>>,
}

fn softplus_layer<T: Real>(pre: Tensor2D<T>, mask: Option<Vec<T>>) -> Hidden<T> {
    let mut out = pre.map(softplus);
    if let Some(m) = &mask {
        out.data_mut().iter_mut().zip(m).for_each(|(o, &k)| *o *= k);
    }
    Hidden { pre, out, mask }
}

/// Gradient at the pre-activation given the gradient at `out`.
fn softplus_layer_back<T: Real>(h: &Hidden<T>, mut g: Tensor2D<T>) -> Tensor2D<T> {
    if let Some(m) = &h.mask {
        g.data_mut().iter_mut().zip(m).for_each(|(v, &k)| *v *= k);
    }
    g.data_mut()
        .iter_mut()
        .zip(h.pre.data())
        .for_each(|(v, &p)| *v *= sigmoid(p));
    g
}

struct FrontEnd<T> {
    x1: Tensor2D<T>,
    local_pre: Tensor2D<T>,
    x2: Tensor2D<T>,
}

fn front_end<T: Real>(x: &[T], p: &ModelParams<T>) -> Result<FrontEnd<T>> {
    let x1 = conv1d_forward(x, &p.conv1)?;
    x1.check_finite("conv1")?;
    let a = x1.map(|v| v.abs());
    let local_pre = local_conv1d_forward(&a, &p.local)?;
    let x2 = local_pre.map(softplus);
    x2.check_finite("local conv + softplus")?;
    Ok(FrontEnd { x1, local_pre, x2 })
}

fn saaf_bank<T: Real>(p: &ModelParams<T>) -> Result<Vec<Saaf<T>>> {
    (0..p.channels())
        .map(|c| {
            Saaf::new(
                p.breakpoints.as_slice(),
                p.saaf_slopes_of(c),
                p.saaf_offset[c],
            )
        })
        .collect()
}

struct BackEnd<T> {
    frame: FrameCache<T>,
    y: Vec<T>,
}

fn rest<T: Real>(
    x: &[T],
    fe: FrontEnd<T>,
    b: &Tensor2D<T>,
    p: &ModelParams<T>,
    cfg: &ModelConfig,
    saafs: &[Saaf<T>],
    opts: &ForwardOptions,
    item: usize,
) -> Result<BackEnd<T>> {
    let dropping = opts.mode == Mode::Train && opts.dropout_rate > 0.0;
    let mut rng = item_rng(opts.seed, item as u64);
    let mut mask = |n: usize| dropping.then(|| dropout_mask::<T>(n, opts.dropout_rate, &mut rng));

    let (z, pool_idx) = maxpool_forward(b, cfg.pool_size)?;

    let (z_hat, latent) = match opts.topology {
        Topology::Autoencoder => (z.clone(), None),
        Topology::Full => {
            let n = z.channels() * z.time();
            let l1 = softplus_layer(p.latent1.forward(&z)?, mask(n));
            let l2 = softplus_layer(p.latent2.forward_rows(&l1.out)?, mask(n));
            let zh = l2.out.clone();
            zh.check_finite("latent DNN")?;
            (zh, Some(LatentCache { l1, l2 }))
        }
    };

    let x2_hat = unpool(&z_hat, &pool_idx)?;
    let x1_hat = fe.x1.hadamard(&x2_hat)?;

    let (x0_hat, backend) = match opts.topology {
        Topology::Autoencoder => (x1_hat.clone(), None),
        Topology::Full => {
            let t = x1_hat.time();
            let h1 = softplus_layer(
                p.dense[0].forward_columns(&x1_hat)?,
                mask(p.dense[0].n_out * t),
            );
            let h2 = softplus_layer(
                p.dense[1].forward_columns(&h1.out)?,
                mask(p.dense[1].n_out * t),
            );
            let h3 = softplus_layer(
                p.dense[2].forward_columns(&h2.out)?,
                mask(p.dense[2].n_out * t),
            );
            let h4 = p.dense[3].forward_columns(&h3.out)?;
            let mut x0 = h4.clone();
            for (c, s) in saafs.iter().enumerate() {
                x0.row_mut(c).iter_mut().for_each(|v| *v = s.eval(*v));
            }
            x0.check_finite("DNN-SAAF")?;
            (
                x0,
                Some(BackendCache {
                    h: [h1, h2, h3],
                    h4,
                }),
            )
        }
    };

    let y = conv1d_adjoint(&x0_hat, &p.conv1)?;
    if !crate::tensor::all_finite(&y) {
        return Err(Error::NonFinite {
            stage: "deconvolution".into(),
        });
    }
    Ok(BackEnd {
        frame: FrameCache {
            x: x.to_vec(),
            x1: fe.x1,
            local_pre: fe.local_pre,
            z,
            pool_idx,
            z_hat,
            x2_hat,
            x1_hat,
            x0_hat,
            latent,
            backend,
        },
        y,
    })
}

/// Runs the model on a batch of frames. Returns the output frames and, in
/// train mode, the cache needed by [`model_backward`].
pub fn model_forward<T: Real>(
    frames: &[Vec<T>],
    p: &ModelParams<T>,
    cfg: &ModelConfig,
    opts: &ForwardOptions,
) -> Result<(Vec<Vec<T>>, Option<ForwardCache<T>>)> {
    if frames.is_empty() {
        return Err(Error::invalid("model forward on an empty batch"));
    }
    if let Some(f) = frames.iter().find(|f| f.len() != cfg.frame_size) {
        return Err(Error::shape(format!(
            "frame length {} != configured frame size {}",
            f.len(),
            cfg.frame_size
        )));
    }
    let fronts: Vec<FrontEnd<T>> = frames
        .par_iter()
        .map(|x| front_end(x, p))
        .collect::<Result<_>>()?;

    let (normed, bn_cache, stats) = match opts.mode {
        Mode::Train => {
            let x2s: Vec<Tensor2D<T>> = fronts.iter().map(|f| f.x2.clone()).collect();
            let (b, cache, stats) = batchnorm_train(&x2s, &p.bn)?;
            (b, Some(cache), Some(stats))
        }
        Mode::Infer => {
            let b = fronts
                .iter()
                .map(|f| batchnorm_infer(&f.x2, &p.bn))
                .collect::<Result<Vec<_>>>()?;
            (b, None, None)
        }
    };
    for b in &normed {
        b.check_finite("batchnorm")?;
    }

    let saafs = saaf_bank(p)?;
    let outs: Vec<BackEnd<T>> = frames
        .par_iter()
        .zip(fronts.into_par_iter())
        .zip(normed.par_iter())
        .enumerate()
        .map(|(i, ((x, fe), b))| rest(x, fe, b, p, cfg, &saafs, opts, i))
        .collect::<Result<_>>()?;

    let mut ys = Vec::with_capacity(outs.len());
    let mut caches = Vec::with_capacity(outs.len());
    for o in outs {
        ys.push(o.y);
        caches.push(o.frame);
    }
    let cache = match (opts.mode, bn_cache, stats) {
        (Mode::Train, Some(bn), Some(batch_stats)) => Some(ForwardCache {
            frames: caches,
            bn,
            batch_stats,
            topology: opts.topology,
        }),
        _ => None,
    };
    Ok((ys, cache))
}

/// Inference-mode forward without a cache.
pub fn model_infer<T: Real>(
    frames: &[Vec<T>],
    p: &ModelParams<T>,
    cfg: &ModelConfig,
) -> Result<Vec<Vec<T>>> {
    Ok(model_forward(frames, p, cfg, &ForwardOptions::infer())?.0)
}

struct BackendGrads<T> {
    grads: ModelParams<T>,
    /// Gradient at the batchnorm output.
    g_b: Tensor2D<T>,
    /// Gradient reaching `X1` through the residual.
    g_r: Tensor2D<T>,
}

fn back_rest<T: Real>(
    fc: &FrameCache<T>,
    gy: &[T],
    p: &ModelParams<T>,
    saafs: &[Saaf<T>],
    paths: W1Paths,
) -> Result<BackendGrads<T>> {
    let mut grads = p.zeros_like();
    let (g_x0, gw1_synth) = conv1d_adjoint_backward(&fc.x0_hat, gy, &p.conv1)?;
    if paths.synthesis {
        grads.conv1.weights = gw1_synth;
    }

    let g_x1_hat = match &fc.backend {
        None => g_x0,
        Some(bc) => {
            let k = p.saaf_points();
            let mut g_h4 = g_x0;
            for (c, s) in saafs.iter().enumerate() {
                let xs = bc.h4.row(c);
                let gs = g_h4.row_mut(c);
                s.accumulate_param_grad(
                    xs,
                    gs,
                    &mut grads.saaf_slopes[c * k..(c + 1) * k],
                    &mut grads.saaf_offset[c],
                );
                for (g, &x) in gs.iter_mut().zip(xs) {
                    *g *= s.eval_with_slope(x).1;
                }
            }
            let (mut g, d) = p.dense[3].backward_columns(&bc.h[2].out, &g_h4)?;
            grads.dense[3].weights = d.weights;
            grads.dense[3].bias = d.bias;
            for l in (0..3).rev() {
                let g_pre = softplus_layer_back(&bc.h[l], g);
                let input = if l == 0 { &fc.x1_hat } else { &bc.h[l - 1].out };
                let (gi, d) = p.dense[l].backward_columns(input, &g_pre)?;
                grads.dense[l].weights = d.weights;
                grads.dense[l].bias = d.bias;
                g = gi;
            }
            g
        }
    };

    let g_r = g_x1_hat.hadamard(&fc.x2_hat)?;
    let g_x2_hat = g_x1_hat.hadamard(&fc.x1)?;
    let g_z_hat = unpool_backward(&g_x2_hat, &fc.pool_idx)?;

    let g_z = match &fc.latent {
        None => g_z_hat,
        Some(lc) => {
            let g_pre2 = softplus_layer_back(&lc.l2, g_z_hat);
            let (g_l1, d) = p.latent2.backward_rows(&lc.l1.out, &g_pre2)?;
            grads.latent2.weights = d.weights;
            grads.latent2.bias = d.bias;
            let g_pre1 = softplus_layer_back(&lc.l1, g_l1);
            let (g_z, gw, gb) = p.latent1.backward(&fc.z, &g_pre1)?;
            grads.latent1.weights = gw;
            grads.latent1.bias = gb;
            g_z
        }
    };
    let g_b = maxpool_backward(&g_z, &fc.pool_idx)?;
    Ok(BackendGrads { grads, g_b, g_r })
}

fn back_front<T: Real>(
    fc: &FrameCache<T>,
    g_x2: &Tensor2D<T>,
    g_r: &Tensor2D<T>,
    mut grads: ModelParams<T>,
    p: &ModelParams<T>,
    paths: W1Paths,
) -> Result<(ModelParams<T>, Vec<T>)> {
    let mut g_pre = g_x2.clone();
    g_pre
        .data_mut()
        .iter_mut()
        .zip(fc.local_pre.data())
        .for_each(|(g, &v)| *g *= sigmoid(v));
    let a = fc.x1.map(|v| v.abs());
    let (g_a, lg) = local_conv1d_backward(&a, &g_pre, &p.local)?;
    grads.local.weights = lg.weights;
    grads.local.bias = lg.bias;
    let mut g_x1 = g_r.clone();
    for ((g, &ga), &x) in g_x1.data_mut().iter_mut().zip(g_a.data()).zip(fc.x1.data()) {
        *g += ga * crate::nn::activation::abs_grad(x);
    }
    let (g_x, cg) = conv1d_backward(&fc.x, &g_x1, &p.conv1)?;
    if paths.analysis {
        for (w, &v) in grads.conv1.weights.iter_mut().zip(&cg.weights) {
            *w += v;
        }
    }
    // conv1 bias only acts on the analysis side
    grads.conv1.bias = cg.bias;
    Ok((grads, g_x))
}

pub fn model_backward<T: Real>(
    cache: &ForwardCache<T>,
    grad_y: &[Vec<T>],
    p: &ModelParams<T>,
) -> Result<ModelGrads<T>> {
    model_backward_paths(cache, grad_y, p, W1Paths::BOTH)
}

/// Backward pass with control over which tied-kernel paths reach `conv1.weight`.
pub fn model_backward_paths<T: Real>(
    cache: &ForwardCache<T>,
    grad_y: &[Vec<T>],
    p: &ModelParams<T>,
    paths: W1Paths,
) -> Result<ModelGrads<T>> {
    if grad_y.len() != cache.frames.len() {
        return Err(Error::shape(format!(
            "{} output gradients for a cached batch of {}",
            grad_y.len(),
            cache.frames.len()
        )));
    }
    for (g, fc) in grad_y.iter().zip(&cache.frames) {
        if g.len() != fc.x.len() {
            return Err(Error::shape(
                "output gradient length differs from frame length",
            ));
        }
    }
    let saafs = saaf_bank(p)?;
    let backs: Vec<BackendGrads<T>> = cache
        .frames
        .par_iter()
        .zip(grad_y.par_iter())
        .map(|(fc, gy)| back_rest(fc, gy, p, &saafs, paths))
        .collect::<Result<_>>()?;

    let g_bs: Vec<Tensor2D<T>> = backs.iter().map(|b| b.g_b.clone()).collect();
    let (g_x2s, dgamma, dbeta) = batchnorm_backward(&cache.bn, &g_bs, &p.bn.gamma)?;

    let fronts: Vec<(ModelParams<T>, Vec<T>)> = cache
        .frames
        .par_iter()
        .zip(backs.into_par_iter())
        .zip(g_x2s.par_iter())
        .map(|((fc, b), g_x2)| back_front(fc, g_x2, &b.g_r, b.grads, p, paths))
        .collect::<Result<_>>()?;

    let mut total = p.zeros_like();
    let mut input = Vec::with_capacity(fronts.len());
    for (g, gx) in fronts {
        total.add_assign(&g);
        input.push(gx);
    }
    total.bn.gamma = dgamma;
    total.bn.beta = dbeta;
    Ok(ModelGrads {
        params: total,
        input,
    })
}
