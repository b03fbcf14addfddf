//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. `NAFX_ACCEPT=1,3,7` runs a subset.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nafx::audio::dataset::{split_assignment, synth_dataset_note};
use nafx::audio::{synth_note, AudioClip, EffectKind, Split};
use nafx::eval::{curve_rms_deviation, energy_norm_mae, waveshape_curve};
use nafx::model::params::ModelParams;
use nafx::model::{
    checkpoint_bytes, checkpoint_from_bytes, model_forward, model_gradcheck, ForwardOptions, Mode,
    ModelConfig, Topology,
};
use nafx::nn::conv::conv1d_linear;
use nafx::nn::gradcheck::layer_gradchecks;
use nafx::nn::{
    conv1d_adjoint, fit_saaf, local_conv1d_forward, maxpool_forward, unpool, Breakpoints,
    ConvKernel, Dense, LocalDense, LocalKernel, Saaf,
};
use nafx::training::framing::pad_to_cover;
use nafx::training::{
    no_progress, overlap_add, pretrain_from, pretrain_run, process_clip, slice_frames, train_run,
    TrainConfig,
};
use nafx::Tensor2D;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn randv(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

// ---------------------------------------------------------------- 1

fn gradients() -> Outcome {
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    for (name, rep) in layer_gradchecks(0).map_err(err)? {
        if rep.max_rel_error() >= worst {
            worst = rep.max_rel_error();
            worst_at = name;
        }
    }
    for topo in [Topology::Full, Topology::Autoencoder] {
        let rep = model_gradcheck(&ModelConfig::tiny(), topo, 0).map_err(err)?;
        for g in &rep.groups {
            let e = if g.checked == 0 {
                f64::INFINITY
            } else {
                g.max_rel_error
            };
            if e >= worst {
                worst = e;
                worst_at = format!("tiny model ({topo:?}) {}", g.name);
            }
        }
    }
    check(
        worst < 1e-4,
        format!("max rel error {worst:.2e} at {worst_at} (< 1e-4)"),
    )
}

// ---------------------------------------------------------------- 2

fn structure() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let mut notes = Vec::new();

    // conv adjoint: <Kx, g> = <x, K*g>
    let (f, k, n) = (8, 64, 1024);
    let kern = ConvKernel::new(f, k, randv(&mut r, f * k), vec![0.0; f]).map_err(err)?;
    let x = randv(&mut r, n);
    let g = Tensor2D::from_vec(f, n, randv(&mut r, f * n)).map_err(err)?;
    let kx = conv1d_linear(&x, &kern).map_err(err)?;
    let lhs: f64 = kx.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
    let adj = conv1d_adjoint(&g, &kern).map_err(err)?;
    let rhs: f64 = x.iter().zip(&adj).map(|(a, b)| a * b).sum();
    let adj_err = (lhs - rhs).abs() / lhs.abs().max(rhs.abs());
    notes.push(format!("adjoint {adj_err:.1e}"));
    if adj_err >= 1e-5 {
        return Err(notes.join(", "));
    }

    // pool/unpool: values land back at their argmax positions, repooling is exact
    // positive values so the scattered maxima dominate the zeros around them
    let t = Tensor2D::from_vec(f, n, randv(&mut r, f * n))
        .map_err(err)?
        .map(|v| v + 2.0);
    let (z, idx) = maxpool_forward(&t, 16).map_err(err)?;
    let up = unpool(&z, &idx).map_err(err)?;
    let (z2, idx2) = maxpool_forward(&up, 16).map_err(err)?;
    let mut exact = z2 == z && idx2 == idx;
    for c in 0..f {
        for w in 0..n / 16 {
            exact &= up.get(c, idx.get(c, w)) == z.get(c, w);
        }
    }
    let nonzero = up.data().iter().filter(|&&v| v != 0.0).count();
    exact &= nonzero <= f * n / 16;
    notes.push(format!(
        "pool round trip {}",
        if exact { "exact" } else { "NOT exact" }
    ));
    if !exact {
        return Err(notes.join(", "));
    }

    // locality: perturbing one channel (or one time step) moves only what it should
    let local = LocalKernel::new(f, 32, randv(&mut r, f * 32), randv(&mut r, f)).map_err(err)?;
    let y0 = local_conv1d_forward(&t, &local).map_err(err)?;
    let mut tp = t.clone();
    tp.set(3, 500, tp.get(3, 500) + 1.0);
    let y1 = local_conv1d_forward(&tp, &local).map_err(err)?;
    let mut local_ok = true;
    for c in 0..f {
        for s in 0..n {
            let moved = y0.get(c, s) != y1.get(c, s);
            let allowed = c == 3 && (s as isize - 500).unsigned_abs() <= 32;
            local_ok &= !moved || allowed;
        }
    }
    let ld = LocalDense {
        channels: f,
        n_out: 12,
        n_in: 64,
        weights: randv(&mut r, f * 12 * 64),
        bias: randv(&mut r, f * 12),
    };
    let zin = Tensor2D::from_vec(f, 64, randv(&mut r, f * 64)).map_err(err)?;
    let mut zp = zin.clone();
    zp.set(5, 10, 3.0);
    let (a, b) = (
        ld.forward(&zin).map_err(err)?,
        ld.forward(&zp).map_err(err)?,
    );
    for c in 0..f {
        local_ok &= (a.row(c) != b.row(c)) == (c == 5);
    }
    let dense = Dense::new(f, f, randv(&mut r, f * f), randv(&mut r, f)).map_err(err)?;
    let (a, b) = (
        dense.forward_columns(&zin).map_err(err)?,
        dense.forward_columns(&zp).map_err(err)?,
    );
    for s in 0..64 {
        let moved = (0..f).any(|c| a.get(c, s) != b.get(c, s));
        local_ok &= moved == (s == 10);
    }
    notes.push(format!(
        "locality {}",
        if local_ok { "ok" } else { "VIOLATED" }
    ));
    if !local_ok {
        return Err(notes.join(", "));
    }

    // SAAF C1 continuity at every breakpoint
    let bps = Breakpoints::uniform(25, -1.0, 1.0).map_err(err)?;
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let slopes = randv(&mut r, 26)
            .iter()
            .map(|v| v * 3.0)
            .collect::<Vec<_>>();
        let s = Saaf::new(bps.as_slice(), &slopes, trial as f64 * 0.1).map_err(err)?;
        for (i, &a) in bps.as_slice().iter().enumerate() {
            let (v0, d0) = s.piece_at(i, a);
            let (v1, d1) = s.piece_at(i + 1, a);
            worst = worst.max((v0 - v1).abs()).max((d0 - d1).abs());
        }
    }
    notes.push(format!("SAAF C1 gap {worst:.1e}"));
    if worst >= 1e-6 {
        return Err(notes.join(", "));
    }

    // checkpoint round trip
    let cfg = ModelConfig::with_channels(16);
    let p = ModelParams::<f32>::init(&cfg, 4).map_err(err)?;
    let bytes = checkpoint_bytes(&cfg, &p).map_err(err)?;
    let (cfg2, p2) = checkpoint_from_bytes(&bytes).map_err(err)?;
    let same = checkpoint_bytes(&cfg2, &p2).map_err(err)? == bytes && p2 == p;
    notes.push(format!(
        "checkpoint {}",
        if same { "byte-identical" } else { "DIFFERS" }
    ));
    check(same, notes.join(", "))
}

// ---------------------------------------------------------------- 3

fn saaf_fit() -> Outcome {
    let bps = Breakpoints::uniform(25, -1.0, 1.0).map_err(err)?;
    let xs: Vec<f64> = (0..1000).map(|i| -1.0 + 2.0 * i as f64 / 999.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| x.tanh()).collect();
    let fit = fit_saaf(&bps, &xs, &ys)
        .map_err(err)?
        .evaluator()
        .map_err(err)?;
    let worst = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| (fit.eval(x) - y).abs())
        .fold(0.0, f64::max);
    check(
        worst < 0.01,
        format!("max |SAAF - tanh| {worst:.2e} on 1000 points (< 0.01)"),
    )
}

// ---------------------------------------------------------------- 4

/// Adam step size for the identity task; the 1e-4 default needs far more
/// than 200 updates.
const IDENTITY_LR: f64 = 5e-3;
/// Scale on the initial analysis kernel for the identity task. The tied
/// synthesis makes the initial end-to-end gain quadratic in this kernel.
const IDENTITY_W1_SCALE: f32 = 0.5;

fn autoencode(
    samples: &[f32],
    p: &ModelParams<f32>,
    cfg: &ModelConfig,
    hop: usize,
) -> Result<Vec<f32>, String> {
    let padded = pad_to_cover(samples, cfg.frame_size, hop);
    let frames = slice_frames(&padded, cfg.frame_size, hop).map_err(err)?;
    let opts = ForwardOptions {
        mode: Mode::Infer,
        topology: Topology::Autoencoder,
        dropout_rate: 0.0,
        seed: 0,
    };
    let mut outs = Vec::with_capacity(frames.len());
    for chunk in frames.frames.chunks(32) {
        outs.extend(model_forward(chunk, p, cfg, &opts).map_err(err)?.0);
    }
    let mut y = overlap_add(&frames.with_frames(outs).map_err(err)?);
    y.truncate(samples.len());
    Ok(y)
}

fn identity_task() -> Outcome {
    let model = ModelConfig::with_channels(32);
    let tc = TrainConfig {
        iterations: 200,
        learning_rate: IDENTITY_LR,
        ..TrainConfig::default()
    };
    let note = synth_note(220.0, 2.0, 16_000, 0).map_err(err)?;
    let mut p0 = ModelParams::init(&model, tc.seed).map_err(err)?;
    p0.conv1
        .weights
        .iter_mut()
        .for_each(|w| *w *= IDENTITY_W1_SCALE);
    let out = pretrain_from(
        &[(note.clone(), note.clone())],
        &model,
        &tc,
        p0,
        &mut no_progress,
    )
    .map_err(err)?;
    let y = autoencode(&note.samples, &out.params, &model, tc.hop)?;
    let e = energy_norm_mae(&note.samples, &y).map_err(err)?;
    check(
        e < 0.1,
        format!("reconstruction ENMAE {e:.4} after 200 updates (< 0.1)"),
    )
}

// ---------------------------------------------------------------- 5, 6

/// Adam step sizes for the desk-scale pipeline.
const PRETRAIN_LR: f64 = 5e-3;
const TRAIN_LR: f64 = 1e-3;

struct Pipeline {
    model: ModelConfig,
    pretrain_iters: usize,
    train_iters: usize,
    final_lr_scale: f64,
}

struct PipelineResult {
    test: Vec<(AudioClip, AudioClip, Vec<f32>)>,
}

impl PipelineResult {
    fn mean_enmae(&self) -> Result<f64, String> {
        let mut s = 0.0;
        for (_, fx, y) in &self.test {
            s += energy_norm_mae(&fx.samples, y).map_err(err)?;
        }
        Ok(s / self.test.len() as f64)
    }
}

/// Eight 2 s synthetic notes through `effect`, split by seed; pretrain,
/// train, then process the test notes.
fn run_pipeline(pl: &Pipeline, effect: EffectKind, seed: u64) -> Result<PipelineResult, String> {
    let splits = split_assignment(8, seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, split) in splits.iter().enumerate() {
        let raw = synth_dataset_note(i, 2.0, seed).map_err(err)?;
        let fx = effect.apply(&raw).map_err(err)?;
        match split {
            Split::Train => train.push((raw, fx)),
            Split::Test => test.push((raw, fx)),
            Split::Val => {}
        }
    }
    let base = TrainConfig {
        seed,
        dropout_rate: f64::from(pl.model.dropout_rate),
        final_lr_scale: pl.final_lr_scale,
        ..TrainConfig::default()
    };
    let pre_cfg = TrainConfig {
        iterations: pl.pretrain_iters,
        learning_rate: PRETRAIN_LR,
        ..base.clone()
    };
    let pre = pretrain_run(&train, &pl.model, &pre_cfg, &mut no_progress).map_err(err)?;
    let train_cfg = TrainConfig {
        iterations: pl.train_iters,
        learning_rate: TRAIN_LR,
        ..base
    };
    let out =
        train_run(&train, &pl.model, &train_cfg, pre.params, &mut no_progress).map_err(err)?;
    let mut res = Vec::new();
    for (raw, fx) in test {
        let y =
            process_clip(&raw.samples, &out.params, &pl.model, train_cfg.hop, 32).map_err(err)?;
        res.push((raw, fx, y));
    }
    Ok(PipelineResult { test: res })
}

fn desk_scale() -> Outcome {
    // without dropout: a single synthetic source, so nothing to generalize across
    let pl = Pipeline {
        model: ModelConfig {
            dropout_rate: 0.0,
            ..ModelConfig::default()
        },
        pretrain_iters: 500,
        train_iters: 2000,
        final_lr_scale: 1.0,
    };
    let gain_db = 14.0;
    let res = run_pipeline(&pl, EffectKind::Tanh { gain_db }, 0)?;
    let e = res.mean_enmae()?;
    let g = 10f64.powf(gain_db / 20.0);
    let mut curve_rms = 0.0f64;
    for (raw, _, y) in &res.test {
        let c = waveshape_curve(&raw.samples, y).map_err(err)?;
        curve_rms = curve_rms
            .max(curve_rms_deviation(&c, |x| (g * x).tanh() / g.tanh(), -0.5, 0.5).map_err(err)?);
    }
    check(
        e < 0.1 && curve_rms < 0.05,
        format!("test ENMAE {e:.4} (< 0.1), curve RMS deviation {curve_rms:.4} (< 0.05)"),
    )
}

fn ordering() -> Outcome {
    let pl = Pipeline {
        model: ModelConfig::with_channels(32),
        pretrain_iters: 200,
        train_iters: 2000,
        final_lr_scale: 1.0,
    };
    let mut tanh = Vec::new();
    let mut chain = Vec::new();
    for seed in 0..3 {
        tanh.push(run_pipeline(&pl, EffectKind::Tanh { gain_db: 14.0 }, seed)?.mean_enmae()?);
        chain.push(run_pipeline(&pl, EffectKind::FxChain(3), seed)?.mean_enmae()?);
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[1]
    };
    let (mt, mc) = (median(&mut tanh), median(&mut chain));
    check(
        mt < mc,
        format!("median test ENMAE tanh {mt:.4} < fxchain3 {mc:.4} (per seed {tanh:.3?} vs {chain:.3?})"),
    )
}

// ---------------------------------------------------------------- 7

fn overlap_add_identity() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for (len, frame, hop) in [
        (20_000, 1024, 64),
        (9_999, 1024, 256),
        (5_000, 64, 16),
        (3_000, 100, 7),
    ] {
        let x: Vec<f32> = (0..len).map(|_| r.random_range(-1.0f32..1.0)).collect();
        let fs = slice_frames(&x, frame, hop).map_err(err)?;
        let covered = (fs.len() - 1) * hop + frame;
        let y = overlap_add(&fs);
        for i in frame..covered - frame {
            worst = worst.max(f64::from((y[i] - x[i]).abs()));
        }
    }
    check(
        worst < 1e-6,
        format!("interior reconstruction error {worst:.1e} (< 1e-6)"),
    )
}

// ---------------------------------------------------------------- 8

fn determinism() -> Outcome {
    let model = ModelConfig::with_channels(16);
    let tc = TrainConfig {
        iterations: 10,
        batch_size: 8,
        seed: 11,
        ..TrainConfig::default()
    };
    let pairs: Vec<_> = (0..2)
        .map(|i| {
            let raw = synth_dataset_note(i, 0.5, 3).unwrap();
            let fx = EffectKind::FxChain(2).apply(&raw).unwrap();
            (raw, fx)
        })
        .collect();
    let run = || -> Result<Vec<u8>, String> {
        let pre = pretrain_run(&pairs, &model, &tc, &mut no_progress).map_err(err)?;
        let out = train_run(&pairs, &model, &tc, pre.params, &mut no_progress).map_err(err)?;
        checkpoint_bytes(&model, &out.params).map_err(err)
    };
    let (a, b) = (run()?, run()?);
    check(
        a == b,
        format!(
            "two runs: {} vs {} checkpoint bytes, identical = {}",
            a.len(),
            b.len(),
            a == b
        ),
    )
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("NAFX_ACCEPT")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Outcome); 8] = [
        (1, "gradient correctness", gradients),
        (2, "adjoint and structure", structure),
        (3, "SAAF expressivity", saaf_fit),
        (4, "pretraining identity task", identity_task),
        (5, "desk-scale nonlinear modeling", desk_scale),
        (6, "tanh easier than fxchain3", ordering),
        (7, "framing and overlap-add", overlap_add_identity),
        (8, "determinism", determinism),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "criterion {n} ({name}): {tag}: {detail} [{:.1}s]",
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
