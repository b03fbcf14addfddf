use nafx::audio::{synth_note, waveshaper, AudioClip, Waveshape};
use nafx::eval::energy_norm_mae;
use nafx::model::params::ModelParams;
use nafx::model::ModelConfig;
use nafx::nn::saaf::max_slope_difference;
use nafx::training::{no_progress, pretrain_run, process_clip, train_run, TrainConfig};

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[s.len() / 2]
}

fn tanh_pair(seconds: f64) -> (AudioClip, AudioClip) {
    let raw = synth_note(220.0, seconds, 16_000, 0).unwrap();
    // drive g = 5
    let fx = waveshaper(&raw, Waveshape::TanhDrive, 20.0 * 5f64.log10());
    (raw, fx)
}

fn small_model(channels: usize) -> (ModelConfig, TrainConfig) {
    let model = ModelConfig {
        channels,
        dropout_rate: 0.0,
        ..ModelConfig::tiny()
    };
    let train = TrainConfig {
        frame_size: model.frame_size,
        hop: 16,
        dropout_rate: 0.0,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    };
    (model, train)
}

#[test]
fn overfits_one_tanh_clip() {
    let (model, tc) = small_model(16);
    let pairs = vec![tanh_pair(0.5)];
    let pre = pretrain_run(
        &pairs,
        &model,
        &TrainConfig {
            iterations: 300,
            ..tc.clone()
        },
        &mut no_progress,
    )
    .unwrap();
    let out = train_run(
        &pairs,
        &model,
        &TrainConfig {
            iterations: 2000,
            ..tc.clone()
        },
        pre.params,
        &mut no_progress,
    )
    .unwrap();

    let losses: Vec<f64> = out.log.iter().map(|&(_, l)| l).collect();
    assert!(losses.iter().all(|l| l.is_finite()));
    let tenth = losses.len() / 10;
    assert!(median(&losses[losses.len() - tenth..]) < median(&losses[..tenth]));

    let (raw, fx) = &pairs[0];
    let y = process_clip(&raw.samples, &out.params, &model, tc.hop, 32).unwrap();
    let e = energy_norm_mae(&fx.samples, &y).unwrap();
    assert!(e < 0.05, "ENMAE {e}");
}

fn slope_spread(p: &ModelParams<f32>) -> Vec<f32> {
    (0..p.channels())
        .map(|c| max_slope_difference(p.saaf_slopes_of(c)))
        .collect()
}

#[test]
fn saaf_penalty_smooths_the_activations() {
    let (model, tc) = small_model(8);
    let pairs = vec![tanh_pair(0.25)];
    let pre = pretrain_run(
        &pairs,
        &model,
        &TrainConfig {
            iterations: 20,
            ..tc.clone()
        },
        &mut no_progress,
    )
    .unwrap();
    let run = |lambda: f64| {
        let cfg = TrainConfig {
            iterations: 300,
            saaf_lambda: lambda,
            ..tc.clone()
        };
        train_run(&pairs, &model, &cfg, pre.params.clone(), &mut no_progress)
            .unwrap()
            .params
    };
    let free = slope_spread(&run(0.0));
    let held = slope_spread(&run(1e-2));
    for (c, (h, f)) in held.iter().zip(&free).enumerate() {
        assert!(h < f, "channel {c}: {h} vs {f}");
    }
}
