//! The `nafx` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::audio::dataset::MANIFEST_NAME;
use crate::audio::{
    dataset_pair, load_pairs, read_manifest, wav_read, wav_write, AudioClip, DatasetSpec,
    EffectKind, NoteSource, Split, WavFormat,
};
use crate::error::{Error, Result};
use crate::eval::{
    curve_csv, energy_norm_mae, fft_csv, frame_fft_mag, stft_csv, stft_mag, waveshape_curve,
    write_text, MetricReport, FFT_SIZE,
};
use crate::model::{model_gradcheck, Model, ModelConfig, Topology};
use crate::training::{pretrain_run, process_clip, train_run, Progress, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Parser, Debug)]
#[command(
    name = "nafx",
    version,
    about = "Black-box modeling of nonlinear audio effects"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a paired dataset of synthetic (or given) notes.
    Synth(SynthArgs),
    /// Pretrain the front-end autoencoder.
    Pretrain(PretrainArgs),
    /// Train the full model from a pretrained checkpoint.
    Train(TrainArgs),
    /// Process a WAV file through a checkpoint.
    Apply(ApplyArgs),
    /// Energy-normalized MAE over a dataset's test split.
    Eval(EvalArgs),
    /// Waveshaping curve and spectra CSVs for an input/output pair.
    Inspect(InspectArgs),
    /// Finite-difference check of the analytic gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// tanh | hardclip | fxchain1 | fxchain2 | fxchain3
    #[arg(long)]
    effect: String,
    /// Waveshaper drive in dB (tanh and hardclip only).
    #[arg(long)]
    gain_db: Option<f64>,
    #[arg(long, default_value_t = 8)]
    notes: usize,
    #[arg(long, default_value_t = 2.0)]
    seconds: f64,
    /// Use the WAV files in this directory instead of synthetic notes.
    #[arg(long)]
    notes_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Settings shared by `pretrain` and `train`.
#[derive(Args, Debug)]
struct ModelArgs {
    /// Dataset directory holding the manifest.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// `key=value` file with model and training settings; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Small gradient-check configuration instead of the full model.
    #[arg(long)]
    tiny: bool,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// 0 for the model without dropout.
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    hop: Option<usize>,
    #[arg(long)]
    saaf_lambda: Option<f64>,
}

#[derive(Args, Debug)]
struct PretrainArgs {
    #[command(flatten)]
    common: ModelArgs,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: ModelArgs,
    /// Pretrained checkpoint; its model configuration is used.
    #[arg(long)]
    ckpt: PathBuf,
}

#[derive(Args, Debug)]
struct ApplyArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    hop: usize,
    /// pcm16 | float32
    #[arg(long, default_value = "float32")]
    format: WavFormat,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Metrics CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    hop: usize,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Target or model output aligned with the input.
    #[arg(long)]
    output: PathBuf,
    /// Directory for curve.csv, fft_in.csv, fft_out.csv, stft_in.csv, stft_out.csv.
    #[arg(long)]
    out: PathBuf,
    /// Start sample of the FFT frame; the middle of the clip when absent.
    #[arg(long)]
    frame_start: Option<usize>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long)]
    tiny: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Check the pretraining topology instead of the full network.
    #[arg(long)]
    autoencoder: bool,
}

/// Model and training settings merged from defaults, an optional config
/// file and flags, in that order.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn new(tiny: bool) -> Self {
        let model = if tiny {
            ModelConfig::tiny()
        } else {
            ModelConfig::default()
        };
        let train = TrainConfig {
            frame_size: model.frame_size,
            hop: if tiny {
                model.frame_size / 4
            } else {
                TrainConfig::default().hop
            },
            ..TrainConfig::default()
        };
        Self { model, train }
    }

    /// Applies one setting; model keys first, then training keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        if self.model.set(key, value)? {
            if key == "frame_size" {
                self.train.frame_size = self.model.frame_size;
            }
            if key == "dropout_rate" {
                self.train.dropout_rate = f64::from(self.model.dropout_rate);
            }
            return Ok(());
        }
        fn num<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
        }
        let t = &mut self.train;
        match key {
            "hop" => t.hop = num(key, value)?,
            "batch_size" => t.batch_size = num(key, value)?,
            "iterations" => t.iterations = num(key, value)?,
            "learning_rate" => t.learning_rate = num(key, value)?,
            "final_lr_scale" => t.final_lr_scale = num(key, value)?,
            "saaf_lambda" => t.saaf_lambda = num(key, value)?,
            "seed" => t.seed = num(key, value)?,
            "checkpoint_every" => t.checkpoint_every = num(key, value)?,
            "peak_normalize" => t.peak_normalize = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    /// Flat `key=value` lines; blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate(&self.model)
    }
}

fn build_run_config(a: &ModelArgs) -> Result<RunConfig> {
    let mut rc = RunConfig::new(a.tiny);
    if let Some(path) = &a.config {
        rc.apply_text(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?;
    }
    let flags = [
        ("channels", a.channels.map(|v| v.to_string())),
        ("seed", a.seed.map(|v| v.to_string())),
        ("dropout_rate", a.dropout.map(|v| v.to_string())),
        ("iterations", a.iterations.map(|v| v.to_string())),
        ("learning_rate", a.lr.map(|v| v.to_string())),
        ("batch_size", a.batch.map(|v| v.to_string())),
        ("hop", a.hop.map(|v| v.to_string())),
        ("saaf_lambda", a.saaf_lambda.map(|v| v.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            rc.set(k, &v)?;
        }
    }
    rc.validate()?;
    Ok(rc)
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        ))
    }
}

/// The parent directory of an output file must already exist.
fn require_out_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => Err(Error::io(
            p,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "output directory does not exist",
            ),
        )),
        _ => Ok(()),
    }
}

fn training_pairs(data: &Path) -> Result<Vec<(AudioClip, AudioClip)>> {
    let manifest = data.join(MANIFEST_NAME);
    require_file(&manifest)?;
    load_pairs(&read_manifest(&manifest)?, Split::Train)
}

/// Logs `iter,loss` lines and overwrites the checkpoint every
/// `checkpoint_every` updates.
fn progress_sink<'a>(
    model: &'a ModelConfig,
    every: usize,
    out: &'a Path,
    log: &'a mut dyn Write,
) -> impl FnMut(&Progress<'_>) -> Result<()> + 'a {
    move |p| {
        writeln!(log, "{},{}", p.iteration, p.loss).map_err(|e| Error::io("<stdout>", e))?;
        if every > 0 && p.iteration % every == 0 {
            crate::model::save_checkpoint(out, model, p.params)?;
        }
        Ok(())
    }
}

fn cmd_synth(a: SynthArgs, out: &mut dyn Write) -> Result<()> {
    let effect = EffectKind::parse(&a.effect, a.gain_db)?;
    let source = match a.notes_dir {
        Some(dir) if !dir.is_dir() => {
            return Err(Error::io(
                &dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
            ))
        }
        Some(dir) => NoteSource::Dir(dir),
        None => NoteSource::Synth {
            count: a.notes,
            seconds: a.seconds,
        },
    };
    let entries = dataset_pair(
        &DatasetSpec {
            source,
            effect,
            seed: a.seed,
        },
        &a.out,
    )?;
    writeln!(out, "wrote {} pairs to {}", entries.len(), a.out.display())
        .map_err(|e| Error::io("<stdout>", e))
}

fn cmd_pretrain(a: PretrainArgs, out: &mut dyn Write) -> Result<()> {
    let rc = build_run_config(&a.common)?;
    require_out_parent(&a.common.out)?;
    let pairs = training_pairs(&a.common.data)?;
    writeln!(out, "iter,loss").map_err(|e| Error::io("<stdout>", e))?;
    let mut sink = progress_sink(&rc.model, rc.train.checkpoint_every, &a.common.out, out);
    let res = pretrain_run(&pairs, &rc.model, &rc.train, &mut sink)?;
    crate::model::save_checkpoint(&a.common.out, &rc.model, &res.params)
}

fn cmd_train(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    require_file(&a.ckpt)?;
    require_out_parent(&a.common.out)?;
    let pre = Model::load(&a.ckpt)?;
    let mut rc = build_run_config(&a.common)?;
    // the architecture comes from the checkpoint; only dropout may change
    let dropout = a
        .common
        .dropout
        .map(|d| d as f32)
        .unwrap_or(pre.config.dropout_rate);
    rc.model = ModelConfig {
        dropout_rate: dropout,
        ..pre.config.clone()
    };
    rc.train.frame_size = rc.model.frame_size;
    rc.train.dropout_rate = f64::from(dropout);
    rc.validate()?;
    let pairs = training_pairs(&a.common.data)?;
    writeln!(out, "iter,loss").map_err(|e| Error::io("<stdout>", e))?;
    let mut sink = progress_sink(&rc.model, rc.train.checkpoint_every, &a.common.out, out);
    let res = train_run(&pairs, &rc.model, &rc.train, pre.params, &mut sink)?;
    crate::model::save_checkpoint(&a.common.out, &rc.model, &res.params)
}

fn cmd_apply(a: ApplyArgs) -> Result<()> {
    require_file(&a.ckpt)?;
    require_file(&a.input)?;
    require_out_parent(&a.out)?;
    let model = Model::load(&a.ckpt)?;
    let clip = wav_read(&a.input)?;
    if clip.sample_rate != model.config.sample_rate {
        return Err(Error::invalid(format!(
            "{} is {} Hz, the model expects {} Hz",
            a.input.display(),
            clip.sample_rate,
            model.config.sample_rate
        )));
    }
    let y = process_clip(&clip.samples, &model.params, &model.config, a.hop, 32)?;
    wav_write(&AudioClip::new(y, clip.sample_rate)?, &a.out, a.format)
}

fn cmd_eval(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    require_file(&a.ckpt)?;
    let manifest = a.data.join(MANIFEST_NAME);
    require_file(&manifest)?;
    if let Some(o) = &a.out {
        require_out_parent(o)?;
    }
    let model = Model::load(&a.ckpt)?;
    let entries = read_manifest(&manifest)?;
    let test: Vec<_> = entries
        .iter()
        .filter(|e| e.split == Split::Test)
        .cloned()
        .collect();
    let pairs = load_pairs(&test, Split::Test)?;
    if pairs.is_empty() {
        return Err(Error::invalid("the manifest has no test notes"));
    }
    let mut rows = Vec::with_capacity(pairs.len());
    for (e, (raw, fx)) in test.iter().zip(&pairs) {
        let y = process_clip(&raw.samples, &model.params, &model.config, a.hop, 32)?;
        let id = e
            .raw
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        rows.push((id, energy_norm_mae(&fx.samples, &y)?));
    }
    let csv = MetricReport::new(rows)?.to_csv();
    match &a.out {
        Some(p) => write_text(p, &csv),
        None => out
            .write_all(csv.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn cmd_inspect(a: InspectArgs) -> Result<()> {
    require_file(&a.input)?;
    require_file(&a.output)?;
    let x = wav_read(&a.input)?;
    let y = wav_read(&a.output)?;
    if x.len() < FFT_SIZE {
        return Err(Error::invalid(format!(
            "clips need at least {FFT_SIZE} samples"
        )));
    }
    let start = a.frame_start.unwrap_or((x.len() - FFT_SIZE) / 2);
    if start + FFT_SIZE > x.len().min(y.len()) {
        return Err(Error::invalid(format!(
            "frame at {start} runs past the clip end"
        )));
    }
    let curve = waveshape_curve(&x.samples, &y.samples)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    write_text(&a.out.join("curve.csv"), &curve_csv(&curve))?;
    for (name, clip) in [("in", &x), ("out", &y)] {
        let frame = &clip.samples[start..start + FFT_SIZE];
        write_text(
            &a.out.join(format!("fft_{name}.csv")),
            &fft_csv(&frame_fft_mag(frame)?),
        )?;
        write_text(
            &a.out.join(format!("stft_{name}.csv")),
            &stft_csv(&stft_mag(&clip.samples)?),
        )?;
    }
    Ok(())
}

/// Returns whether every group passed.
fn cmd_gradcheck(a: GradcheckArgs, out: &mut dyn Write) -> Result<bool> {
    let mut rc = RunConfig::new(a.tiny);
    if let Some(path) = &a.config {
        require_file(path)?;
        rc.apply_text(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?;
    }
    rc.model.validate()?;
    let topology = if a.autoencoder {
        Topology::Autoencoder
    } else {
        Topology::Full
    };
    let report = model_gradcheck(&rc.model, topology, a.seed)?;
    let io = |e| Error::io("<stdout>", e);
    writeln!(out, "group,max_rel_error,checked,skipped").map_err(io)?;
    for g in &report.groups {
        writeln!(
            out,
            "{},{:.3e},{},{}",
            g.name, g.max_rel_error, g.checked, g.skipped
        )
        .map_err(io)?;
    }
    let ok = report.passes(GRADCHECK_TOL);
    writeln!(
        out,
        "max,{:.3e},{}",
        report.max_rel_error(),
        if ok { "PASS" } else { "FAIL" }
    )
    .map_err(io)?;
    Ok(ok)
}

/// Exit code for a failed run.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::NonFinite { .. } | Error::MissingCache(_) => EXIT_NUMERIC,
        Error::Shape(_)
        | Error::InvalidArgument(_)
        | Error::Wav(_)
        | Error::Checkpoint(_)
        | Error::Io { .. } => EXIT_DATA,
    }
}

/// Caps the global worker pool at `NAFX_THREADS` when set.
fn init_threads() {
    if let Some(n) = std::env::var("NAFX_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
    {
        // a pool built earlier in the process stays as it is
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code. Normal output goes to `out`, diagnostics to `err`.
pub fn run_cli<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = err.write_all(text.as_bytes());
                EXIT_USAGE
            } else {
                let _ = out.write_all(text.as_bytes());
                EXIT_OK
            };
        }
    };
    init_threads();
    let res = match cli.command {
        Command::Synth(a) => cmd_synth(a, out),
        Command::Pretrain(a) => cmd_pretrain(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Apply(a) => cmd_apply(a),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Gradcheck(a) => match cmd_gradcheck(a, out) {
            Ok(true) => Ok(()),
            Ok(false) => {
                let _ = writeln!(err, "error: gradient check above {GRADCHECK_TOL:e}");
                return EXIT_NUMERIC;
            }
            Err(e) => Err(e),
        },
    };
    match res {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
