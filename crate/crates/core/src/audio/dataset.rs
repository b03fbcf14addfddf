//! Paired (raw, effected) datasets with a seeded train/val/test split.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::effects::{fxchain_apply, fxchain_order, waveshaper, Waveshape};
use super::wav::{wav_read, wav_write, WavFormat};
use super::{resample, synth_note, AudioClip};
use crate::error::{Error, Result};

pub const DATASET_RATE: u32 = 16_000;
pub const MANIFEST_NAME: &str = "manifest.txt";

/// Target effect of a dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EffectKind {
    Tanh { gain_db: f64 },
    HardClip { gain_db: f64 },
    FxChain(u8),
}

impl EffectKind {
    pub const DEFAULT_TANH_DB: f64 = 14.0;
    pub const DEFAULT_CLIP_DB: f64 = 6.0;

    /// Parses `tanh`, `hardclip`, `fxchain1`, `fxchain2` or `fxchain3`;
    /// `gain_db` overrides the waveshaper drive.
    pub fn parse(name: &str, gain_db: Option<f64>) -> Result<Self> {
        match name {
            "tanh" => Ok(Self::Tanh {
                gain_db: gain_db.unwrap_or(Self::DEFAULT_TANH_DB),
            }),
            "hardclip" => Ok(Self::HardClip {
                gain_db: gain_db.unwrap_or(Self::DEFAULT_CLIP_DB),
            }),
            "fxchain1" => Ok(Self::FxChain(1)),
            "fxchain2" => Ok(Self::FxChain(2)),
            "fxchain3" => Ok(Self::FxChain(3)),
            _ => Err(Error::invalid(format!(
                "unknown effect {name:?} (tanh | hardclip | fxchain1 | fxchain2 | fxchain3)"
            ))),
        }
    }

    pub fn apply(&self, clip: &AudioClip) -> Result<AudioClip> {
        match *self {
            Self::Tanh { gain_db } => Ok(waveshaper(clip, Waveshape::TanhDrive, gain_db)),
            Self::HardClip { gain_db } => Ok(waveshaper(clip, Waveshape::HardClip, gain_db)),
            Self::FxChain(s) => fxchain_apply(clip, &fxchain_order(s)?),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::invalid(format!("unknown split {s:?}"))),
        }
    }
}

/// Where the raw notes come from.
#[derive(Clone, Debug, PartialEq)]
pub enum NoteSource {
    /// `count` synthetic notes of `seconds` each, pitches drawn from E2..E5.
    Synth { count: usize, seconds: f64 },
    /// Every `.wav` file in a directory, in name order.
    Dir(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub source: NoteSource,
    pub effect: EffectKind,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub raw: PathBuf,
    pub fx: PathBuf,
    pub split: Split,
}

/// Seeded 80/10/10 assignment by note.
pub fn split_assignment(n: usize, seed: u64) -> Vec<Split> {
    let n_test = (n as f64 * 0.1).round() as usize;
    let n_val = (n as f64 * 0.1).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5917));
    let mut out = vec![Split::Train; n];
    for (rank, &i) in idx.iter().enumerate() {
        if rank < n_test {
            out[i] = Split::Test;
        } else if rank < n_test + n_val {
            out[i] = Split::Val;
        }
    }
    out
}

/// Synthetic note `i` of a dataset: pitch drawn from MIDI 40..=76.
pub fn synth_dataset_note(i: usize, seconds: f64, seed: u64) -> Result<AudioClip> {
    let note_seed = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
    let midi = ChaCha8Rng::seed_from_u64(note_seed).random_range(40..=76);
    let f0 = 440.0 * 2f64.powf((f64::from(midi) - 69.0) / 12.0);
    synth_note(f0, seconds, DATASET_RATE, note_seed)
}

fn raw_notes(source: &NoteSource, seed: u64) -> Result<Vec<AudioClip>> {
    match source {
        NoteSource::Synth { count, seconds } => (0..*count)
            .map(|i| synth_dataset_note(i, *seconds, seed))
            .collect(),
        NoteSource::Dir(dir) => {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(|e| Error::io(dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
                .collect();
            paths.sort();
            paths
                .iter()
                .map(|p| resample(&wav_read(p)?, DATASET_RATE))
                .collect()
        }
    }
}

/// Writes `raw/NNNN.wav`, `fx/NNNN.wav` (float32, 16 kHz) and the manifest
/// into `out_dir`. Manifest paths are relative to `out_dir`.
pub fn dataset_pair(spec: &DatasetSpec, out_dir: &Path) -> Result<Vec<ManifestEntry>> {
    let notes = raw_notes(&spec.source, spec.seed)?;
    if notes.is_empty() {
        return Err(Error::invalid("dataset source produced no notes"));
    }
    for sub in ["raw", "fx"] {
        let d = out_dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let splits = split_assignment(notes.len(), spec.seed);
    let mut entries = Vec::with_capacity(notes.len());
    let mut manifest = String::new();
    for (i, (raw, split)) in notes.iter().zip(splits).enumerate() {
        let fx = spec.effect.apply(raw)?;
        let entry = ManifestEntry {
            raw: PathBuf::from(format!("raw/{i:04}.wav")),
            fx: PathBuf::from(format!("fx/{i:04}.wav")),
            split,
        };
        wav_write(raw, &out_dir.join(&entry.raw), WavFormat::Float32)?;
        wav_write(&fx, &out_dir.join(&entry.fx), WavFormat::Float32)?;
        manifest.push_str(&format!(
            "{}\t{}\t{}\n",
            entry.raw.display(),
            entry.fx.display(),
            split
        ));
        entries.push(entry);
    }
    let mpath = out_dir.join(MANIFEST_NAME);
    std::fs::write(&mpath, manifest).map_err(|e| Error::io(&mpath, e))?;
    Ok(entries)
}

/// Reads a manifest; returned paths are resolved against its directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, line)| {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::invalid(format!(
                    "{}:{}: expected raw<TAB>fx<TAB>split",
                    path.display(),
                    n + 1
                )));
            }
            Ok(ManifestEntry {
                raw: base.join(cols[0]),
                fx: base.join(cols[1]),
                split: cols[2].trim().parse()?,
            })
        })
        .collect()
}

/// Loads the (raw, effected) clip pairs of one split.
pub fn load_pairs(entries: &[ManifestEntry], split: Split) -> Result<Vec<(AudioClip, AudioClip)>> {
    entries
        .iter()
        .filter(|e| e.split == split)
        .map(|e| {
            let raw = wav_read(&e.raw)?;
            let fx = wav_read(&e.fx)?;
            if raw.len() != fx.len() {
                return Err(Error::shape(format!(
                    "{} and {} differ in length",
                    e.raw.display(),
                    e.fx.display()
                )));
            }
            Ok((raw, fx))
        })
        .collect()
}
