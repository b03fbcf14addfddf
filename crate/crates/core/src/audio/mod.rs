//! Audio I/O, resampling, synthetic notes and reference effects.

pub mod dataset;
pub mod effects;
pub mod resample;
pub mod synth;
pub mod wav;

pub use dataset::{
    dataset_pair, load_pairs, read_manifest, DatasetSpec, EffectKind, ManifestEntry, NoteSource,
    Split,
};
pub use effects::{
    biquad_shelf, fxchain_apply, waveshaper, BiquadCoeffs, FxStage, ShelfKind, Waveshape,
};
pub use resample::resample;
pub use synth::synth_note;
pub use wav::{wav_read, wav_write, WavFormat};

use crate::error::{Error, Result};

/// Mono samples at a sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        let c = Self {
            samples,
            sample_rate,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::invalid("sample rate must be > 0"));
        }
        if !crate::tensor::all_finite(&self.samples) {
            return Err(Error::NonFinite {
                stage: "audio clip".into(),
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            samples: self.samples.iter().map(|&v| f(v)).collect(),
            sample_rate: self.sample_rate,
        }
    }
}
