//! Reference effects used as training targets.

use std::f64::consts::PI;

use super::AudioClip;
use crate::error::{Error, Result};

pub fn db_to_gain(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Waveshape {
    /// `tanh(g·x) / tanh(g)`.
    TanhDrive,
    /// `clamp(g·x, -1, 1)`.
    HardClip,
}

pub fn waveshape_sample(x: f64, kind: Waveshape, gain: f64) -> f64 {
    match kind {
        Waveshape::TanhDrive => (gain * x).tanh() / gain.tanh(),
        Waveshape::HardClip => (gain * x).clamp(-1.0, 1.0),
    }
}

pub fn waveshaper(clip: &AudioClip, kind: Waveshape, gain_db: f64) -> AudioClip {
    let g = db_to_gain(gain_db);
    clip.map(|x| waveshape_sample(f64::from(x), kind, g) as f32)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShelfKind {
    Low,
    High,
}

/// Normalized biquad (`a0 = 1`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiquadCoeffs {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl BiquadCoeffs {
    /// Audio-EQ-cookbook shelf with slope `S = 1`.
    pub fn shelf(kind: ShelfKind, fc: f64, gain_db: f64, rate: u32) -> Result<Self> {
        let fs = f64::from(rate);
        if !(fc > 0.0 && fc < fs / 2.0) {
            return Err(Error::invalid(format!(
                "shelf cutoff {fc} Hz outside (0, {}) Hz",
                fs / 2.0
            )));
        }
        let a = 10f64.powf(gain_db / 40.0);
        let w0 = 2.0 * PI * fc / fs;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / 2.0 * 2f64.sqrt();
        let k = 2.0 * a.sqrt() * alpha;
        let (b0, b1, b2, a0, a1, a2) = match kind {
            ShelfKind::Low => (
                a * ((a + 1.0) - (a - 1.0) * cos + k),
                2.0 * a * ((a - 1.0) - (a + 1.0) * cos),
                a * ((a + 1.0) - (a - 1.0) * cos - k),
                (a + 1.0) + (a - 1.0) * cos + k,
                -2.0 * ((a - 1.0) + (a + 1.0) * cos),
                (a + 1.0) + (a - 1.0) * cos - k,
            ),
            ShelfKind::High => (
                a * ((a + 1.0) + (a - 1.0) * cos + k),
                -2.0 * a * ((a - 1.0) + (a + 1.0) * cos),
                a * ((a + 1.0) + (a - 1.0) * cos - k),
                (a + 1.0) - (a - 1.0) * cos + k,
                2.0 * ((a - 1.0) - (a + 1.0) * cos),
                (a + 1.0) - (a - 1.0) * cos - k,
            ),
        };
        Ok(Self {
            b0: b0 / a0,
            b1: b1 / a0,
            b2: b2 / a0,
            a1: a1 / a0,
            a2: a2 / a0,
        })
    }

    /// `|H(e^{jω})|` at frequency `f`.
    pub fn magnitude(&self, f: f64, rate: u32) -> f64 {
        let w = 2.0 * PI * f / f64::from(rate);
        let (c1, s1) = (w.cos(), -w.sin());
        let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (
            self.b0 + self.b1 * c1 + self.b2 * c2,
            self.b1 * s1 + self.b2 * s2,
        );
        let den = (
            1.0 + self.a1 * c1 + self.a2 * c2,
            self.a1 * s1 + self.a2 * s2,
        );
        (num.0.hypot(num.1)) / (den.0.hypot(den.1))
    }

    /// Both poles strictly inside the unit circle.
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }

    /// Direct form II transposed, zero initial state.
    pub fn process(&self, x: &[f32]) -> Vec<f32> {
        let (mut s1, mut s2) = (0.0f64, 0.0f64);
        x.iter()
            .map(|&v| {
                let v = f64::from(v);
                let y = self.b0 * v + s1;
                s1 = self.b1 * v - self.a1 * y + s2;
                s2 = self.b2 * v - self.a2 * y;
                y as f32
            })
            .collect()
    }
}

pub fn biquad_shelf(clip: &AudioClip, kind: ShelfKind, fc: f64, gain_db: f64) -> Result<AudioClip> {
    let c = BiquadCoeffs::shelf(kind, fc, gain_db, clip.sample_rate)?;
    Ok(AudioClip {
        samples: c.process(&clip.samples),
        sample_rate: clip.sample_rate,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FxStage {
    LowShelf,
    HighShelf,
    Overdrive,
}

pub const FX_CUTOFF_HZ: f64 = 500.0;
pub const FX_LOW_GAIN_DB: f64 = 20.0;
pub const FX_HIGH_GAIN_DB: f64 = -20.0;
pub const FX_DRIVE_DB: f64 = 30.0;

/// Stage order of FxChain setting 1, 2 or 3 (overdrive last, second, first).
pub fn fxchain_order(setting: u8) -> Result<[FxStage; 3]> {
    use FxStage::*;
    match setting {
        1 => Ok([LowShelf, HighShelf, Overdrive]),
        2 => Ok([LowShelf, Overdrive, HighShelf]),
        3 => Ok([Overdrive, LowShelf, HighShelf]),
        _ => Err(Error::invalid(format!(
            "fxchain setting {setting} (expected 1, 2 or 3)"
        ))),
    }
}

pub fn fxchain_apply(clip: &AudioClip, order: &[FxStage]) -> Result<AudioClip> {
    let pos = |s| order.iter().position(|&o| o == s);
    let valid = order.len() == 3
        && matches!(
            (pos(FxStage::LowShelf), pos(FxStage::HighShelf), pos(FxStage::Overdrive)),
            (Some(l), Some(h), Some(_)) if l < h
        );
    if !valid {
        return Err(Error::invalid(format!(
            "fxchain order {order:?}: need each stage once with the lowshelf before the highshelf"
        )));
    }
    let mut out = clip.clone();
    for stage in order {
        out = match stage {
            FxStage::LowShelf => biquad_shelf(&out, ShelfKind::Low, FX_CUTOFF_HZ, FX_LOW_GAIN_DB)?,
            FxStage::HighShelf => {
                biquad_shelf(&out, ShelfKind::High, FX_CUTOFF_HZ, FX_HIGH_GAIN_DB)?
            }
            FxStage::Overdrive => waveshaper(&out, Waveshape::TanhDrive, FX_DRIVE_DB),
        };
    }
    Ok(out)
}
