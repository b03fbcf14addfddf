use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::AudioClip;
use crate::error::{Error, Result};

const HARMONICS: usize = 8;
const ATTACK_SECONDS: f64 = 0.005;
const PEAK: f64 = 0.5;

/// Plucked-string stand-in: harmonics `k = 1..=8` at amplitude `1/k`, each
/// with its own exponential decay, a raised-cosine attack and peak 0.5.
/// Harmonics at or above Nyquist are left out.
pub fn synth_note(f0: f64, duration: f64, rate: u32, seed: u64) -> Result<AudioClip> {
    let nyquist = f64::from(rate) / 2.0;
    if !(f0 > 0.0 && f0 < nyquist) {
        return Err(Error::invalid(format!(
            "f0 {f0} Hz outside (0, {nyquist}) Hz"
        )));
    }
    if !(duration > 0.0 && duration.is_finite()) || rate == 0 {
        return Err(Error::invalid("duration and rate must be positive"));
    }
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let taus: Vec<f64> = (0..HARMONICS).map(|_| r.random_range(0.3..=1.5)).collect();
    let n = (duration * f64::from(rate)).round() as usize;
    let attack = ATTACK_SECONDS * f64::from(rate);
    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / f64::from(rate);
            let mut v = 0.0;
            for (k, tau) in (1..=HARMONICS).zip(&taus) {
                let f = f0 * k as f64;
                if f >= nyquist {
                    break;
                }
                v += (2.0 * std::f64::consts::PI * f * t).sin() * (-t / tau).exp() / k as f64;
            }
            let env = if (i as f64) < attack {
                0.5 - 0.5 * (std::f64::consts::PI * i as f64 / attack).cos()
            } else {
                1.0
            };
            v * env
        })
        .collect();
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v *= PEAK / peak);
    }
    AudioClip::new(x.into_iter().map(|v| v as f32).collect(), rate)
}
