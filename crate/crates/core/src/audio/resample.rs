//! Rational polyphase resampling with a Kaiser-windowed sinc kernel.

use super::AudioClip;
use crate::error::{Error, Result};

const KAISER_BETA: f64 = 8.0;
const ZERO_CROSSINGS: usize = 32;
/// Cutoff as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 1.0;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

struct Polyphase {
    up: u64,
    down: u64,
    /// Taps of phase `p` cover input offsets `-half + 1 ..= half`.
    half: i64,
    table: Vec<f64>,
}

impl Polyphase {
    fn new(source: u32, target: u32) -> Self {
        let g = gcd(u64::from(source), u64::from(target));
        let up = u64::from(target) / g;
        let down = u64::from(source) / g;
        // cutoff in cycles per input sample, relative to input Nyquist
        let fc = (up as f64 / down as f64).min(1.0) * ROLLOFF;
        let half = (ZERO_CROSSINGS as f64 / fc).ceil() as i64;
        let width = 2 * half as usize;
        let i0b = bessel_i0(KAISER_BETA);
        let mut table = Vec::with_capacity(up as usize * width);
        for p in 0..up {
            let frac = p as f64 / up as f64;
            let start = table.len();
            for j in 0..width as i64 {
                // input sample `base + k` with `k = j - half + 1`; distance from the output instant
                let d = (j - half + 1) as f64 - frac;
                let r = d * fc / ZERO_CROSSINGS as f64;
                let w = if r.abs() >= 1.0 {
                    0.0
                } else {
                    bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0b
                };
                table.push(fc * sinc(fc * d) * w);
            }
            let sum: f64 = table[start..].iter().sum();
            table[start..].iter_mut().for_each(|v| *v /= sum);
        }
        Self {
            up,
            down,
            half,
            table,
        }
    }

    fn run(&self, x: &[f32], out_len: usize) -> Vec<f32> {
        let width = 2 * self.half as usize;
        (0..out_len as u64)
            .map(|n| {
                let num = n * self.down;
                let base = (num / self.up) as i64;
                let phase = (num % self.up) as usize;
                let taps = &self.table[phase * width..(phase + 1) * width];
                let first = base - self.half + 1;
                let mut acc = 0.0f64;
                for (j, &h) in taps.iter().enumerate() {
                    let i = first + j as i64;
                    if i >= 0 && (i as usize) < x.len() {
                        acc += h * f64::from(x[i as usize]);
                    }
                }
                acc as f32
            })
            .collect()
    }
}

/// Resamples to `target_rate`; output length is `round(len · target / source)`.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if clip.sample_rate == 0 || target_rate == 0 {
        return Err(Error::invalid("sample rates must be positive"));
    }
    if clip.sample_rate == target_rate {
        return Ok(clip.clone());
    }
    let out_len =
        (clip.len() as f64 * f64::from(target_rate) / f64::from(clip.sample_rate)).round() as usize;
    let pp = Polyphase::new(clip.sample_rate, target_rate);
    Ok(AudioClip {
        samples: pp.run(&clip.samples, out_len),
        sample_rate: target_rate,
    })
}
