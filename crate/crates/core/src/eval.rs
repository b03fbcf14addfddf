//! Metrics and analysis data: energy-normalized MAE, spectra, waveshaping
//! curves, and their CSV forms.

use std::fmt::Write as _;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub const FFT_SIZE: usize = 1024;
pub const STFT_HOP: usize = 256;

/// `mean|target − output| / rms(target)`.
pub fn energy_norm_mae(target: &[f32], output: &[f32]) -> Result<f64> {
    if target.len() != output.len() {
        return Err(Error::shape(format!(
            "target has {} samples, output {}",
            target.len(),
            output.len()
        )));
    }
    if target.is_empty() {
        return Err(Error::invalid("empty clips"));
    }
    let n = target.len() as f64;
    let mae = target
        .iter()
        .zip(output)
        .map(|(&t, &o)| (f64::from(t) - f64::from(o)).abs())
        .sum::<f64>()
        / n;
    let rms = (target.iter().map(|&t| f64::from(t).powi(2)).sum::<f64>() / n).sqrt();
    if rms == 0.0 {
        return Err(Error::invalid("target has zero energy"));
    }
    Ok(mae / rms)
}

fn real_fft_mag(frame: impl Iterator<Item = f64>, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = frame.map(|v| Complex::new(v, 0.0)).collect();
    let n = buf.len();
    planner.plan_fft_forward(n).process(&mut buf);
    buf[..=n / 2].iter().map(|c| c.norm()).collect()
}

/// Unwindowed DFT magnitude of a 1024-sample frame, bins `0..=512`.
pub fn frame_fft_mag(frame: &[f32]) -> Result<Vec<f64>> {
    if frame.len() != FFT_SIZE {
        return Err(Error::shape(format!(
            "FFT frame has {} samples, expected {FFT_SIZE}",
            frame.len()
        )));
    }
    Ok(real_fft_mag(
        frame.iter().map(|&v| f64::from(v)),
        &mut FftPlanner::new(),
    ))
}

/// Periodic Hann window.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Hann-windowed magnitude spectrogram (1024-sample window, hop 256),
/// one row of 513 bins per frame.
pub fn stft_mag(samples: &[f32]) -> Result<Vec<Vec<f64>>> {
    if samples.len() < FFT_SIZE {
        return Err(Error::invalid(format!(
            "spectrogram needs at least {FFT_SIZE} samples, got {}",
            samples.len()
        )));
    }
    let w = hann_periodic(FFT_SIZE);
    let mut planner = FftPlanner::new();
    let frames = (samples.len() - FFT_SIZE) / STFT_HOP + 1;
    Ok((0..frames)
        .map(|f| {
            let s = &samples[f * STFT_HOP..f * STFT_HOP + FFT_SIZE];
            real_fft_mag(
                s.iter().zip(&w).map(|(&v, &wk)| f64::from(v) * wk),
                &mut planner,
            )
        })
        .collect())
}

/// `(input[t], output[t])` pairs sorted by input amplitude, unbinned.
pub fn waveshape_curve(input: &[f32], output: &[f32]) -> Result<Vec<(f32, f32)>> {
    if input.len() != output.len() {
        return Err(Error::shape("input and output differ in length"));
    }
    let mut pts: Vec<(f32, f32)> = input.iter().copied().zip(output.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(pts)
}

/// RMS of `y − f(x)` over curve points with `x` in `[lo, hi]`.
pub fn curve_rms_deviation(
    curve: &[(f32, f32)],
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
) -> Result<f64> {
    let (sum, n) = curve
        .iter()
        .filter(|(x, _)| (lo..=hi).contains(&f64::from(*x)))
        .fold((0.0, 0usize), |(s, n), &(x, y)| {
            (s + (f64::from(y) - f(f64::from(x))).powi(2), n + 1)
        });
    if n == 0 {
        return Err(Error::invalid(format!("no curve points in [{lo}, {hi}]")));
    }
    Ok((sum / n as f64).sqrt())
}

/// Largest range of `y` within any of `bins` equal-width input bins. For a
/// single-valued curve this is bounded by the slope times the bin width.
pub fn max_vertical_spread(curve: &[(f32, f32)], bins: usize) -> f64 {
    let (Some(first), Some(last)) = (curve.first(), curve.last()) else {
        return 0.0;
    };
    let (lo, hi) = (f64::from(first.0), f64::from(last.0));
    let width = ((hi - lo) / bins.max(1) as f64).max(f64::MIN_POSITIVE);
    let mut range = vec![(f64::INFINITY, f64::NEG_INFINITY); bins.max(1)];
    for &(x, y) in curve {
        let b = (((f64::from(x) - lo) / width) as usize).min(range.len() - 1);
        range[b].0 = range[b].0.min(f64::from(y));
        range[b].1 = range[b].1.max(f64::from(y));
    }
    range
        .iter()
        .filter(|r| r.0.is_finite())
        .map(|r| r.1 - r.0)
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub per_clip: Vec<(String, f64)>,
}

impl MetricReport {
    pub fn new(per_clip: Vec<(String, f64)>) -> Result<Self> {
        if per_clip.iter().any(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::NonFinite {
                stage: "metric report".into(),
            });
        }
        Ok(Self { per_clip })
    }

    /// Mean over clips (`NaN` when empty).
    pub fn aggregate(&self) -> f64 {
        self.per_clip.iter().map(|(_, v)| v).sum::<f64>() / self.per_clip.len() as f64
    }

    /// `clip,enmae` rows followed by a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("clip,enmae\n");
        for (id, v) in &self.per_clip {
            writeln!(s, "{id},{v}").unwrap();
        }
        if !self.per_clip.is_empty() {
            writeln!(s, "mean,{}", self.aggregate()).unwrap();
        }
        s
    }
}

pub fn fft_csv(mags: &[f64]) -> String {
    let mut s = String::from("bin,mag\n");
    for (k, m) in mags.iter().enumerate() {
        writeln!(s, "{k},{m}").unwrap();
    }
    s
}

pub fn stft_csv(spec: &[Vec<f64>]) -> String {
    let mut s = String::from("frame,bin,mag\n");
    for (f, row) in spec.iter().enumerate() {
        for (k, m) in row.iter().enumerate() {
            writeln!(s, "{f},{k},{m}").unwrap();
        }
    }
    s
}

pub fn curve_csv(curve: &[(f32, f32)]) -> String {
    let mut s = String::from("x,y\n");
    for (x, y) in curve {
        writeln!(s, "{x},{y}").unwrap();
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::effects::waveshape_sample;
    use crate::audio::{biquad_shelf, AudioClip, ShelfKind, Waveshape};
    use crate::testutil::{rand_vec, rng};
    use std::f64::consts::PI;

    #[test]
    fn enmae_closed_forms() {
        let t: Vec<f32> = (0..100)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        assert_eq!(energy_norm_mae(&t, &t).unwrap(), 0.0);
        assert!((energy_norm_mae(&t, &[0.0; 100]).unwrap() - 1.0).abs() < 1e-12);
        let mut r = rng(1);
        let a: Vec<f32> = rand_vec(&mut r, 200, 1.0)
            .iter()
            .map(|&v| v as f32)
            .collect();
        let b: Vec<f32> = rand_vec(&mut r, 200, 1.0)
            .iter()
            .map(|&v| v as f32)
            .collect();
        let scaled = |v: &[f32]| v.iter().map(|x| x * 0.1).collect::<Vec<_>>();
        let e1 = energy_norm_mae(&a, &b).unwrap();
        let e2 = energy_norm_mae(&scaled(&a), &scaled(&b)).unwrap();
        assert!((e1 - e2).abs() < 1e-6);
        assert!(energy_norm_mae(&a, &b[..10]).is_err());
        assert!(energy_norm_mae(&[0.0; 4], &[1.0; 4]).is_err());
    }

    /// Direct DFT magnitude.
    fn dft_mag(x: &[f32]) -> Vec<f64> {
        let n = x.len();
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, &v) in x.iter().enumerate() {
                    let a = -2.0 * PI * (k * t) as f64 / n as f64;
                    re += f64::from(v) * a.cos();
                    im += f64::from(v) * a.sin();
                }
                re.hypot(im)
            })
            .collect()
    }

    #[test]
    fn fft_closed_forms() {
        assert!(frame_fft_mag(&[0.0; 1024])
            .unwrap()
            .iter()
            .all(|&m| m == 0.0));
        let dc = frame_fft_mag(&[1.0; 1024]).unwrap();
        assert_eq!(dc.len(), 513);
        assert!((dc[0] - 1024.0).abs() < 1e-9);
        assert!(dc[1..].iter().all(|&m| m < 1e-9));
        let cos: Vec<f32> = (0..1024)
            .map(|t| (2.0 * PI * 8.0 * t as f64 / 1024.0).cos() as f32)
            .collect();
        let m = frame_fft_mag(&cos).unwrap();
        assert!((m[8] - 512.0).abs() < 1e-3);
        assert!(m
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != 8)
            .all(|(_, &v)| v < 1e-3));
        assert!(frame_fft_mag(&[0.0; 10]).is_err());
    }

    #[test]
    fn fft_matches_direct_dft_and_parseval() {
        let mut r = rng(5);
        let x: Vec<f32> = rand_vec(&mut r, 1024, 1.0)
            .iter()
            .map(|&v| v as f32)
            .collect();
        let fast = frame_fft_mag(&x).unwrap();
        for (a, b) in fast.iter().zip(dft_mag(&x)) {
            assert!((a - b).abs() < 1e-6 * (1.0 + b));
        }
        // interior bins stand for a conjugate pair
        let spec: f64 = fast
            .iter()
            .enumerate()
            .map(|(k, m)| {
                if k == 0 || k == 512 {
                    m * m
                } else {
                    2.0 * m * m
                }
            })
            .sum();
        let energy: f64 = x.iter().map(|&v| f64::from(v).powi(2)).sum();
        assert!((spec - 1024.0 * energy).abs() < 1e-3 * spec);
    }

    #[test]
    fn stft_shapes_and_peaks() {
        let x: Vec<f32> = (0..5000)
            .map(|t| (2.0 * PI * 1000.0 * t as f64 / 16_000.0).sin() as f32)
            .collect();
        let s = stft_mag(&x).unwrap();
        assert_eq!(s.len(), (5000 - 1024) / 256 + 1);
        let argmax = |row: &Vec<f64>| {
            (0..row.len())
                .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                .unwrap()
        };
        let first = argmax(&s[0]);
        assert_eq!(first, 64);
        assert!(s.iter().all(|row| argmax(row) == first));
        assert!(stft_mag(&[0.0; 2048])
            .unwrap()
            .iter()
            .flatten()
            .all(|&m| m == 0.0));
        assert!(stft_mag(&[0.0; 100]).is_err());
    }

    #[test]
    fn curves() {
        let x: Vec<f32> = (0..2000).map(|t| (0.013 * t as f32).sin() * 0.9).collect();
        let g = 5.0;
        let y: Vec<f32> = x
            .iter()
            .map(|&v| waveshape_sample(f64::from(v), Waveshape::TanhDrive, g) as f32)
            .collect();
        let c = waveshape_curve(&x, &y).unwrap();
        assert!(c.windows(2).all(|w| w[0].0 <= w[1].0));
        for &(a, b) in &c {
            assert!((f64::from(b) - (g * f64::from(a)).tanh() / g.tanh()).abs() < 1e-6);
        }
        assert!(curve_rms_deviation(&c, |v| (g * v).tanh() / g.tanh(), -0.5, 0.5).unwrap() < 1e-6);
        let diag = waveshape_curve(&x, &x).unwrap();
        assert!(diag.iter().all(|(a, b)| a == b));
        assert!(max_vertical_spread(&diag, 5000) < 1e-3);

        let clip = AudioClip {
            samples: (0..4000)
                .map(|t| (2.0 * PI * 300.0 * t as f64 / 16_000.0).sin() as f32 * 0.5)
                .collect(),
            sample_rate: 16_000,
        };
        let f = biquad_shelf(&clip, ShelfKind::Low, 500.0, 20.0).unwrap();
        let c = waveshape_curve(&clip.samples, &f.samples).unwrap();
        assert!(max_vertical_spread(&c, 50) > 1e-3);
        assert!(waveshape_curve(&x, &x[..5]).is_err());
    }

    #[test]
    fn csv_forms() {
        let r = MetricReport::new(vec![("a".into(), 0.5), ("b".into(), 0.25)]).unwrap();
        assert_eq!(r.to_csv(), "clip,enmae\na,0.5\nb,0.25\nmean,0.375\n");
        assert!(MetricReport::new(vec![("a".into(), f64::NAN)]).is_err());
        assert_eq!(fft_csv(&[1.0, 2.5]), "bin,mag\n0,1\n1,2.5\n");
        assert_eq!(
            stft_csv(&[vec![1.0], vec![0.5]]),
            "frame,bin,mag\n0,0,1\n1,0,0.5\n"
        );
        assert_eq!(curve_csv(&[(-0.5, 0.25)]), "x,y\n-0.5,0.25\n");
    }
}
