use crate::error::{Error, Result};

/// Fixed-length frames cut from one clip.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSet {
    pub frames: Vec<Vec<f32>>,
    pub original_length: usize,
    pub frame_size: usize,
    pub hop: usize,
}

impl FrameSet {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Same layout with new frame contents (e.g. model outputs).
    pub fn with_frames(&self, frames: Vec<Vec<f32>>) -> Result<Self> {
        if frames.len() != self.frames.len() || frames.iter().any(|f| f.len() != self.frame_size) {
            return Err(Error::shape(
                "replacement frames do not match the frame set layout",
            ));
        }
        Ok(Self {
            frames,
            ..self.clone()
        })
    }
}

pub fn frame_count(length: usize, frame_size: usize, hop: usize) -> usize {
    if length < frame_size {
        0
    } else {
        (length - frame_size) / hop + 1
    }
}

/// Frame `i` covers samples `[i·hop, i·hop + frame_size)`; a tail shorter
/// than one hop is dropped.
pub fn slice_frames(samples: &[f32], frame_size: usize, hop: usize) -> Result<FrameSet> {
    if frame_size == 0 || hop == 0 || hop > frame_size {
        return Err(Error::invalid(format!(
            "need 1 <= hop <= frame_size, got hop {hop}, frame {frame_size}"
        )));
    }
    if samples.len() < frame_size {
        return Err(Error::invalid(format!(
            "clip of {} samples is shorter than one {frame_size}-sample frame",
            samples.len()
        )));
    }
    let n = frame_count(samples.len(), frame_size, hop);
    let frames = (0..n)
        .map(|i| samples[i * hop..i * hop + frame_size].to_vec())
        .collect();
    Ok(FrameSet {
        frames,
        original_length: samples.len(),
        frame_size,
        hop,
    })
}

/// Hann window sampled at half-integer points, so no coefficient is zero.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let s = (std::f64::consts::PI * (i as f64 + 0.5) / n as f64).sin();
            s * s
        })
        .collect()
}

/// Windowed overlap-add normalized by the per-sample window sum. Samples
/// covered by no frame are zero.
pub fn overlap_add(f: &FrameSet) -> Vec<f32> {
    let w = hann(f.frame_size);
    let mut acc = vec![0.0f64; f.original_length];
    let mut norm = vec![0.0f64; f.original_length];
    for (i, frame) in f.frames.iter().enumerate() {
        let off = i * f.hop;
        for (k, (&v, &wk)) in frame.iter().zip(&w).enumerate() {
            if let (Some(a), Some(n)) = (acc.get_mut(off + k), norm.get_mut(off + k)) {
                *a += wk * f64::from(v);
                *n += wk;
            }
        }
    }
    acc.iter()
        .zip(&norm)
        .map(|(&a, &n)| (if n < 1e-8 { a } else { a / n }) as f32)
        .collect()
}

/// Zero-pads `samples` so that frames of `frame_size` at `hop` cover every
/// sample. Returns the padded signal.
pub fn pad_to_cover(samples: &[f32], frame_size: usize, hop: usize) -> Vec<f32> {
    let len = if samples.len() <= frame_size {
        frame_size
    } else {
        frame_size + (samples.len() - frame_size).div_ceil(hop) * hop
    };
    let mut out = samples.to_vec();
    out.resize(len, 0.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn frame_counts() {
        assert_eq!(frame_count(32_000, 1024, 64), 485);
        let s = slice_frames(&vec![0.0; 32_000], 1024, 64).unwrap();
        assert_eq!(s.len(), 485);
        let one: Vec<f32> = (0..1024).map(|i| i as f32).collect();
        assert_eq!(slice_frames(&one, 1024, 64).unwrap().frames, vec![one]);
    }

    #[test]
    fn small_example() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let s = slice_frames(&x, 4, 2).unwrap();
        assert_eq!(
            s.frames,
            vec![vec![0.0, 1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0, 5.0]]
        );
    }

    #[test]
    fn rejects_short_clip_and_bad_hop() {
        assert!(slice_frames(&[0.0; 10], 16, 4).is_err());
        assert!(slice_frames(&[0.0; 10], 4, 0).is_err());
        assert!(slice_frames(&[0.0; 10], 4, 5).is_err());
    }

    #[test]
    fn single_frame_round_trip() {
        let x: Vec<f32> = (0..64).map(|i| (i as f32 * 0.3).sin()).collect();
        let s = slice_frames(&x, 64, 16).unwrap();
        let y = overlap_add(&s);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_frames_give_zero_clip() {
        let s = FrameSet {
            frames: vec![],
            original_length: 10,
            frame_size: 4,
            hop: 2,
        };
        assert_eq!(overlap_add(&s), vec![0.0; 10]);
    }

    #[test]
    fn padding_covers_every_sample() {
        for len in [1usize, 63, 64, 65, 100, 129] {
            let p = pad_to_cover(&vec![1.0; len], 64, 16);
            assert!(p.len() >= len);
            assert_eq!((p.len() - 64) % 16, 0);
            assert!(p.len() - len < 64);
        }
    }

    proptest! {
        #[test]
        fn identity_reconstructs_interior(seed in 0u64..1000, extra in 0usize..300) {
            use rand::{Rng, SeedableRng};
            let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (frame, hop) = (256, 64);
            let x: Vec<f32> = (0..3 * frame + extra).map(|_| r.random_range(-1.0..1.0)).collect();
            let y = overlap_add(&slice_frames(&x, frame, hop).unwrap());
            let covered = (frame_count(x.len(), frame, hop) - 1) * hop + frame;
            for t in frame..covered.saturating_sub(frame) {
                prop_assert!((x[t] - y[t]).abs() < 1e-6);
            }
        }
    }
}
