//! RIFF/WAVE reading (PCM16, PCM24, float32; first channel) and writing
//! (PCM16, float32; mono).

use std::path::Path;

use super::AudioClip;
use crate::error::{Error, Result, WavError};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WavFormat {
    Pcm16,
    Float32,
}

impl std::str::FromStr for WavFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcm16" => Ok(Self::Pcm16),
            "float32" => Ok(Self::Float32),
            _ => Err(Error::invalid(format!(
                "unknown wav format {s:?} (pcm16 | float32)"
            ))),
        }
    }
}

struct Fmt {
    tag: u16,
    channels: u16,
    rate: u32,
    block_align: u16,
    bits: u16,
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<Fmt, WavError> {
    if body.len() < 16 {
        return Err(WavError::MalformedHeader(format!(
            "fmt chunk of {} bytes",
            body.len()
        )));
    }
    let mut tag = u16_at(body, 0);
    let bits = u16_at(body, 14);
    if tag == FORMAT_EXTENSIBLE {
        // sub-format GUID starts at offset 24; its first two bytes carry the tag
        if body.len() < 26 {
            return Err(WavError::MalformedHeader(
                "short WAVE_FORMAT_EXTENSIBLE chunk".into(),
            ));
        }
        tag = u16_at(body, 24);
    }
    let f = Fmt {
        tag,
        channels: u16_at(body, 2),
        rate: u32_at(body, 4),
        block_align: u16_at(body, 12),
        bits,
    };
    if f.channels == 0 || f.rate == 0 {
        return Err(WavError::MalformedHeader(
            "zero channels or sample rate".into(),
        ));
    }
    Ok(f)
}

/// Decodes a complete WAV file image.
pub fn wav_decode(bytes: &[u8]) -> Result<AudioClip, WavError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(WavError::MalformedHeader(
            "missing RIFF/WAVE signature".into(),
        ));
    }
    let mut pos = 12;
    let mut fmt = None;
    let mut data = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let start = pos + 8;
        let avail = bytes.len() - start;
        if id == b"data" {
            if size > avail {
                return Err(WavError::Truncated {
                    expected: size,
                    found: avail,
                });
            }
            data = Some(&bytes[start..start + size]);
        } else if id == b"fmt " {
            if size > avail {
                return Err(WavError::MalformedHeader(
                    "fmt chunk runs past end of file".into(),
                ));
            }
            fmt = Some(parse_fmt(&bytes[start..start + size])?);
        }
        pos = start.saturating_add(size).saturating_add(size & 1);
    }
    let fmt = fmt.ok_or_else(|| WavError::MalformedHeader("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| WavError::MalformedHeader("no data chunk".into()))?;

    let width = match (fmt.tag, fmt.bits) {
        (FORMAT_PCM, 16) => 2,
        (FORMAT_PCM, 24) => 3,
        (FORMAT_FLOAT, 32) => 4,
        (format_tag, bits) => return Err(WavError::UnknownCodec { format_tag, bits }),
    };
    let frame = usize::from(fmt.channels) * width;
    if usize::from(fmt.block_align) != frame {
        return Err(WavError::MalformedHeader(format!(
            "block align {} != channels x sample width {frame}",
            fmt.block_align
        )));
    }
    if data.len() % frame != 0 {
        let n = data.len() / frame + 1;
        return Err(WavError::Truncated {
            expected: n * frame,
            found: data.len(),
        });
    }
    let samples = data
        .chunks_exact(frame)
        .map(|f| match width {
            2 => f32::from(i16::from_le_bytes([f[0], f[1]])) / 32768.0,
            3 => {
                let v = i32::from_le_bytes([0, f[0], f[1], f[2]]) >> 8;
                v as f32 / 8_388_608.0
            }
            _ => f32::from_le_bytes([f[0], f[1], f[2], f[3]]),
        })
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate: fmt.rate,
    })
}

/// Clamp to `[-1, 1]`, scale by 2^15, round half away from zero, saturate
/// to `i16` (so `1.0` maps to 32767).
fn to_pcm16(v: f32) -> i16 {
    let scaled = (f64::from(v.clamp(-1.0, 1.0)) * 32768.0).round();
    scaled.clamp(-32768.0, 32767.0) as i16
}

/// Encodes a mono WAV image.
pub fn wav_encode(clip: &AudioClip, format: WavFormat) -> Vec<u8> {
    let (tag, bits) = match format {
        WavFormat::Pcm16 => (FORMAT_PCM, 16u16),
        WavFormat::Float32 => (FORMAT_FLOAT, 32u16),
    };
    let width = u32::from(bits / 8);
    let data_len = clip.samples.len() as u32 * width;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * width).to_le_bytes());
    out.extend_from_slice(&(width as u16).to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &v in &clip.samples {
        match format {
            WavFormat::Pcm16 => out.extend_from_slice(&to_pcm16(v).to_le_bytes()),
            WavFormat::Float32 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

pub fn wav_read(path: &Path) -> Result<AudioClip> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(wav_decode(&bytes)?)
}

pub fn wav_write(clip: &AudioClip, path: &Path, format: WavFormat) -> Result<()> {
    clip.validate()?;
    std::fs::write(path, wav_encode(clip, format)).map_err(|e| Error::io(path, e))
}
