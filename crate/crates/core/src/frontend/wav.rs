//! Minimal RIFF/WAVE reader and PCM16 writer.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const TARGET_RATE: u32 = 16_000;

/// A mono waveform with its identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub speaker_id: String,
    pub utterance_id: String,
    pub sample_rate: u32,
    pub samples: Vec<f64>,
}

impl Utterance {
    pub fn new(speaker_id: impl Into<String>, utterance_id: impl Into<String>, sample_rate: u32, samples: Vec<f64>) -> Result<Self> {
        let utt = Self {
            speaker_id: speaker_id.into(),
            utterance_id: utterance_id.into(),
            sample_rate,
            samples,
        };
        utt.validate()?;
        Ok(utt)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::Input(format!("utterance {} is empty", self.utterance_id)));
        }
        if let Some(i) = self.samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "utterance {} has a non-finite sample at index {i}",
                self.utterance_id
            )));
        }
        Ok(())
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Codec {
    Pcm16,
    Float32,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Parse {
                offset: self.pos,
                msg: format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Decodes a RIFF/WAVE byte buffer into mono samples in `[-1, 1]` at 16 kHz.
///
/// PCM16 and IEEE float32 are supported; multi-channel audio is averaged and
/// other sample rates are linearly resampled.
pub fn decode_wav(bytes: &[u8]) -> Result<(u32, Vec<f64>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "RIFF tag")? != b"RIFF" {
        return Err(Error::Parse { offset: 0, msg: "missing RIFF tag".into() });
    }
    r.u32("RIFF size")?;
    if r.take(4, "WAVE tag")? != b"WAVE" {
        return Err(Error::Parse { offset: 8, msg: "missing WAVE tag".into() });
    }

    let mut format: Option<(Codec, u16, u32)> = None;
    loop {
        let chunk_at = r.pos;
        let id = r.take(4, "chunk id")?;
        let size = r.u32("chunk size")? as usize;
        match id {
            b"fmt " => {
                let body_at = r.pos;
                let mut tag = r.u16("format tag")?;
                let channels = r.u16("channel count")?;
                let rate = r.u32("sample rate")?;
                r.u32("byte rate")?;
                r.u16("block align")?;
                let bits = r.u16("bits per sample")?;
                if tag == 0xFFFE {
                    // WAVE_FORMAT_EXTENSIBLE: the real tag opens the sub-format GUID.
                    if size < 40 {
                        return Err(Error::Parse { offset: body_at, msg: "short extensible fmt chunk".into() });
                    }
                    r.take(8, "extensible header")?;
                    tag = r.u16("sub-format")?;
                }
                let codec = match (tag, bits) {
                    (1, 16) => Codec::Pcm16,
                    (3, 32) => Codec::Float32,
                    _ => {
                        return Err(Error::Parse {
                            offset: body_at,
                            msg: format!("unsupported codec: format tag {tag}, {bits} bits"),
                        })
                    }
                };
                if channels == 0 || rate == 0 {
                    return Err(Error::Parse { offset: body_at, msg: "zero channels or sample rate".into() });
                }
                r.pos = body_at;
                r.take(size, "fmt chunk")?;
                format = Some((codec, channels, rate));
            }
            b"data" => {
                let (codec, channels, rate) = format.ok_or(Error::Parse {
                    offset: chunk_at,
                    msg: "data chunk before fmt chunk".into(),
                })?;
                let body = r.take(size, "data chunk")?;
                let width = match codec {
                    Codec::Pcm16 => 2,
                    Codec::Float32 => 4,
                };
                let frame = width * channels as usize;
                if body.len() % frame != 0 {
                    return Err(Error::Parse {
                        offset: chunk_at + 8,
                        msg: format!("data size {} is not a multiple of the {frame}-byte frame", body.len()),
                    });
                }
                let mono: Vec<f64> = body
                    .chunks_exact(frame)
                    .map(|f| {
                        let sum: f64 = f
                            .chunks_exact(width)
                            .map(|s| match codec {
                                Codec::Pcm16 => i16::from_le_bytes([s[0], s[1]]) as f64 / 32768.0,
                                Codec::Float32 => f32::from_le_bytes([s[0], s[1], s[2], s[3]]) as f64,
                            })
                            .sum();
                        sum / channels as f64
                    })
                    .collect();
                if let Some(i) = mono.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Parse {
                        offset: chunk_at + 8 + i * frame,
                        msg: "non-finite sample".into(),
                    });
                }
                let samples = if rate == TARGET_RATE { mono } else { resample_linear(&mono, rate, TARGET_RATE) };
                return Ok((TARGET_RATE, samples));
            }
            _ => {
                r.take(size + size % 2, "chunk body")?;
            }
        }
    }
}

/// Linear-interpolation resampling.
pub fn resample_linear(x: &[f64], from: u32, to: u32) -> Vec<f64> {
    if x.is_empty() || from == to {
        return x.to_vec();
    }
    let n_out = ((x.len() as u64 * to as u64) / from as u64).max(1) as usize;
    let ratio = from as f64 / to as f64;
    (0..n_out)
        .map(|i| {
            let pos = i as f64 * ratio;
            let i0 = pos.floor() as usize;
            let frac = pos - i0 as f64;
            let a = x[i0.min(x.len() - 1)];
            let b = x[(i0 + 1).min(x.len() - 1)];
            a + (b - a) * frac
        })
        .collect()
}

/// Reads a WAV file; ids are supplied by the caller (manifest).
pub fn wav_read(path: &Path, speaker_id: &str, utterance_id: &str) -> Result<Utterance> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (rate, samples) = decode_wav(&bytes)?;
    if samples.is_empty() {
        return Err(Error::Input(format!("{} holds no samples", path.display())));
    }
    Utterance::new(speaker_id, utterance_id, rate, samples)
}

/// Encodes mono samples as 16-bit PCM, clipping to `[-1, 1)`.
pub fn encode_wav_pcm16(samples: &[f64], sample_rate: u32) -> Vec<u8> {
    let data_len = samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn wav_write(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    fs::write(path, encode_wav_pcm16(samples, sample_rate)).map_err(|e| Error::io(path, e))
}
