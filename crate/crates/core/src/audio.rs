//! Audio buffers, RIFF/WAVE input/output and resampling to the canonical rate.

use std::fs;
use std::path::Path;

use thiserror::Error;

/// Every downstream stage (VAD, chunking, digests) operates at this rate.
pub const CANONICAL_RATE_HZ: u32 = 16_000;

const PCM16_SCALE: f32 = 32768.0;

const FORMAT_PCM: u16 = 0x0001;
const FORMAT_IEEE_FLOAT: u16 = 0x0003;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("UnsupportedEncoding: {0}")]
    UnsupportedEncoding(String),
    #[error("MalformedContainer: {0}")]
    MalformedContainer(String),
    #[error("EmptyAudio: {0}")]
    EmptyAudio(String),
    #[error("IoFailure: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("InvalidSampleRate: sample rate must be positive")]
    InvalidSampleRate,
    #[error("NonFiniteSample: sample {0} is not finite")]
    NonFiniteSample(usize),
}

/// Mono sample stream. Samples are finite and lie in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate_hz: u32,
}

impl AudioBuffer {
    /// Builds a buffer, clamping amplitudes into `[-1, 1]`.
    pub fn new(mut samples: Vec<f32>, sample_rate_hz: u32) -> Result<Self, AudioError> {
        if sample_rate_hz == 0 {
            return Err(AudioError::InvalidSampleRate);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFiniteSample(i));
        }
        for s in &mut samples {
            *s = s.clamp(-1.0, 1.0);
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Copies out `[start_s, end_s)`, clipped to the buffer extent.
    pub fn slice_seconds(&self, start_s: f64, end_s: f64) -> AudioBuffer {
        let rate = self.sample_rate_hz as f64;
        let a = ((start_s * rate).round().max(0.0) as usize).min(self.samples.len());
        let b = ((end_s * rate).round().max(0.0) as usize).clamp(a, self.samples.len());
        AudioBuffer {
            samples: self.samples[a..b].to_vec(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// Samples quantized to PCM16, the representation written to disk and hashed.
    pub fn to_pcm16(&self) -> Vec<i16> {
        self.samples.iter().map(|&s| quantize(s)).collect()
    }
}

fn quantize(s: f32) -> i16 {
    (s * PCM16_SCALE).round().clamp(-32768.0, 32767.0) as i16
}

/// Per-sample arithmetic mean over interleaved channels.
pub fn downmix(interleaved: &[f32], channels: usize) -> Vec<f32> {
    if channels <= 1 {
        return interleaved.to_vec();
    }
    let inv = 1.0 / channels as f32;
    interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f32>() * inv)
        .collect()
}

struct FmtChunk {
    format_tag: u16,
    channels: u16,
    sample_rate: u32,
    bits_per_sample: u16,
}

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
    let bytes = fs::read(path.as_ref())?;
    decode_wav(&bytes)
}

/// Parses an in-memory RIFF/WAVE file (PCM16 or float32, mono or stereo).
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer, AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::MalformedContainer(
            "missing RIFF/WAVE header".into(),
        ));
    }
    let mut pos = 12;
    let mut fmt: Option<FmtChunk> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                AudioError::MalformedContainer(format!(
                    "chunk '{}' declares {size} bytes past end of file",
                    String::from_utf8_lossy(id)
                ))
            })?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(AudioError::MalformedContainer("fmt chunk too short".into()));
                }
                fmt = Some(FmtChunk {
                    format_tag: read_u16(body, 0),
                    channels: read_u16(body, 2),
                    sample_rate: read_u32(body, 4),
                    bits_per_sample: read_u16(body, 14),
                });
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }
    let fmt = fmt.ok_or_else(|| AudioError::MalformedContainer("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| AudioError::MalformedContainer("missing data chunk".into()))?;

    let channels = fmt.channels as usize;
    if !(1..=2).contains(&channels) {
        return Err(AudioError::UnsupportedEncoding(format!(
            "{channels} channels"
        )));
    }
    if fmt.sample_rate == 0 {
        return Err(AudioError::MalformedContainer("zero sample rate".into()));
    }
    let interleaved: Vec<f32> = match (fmt.format_tag, fmt.bits_per_sample) {
        (FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / PCM16_SCALE)
            .collect(),
        (FORMAT_IEEE_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .map(|s| if s.is_finite() { s } else { 0.0 })
            .collect(),
        (FORMAT_EXTENSIBLE, _) => {
            return Err(AudioError::UnsupportedEncoding(
                "WAVE_FORMAT_EXTENSIBLE".into(),
            ))
        }
        (tag, bits) => {
            return Err(AudioError::UnsupportedEncoding(format!(
                "format tag {tag:#06x} with {bits} bits per sample"
            )))
        }
    };
    let mono = downmix(&interleaved, channels);
    if mono.is_empty() {
        return Err(AudioError::EmptyAudio("data chunk holds no samples".into()));
    }
    AudioBuffer::new(mono, fmt.sample_rate)
}

/// Serializes as mono PCM16 at the buffer's own rate.
pub fn encode_wav(buf: &AudioBuffer) -> Vec<u8> {
    let data_len = (buf.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&buf.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(buf.sample_rate_hz * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in buf.to_pcm16() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

pub fn write_wav(buf: &AudioBuffer, path: impl AsRef<Path>) -> Result<(), AudioError> {
    fs::write(path.as_ref(), encode_wav(buf))?;
    Ok(())
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64).powi(2);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Kaiser-windowed sinc low-pass, stored as one tap vector per output phase.
///
/// The input/output ratio is reduced to `up/down`; output sample `n` sits at
/// input position `n * down / up`, so there are exactly `up` distinct
/// fractional offsets. Each phase holds `taps_per_phase * max(1, in/out)` taps
/// so the window spans the same duration at the lower of the two rates.
#[derive(Debug, Clone)]
pub struct SincResampler {
    in_rate: u32,
    out_rate: u32,
    up: u64,
    down: u64,
    half_width: usize,
    phases: Vec<Vec<f64>>,
}

impl SincResampler {
    pub const TAPS_PER_PHASE: usize = 32;
    pub const CUTOFF: f64 = 0.45;
    pub const KAISER_BETA: f64 = 8.0;

    pub fn new(in_rate: u32, out_rate: u32) -> Self {
        assert!(in_rate > 0 && out_rate > 0, "sample rates must be positive");
        let g = gcd(in_rate as u64, out_rate as u64);
        let up = out_rate as u64 / g;
        let down = in_rate as u64 / g;
        let ratio = in_rate as f64 / out_rate as f64;
        let stretch = ratio.max(1.0);
        let half_width = ((Self::TAPS_PER_PHASE as f64 / 2.0) * stretch).ceil() as usize;
        // cutoff in cycles per input sample
        let fc = Self::CUTOFF * in_rate.min(out_rate) as f64 / in_rate as f64;
        let norm_i0 = bessel_i0(Self::KAISER_BETA);
        let phases = (0..up)
            .map(|p| {
                let frac = p as f64 / up as f64;
                let mut taps: Vec<f64> = (0..2 * half_width)
                    .map(|j| {
                        // tap j multiplies input sample floor(pos) - half_width + 1 + j
                        let offset = (j as f64 - half_width as f64 + 1.0) - frac;
                        let r = offset / half_width as f64;
                        if r.abs() > 1.0 {
                            return 0.0;
                        }
                        let w = bessel_i0(Self::KAISER_BETA * (1.0 - r * r).sqrt()) / norm_i0;
                        2.0 * fc * sinc(2.0 * fc * offset) * w
                    })
                    .collect();
                let dc: f64 = taps.iter().sum();
                if dc.abs() > 0.0 {
                    taps.iter_mut().for_each(|t| *t /= dc);
                }
                taps
            })
            .collect();
        Self {
            in_rate,
            out_rate,
            up,
            down,
            half_width,
            phases,
        }
    }

    /// Output length for `in_len` input samples, rounded to nearest.
    pub fn output_len(&self, in_len: usize) -> usize {
        let num = in_len as u128 * self.out_rate as u128;
        let den = self.in_rate as u128;
        ((2 * num + den) / (2 * den)) as usize
    }

    pub fn process(&self, input: &[f32]) -> Vec<f32> {
        let n_out = self.output_len(input.len());
        let len = input.len() as i64;
        (0..n_out as u64)
            .map(|n| {
                let num = n * self.down;
                let base = (num / self.up) as i64;
                let phase = &self.phases[(num % self.up) as usize];
                let first = base - self.half_width as i64 + 1;
                let acc: f64 = phase
                    .iter()
                    .enumerate()
                    .filter_map(|(j, &h)| {
                        let k = first + j as i64;
                        (0..len).contains(&k).then(|| h * input[k as usize] as f64)
                    })
                    .sum();
                acc.clamp(-1.0, 1.0) as f32
            })
            .collect()
    }
}

/// Converts to 16 kHz. Buffers already at 16 kHz are returned unchanged.
pub fn resample_to_16k(buf: &AudioBuffer) -> AudioBuffer {
    resample(buf, CANONICAL_RATE_HZ)
}

pub fn resample(buf: &AudioBuffer, out_rate: u32) -> AudioBuffer {
    if buf.sample_rate_hz == out_rate {
        return buf.clone();
    }
    let resampler = SincResampler::new(buf.sample_rate_hz, out_rate);
    AudioBuffer {
        samples: resampler.process(&buf.samples),
        sample_rate_hz: out_rate,
    }
}
