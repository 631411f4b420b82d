//! Frame-level speech probabilities, hysteresis segmentation and training-chunk
//! extraction.
//!
//! Frame `i` covers `[i * hop_ms, i * hop_ms + frame_ms)` of the source audio.
//! Segment and chunk boundaries are kept in integer milliseconds so that the
//! duration limits are checked exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::audio::AudioBuffer;

#[derive(Debug, Error)]
pub enum VadError {
    #[error("BufferTooShort: {samples} samples is shorter than one {frame_ms} ms frame")]
    BufferTooShort { samples: usize, frame_ms: u32 },
    #[error("MalformedFile: line {line}: {reason}")]
    MalformedFile { line: usize, reason: String },
    #[error("OutOfRangeProbability: line {line}: {value}")]
    OutOfRangeProbability { line: usize, value: f64 },
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("IoFailure: {0}")]
    Io(#[from] std::io::Error),
}

/// Analysis window geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameConfig {
    pub frame_ms: u32,
    pub hop_ms: u32,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            frame_ms: 30,
            hop_ms: 10,
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<(), VadError> {
        if self.hop_ms == 0 || self.frame_ms < self.hop_ms {
            return Err(VadError::InvalidConfig(format!(
                "need frame_ms >= hop_ms > 0, got frame_ms={} hop_ms={}",
                self.frame_ms, self.hop_ms
            )));
        }
        Ok(())
    }

    /// Number of whole frames that fit in `duration_ms`.
    pub fn frame_count(&self, duration_ms: u64) -> usize {
        if duration_ms < self.frame_ms as u64 {
            0
        } else {
            ((duration_ms - self.frame_ms as u64) / self.hop_ms as u64 + 1) as usize
        }
    }
}

/// Per-frame speech probabilities with their frame geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameProbabilities {
    probs: Vec<f64>,
    frame: FrameConfig,
}

impl FrameProbabilities {
    pub fn new(probs: Vec<f64>, frame: FrameConfig) -> Result<Self, VadError> {
        frame.validate()?;
        if let Some((i, &p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(VadError::OutOfRangeProbability {
                line: i + 2,
                value: p,
            });
        }
        Ok(Self { probs, frame })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn frame(&self) -> FrameConfig {
        self.frame
    }

    pub fn frame_ms(&self) -> u32 {
        self.frame.frame_ms
    }

    pub fn hop_ms(&self) -> u32 {
        self.frame.hop_ms
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    fn frame_start_ms(&self, i: usize) -> u64 {
        i as u64 * self.frame.hop_ms as u64
    }

    fn frame_end_ms(&self, i: usize) -> u64 {
        self.frame_start_ms(i) + self.frame.frame_ms as u64
    }

    /// Text form: `#frame_ms=<int> hop_ms=<int>` header, one probability per line.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "#frame_ms={} hop_ms={}\n",
            self.frame.frame_ms, self.frame.hop_ms
        );
        for p in &self.probs {
            let _ = writeln!(out, "{p}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, VadError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(VadError::MalformedFile {
            line: 1,
            reason: "empty file".into(),
        })?;
        let frame = parse_header(header)?;
        let mut probs = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let value: f64 = line.parse().map_err(|_| VadError::MalformedFile {
                line: line_no,
                reason: format!("not a number: {line:?}"),
            })?;
            if !(0.0..=1.0).contains(&value) {
                return Err(VadError::OutOfRangeProbability {
                    line: line_no,
                    value,
                });
            }
            probs.push(value);
        }
        frame.validate().map_err(|e| VadError::MalformedFile {
            line: 1,
            reason: e.to_string(),
        })?;
        Ok(Self { probs, frame })
    }
}

fn parse_header(header: &str) -> Result<FrameConfig, VadError> {
    let malformed = |reason: &str| VadError::MalformedFile {
        line: 1,
        reason: reason.to_string(),
    };
    let body = header
        .strip_prefix('#')
        .ok_or_else(|| malformed("header must start with '#'"))?;
    let mut frame_ms = None;
    let mut hop_ms = None;
    for field in body.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| malformed("expected key=value"))?;
        let value: u32 = value
            .parse()
            .map_err(|_| malformed("geometry must be an integer"))?;
        match key {
            "frame_ms" => frame_ms = Some(value),
            "hop_ms" => hop_ms = Some(value),
            _ => return Err(malformed(&format!("unknown header key {key:?}"))),
        }
    }
    Ok(FrameConfig {
        frame_ms: frame_ms.ok_or_else(|| malformed("missing frame_ms"))?,
        hop_ms: hop_ms.ok_or_else(|| malformed("missing hop_ms"))?,
    })
}

pub fn import_speech_probs(path: impl AsRef<Path>) -> Result<FrameProbabilities, VadError> {
    FrameProbabilities::parse(&fs::read_to_string(path)?)
}

pub fn export_speech_probs(
    fp: &FrameProbabilities,
    path: impl AsRef<Path>,
) -> Result<(), VadError> {
    fs::write(path, fp.to_text())?;
    Ok(())
}

/// Parameters of the energy-based probability estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyVadConfig {
    pub frame: FrameConfig,
    /// Percentile of frame log-energies taken as the adaptive noise floor.
    pub floor_percentile: f64,
    /// The floor is never placed above this level (dBFS), so stationary loud
    /// signals still read as speech.
    pub max_floor_db: f64,
    /// Logistic midpoint, in dB above the noise floor.
    pub margin_db: f64,
    /// Logistic slope, in dB per unit of log-odds.
    pub slope_db: f64,
}

impl Default for EnergyVadConfig {
    fn default() -> Self {
        Self {
            frame: FrameConfig::default(),
            floor_percentile: 20.0,
            max_floor_db: -45.0,
            margin_db: 10.0,
            slope_db: 2.0,
        }
    }
}

fn percentile(sorted: &[f64], pct: f64) -> f64 {
    let rank = (pct / 100.0 * (sorted.len() - 1) as f64).clamp(0.0, (sorted.len() - 1) as f64);
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// Per-frame log-energy mapped through a logistic centred above an adaptive
/// noise floor.
pub fn compute_speech_probs(
    buf: &AudioBuffer,
    cfg: &EnergyVadConfig,
) -> Result<FrameProbabilities, VadError> {
    cfg.frame.validate()?;
    let rate = buf.sample_rate_hz() as u64;
    let frame_len = (rate * cfg.frame.frame_ms as u64 / 1000) as usize;
    let hop_len = (rate * cfg.frame.hop_ms as u64 / 1000).max(1) as usize;
    if frame_len == 0 || buf.len() < frame_len {
        return Err(VadError::BufferTooShort {
            samples: buf.len(),
            frame_ms: cfg.frame.frame_ms,
        });
    }
    let n_frames = (buf.len() - frame_len) / hop_len + 1;
    let samples = buf.samples();
    let energies_db: Vec<f64> = (0..n_frames)
        .map(|i| {
            let frame = &samples[i * hop_len..i * hop_len + frame_len];
            let power = frame.iter().map(|&s| (s as f64).powi(2)).sum::<f64>() / frame_len as f64;
            10.0 * (power + 1e-10).log10()
        })
        .collect();
    let mut sorted = energies_db.clone();
    sorted.sort_by(f64::total_cmp);
    let floor = percentile(&sorted, cfg.floor_percentile).min(cfg.max_floor_db);
    let center = floor + cfg.margin_db;
    let probs = energies_db
        .iter()
        .map(|&e| 1.0 / (1.0 + (-(e - center) / cfg.slope_db).exp()))
        .collect();
    FrameProbabilities::new(probs, cfg.frame)
}

/// Segmentation and chunking thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkingConfig {
    pub min_chunk_s: f64,
    pub max_chunk_s: f64,
    /// A chunk is kept only if its mean frame probability reaches this value.
    pub speech_prob_threshold: f64,
    pub merge_gap_s: f64,
    pub onset: f64,
    pub offset: f64,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            min_chunk_s: 3.0,
            max_chunk_s: 32.0,
            speech_prob_threshold: 0.70,
            merge_gap_s: 0.30,
            onset: 0.60,
            offset: 0.40,
        }
    }
}

impl ChunkingConfig {
    pub fn validate(&self) -> Result<(), VadError> {
        let bad = |msg: &str| Err(VadError::InvalidConfig(msg.to_string()));
        if !(self.min_chunk_s > 0.0 && self.min_chunk_s < self.max_chunk_s) {
            return bad("need 0 < min_chunk_s < max_chunk_s");
        }
        if !(self.speech_prob_threshold > 0.0 && self.speech_prob_threshold < 1.0) {
            return bad("speech_prob_threshold must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.onset) || !(0.0..=1.0).contains(&self.offset) {
            return bad("onset/offset must lie in [0, 1]");
        }
        if self.offset > self.onset {
            return bad("offset threshold must not exceed onset threshold");
        }
        if self.merge_gap_s.is_nan() || self.merge_gap_s < 0.0 {
            return bad("merge_gap_s must be non-negative");
        }
        Ok(())
    }

    fn min_ms(&self) -> u64 {
        (self.min_chunk_s * 1000.0).round() as u64
    }

    fn max_ms(&self) -> u64 {
        (self.max_chunk_s * 1000.0).round() as u64
    }
}

/// A detected speech region on the hop grid, in milliseconds from the start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start_ms: u64,
    pub end_ms: u64,
}

impl Segment {
    pub fn start_s(&self) -> f64 {
        self.start_ms as f64 / 1000.0
    }

    pub fn end_s(&self) -> f64 {
        self.end_ms as f64 / 1000.0
    }

    pub fn duration_s(&self) -> f64 {
        (self.end_ms - self.start_ms) as f64 / 1000.0
    }
}

/// Hysteresis thresholding followed by gap merging. Output is sorted and
/// non-overlapping.
pub fn detect_segments(fp: &FrameProbabilities, cfg: &ChunkingConfig) -> Vec<Segment> {
    let mut raw: Vec<(usize, usize)> = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    for (i, &p) in fp.probs.iter().enumerate() {
        open = match open {
            None if p >= cfg.onset => Some((i, i)),
            None => None,
            Some((first, _)) if p >= cfg.offset => Some((first, i)),
            Some(span) => {
                raw.push(span);
                None
            }
        };
    }
    raw.extend(open);

    let merge_gap_ms = (cfg.merge_gap_s * 1000.0).round() as i64;
    let mut merged: Vec<Segment> = Vec::new();
    for (first, last) in raw {
        let seg = Segment {
            start_ms: fp.frame_start_ms(first),
            end_ms: fp.frame_end_ms(last),
        };
        match merged.last_mut() {
            Some(prev) if seg.start_ms as i64 - (prev.end_ms as i64) < merge_gap_ms.max(1) => {
                prev.end_ms = prev.end_ms.max(seg.end_ms);
            }
            _ => merged.push(seg),
        }
    }
    merged
}

/// A training-ready span of speech.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechChunk {
    pub start_ms: u64,
    pub end_ms: u64,
    pub mean_speech_prob: f64,
    pub source_id: String,
}

impl SpeechChunk {
    pub fn start_s(&self) -> f64 {
        self.start_ms as f64 / 1000.0
    }

    pub fn end_s(&self) -> f64 {
        self.end_ms as f64 / 1000.0
    }

    pub fn duration_s(&self) -> f64 {
        (self.end_ms - self.start_ms) as f64 / 1000.0
    }

    /// `<source_id>_<start_ms>_<end_ms>.wav`
    pub fn file_name(&self) -> String {
        format!("{}_{}_{}.wav", self.source_id, self.start_ms, self.end_ms)
    }
}

/// Frame range `[first, last)` with its time extent.
#[derive(Debug, Clone, Copy)]
struct Span {
    first: usize,
    last: usize,
    start_ms: u64,
    end_ms: u64,
}

impl Span {
    fn duration_ms(&self) -> u64 {
        self.end_ms - self.start_ms
    }
}

fn segment_span(fp: &FrameProbabilities, seg: &Segment) -> Option<Span> {
    let hop = fp.frame.hop_ms as u64;
    let frame = fp.frame.frame_ms as u64;
    let first = seg.start_ms.div_ceil(hop) as usize;
    if seg.end_ms < frame {
        return None;
    }
    let last = (((seg.end_ms - frame) / hop) as usize + 1).min(fp.len());
    (first < last).then_some(Span {
        first,
        last,
        start_ms: seg.start_ms,
        end_ms: seg.end_ms,
    })
}

/// Splits at the least probable frame whose start lies in the central half of
/// the span. Ties go to the frame nearest the centre, then the earlier one.
fn split_point(fp: &FrameProbabilities, span: &Span) -> Option<usize> {
    let dur = span.duration_ms();
    let lo_ms = span.start_ms + dur / 4;
    let hi_ms = span.start_ms + dur - dur / 4;
    let mid2 = span.start_ms * 2 + dur;
    (span.first + 1..span.last)
        .filter(|&i| (lo_ms..=hi_ms).contains(&fp.frame_start_ms(i)))
        .min_by(|&a, &b| {
            fp.probs[a].total_cmp(&fp.probs[b]).then_with(|| {
                let da = (2 * fp.frame_start_ms(a)).abs_diff(mid2);
                let db = (2 * fp.frame_start_ms(b)).abs_diff(mid2);
                da.cmp(&db).then(a.cmp(&b))
            })
        })
}

fn split_recursive(fp: &FrameProbabilities, span: Span, max_ms: u64, out: &mut Vec<Span>) {
    if span.duration_ms() <= max_ms {
        out.push(span);
        return;
    }
    let Some(m) = split_point(fp, &span) else {
        // no interior frame boundary available; cannot satisfy the maximum
        return;
    };
    let at = fp.frame_start_ms(m);
    let left = Span {
        first: span.first,
        last: m,
        start_ms: span.start_ms,
        end_ms: at,
    };
    let right = Span {
        first: m,
        last: span.last,
        start_ms: at,
        end_ms: span.end_ms,
    };
    split_recursive(fp, left, max_ms, out);
    split_recursive(fp, right, max_ms, out);
}

/// Turns segments into chunks that satisfy the duration window and the mean
/// speech-probability floor.
pub fn chunk_segments(
    segments: &[Segment],
    fp: &FrameProbabilities,
    cfg: &ChunkingConfig,
    source_id: &str,
) -> Vec<SpeechChunk> {
    let (min_ms, max_ms) = (cfg.min_ms(), cfg.max_ms());
    let mut pieces = Vec::new();
    for seg in segments {
        if let Some(span) = segment_span(fp, seg) {
            split_recursive(fp, span, max_ms, &mut pieces);
        }
    }
    pieces
        .into_iter()
        .filter(|p| (min_ms..=max_ms).contains(&p.duration_ms()))
        .filter_map(|p| {
            let frames = &fp.probs[p.first..p.last];
            let mean = frames.iter().sum::<f64>() / frames.len() as f64;
            (mean >= cfg.speech_prob_threshold).then(|| SpeechChunk {
                start_ms: p.start_ms,
                end_ms: p.end_ms,
                mean_speech_prob: mean,
                source_id: source_id.to_string(),
            })
        })
        .collect()
}
