//! CTC loss with analytic gradients and greedy / prefix-beam decoding.
//!
//! All probability arithmetic is done in log space in double precision.
//! Symbol 0 is the blank.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::bpe::BLANK_ID;

const LOGITS_MAGIC: &[u8; 4] = b"CTCL";
const LOGITS_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CtcError {
    #[error("DimensionMismatch: {0}")]
    DimensionMismatch(String),
    #[error("InvalidTarget: target contains the blank symbol at position {0}")]
    BlankInTarget(usize),
    #[error("NonFiniteLogit: frame {frame}, symbol {symbol}")]
    NonFinite { frame: usize, symbol: usize },
    #[error("MalformedLogits: {0}")]
    MalformedLogits(String),
    #[error("IoFailure: {0}")]
    Io(#[from] std::io::Error),
}

/// `log(exp(a) + exp(b))` without overflow.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Frame-major `T x V` matrix of acoustic scores.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMatrix {
    frames: usize,
    symbols: usize,
    values: Vec<f64>,
}

impl LogitMatrix {
    pub fn new(frames: usize, symbols: usize, values: Vec<f64>) -> Result<Self, CtcError> {
        if frames == 0 || symbols == 0 {
            return Err(CtcError::DimensionMismatch(
                "logit matrix needs at least one frame and one symbol".into(),
            ));
        }
        if values.len() != frames * symbols {
            return Err(CtcError::DimensionMismatch(format!(
                "{} values for a {frames}x{symbols} matrix",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(CtcError::NonFinite {
                frame: i / symbols,
                symbol: i % symbols,
            });
        }
        Ok(Self {
            frames,
            symbols,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, CtcError> {
        let symbols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != symbols) {
            return Err(CtcError::DimensionMismatch("ragged rows".into()));
        }
        Self::new(rows.len(), symbols, rows.concat())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn symbols(&self) -> usize {
        self.symbols
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.symbols..(t + 1) * self.symbols]
    }

    pub fn get(&self, t: usize, k: usize) -> f64 {
        self.values[t * self.symbols + k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `CTCL`, u32 version, u32 T, u32 V, then `T*V` little-endian f32, row-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.values.len());
        out.extend_from_slice(LOGITS_MAGIC);
        out.extend_from_slice(&LOGITS_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.frames as u32).to_le_bytes());
        out.extend_from_slice(&(self.symbols as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CtcError> {
        let malformed = |m: &str| CtcError::MalformedLogits(m.to_string());
        if bytes.len() < 16 || &bytes[..4] != LOGITS_MAGIC {
            return Err(malformed("missing CTCL header"));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        if word(4) != LOGITS_VERSION {
            return Err(malformed(&format!("unsupported version {}", word(4))));
        }
        let (frames, symbols) = (word(8) as usize, word(12) as usize);
        let expected = frames
            .checked_mul(symbols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| malformed("dimensions overflow"))?;
        if bytes.len() - 16 != expected {
            return Err(malformed(&format!(
                "payload is {} bytes, header implies {expected}",
                bytes.len() - 16
            )));
        }
        let values = bytes[16..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Self::new(frames, symbols, values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CtcError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CtcError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Row-normalized log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbs(LogitMatrix);

impl LogProbs {
    pub fn frames(&self) -> usize {
        self.0.frames
    }

    pub fn symbols(&self) -> usize {
        self.0.symbols
    }

    pub fn row(&self, t: usize) -> &[f64] {
        self.0.row(t)
    }

    pub fn get(&self, t: usize, k: usize) -> f64 {
        self.0.get(t, k)
    }

    pub fn matrix(&self) -> &LogitMatrix {
        &self.0
    }
}

pub fn log_softmax(logits: &LogitMatrix) -> LogProbs {
    let mut values = Vec::with_capacity(logits.values.len());
    for t in 0..logits.frames {
        let row = logits.row(t);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        values.extend(row.iter().map(|v| v - log_z));
    }
    LogProbs(LogitMatrix { values, ..*logits })
}

/// Loss value and gradient with respect to the pre-softmax logits.
#[derive(Debug, Clone, PartialEq)]
pub struct CtcLoss {
    pub loss: f64,
    /// `T x V`, frame-major. All zeros when the target is infeasible.
    pub grad: Vec<f64>,
    /// False when no alignment of the target fits into `T` frames.
    pub feasible: bool,
}

/// Frames needed to emit `target`: one per label plus a blank between repeats.
pub fn min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Negative log-likelihood of `target` under `logp`, marginalized over all
/// blank-augmented alignments with the forward-backward recursions.
pub fn ctc_loss(logp: &LogProbs, target: &[usize]) -> Result<CtcLoss, CtcError> {
    let (frames, symbols) = (logp.frames(), logp.symbols());
    if let Some(pos) = target.iter().position(|&k| k == BLANK_ID) {
        return Err(CtcError::BlankInTarget(pos));
    }
    if let Some(&k) = target.iter().find(|&&k| k >= symbols) {
        return Err(CtcError::DimensionMismatch(format!(
            "target symbol {k} outside a {symbols}-symbol vocabulary"
        )));
    }
    let infeasible = || CtcLoss {
        loss: f64::INFINITY,
        grad: vec![0.0; frames * symbols],
        feasible: false,
    };
    if min_frames(target) > frames {
        return Ok(infeasible());
    }

    // extended label sequence: blank, l1, blank, l2, ..., blank
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(BLANK_ID);
    for &k in target {
        ext.push(k);
        ext.push(BLANK_ID);
    }
    let states = ext.len();
    let can_skip = |s: usize| s >= 2 && ext[s] != BLANK_ID && ext[s] != ext[s - 2];
    let ninf = f64::NEG_INFINITY;

    // alpha[t][s]: mass of prefixes ending in state s at t, emission at t included
    let mut alpha = vec![ninf; frames * states];
    alpha[0] = logp.get(0, ext[0]);
    if states > 1 {
        alpha[1] = logp.get(0, ext[1]);
    }
    for t in 1..frames {
        let (prev, cur) = alpha.split_at_mut(t * states);
        let prev = &prev[(t - 1) * states..];
        for s in 0..states {
            let mut acc = prev[s];
            if s >= 1 {
                acc = log_add(acc, prev[s - 1]);
            }
            if can_skip(s) {
                acc = log_add(acc, prev[s - 2]);
            }
            cur[s] = acc + logp.get(t, ext[s]);
        }
    }

    // beta[t][s]: mass of suffixes after t given state s at t, emission at t excluded
    let mut beta = vec![ninf; frames * states];
    let last = (frames - 1) * states;
    beta[last + states - 1] = 0.0;
    if states > 1 {
        beta[last + states - 2] = 0.0;
    }
    for t in (0..frames - 1).rev() {
        for s in 0..states {
            let next = |s2: usize| beta[(t + 1) * states + s2] + logp.get(t + 1, ext[s2]);
            let mut acc = next(s);
            if s + 1 < states {
                acc = log_add(acc, next(s + 1));
            }
            if s + 2 < states && can_skip(s + 2) {
                acc = log_add(acc, next(s + 2));
            }
            beta[t * states + s] = acc;
        }
    }

    let tail = &alpha[last..];
    let log_likelihood = if states > 1 {
        log_add(tail[states - 1], tail[states - 2])
    } else {
        tail[0]
    };
    if log_likelihood == ninf {
        return Ok(infeasible());
    }

    let mut grad = vec![0.0; frames * symbols];
    let mut occupancy = vec![ninf; symbols];
    for t in 0..frames {
        occupancy.iter_mut().for_each(|o| *o = ninf);
        for s in 0..states {
            let k = ext[s];
            occupancy[k] = log_add(occupancy[k], alpha[t * states + s] + beta[t * states + s]);
        }
        for k in 0..symbols {
            let posterior = (occupancy[k] - log_likelihood).exp();
            grad[t * symbols + k] = logp.get(t, k).exp() - posterior;
        }
    }
    Ok(CtcLoss {
        // rounding can push a near-certain likelihood a hair above one
        loss: (-log_likelihood).max(0.0),
        grad,
        feasible: true,
    })
}

/// Removes repeats, then blanks.
pub fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &k in path {
        if Some(k) != prev && k != BLANK_ID {
            out.push(k);
        }
        prev = Some(k);
    }
    out
}

/// Per-frame argmax (lowest index on ties), collapsed.
pub fn greedy_decode(logp: &LogProbs) -> Vec<usize> {
    let path: Vec<usize> = (0..logp.frames())
        .map(|t| {
            let row = logp.row(t);
            let mut best = 0;
            for k in 1..row.len() {
                if row[k] > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect();
    collapse(&path)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamConfig {
    pub beam_width: usize,
    /// Extensions by symbols whose frame log-probability is below this floor
    /// are skipped.
    pub prune_log_prob: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            beam_width: 32,
            prune_log_prob: f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub labels: Vec<usize>,
    pub log_score: f64,
}

#[derive(Clone, Copy)]
struct PrefixMass {
    blank: f64,
    non_blank: f64,
}

impl PrefixMass {
    const EMPTY: PrefixMass = PrefixMass {
        blank: f64::NEG_INFINITY,
        non_blank: f64::NEG_INFINITY,
    };

    fn total(&self) -> f64 {
        log_add(self.blank, self.non_blank)
    }
}

/// A next-beam entry: a surviving prefix (`label` is `None`) or a parent
/// prefix extended by one label. Prefixes are only built for the survivors.
#[derive(Clone, Copy)]
struct Candidate {
    parent: usize,
    label: Option<usize>,
    mass: PrefixMass,
}

/// CTC prefix beam search. Identical prefixes reached through different
/// alignments share one entry whose blank-ending and label-ending masses are
/// accumulated separately.
pub fn beam_decode(logp: &LogProbs, cfg: &BeamConfig) -> Vec<Hypothesis> {
    let width = cfg.beam_width.max(1);
    let mut beam: Vec<(Vec<usize>, PrefixMass)> = vec![(
        Vec::new(),
        PrefixMass {
            blank: 0.0,
            non_blank: f64::NEG_INFINITY,
        },
    )];
    for t in 0..logp.frames() {
        let row = logp.row(t);
        // an extension of beam[i] by k that equals beam[j] folds into beam[j]
        let index: HashMap<&[usize], usize> = beam
            .iter()
            .enumerate()
            .map(|(i, (p, _))| (p.as_slice(), i))
            .collect();
        // per parent: (label, child index); at most a handful each
        let mut folds: Vec<Vec<(usize, usize)>> = vec![Vec::new(); beam.len()];
        for (j, (p, _)) in beam.iter().enumerate() {
            if let Some((&k, parent)) = p.split_last() {
                if let Some(&i) = index.get(parent) {
                    folds[i].push((k, j));
                }
            }
        }

        let mut stays: Vec<Candidate> = beam
            .iter()
            .enumerate()
            .map(|(j, (prefix, mass))| {
                let mut m = PrefixMass::EMPTY;
                m.blank = mass.total() + row[BLANK_ID];
                if let Some(&k) = prefix.last() {
                    m.non_blank = mass.non_blank + row[k];
                }
                Candidate {
                    parent: j,
                    label: None,
                    mass: m,
                }
            })
            .collect();
        let mut extensions = Vec::new();
        for (i, (prefix, mass)) in beam.iter().enumerate() {
            let total = mass.total();
            let last = prefix.last().copied();
            for (k, &lp) in row.iter().enumerate().skip(1) {
                if lp < cfg.prune_log_prob {
                    continue;
                }
                // a repeated label only extends the prefix after a blank
                let from = if last == Some(k) { mass.blank } else { total };
                let score = from + lp;
                match folds[i].iter().find(|&&(label, _)| label == k) {
                    Some(&(_, j)) => {
                        let slot = &mut stays[j].mass;
                        slot.non_blank = log_add(slot.non_blank, score);
                    }
                    None => extensions.push(Candidate {
                        parent: i,
                        label: Some(k),
                        mass: PrefixMass {
                            blank: f64::NEG_INFINITY,
                            non_blank: score,
                        },
                    }),
                }
            }
        }

        let mut entries: Vec<Candidate> = stays
            .into_iter()
            .chain(extensions)
            .filter(|c| c.mass.total() > f64::NEG_INFINITY)
            .collect();
        let order = |a: &Candidate, b: &Candidate| {
            b.mass.total().total_cmp(&a.mass.total()).then_with(|| {
                let la = beam[a.parent].0.iter().copied().chain(a.label);
                la.cmp(beam[b.parent].0.iter().copied().chain(b.label))
            })
        };
        if entries.len() > width {
            entries.select_nth_unstable_by(width - 1, order);
            entries.truncate(width);
        }
        entries.sort_by(order);
        beam = entries
            .into_iter()
            .map(|c| {
                let mut labels = beam[c.parent].0.clone();
                labels.extend(c.label);
                (labels, c.mass)
            })
            .collect();
    }
    beam.into_iter()
        .map(|(labels, mass)| Hypothesis {
            labels,
            log_score: mass.total(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn uniform(frames: usize, symbols: usize) -> LogProbs {
        log_softmax(&LogitMatrix::new(frames, symbols, vec![0.0; frames * symbols]).unwrap())
    }

    #[test]
    fn log_softmax_uniform_and_stable() {
        let lp = uniform(1, 4);
        for &v in lp.row(0) {
            assert!((v - 0.25f64.ln()).abs() < 1e-15);
        }
        let lp = log_softmax(&LogitMatrix::from_rows(&[vec![1000.0, 0.0]]).unwrap());
        assert!(lp.get(0, 0).abs() < 1e-12);
        assert!(lp.get(0, 1).exp() < 1e-300);
    }

    #[test]
    fn log_softmax_rows_normalize() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let values: Vec<f64> = (0..35).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let lp = log_softmax(&LogitMatrix::new(5, 7, values).unwrap());
        for t in 0..5 {
            let s: f64 = lp.row(t).iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn two_frame_worked_case() {
        // paths aa, a-, -a collapse to [a]: 3 x 0.25
        let out = ctc_loss(&uniform(2, 2), &[1]).unwrap();
        assert!(out.feasible);
        assert!((out.loss - (-(0.75f64).ln())).abs() < 1e-12);
        assert!((out.loss - 0.287682).abs() < 1e-6);
    }

    #[test]
    fn empty_target_is_all_blank_path() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let values: Vec<f64> = (0..12).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let lp = log_softmax(&LogitMatrix::new(4, 3, values).unwrap());
        let expected: f64 = -(0..4).map(|t| lp.get(t, BLANK_ID)).sum::<f64>();
        let out = ctc_loss(&lp, &[]).unwrap();
        assert!((out.loss - expected).abs() < 1e-12);
    }

    #[test]
    fn infeasible_target_has_infinite_loss() {
        // [a, a] needs a separating blank: three frames
        let out = ctc_loss(&uniform(2, 2), &[1, 1]).unwrap();
        assert!(!out.feasible);
        assert_eq!(out.loss, f64::INFINITY);
        assert!(out.grad.iter().all(|&g| g == 0.0));
        assert!(ctc_loss(&uniform(3, 2), &[1, 1]).unwrap().feasible);
    }

    #[test]
    fn target_validation() {
        assert!(matches!(
            ctc_loss(&uniform(3, 3), &[1, 0]),
            Err(CtcError::BlankInTarget(1))
        ));
        assert!(matches!(
            ctc_loss(&uniform(3, 3), &[5]),
            Err(CtcError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn certain_alignment_has_zero_loss() {
        let big = 200.0;
        let rows = vec![
            vec![0.0, big, 0.0],
            vec![big, 0.0, 0.0],
            vec![0.0, 0.0, big],
        ];
        let lp = log_softmax(&LogitMatrix::from_rows(&rows).unwrap());
        let out = ctc_loss(&lp, &[1, 2]).unwrap();
        assert!(out.loss.abs() < 1e-12 && out.loss >= 0.0, "{}", out.loss);
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let values: Vec<f64> = (0..30).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let lp = log_softmax(&LogitMatrix::new(6, 5, values).unwrap());
        let out = ctc_loss(&lp, &[2, 3, 2]).unwrap();
        for t in 0..6 {
            let s: f64 = out.grad[t * 5..(t + 1) * 5].iter().sum();
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_collapse_rules() {
        let onehot = |path: &[usize], v: usize| {
            let rows: Vec<Vec<f64>> = path
                .iter()
                .map(|&k| (0..v).map(|j| if j == k { 5.0 } else { 0.0 }).collect())
                .collect();
            log_softmax(&LogitMatrix::from_rows(&rows).unwrap())
        };
        assert_eq!(greedy_decode(&onehot(&[0, 1, 1, 0, 2], 3)), vec![1, 2]);
        assert!(greedy_decode(&onehot(&[0, 0, 0], 3)).is_empty());
        assert_eq!(greedy_decode(&onehot(&[1, 0, 1], 3)), vec![1, 1]);
    }

    #[test]
    fn greedy_ties_take_lowest_index() {
        let lp = uniform(3, 4);
        assert!(greedy_decode(&lp).is_empty());
    }

    #[test]
    fn beam_prefers_total_mass_over_best_path() {
        let hyps = beam_decode(&uniform(2, 2), &BeamConfig::default());
        assert_eq!(hyps[0].labels, vec![1]);
        assert!((hyps[0].log_score - 0.75f64.ln()).abs() < 1e-12);
        // remaining labelings: [] (0.25) and [a, a] impossible in 2 frames
        assert_eq!(hyps.len(), 2);
        assert!((hyps[1].log_score - 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn width_one_matches_greedy_on_peaked_frames() {
        let rows = vec![
            vec![0.0, 6.0, 0.0],
            vec![0.0, 6.0, 0.0],
            vec![6.0, 0.0, 0.0],
            vec![0.0, 0.0, 6.0],
        ];
        let lp = log_softmax(&LogitMatrix::from_rows(&rows).unwrap());
        let cfg = BeamConfig {
            beam_width: 1,
            ..Default::default()
        };
        assert_eq!(beam_decode(&lp, &cfg)[0].labels, greedy_decode(&lp));
    }

    #[test]
    fn pruning_floor_skips_unlikely_symbols() {
        let rows = vec![vec![0.0, 10.0, -10.0]; 3];
        let lp = log_softmax(&LogitMatrix::from_rows(&rows).unwrap());
        let cfg = BeamConfig {
            beam_width: 64,
            prune_log_prob: -5.0,
        };
        let hyps = beam_decode(&lp, &cfg);
        assert!(hyps.iter().all(|h| !h.labels.contains(&2)));
    }

    #[test]
    fn logits_file_roundtrip() {
        let m = LogitMatrix::from_rows(&[vec![0.5, -1.25, 3.0], vec![2.0, 0.0, -0.75]]).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..4], b"CTCL");
        assert_eq!(bytes.len(), 16 + 6 * 4);
        assert_eq!(LogitMatrix::from_bytes(&bytes).unwrap(), m);
        assert!(LogitMatrix::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(LogitMatrix::from_bytes(b"XXXX").is_err());
    }

    #[test]
    fn log_add_edge_cases() {
        assert_eq!(log_add(f64::NEG_INFINITY, 1.0), 1.0);
        assert!((log_add(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(
            log_add(f64::NEG_INFINITY, f64::NEG_INFINITY),
            f64::NEG_INFINITY
        );
    }
}
