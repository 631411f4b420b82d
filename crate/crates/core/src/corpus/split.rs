//! Seeded, per-dataset assignment of labeled utterances to train/valid/test.
//!
//! Within each dataset the records are shuffled with a seed derived from the
//! run seed and the dataset name, stably sorted by descending duration, and
//! each record goes to the split currently furthest below its hour target.
//! Every split therefore ends within one utterance duration of its target.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::manifest::{Split, UtteranceRecord};
use super::CorpusError;

/// Target for each of train, valid and test, in that order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitSpec {
    /// Relative weights; each dataset is partitioned in these proportions.
    Ratios([f64; 3]),
    /// Absolute hours per dataset. Records left over once every target is met
    /// are returned as unused.
    Hours([f64; 3]),
}

impl SplitSpec {
    fn weights(&self) -> [f64; 3] {
        match self {
            SplitSpec::Ratios(w) | SplitSpec::Hours(w) => *w,
        }
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let w = self.weights();
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
            return Err(CorpusError::InvalidSplitSpec(format!(
                "targets must be non-negative with a positive sum, got {w:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    /// Every assigned record with its new split label, sorted by id.
    pub records: Vec<UtteranceRecord>,
    /// Records not needed to meet hour targets (always empty for ratios).
    pub unused: Vec<UtteranceRecord>,
}

fn dataset_seed(seed: u64, dataset: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(dataset.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

pub fn split(
    records: &[UtteranceRecord],
    spec: SplitSpec,
    seed: u64,
) -> Result<SplitOutcome, CorpusError> {
    spec.validate()?;
    if let Some(r) = records.iter().find(|r| !r.split.is_labeled()) {
        return Err(CorpusError::UnlabeledRecord(r.id.clone()));
    }
    let mut by_dataset: BTreeMap<&str, Vec<&UtteranceRecord>> = BTreeMap::new();
    for r in records {
        by_dataset.entry(&r.dataset).or_default().push(r);
    }

    let weights = spec.weights();
    let mut assigned = Vec::with_capacity(records.len());
    let mut unused = Vec::new();
    for (dataset, mut group) in by_dataset {
        group.sort_by(|a, b| a.id.cmp(&b.id));
        let mut rng = ChaCha8Rng::seed_from_u64(dataset_seed(seed, dataset));
        group.shuffle(&mut rng);
        group.sort_by(|a, b| b.duration_s.total_cmp(&a.duration_s));

        let total: f64 = group.iter().map(|r| r.duration_s).sum();
        let targets: [f64; 3] = match spec {
            SplitSpec::Ratios(w) => {
                let sum: f64 = w.iter().sum();
                w.map(|x| x / sum * total)
            }
            SplitSpec::Hours(h) => {
                let wanted: f64 = h.iter().sum::<f64>() * 3600.0;
                if wanted > total + 1e-9 {
                    return Err(CorpusError::InsufficientData(format!(
                        "dataset {dataset} has {:.4} h, targets need {:.4} h",
                        total / 3600.0,
                        wanted / 3600.0
                    )));
                }
                h.map(|x| x * 3600.0)
            }
        };

        let mut filled = [0.0f64; 3];
        let mut counts = [0usize; 3];
        for r in group {
            let deficit = |i: usize| targets[i] - filled[i];
            let best = (0..3)
                .filter(|&i| weights[i] > 0.0)
                .max_by(|&a, &b| deficit(a).total_cmp(&deficit(b)).then(b.cmp(&a)))
                .expect("at least one positive weight");
            let hours_mode = matches!(spec, SplitSpec::Hours(_));
            if hours_mode && deficit(best) <= 0.0 {
                unused.push(r.clone());
                continue;
            }
            filled[best] += r.duration_s;
            counts[best] += 1;
            let mut rec = r.clone();
            rec.split = Split::LABELED[best];
            assigned.push(rec);
        }
        if let Some(i) = (0..3).find(|&i| weights[i] > 0.0 && counts[i] == 0) {
            return Err(CorpusError::InsufficientData(format!(
                "dataset {dataset} cannot fill a nonzero {} split",
                Split::LABELED[i]
            )));
        }
    }
    assigned.sort_by(|a, b| a.id.cmp(&b.id));
    unused.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(SplitOutcome {
        records: assigned,
        unused,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::Lang;

    fn labeled(n: usize, dataset: &str, dur: impl Fn(usize) -> f64) -> Vec<UtteranceRecord> {
        (0..n)
            .map(|i| UtteranceRecord {
                id: format!("{dataset}/{i:05}"),
                audio_path: format!("{i}.wav").into(),
                duration_s: dur(i),
                lang: Lang::Urdu,
                dataset: dataset.into(),
                split: Split::Train,
                transcript: Some("x".into()),
                source_url: None,
            })
            .collect()
    }

    fn hours(records: &[UtteranceRecord], split: Split) -> f64 {
        records
            .iter()
            .filter(|r| r.split == split)
            .map(|r| r.duration_s)
            .sum::<f64>()
            / 3600.0
    }

    #[test]
    fn ratio_one_zero_is_all_train() {
        let recs = labeled(20, "cv", |i| 2.0 + i as f64);
        let out = split(&recs, SplitSpec::Ratios([1.0, 0.0, 0.0]), 1).unwrap();
        assert!(out.records.iter().all(|r| r.split == Split::Train));
        assert_eq!(out.records.len(), 20);
    }

    #[test]
    fn same_seed_same_assignment() {
        let recs = labeled(200, "cv", |i| 1.0 + (i % 7) as f64);
        let a = split(&recs, SplitSpec::Ratios([0.8, 0.1, 0.1]), 42).unwrap();
        let b = split(&recs, SplitSpec::Ratios([0.8, 0.1, 0.1]), 42).unwrap();
        assert_eq!(a, b);
        let c = split(&recs, SplitSpec::Ratios([0.8, 0.1, 0.1]), 43).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn partition_and_ratio_tolerance() {
        let recs = labeled(300, "cv", |i| 1.0 + ((i * 37) % 11) as f64);
        let max = recs.iter().map(|r| r.duration_s).fold(0.0, f64::max) / 3600.0;
        let total: f64 = recs.iter().map(|r| r.duration_s).sum::<f64>() / 3600.0;
        let out = split(&recs, SplitSpec::Ratios([0.7, 0.2, 0.1]), 9).unwrap();
        assert_eq!(out.records.len(), recs.len());
        for (split_label, w) in Split::LABELED.iter().zip([0.7, 0.2, 0.1]) {
            assert!((hours(&out.records, *split_label) - w * total).abs() <= max);
        }
    }

    #[test]
    fn hours_mode_leaves_remainder_unused() {
        let recs = labeled(100, "cv", |_| 36.0); // 1 h total
        let out = split(&recs, SplitSpec::Hours([0.5, 0.2, 0.0]), 3).unwrap();
        assert!((hours(&out.records, Split::Train) - 0.5).abs() <= 0.01 + 1e-9);
        assert!((hours(&out.records, Split::Valid) - 0.2).abs() <= 0.01 + 1e-9);
        assert_eq!(out.records.len() + out.unused.len(), 100);
        assert!(split(&recs, SplitSpec::Hours([2.0, 0.0, 0.0]), 3).is_err());
    }

    #[test]
    fn tiny_dataset_is_insufficient() {
        let recs = labeled(1, "tiny", |_| 5.0);
        assert!(matches!(
            split(&recs, SplitSpec::Ratios([0.5, 0.5, 0.0]), 0),
            Err(CorpusError::InsufficientData(_))
        ));
    }

    #[test]
    fn rejects_pretrain_records_and_bad_specs() {
        let mut recs = labeled(3, "cv", |_| 5.0);
        assert!(split(&recs, SplitSpec::Ratios([0.0, 0.0, 0.0]), 0).is_err());
        recs[0].split = Split::Pretrain;
        recs[0].transcript = None;
        assert!(matches!(
            split(&recs, SplitSpec::Ratios([1.0, 0.0, 0.0]), 0),
            Err(CorpusError::UnlabeledRecord(_))
        ));
    }

    #[test]
    fn datasets_are_stratified_independently() {
        let mut recs = labeled(100, "a", |_| 10.0);
        recs.extend(labeled(50, "b", |_| 20.0));
        let out = split(&recs, SplitSpec::Ratios([0.8, 0.2, 0.0]), 5).unwrap();
        for ds in ["a", "b"] {
            let sub: Vec<_> = out
                .records
                .iter()
                .filter(|r| r.dataset == ds)
                .cloned()
                .collect();
            let total = hours(&sub, Split::Train) + hours(&sub, Split::Valid);
            assert!((hours(&sub, Split::Valid) / total - 0.2).abs() < 0.02);
        }
    }
}
