use std::collections::BTreeSet;

use asrforge_core::bpe::train_bpe;
use asrforge_core::corpus::{edit_distance, split, stats, Split, SplitSpec, UtteranceRecord};
use asrforge_core::ctc::{beam_decode, ctc_loss, log_softmax, BeamConfig, LogitMatrix};
use asrforge_core::text::{normalize, LangProfile};
use asrforge_core::vad::{
    chunk_segments, detect_segments, ChunkingConfig, FrameConfig, FrameProbabilities,
};
use asrforge_core::Lang;
use proptest::prelude::*;

fn perso_arabic_text() -> impl Strategy<Value = String> {
    "[\u{0600}-\u{06FF}\u{200B}-\u{200F}\u{FEFF} a-zA-Z0-9.,!?\u{0300}-\u{036F}]{0,40}"
}

fn logits(max_t: usize, max_v: usize) -> impl Strategy<Value = LogitMatrix> {
    (1..=max_t, 2..=max_v).prop_flat_map(|(t, v)| {
        prop::collection::vec(-4.0f64..4.0, t * v)
            .prop_map(move |values| LogitMatrix::new(t, v, values).unwrap())
    })
}

fn records() -> impl Strategy<Value = Vec<UtteranceRecord>> {
    prop::collection::vec(1.0f64..30.0, 30..90).prop_map(|durations| {
        // each of three datasets gets at least ten utterances
        durations
            .into_iter()
            .enumerate()
            .map(|(i, d)| (i, d, i % 3))
            .map(|(i, d, ds)| UtteranceRecord {
                id: format!("ds{ds}/{i:03}"),
                audio_path: format!("{i}.wav").into(),
                duration_s: d,
                lang: Lang::Urdu,
                dataset: format!("ds{ds}"),
                split: Split::Train,
                transcript: Some("x".into()),
                source_url: None,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn normalize_is_idempotent(s in perso_arabic_text(), which in 0usize..3) {
        let p = LangProfile::builtin(Lang::ALL[which]);
        let once = normalize(&s, &p);
        prop_assert_eq!(normalize(&once, &p), once);
    }

    #[test]
    fn edit_distance_is_a_metric(
        a in prop::collection::vec(0u8..4, 0..8),
        b in prop::collection::vec(0u8..4, 0..8),
        c in prop::collection::vec(0u8..4, 0..8),
    ) {
        let d = |x: &[u8], y: &[u8]| edit_distance(x, y).distance;
        prop_assert_eq!(d(&a, &a), 0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        prop_assert!(d(&a, &b) >= a.len().abs_diff(b.len()));
    }

    #[test]
    fn ctc_loss_ignores_per_frame_logit_shifts(
        m in logits(7, 5),
        shift in -50.0f64..50.0,
        raw_target in prop::collection::vec(1usize..5, 0..3),
    ) {
        let v = m.symbols();
        let target: Vec<usize> = raw_target.into_iter().map(|k| 1 + (k - 1) % (v - 1)).collect();
        let shifted = LogitMatrix::new(
            m.frames(),
            v,
            m.values().iter().enumerate().map(|(i, x)| x + shift * (i / v) as f64).collect(),
        ).unwrap();
        let a = ctc_loss(&log_softmax(&m), &target).unwrap();
        let b = ctc_loss(&log_softmax(&shifted), &target).unwrap();
        prop_assert_eq!(a.feasible, b.feasible);
        if a.feasible {
            prop_assert!(a.loss >= 0.0);
            prop_assert!((a.loss - b.loss).abs() <= 1e-8 * (1.0 + a.loss));
            for row in a.grad.chunks(v) {
                prop_assert!(row.iter().sum::<f64>().abs() < 1e-9);
            }
        } else {
            prop_assert_eq!(a.loss, f64::INFINITY);
            prop_assert!(a.grad.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn beam_scores_never_exceed_exact_labeling_mass(m in logits(8, 5), width in 1usize..8) {
        let lp = log_softmax(&m);
        let hyps = beam_decode(&lp, &BeamConfig { beam_width: width, ..BeamConfig::default() });
        prop_assert!(!hyps.is_empty() && hyps.len() <= width);
        for pair in hyps.windows(2) {
            prop_assert!(pair[0].log_score >= pair[1].log_score);
        }
        for h in &hyps {
            let exact = -ctc_loss(&lp, &h.labels).unwrap().loss;
            prop_assert!(h.log_score <= exact + 1e-9);
        }
    }

    #[test]
    fn split_is_a_seeded_partition(recs in records(), seed in any::<u64>()) {
        let out = split(&recs, SplitSpec::Ratios([0.8, 0.1, 0.1]), seed).unwrap();
        let before: BTreeSet<&str> = recs.iter().map(|r| r.id.as_str()).collect();
        let after: BTreeSet<&str> = out.records.iter().map(|r| r.id.as_str()).collect();
        prop_assert_eq!(before, after);
        prop_assert_eq!(out.records.len(), recs.len());
        prop_assert!(out.unused.is_empty());
        prop_assert_eq!(split(&recs, SplitSpec::Ratios([0.8, 0.1, 0.1]), seed).unwrap(), out);
    }

    #[test]
    fn stats_total_equals_duration_sum(recs in records()) {
        let total: f64 = recs.iter().map(|r| r.duration_s).sum();
        let s = stats(&recs);
        prop_assert!((s.total(Lang::Urdu, Split::Train).seconds - total).abs() < 1e-6);
        prop_assert_eq!(s.total(Lang::Urdu, Split::Train).utterances, recs.len());
    }

    #[test]
    fn bpe_is_deterministic_and_lossless(
        words in prop::collection::vec("[ابپتثجچ]{1,6}", 1..30),
        extra in 0usize..40,
    ) {
        let sentence = words.join(" ");
        let chars: BTreeSet<char> = sentence.chars().filter(|c| *c != ' ').collect();
        let vocab = chars.len() + 3 + extra;
        let a = train_bpe(&[sentence.as_str()], vocab, Lang::Persian).unwrap();
        let b = train_bpe(&[sentence.as_str()], vocab, Lang::Persian).unwrap();
        prop_assert_eq!(a.to_text(), b.to_text());
        prop_assert!(a.pieces().len() <= vocab);
        prop_assert_eq!(a.decode_pieces(&a.encode_sentence(&sentence)).unwrap(), sentence);
    }

    #[test]
    fn chunks_respect_any_valid_config(
        probs in prop::collection::vec(0.0f64..=1.0, 1..3000),
        min_s in 0.5f64..4.0,
        span in 1.0f64..20.0,
        keep in 0.3f64..0.9,
    ) {
        let cfg = ChunkingConfig {
            min_chunk_s: min_s,
            max_chunk_s: min_s + span,
            speech_prob_threshold: keep,
            ..ChunkingConfig::default()
        };
        let fp = FrameProbabilities::new(probs, FrameConfig::default()).unwrap();
        let chunks = chunk_segments(&detect_segments(&fp, &cfg), &fp, &cfg, "p");
        for c in &chunks {
            prop_assert!(c.duration_s() >= cfg.min_chunk_s - 1e-9);
            prop_assert!(c.duration_s() <= cfg.max_chunk_s + 1e-9);
            prop_assert!(c.mean_speech_prob >= keep);
        }
    }
}
