use std::fs;
use std::path::Path;

use asrforge_core::audio::{write_wav, AudioBuffer};
use asrforge_core::corpus::{
    ingest, read_manifest, stats, write_manifest, CorpusError, IngestOptions, Split,
};
use asrforge_core::text::LangProfile;
use asrforge_core::vad::{
    chunk_segments, compute_speech_probs, detect_segments, ChunkingConfig, EnergyVadConfig,
};
use asrforge_core::Lang;

fn tone(freq: f64, seconds: f64, rate: u32) -> AudioBuffer {
    let n = (seconds * rate as f64) as usize;
    let samples = (0..n)
        .map(|i| (0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin()) as f32)
        .collect();
    AudioBuffer::new(samples, rate).unwrap()
}

fn put(dir: &Path, name: &str, buf: &AudioBuffer, transcript: Option<&str>) {
    let path = dir.join(name);
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    write_wav(buf, &path).unwrap();
    if let Some(t) = transcript {
        fs::write(path.with_extension("txt"), t).unwrap();
    }
}

#[test]
fn labeled_ingest_normalizes_and_dedups() {
    let dir = tempfile::tempdir().unwrap();
    put(
        dir.path(),
        "a.wav",
        &tone(300.0, 1.5, 16_000),
        Some("كتاب، خوب."),
    );
    put(
        dir.path(),
        "sub/b.wav",
        &tone(500.0, 2.0, 16_000),
        Some("سلام"),
    );
    fs::copy(dir.path().join("a.wav"), dir.path().join("z.wav")).unwrap();
    fs::write(dir.path().join("z.txt"), "copy").unwrap();

    let profile = LangProfile::builtin(Lang::Persian);
    let opts = IngestOptions {
        lang: Lang::Persian,
        dataset: "cv".into(),
        split: Split::Train,
        profile: &profile,
    };
    let report = ingest(dir.path(), &opts).unwrap();
    let ids: Vec<&str> = report.records.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["cv/a", "cv/sub/b"]);
    assert_eq!(report.records[0].transcript.as_deref(), Some("کتاب خوب"));
    assert_eq!(report.duplicates.len(), 1);
    assert_eq!(report.duplicates[0].kept_id, "cv/a");
    assert!(report.duplicates[0].path.ends_with("z.wav"));

    let total: f64 = report.records.iter().map(|r| r.duration_s).sum();
    let s = stats(&report.records);
    assert!((s.total(Lang::Persian, Split::Train).seconds - total).abs() < 1e-9);
    assert!((total - 3.5).abs() < 1e-3);
}

#[test]
fn missing_sidecar_is_an_error_only_for_labeled_splits() {
    let dir = tempfile::tempdir().unwrap();
    put(dir.path(), "x.wav", &tone(200.0, 1.0, 8_000), None);
    let profile = LangProfile::builtin(Lang::Urdu);
    let mut opts = IngestOptions {
        lang: Lang::Urdu,
        dataset: "web".into(),
        split: Split::Test,
        profile: &profile,
    };
    match ingest(dir.path(), &opts) {
        Err(CorpusError::MissingTranscript(p)) => assert!(p.ends_with("x.wav")),
        other => panic!("expected MissingTranscript, got {other:?}"),
    }
    opts.split = Split::Pretrain;
    let report = ingest(dir.path(), &opts).unwrap();
    assert_eq!(report.records.len(), 1);
    assert!(report.records[0].transcript.is_none());
}

#[test]
fn listing_file_and_manifest_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    put(
        dir.path(),
        "clips/one.wav",
        &tone(250.0, 1.0, 22_050),
        Some("یک"),
    );
    put(
        dir.path(),
        "clips/two.wav",
        &tone(350.0, 1.0, 44_100),
        Some("دو"),
    );
    fs::write(
        dir.path().join("list.txt"),
        "# clips\nclips/two.wav\nclips/one.wav\n",
    )
    .unwrap();
    let profile = LangProfile::builtin(Lang::Persian);
    let opts = IngestOptions {
        lang: Lang::Persian,
        dataset: "ds".into(),
        split: Split::Valid,
        profile: &profile,
    };
    let report = ingest(dir.path().join("list.txt"), &opts).unwrap();
    assert_eq!(report.records.len(), 2);
    assert_eq!(report.records[0].id, "ds/clips/one");

    let manifest = dir.path().join("m.jsonl");
    write_manifest(&report.records, &manifest).unwrap();
    assert_eq!(read_manifest(&manifest).unwrap(), report.records);
}

#[test]
fn unreadable_audio_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.wav"), b"RIFF????WAVEjunk").unwrap();
    let profile = LangProfile::builtin(Lang::Arabic);
    let opts = IngestOptions {
        lang: Lang::Arabic,
        dataset: "d".into(),
        split: Split::Pretrain,
        profile: &profile,
    };
    assert!(matches!(
        ingest(dir.path(), &opts),
        Err(CorpusError::UnreadableAudio { .. })
    ));
}

#[test]
fn bursts_of_tone_become_chunks() {
    // 5 s tone, 1 s silence, repeated four times
    let rate = 16_000;
    let mut samples = Vec::new();
    for _ in 0..4 {
        samples.extend_from_slice(tone(220.0, 5.0, rate).samples());
        samples.extend(std::iter::repeat_n(0.0, rate as usize));
    }
    let buf = AudioBuffer::new(samples, rate).unwrap();
    let fp = compute_speech_probs(&buf, &EnergyVadConfig::default()).unwrap();
    let cfg = ChunkingConfig::default();
    let chunks = chunk_segments(&detect_segments(&fp, &cfg), &fp, &cfg, "burst");
    assert_eq!(chunks.len(), 4);
    for (i, c) in chunks.iter().enumerate() {
        let expected_start = i as f64 * 6.0;
        assert!((c.start_s() - expected_start).abs() < 0.05, "{c:?}");
        assert!((c.duration_s() - 5.0).abs() < 0.1, "{c:?}");
    }
}
