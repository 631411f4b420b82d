use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use super::manifest::{Split, UtteranceRecord};
use super::CorpusError;
use crate::audio::{read_wav, resample_to_16k, AudioBuffer};
use crate::lang::Lang;
use crate::text::{normalize, LangProfile};

#[derive(Debug, Clone)]
pub struct IngestOptions<'a> {
    pub lang: Lang,
    pub dataset: String,
    /// `Pretrain` ingests unlabeled audio; any other split requires a
    /// `<stem>.txt` transcript next to each audio file.
    pub split: Split,
    pub profile: &'a LangProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DuplicateAudio {
    pub path: PathBuf,
    pub kept_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub records: Vec<UtteranceRecord>,
    pub duplicates: Vec<DuplicateAudio>,
}

/// SHA-256 over the PCM16 samples after conversion to 16 kHz, so one recording
/// stored at different rates hashes the same.
pub fn audio_digest(buf: &AudioBuffer) -> String {
    let canonical = resample_to_16k(buf);
    let mut hasher = Sha256::new();
    for s in canonical.to_pcm16() {
        hasher.update(s.to_le_bytes());
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn is_wav(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

/// Audio files under a directory (recursive) or named in a listing file, each
/// paired with the id stem derived from it. Sorted by path.
fn collect_inputs(source: &Path) -> Result<Vec<(PathBuf, String)>, CorpusError> {
    let mut inputs = Vec::new();
    if source.is_dir() {
        for entry in WalkDir::new(source).sort_by_file_name() {
            let entry = entry.map_err(|e| CorpusError::Io(e.into()))?;
            let path = entry.path();
            if entry.file_type().is_file() && is_wav(path) {
                let rel = path.strip_prefix(source).unwrap_or(path).with_extension("");
                let stem = rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                inputs.push((path.to_path_buf(), stem));
            }
        }
    } else {
        let base = source.parent().unwrap_or(Path::new(""));
        for line in fs::read_to_string(source)?.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let path = base.join(line);
            let stem = Path::new(line)
                .with_extension("")
                .to_string_lossy()
                .replace('\\', "/");
            inputs.push((path, stem));
        }
    }
    inputs.sort();
    Ok(inputs)
}

struct Loaded {
    path: PathBuf,
    record: UtteranceRecord,
    digest: String,
}

fn load_one(path: &Path, stem: &str, opts: &IngestOptions) -> Result<Loaded, CorpusError> {
    let buf = read_wav(path).map_err(|e| CorpusError::UnreadableAudio {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let transcript = if opts.split.is_labeled() {
        let sidecar = path.with_extension("txt");
        let raw = fs::read_to_string(&sidecar)
            .map_err(|_| CorpusError::MissingTranscript(path.to_path_buf()))?;
        Some(normalize(&raw, opts.profile))
    } else {
        None
    };
    Ok(Loaded {
        path: path.to_path_buf(),
        digest: audio_digest(&buf),
        record: UtteranceRecord {
            id: format!("{}/{}", opts.dataset, stem),
            audio_path: path.to_path_buf(),
            duration_s: buf.duration_s(),
            lang: opts.lang,
            dataset: opts.dataset.clone(),
            split: opts.split,
            transcript,
            source_url: None,
        },
    })
}

/// Builds one record per audio file. Files whose audio digest repeats an
/// earlier file (in path order) are dropped and reported.
pub fn ingest(source: impl AsRef<Path>, opts: &IngestOptions) -> Result<IngestReport, CorpusError> {
    let inputs = collect_inputs(source.as_ref())?;
    let loaded: Vec<Result<Loaded, CorpusError>> = inputs
        .par_iter()
        .map(|(path, stem)| load_one(path, stem, opts))
        .collect();

    let mut seen: HashMap<String, String> = HashMap::new();
    let mut records = Vec::new();
    let mut duplicates = Vec::new();
    for item in loaded {
        let item = item?;
        match seen.get(&item.digest) {
            Some(kept) => duplicates.push(DuplicateAudio {
                path: item.path,
                kept_id: kept.clone(),
            }),
            None => {
                seen.insert(item.digest, item.record.id.clone());
                records.push(item.record);
            }
        }
    }
    if !duplicates.is_empty() {
        log::info!("dropped {} duplicate audio files", duplicates.len());
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    super::manifest::validate_manifest(&records)?;
    Ok(IngestReport {
        records,
        duplicates,
    })
}
