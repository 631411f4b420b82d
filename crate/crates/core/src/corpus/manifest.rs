use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::lang::Lang;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Pretrain,
    Train,
    Valid,
    Test,
}

impl Split {
    pub const LABELED: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Pretrain => "pretrain",
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    pub fn is_labeled(&self) -> bool {
        *self != Split::Pretrain
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pretrain" => Ok(Split::Pretrain),
            "train" => Ok(Split::Train),
            "valid" | "validation" | "dev" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            _ => Err(CorpusError::InvalidRecord(format!("unknown split {s:?}"))),
        }
    }
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub id: String,
    pub audio_path: PathBuf,
    pub duration_s: f64,
    pub lang: Lang,
    pub dataset: String,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_url: Option<String>,
}

impl UtteranceRecord {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(CorpusError::InvalidRecord(format!(
                "{}: duration_s must be positive, got {}",
                self.id, self.duration_s
            )));
        }
        if self.split.is_labeled() != self.transcript.is_some() {
            return Err(CorpusError::InvalidRecord(format!(
                "{}: transcript must be present exactly when split is not pretrain",
                self.id
            )));
        }
        Ok(())
    }
}

/// Checks every record and id uniqueness.
pub fn validate_manifest(records: &[UtteranceRecord]) -> Result<(), CorpusError> {
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        r.validate()?;
        if !seen.insert(r.id.as_str()) {
            return Err(CorpusError::InvalidRecord(format!("duplicate id {}", r.id)));
        }
    }
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<UtteranceRecord>, CorpusError> {
    let file = fs::File::open(path.as_ref())?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: UtteranceRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedManifest {
                line: i + 1,
                reason: e.to_string(),
            })?;
        records.push(record);
    }
    validate_manifest(&records)?;
    Ok(records)
}

pub fn manifest_to_jsonl(records: &[UtteranceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_manifest(
    records: &[UtteranceRecord],
    path: impl AsRef<Path>,
) -> Result<(), CorpusError> {
    let mut file = fs::File::create(path.as_ref())?;
    file.write_all(manifest_to_jsonl(records).as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, split: Split, transcript: Option<&str>) -> UtteranceRecord {
        UtteranceRecord {
            id: id.into(),
            audio_path: format!("{id}.wav").into(),
            duration_s: 1.5,
            lang: Lang::Urdu,
            dataset: "cv".into(),
            split,
            transcript: transcript.map(String::from),
            source_url: None,
        }
    }

    #[test]
    fn jsonl_roundtrip() {
        let records = vec![
            record("a", Split::Pretrain, None),
            record("b", Split::Test, Some("سلام")),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        write_manifest(&records, &path).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), records);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text
            .lines()
            .next()
            .unwrap()
            .contains("\"split\":\"pretrain\""));
        assert!(!text.lines().next().unwrap().contains("transcript"));
    }

    #[test]
    fn transcript_presence_follows_split() {
        assert!(record("a", Split::Pretrain, Some("x")).validate().is_err());
        assert!(record("a", Split::Train, None).validate().is_err());
        let mut r = record("a", Split::Train, Some("x"));
        r.duration_s = 0.0;
        assert!(r.validate().is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let r = record("a", Split::Pretrain, None);
        assert!(validate_manifest(&[r.clone(), r]).is_err());
    }

    #[test]
    fn malformed_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        fs::write(&path, "{\"id\": 3}\n").unwrap();
        assert!(matches!(
            read_manifest(&path),
            Err(CorpusError::MalformedManifest { line: 1, .. })
        ));
    }
}
