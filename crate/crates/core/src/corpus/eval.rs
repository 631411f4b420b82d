//! Edit-distance alignment and pooled WER/CER reports.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use super::manifest::UtteranceRecord;
use super::stats::render_table;
use super::CorpusError;
use crate::lang::Lang;
use crate::text::{char_tokenize, normalize, LangProfile, WORD_BOUNDARY};

/// Levenshtein distance with its substitution/insertion/deletion breakdown.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EditOps {
    pub distance: usize,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl std::ops::Add for EditOps {
    type Output = EditOps;

    fn add(self, o: EditOps) -> EditOps {
        EditOps {
            distance: self.distance + o.distance,
            substitutions: self.substitutions + o.substitutions,
            insertions: self.insertions + o.insertions,
            deletions: self.deletions + o.deletions,
        }
    }
}

/// Unit-cost edit distance from `reference` to `hypothesis`. When several
/// alignments are optimal the backtrace prefers a substitution (or match),
/// then a deletion, then an insertion.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditOps {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut dp = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        dp[i * w] = i;
    }
    for j in 0..=m {
        dp[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            dp[i * w + j] = (dp[(i - 1) * w + j - 1] + cost)
                .min(dp[(i - 1) * w + j] + 1)
                .min(dp[i * w + j - 1] + 1);
        }
    }
    let mut ops = EditOps {
        distance: dp[n * w + m],
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * w + j];
        if i > 0 && j > 0 {
            let cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            if here == dp[(i - 1) * w + j - 1] + cost {
                ops.substitutions += cost;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == dp[(i - 1) * w + j] + 1 {
            ops.deletions += 1;
            i -= 1;
        } else {
            ops.insertions += 1;
            j -= 1;
        }
    }
    ops
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TokenMode {
    Char,
    Subword,
}

impl TokenMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TokenMode::Char => "char",
            TokenMode::Subword => "subword",
        }
    }

    fn label(&self) -> &'static str {
        match self {
            TokenMode::Char => "Character-based",
            TokenMode::Subword => "Subword-based",
        }
    }
}

impl fmt::Display for TokenMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TokenMode {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "char" => Ok(TokenMode::Char),
            "subword" | "bpe" => Ok(TokenMode::Subword),
            _ => Err(CorpusError::InvalidRecord(format!(
                "unknown tokenization mode {s:?} (expected char or subword)"
            ))),
        }
    }
}

/// Normalization profiles keyed by language.
#[derive(Debug, Clone)]
pub struct ProfileSet {
    profiles: BTreeMap<Lang, LangProfile>,
}

impl ProfileSet {
    pub fn builtin() -> Self {
        Self {
            profiles: Lang::ALL
                .into_iter()
                .map(|l| (l, LangProfile::builtin(l)))
                .collect(),
        }
    }

    /// Replaces the profile for `lang`; the profile must declare that language.
    pub fn with_override(mut self, lang: Lang, profile: LangProfile) -> Result<Self, CorpusError> {
        if profile.lang != lang {
            return Err(CorpusError::LangProfileMismatch {
                id: String::new(),
                expected: lang,
                found: Some(profile.lang),
            });
        }
        self.profiles.insert(lang, profile);
        Ok(self)
    }

    pub fn only(profile: LangProfile) -> Self {
        Self {
            profiles: BTreeMap::from([(profile.lang, profile)]),
        }
    }

    pub fn get(&self, lang: Lang) -> Option<&LangProfile> {
        self.profiles.get(&lang)
    }
}

/// Pooled error counts for one (language, dataset).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalRow {
    pub utterances: usize,
    pub ref_words: usize,
    pub word_ops: EditOps,
    pub ref_chars: usize,
    pub char_ops: EditOps,
}

fn rate(errors: usize, total: usize) -> f64 {
    match (errors, total) {
        (0, _) => 0.0,
        (_, 0) => f64::INFINITY,
        (e, t) => e as f64 / t as f64,
    }
}

impl EvalRow {
    pub fn wer(&self) -> f64 {
        rate(self.word_ops.distance, self.ref_words)
    }

    pub fn cer(&self) -> f64 {
        rate(self.char_ops.distance, self.ref_chars)
    }

    fn merge(&mut self, o: &EvalRow) {
        self.utterances += o.utterances;
        self.ref_words += o.ref_words;
        self.word_ops = self.word_ops + o.word_ops;
        self.ref_chars += o.ref_chars;
        self.char_ops = self.char_ops + o.char_ops;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mode: TokenMode,
    /// Decoder that produced the hypotheses, when known (`greedy` or `beam`).
    pub decoder: Option<String>,
    pub rows: BTreeMap<(Lang, String), EvalRow>,
}

impl EvalReport {
    /// Pooled over every dataset of `lang`.
    pub fn language_total(&self, lang: Lang) -> Option<EvalRow> {
        let mut total: Option<EvalRow> = None;
        for ((l, _), row) in &self.rows {
            if *l == lang {
                total.get_or_insert_with(EvalRow::default).merge(row);
            }
        }
        total
    }

    pub fn overall(&self) -> EvalRow {
        let mut total = EvalRow::default();
        for row in self.rows.values() {
            total.merge(row);
        }
        total
    }

    pub fn render_table(&self) -> String {
        let header = [
            "Language", "Dataset", "Mode", "Utts", "RefWords", "S", "I", "D", "WER%", "CER%",
        ];
        let fmt_row = |lang: &str, dataset: &str, r: &EvalRow| {
            [
                lang.to_string(),
                dataset.to_string(),
                self.mode.to_string(),
                r.utterances.to_string(),
                r.ref_words.to_string(),
                r.word_ops.substitutions.to_string(),
                r.word_ops.insertions.to_string(),
                r.word_ops.deletions.to_string(),
                format!("{:.1}", 100.0 * r.wer()),
                format!("{:.1}", 100.0 * r.cer()),
            ]
        };
        let mut rows: Vec<[String; 10]> = self
            .rows
            .iter()
            .map(|((l, d), r)| fmt_row(l.title(), d, r))
            .collect();
        rows.push(fmt_row("All", "-", &self.overall()));
        render_table(&header, &rows)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "lang,dataset,mode,decoder,utterances,ref_words,substitutions,insertions,deletions,wer,ref_chars,char_errors,cer\n",
        );
        for ((lang, dataset), r) in &self.rows {
            let _ = writeln!(
                out,
                "{lang},{dataset},{},{},{},{},{},{},{},{:.6},{},{},{:.6}",
                self.mode,
                self.decoder.as_deref().unwrap_or(""),
                r.utterances,
                r.ref_words,
                r.word_ops.substitutions,
                r.word_ops.insertions,
                r.word_ops.deletions,
                r.wer(),
                r.ref_chars,
                r.char_ops.distance,
                r.cer()
            );
        }
        out
    }
}

/// Side-by-side WER (percent) of several runs, one row per run and one column
/// per language.
pub fn render_comparison(reports: &[EvalReport]) -> String {
    let header = ["Model", "Urdu", "Persian", "Arabic"];
    let rows: Vec<[String; 4]> = reports
        .iter()
        .map(|r| {
            let cell = |lang| {
                r.language_total(lang)
                    .map_or("-".to_string(), |t| format!("{:.1}", 100.0 * t.wer()))
            };
            [
                r.mode.label().to_string(),
                cell(Lang::Urdu),
                cell(Lang::Persian),
                cell(Lang::Arabic),
            ]
        })
        .collect();
    render_table(&header, &rows)
}

/// `id<TAB>text` per line.
pub fn parse_hypotheses(text: &str) -> Result<HashMap<String, String>, CorpusError> {
    let mut hyps = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, hyp) = line
            .split_once('\t')
            .ok_or(CorpusError::MalformedHypotheses { line: i + 1 })?;
        hyps.insert(id.to_string(), hyp.to_string());
    }
    Ok(hyps)
}

pub fn read_hypotheses(path: impl AsRef<Path>) -> Result<HashMap<String, String>, CorpusError> {
    parse_hypotheses(&fs::read_to_string(path)?)
}

fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

fn chars(text: &str) -> Vec<String> {
    char_tokenize(text)
        .into_iter()
        .map(|s| {
            if s == WORD_BOUNDARY {
                " ".to_string()
            } else {
                s
            }
        })
        .collect()
}

/// Scores `records` against `hypotheses`. Both sides are normalized with the
/// record language's profile; WER is pooled (total errors over total reference
/// words) per (language, dataset).
pub fn score(
    records: &[UtteranceRecord],
    hypotheses: &HashMap<String, String>,
    mode: TokenMode,
    profiles: &ProfileSet,
) -> Result<EvalReport, CorpusError> {
    let per_utt: Vec<Result<((Lang, String), EvalRow), CorpusError>> = records
        .par_iter()
        .map(|r| {
            let reference = r
                .transcript
                .as_deref()
                .ok_or_else(|| CorpusError::UnlabeledRecord(r.id.clone()))?;
            let hyp = hypotheses
                .get(&r.id)
                .ok_or_else(|| CorpusError::MissingHypothesis(r.id.clone()))?;
            let profile = profiles
                .get(r.lang)
                .ok_or_else(|| CorpusError::LangProfileMismatch {
                    id: r.id.clone(),
                    expected: r.lang,
                    found: None,
                })?;
            let (ref_norm, hyp_norm) = (normalize(reference, profile), normalize(hyp, profile));
            let (ref_words, hyp_words) = (words(&ref_norm), words(&hyp_norm));
            let (ref_chars, hyp_chars) = (chars(&ref_norm), chars(&hyp_norm));
            Ok((
                (r.lang, r.dataset.clone()),
                EvalRow {
                    utterances: 1,
                    ref_words: ref_words.len(),
                    word_ops: edit_distance(&ref_words, &hyp_words),
                    ref_chars: ref_chars.len(),
                    char_ops: edit_distance(&ref_chars, &hyp_chars),
                },
            ))
        })
        .collect();
    let mut rows: BTreeMap<(Lang, String), EvalRow> = BTreeMap::new();
    for item in per_utt {
        let (key, row) = item?;
        rows.entry(key).or_default().merge(&row);
    }
    Ok(EvalReport {
        mode,
        decoder: None,
        rows,
    })
}
