//! Script-aware transcript normalization for Urdu, Persian and Arabic.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;
use unicode_segmentation::UnicodeSegmentation;

use crate::lang::Lang;

/// Symbol emitted for a space by [`char_tokenize`].
pub const WORD_BOUNDARY: &str = "<wb>";

pub const ZWNJ: char = '\u{200C}';

static PUNCTUATION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\p{P}").unwrap());
static STRIPPABLE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[\p{M}\p{Cf}\x{0640}]$").unwrap());

const PERSIAN_PROFILE: &str = include_str!("../data/persian.profile");
const URDU_PROFILE: &str = include_str!("../data/urdu.profile");
const ARABIC_PROFILE: &str = include_str!("../data/arabic.profile");

/// Upper bound on normalization passes before giving up on a fixed point.
const MAX_PASSES: usize = 16;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("MalformedProfile: line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("IoFailure: {0}")]
    Io(#[from] std::io::Error),
}

/// Rule set for one language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LangProfile {
    pub lang: Lang,
    pub fold_table: BTreeMap<char, char>,
    pub strip_set: BTreeSet<char>,
    pub digit_map: BTreeMap<char, char>,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Strip,
    Fold,
    Digits,
}

fn parse_codepoint(field: &str, line: usize) -> Result<char, ProfileError> {
    u32::from_str_radix(field.trim(), 16)
        .ok()
        .and_then(char::from_u32)
        .ok_or_else(|| ProfileError::Malformed {
            line,
            reason: format!("invalid codepoint {field:?}"),
        })
}

impl LangProfile {
    /// The profile shipped in `data/<lang>.profile`.
    pub fn builtin(lang: Lang) -> LangProfile {
        let text = match lang {
            Lang::Persian => PERSIAN_PROFILE,
            Lang::Urdu => URDU_PROFILE,
            Lang::Arabic => ARABIC_PROFILE,
        };
        Self::parse(text).expect("shipped profile is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LangProfile, ProfileError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<LangProfile, ProfileError> {
        let mut lang = None;
        let mut section = Section::None;
        let mut fold_table = BTreeMap::new();
        let mut strip_set = BTreeSet::new();
        let mut digit_map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let malformed = |reason: String| ProfileError::Malformed {
                line: line_no,
                reason,
            };
            match line.trim() {
                "[strip]" => section = Section::Strip,
                "[fold]" => section = Section::Fold,
                "[digits]" => section = Section::Digits,
                other if other.starts_with("lang=") => {
                    let tag = &other["lang=".len()..];
                    lang = Some(tag.parse::<Lang>().map_err(|e| malformed(e.to_string()))?);
                }
                _ => {
                    let mut fields = line.split('\t');
                    let src = parse_codepoint(fields.next().unwrap_or(""), line_no)?;
                    match section {
                        Section::Strip => {
                            if !STRIPPABLE.is_match(src.encode_utf8(&mut [0; 4])) {
                                return Err(malformed(format!(
                                    "U+{:04X} is not a combining mark or format control",
                                    src as u32
                                )));
                            }
                            strip_set.insert(src);
                        }
                        Section::Fold | Section::Digits => {
                            let dst = fields
                                .next()
                                .ok_or_else(|| malformed("expected SRC<TAB>DST".into()))
                                .and_then(|f| parse_codepoint(f, line_no))?;
                            let table = if section == Section::Fold {
                                &mut fold_table
                            } else {
                                &mut digit_map
                            };
                            table.insert(src, dst);
                        }
                        Section::None => {
                            return Err(malformed("mapping outside of a section".into()))
                        }
                    }
                }
            }
        }
        let lang = lang.ok_or(ProfileError::Malformed {
            line: 0,
            reason: "missing lang= line".into(),
        })?;
        // images must be fixed points so a single application is idempotent
        for table in [&fold_table, &digit_map] {
            if let Some((src, dst)) = table.iter().find(|(_, dst)| table.contains_key(dst)) {
                return Err(ProfileError::Malformed {
                    line: 0,
                    reason: format!(
                        "U+{:04X} maps to U+{:04X}, which is itself remapped",
                        *src as u32, *dst as u32
                    ),
                });
            }
        }
        Ok(LangProfile {
            lang,
            fold_table,
            strip_set,
            digit_map,
        })
    }

    pub fn keeps_zwnj(&self) -> bool {
        !self.strip_set.contains(&ZWNJ)
    }

    fn map_char(&self, c: char) -> Option<char> {
        if self.strip_set.contains(&c) {
            return None;
        }
        let c = self.fold_table.get(&c).copied().unwrap_or(c);
        let c = self.digit_map.get(&c).copied().unwrap_or(c);
        Some(c)
    }

    fn pass(&self, text: &str) -> String {
        let mut mapped = String::with_capacity(text.len());
        for c in text.nfc() {
            let Some(c) = self.map_char(c) else { continue };
            if is_latin(c) {
                mapped.extend(c.to_lowercase());
            } else {
                mapped.push(c);
            }
        }
        let depunct = PUNCTUATION.replace_all(&mapped, " ");
        let mut out = String::with_capacity(depunct.len());
        for word in depunct.split_whitespace() {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(word);
        }
        out
    }
}

fn is_latin(c: char) -> bool {
    matches!(c, 'A'..='Z' | '\u{00C0}'..='\u{024F}' | '\u{1E00}'..='\u{1EFF}')
}

/// Canonical form of `text` under `profile`: composition, mark and control
/// stripping, letter folding, digit mapping, punctuation removal (replaced by a
/// word break) and whitespace collapse. Passes repeat until the text stops
/// changing, which makes the result idempotent.
pub fn normalize(text: &str, profile: &LangProfile) -> String {
    let mut current = profile.pass(text);
    for _ in 1..MAX_PASSES {
        let next = profile.pass(&current);
        if next == current {
            return current;
        }
        current = next;
    }
    current
}

/// One symbol per extended grapheme cluster; spaces become [`WORD_BOUNDARY`].
pub fn char_tokenize(text: &str) -> Vec<String> {
    text.graphemes(true)
        .map(|g| {
            if g.chars().all(char::is_whitespace) {
                WORD_BOUNDARY.to_string()
            } else {
                g.to_string()
            }
        })
        .collect()
}
