//! Word-internal byte-pair-encoding vocabularies and the CTC output symbol
//! table built from them.
//!
//! Sentences are split into words on whitespace and merges never cross a word
//! boundary. Between words the CTC layer emits a dedicated `<wb>` symbol, so
//! piece strings carry no boundary markers and decoding regroups pieces into
//! words by splitting on `<wb>`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;
use unicode_segmentation::UnicodeSegmentation;

use crate::lang::Lang;

pub const BLANK: &str = "<blank>";
pub const WB: &str = "<wb>";
pub const UNK: &str = "<unk>";

pub const BLANK_ID: usize = 0;
pub const WB_ID: usize = 1;
pub const UNK_ID: usize = 2;
/// Number of table slots ahead of the first piece.
pub const RESERVED: usize = 3;

/// Subword budget used when none is given.
pub const DEFAULT_VOCAB_SIZE: usize = 512;

#[derive(Debug, Error)]
pub enum BpeError {
    #[error("EmptyCorpus: no words to train on")]
    EmptyCorpus,
    #[error("VocabTooSmall: vocab_size {vocab_size} < {chars} distinct characters + {RESERVED} reserved symbols")]
    VocabTooSmall { vocab_size: usize, chars: usize },
    #[error("InvalidIndex: {0} is not a piece of the symbol table")]
    InvalidIndex(usize),
    #[error("MalformedModel: line {line}: {reason}")]
    MalformedModel { line: usize, reason: String },
    #[error("IoFailure: {0}")]
    Io(#[from] std::io::Error),
}

/// Dense index→symbol map for the CTC output layer: `<blank>`, `<wb>`,
/// `<unk>`, then pieces (or characters).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CtcSymbolTable {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl CtcSymbolTable {
    pub fn from_pieces<I, S>(pieces: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut symbols: Vec<String> = [BLANK, WB, UNK].map(String::from).to_vec();
        symbols.extend(pieces.into_iter().map(Into::into));
        let index = symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Self { symbols, index }
    }

    /// Character mode: one symbol per distinct grapheme cluster, sorted.
    pub fn from_corpus_chars<S: AsRef<str>>(sentences: &[S]) -> Self {
        let graphemes: BTreeSet<&str> = sentences
            .iter()
            .flat_map(|s| s.as_ref().graphemes(true))
            .filter(|g| !g.chars().all(char::is_whitespace))
            .collect();
        Self::from_pieces(graphemes)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbol(&self, id: usize) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }

    pub fn id_of(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    /// Character-mode encoding of a normalized sentence.
    pub fn encode_chars(&self, sentence: &str) -> Vec<usize> {
        let mut ids = Vec::new();
        for word in sentence.split_whitespace() {
            if !ids.is_empty() {
                ids.push(WB_ID);
            }
            ids.extend(
                word.graphemes(true)
                    .map(|g| self.id_of(g).filter(|&i| i >= RESERVED).unwrap_or(UNK_ID)),
            );
        }
        ids
    }

    /// Concatenates piece strings, starting a new word at every `<wb>`.
    pub fn decode(&self, ids: &[usize]) -> Result<Decoded, BpeError> {
        let mut words: Vec<String> = Vec::new();
        let mut current = String::new();
        let mut unk_count = 0;
        for &id in ids {
            match id {
                BLANK_ID => return Err(BpeError::InvalidIndex(id)),
                WB_ID => {
                    if !current.is_empty() {
                        words.push(std::mem::take(&mut current));
                    }
                }
                UNK_ID => unk_count += 1,
                _ => current.push_str(self.symbol(id).ok_or(BpeError::InvalidIndex(id))?),
            }
        }
        if !current.is_empty() {
            words.push(current);
        }
        Ok(Decoded {
            text: words.join(" "),
            unk_count,
        })
    }

    /// One symbol per line; the line number is the index.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.symbols {
            out.push_str(s);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, BpeError> {
        let symbols: Vec<&str> = text.lines().collect();
        for (i, expected) in [BLANK, WB, UNK].iter().enumerate() {
            if symbols.get(i) != Some(expected) {
                return Err(BpeError::MalformedModel {
                    line: i + 1,
                    reason: format!("expected reserved symbol {expected}"),
                });
            }
        }
        let mut seen = HashMap::new();
        for (i, s) in symbols.iter().enumerate() {
            if s.is_empty() {
                return Err(BpeError::MalformedModel {
                    line: i + 1,
                    reason: "empty symbol".into(),
                });
            }
            if let Some(prev) = seen.insert(*s, i) {
                return Err(BpeError::MalformedModel {
                    line: i + 1,
                    reason: format!("duplicate of line {}", prev + 1),
                });
            }
        }
        Ok(Self::from_pieces(symbols[RESERVED..].iter().copied()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), BpeError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BpeError> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

/// Decoded transcript plus the number of `<unk>` pieces dropped from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub text: String,
    pub unk_count: usize,
}

/// A trained merge list and the vocabulary it induces.
#[derive(Debug, Clone)]
pub struct BpeModel {
    lang: Lang,
    vocab_size_target: usize,
    base_symbols: Vec<char>,
    merges: Vec<(String, String)>,
    table: CtcSymbolTable,
    /// (left id, right id) → (rank, merged id), ids in table space
    merge_lookup: HashMap<(usize, usize), (usize, usize)>,
}

impl PartialEq for BpeModel {
    fn eq(&self, other: &Self) -> bool {
        self.lang == other.lang
            && self.vocab_size_target == other.vocab_size_target
            && self.base_symbols == other.base_symbols
            && self.merges == other.merges
    }
}

impl BpeModel {
    fn assemble(
        lang: Lang,
        vocab_size_target: usize,
        base_symbols: Vec<char>,
        merges: Vec<(String, String)>,
    ) -> Result<Self, BpeError> {
        let mut pieces: Vec<String> = base_symbols.iter().map(|c| c.to_string()).collect();
        let mut known: HashMap<String, usize> = pieces
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i + RESERVED))
            .collect();
        let mut merge_lookup = HashMap::with_capacity(merges.len());
        for (rank, (l, r)) in merges.iter().enumerate() {
            let missing = |p: &str| BpeError::MalformedModel {
                line: 0,
                reason: format!("merge {rank} uses unknown piece {p:?}"),
            };
            let lid = *known.get(l).ok_or_else(|| missing(l))?;
            let rid = *known.get(r).ok_or_else(|| missing(r))?;
            let joined = format!("{l}{r}");
            let next_id = pieces.len() + RESERVED;
            let mid = *known.entry(joined.clone()).or_insert_with(|| {
                pieces.push(joined);
                next_id
            });
            merge_lookup.entry((lid, rid)).or_insert((rank, mid));
        }
        Ok(Self {
            lang,
            vocab_size_target,
            base_symbols,
            merges,
            table: CtcSymbolTable::from_pieces(pieces),
            merge_lookup,
        })
    }

    pub fn lang(&self) -> Lang {
        self.lang
    }

    pub fn vocab_size_target(&self) -> usize {
        self.vocab_size_target
    }

    pub fn base_symbols(&self) -> &[char] {
        &self.base_symbols
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    /// Subword pieces, excluding the reserved symbols.
    pub fn pieces(&self) -> &[String] {
        &self.table.symbols()[RESERVED..]
    }

    pub fn symbol_table(&self) -> &CtcSymbolTable {
        &self.table
    }

    /// Encodes one word to symbol-table ids by applying merges in learned
    /// order. Characters outside the base alphabet become `<unk>` and block
    /// merges across them.
    pub fn encode_word(&self, word: &str) -> Vec<usize> {
        let mut seq: Vec<usize> = word
            .chars()
            .map(|c| {
                let mut buf = [0u8; 4];
                self.table
                    .id_of(c.encode_utf8(&mut buf))
                    .filter(|&id| id >= RESERVED)
                    .unwrap_or(UNK_ID)
            })
            .collect();
        loop {
            let best = seq
                .windows(2)
                .filter_map(|w| {
                    self.merge_lookup
                        .get(&(w[0], w[1]))
                        .map(|&m| (m, (w[0], w[1])))
                })
                .min_by_key(|((rank, _), _)| *rank);
            let Some(((_, merged), (l, r))) = best else {
                break;
            };
            let mut out = Vec::with_capacity(seq.len());
            let mut i = 0;
            while i < seq.len() {
                if i + 1 < seq.len() && seq[i] == l && seq[i + 1] == r {
                    out.push(merged);
                    i += 2;
                } else {
                    out.push(seq[i]);
                    i += 1;
                }
            }
            seq = out;
        }
        seq
    }

    /// Words encoded independently and joined by `<wb>`.
    pub fn encode_sentence(&self, sentence: &str) -> Vec<usize> {
        let mut ids = Vec::new();
        for word in sentence.split_whitespace() {
            if !ids.is_empty() {
                ids.push(WB_ID);
            }
            ids.extend(self.encode_word(word));
        }
        ids
    }

    pub fn decode_pieces(&self, ids: &[usize]) -> Result<String, BpeError> {
        let decoded = self.table.decode(ids)?;
        if decoded.unk_count > 0 {
            log::warn!("dropped {} <unk> pieces while decoding", decoded.unk_count);
        }
        Ok(decoded.text)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "#bpe v1 lang={} vocab={}\n#base {}\n",
            self.lang,
            self.vocab_size_target,
            self.base_symbols.len()
        );
        for c in &self.base_symbols {
            out.push(*c);
            out.push('\n');
        }
        let _ = writeln!(out, "#merges {}", self.merges.len());
        for (l, r) in &self.merges {
            let _ = writeln!(out, "{l}\t{r}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, BpeError> {
        let malformed = |line: usize, reason: &str| BpeError::MalformedModel {
            line,
            reason: reason.to_string(),
        };
        let lines: Vec<&str> = text.lines().collect();
        let header = lines
            .first()
            .ok_or_else(|| malformed(1, "empty model file"))?;
        let fields: BTreeMap<&str, &str> = header
            .strip_prefix("#bpe v1")
            .ok_or_else(|| malformed(1, "expected '#bpe v1' header"))?
            .split_whitespace()
            .filter_map(|f| f.split_once('='))
            .collect();
        let lang: Lang = fields
            .get("lang")
            .ok_or_else(|| malformed(1, "missing lang"))?
            .parse()
            .map_err(|e: crate::lang::UnknownLang| malformed(1, &e.to_string()))?;
        let vocab: usize = fields
            .get("vocab")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| malformed(1, "missing or invalid vocab"))?;

        let section_len = |at: usize, name: &str| -> Result<usize, BpeError> {
            lines
                .get(at)
                .and_then(|l| l.strip_prefix(name))
                .and_then(|n| n.trim().parse().ok())
                .ok_or_else(|| malformed(at + 1, &format!("expected '{name} <count>'")))
        };
        let n_base = section_len(1, "#base")?;
        let mut base_symbols = Vec::with_capacity(n_base);
        for at in 2..2 + n_base {
            let line = lines
                .get(at)
                .ok_or_else(|| malformed(at + 1, "truncated base section"))?;
            let mut chars = line.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => base_symbols.push(c),
                _ => return Err(malformed(at + 1, "base symbol must be one character")),
            }
        }
        let merges_at = 2 + n_base;
        let n_merges = section_len(merges_at, "#merges")?;
        let mut merges = Vec::with_capacity(n_merges);
        for at in merges_at + 1..merges_at + 1 + n_merges {
            let line = lines
                .get(at)
                .ok_or_else(|| malformed(at + 1, "truncated merges section"))?;
            let (l, r) = line
                .split_once('\t')
                .ok_or_else(|| malformed(at + 1, "expected L<TAB>R"))?;
            merges.push((l.to_string(), r.to_string()));
        }
        Self::assemble(lang, vocab, base_symbols, merges)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), BpeError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BpeError> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

/// Learns merges until the vocabulary holds `vocab_size` pieces or no
/// adjacent pair is left. Pair counts are weighted by word frequency; equal
/// counts go to the lexicographically smallest `(left, right)`.
pub fn train_bpe<S: AsRef<str>>(
    corpus: &[S],
    vocab_size: usize,
    lang: Lang,
) -> Result<BpeModel, BpeError> {
    let mut word_freqs: BTreeMap<&str, usize> = BTreeMap::new();
    for sentence in corpus {
        for word in sentence.as_ref().split_whitespace() {
            *word_freqs.entry(word).or_default() += 1;
        }
    }
    if word_freqs.is_empty() {
        return Err(BpeError::EmptyCorpus);
    }
    let base: BTreeSet<char> = word_freqs.keys().flat_map(|w| w.chars()).collect();
    if vocab_size < base.len() + RESERVED {
        return Err(BpeError::VocabTooSmall {
            vocab_size,
            chars: base.len(),
        });
    }

    // interned piece strings; words are sequences of piece ids
    let mut pieces: Vec<String> = base.iter().map(|c| c.to_string()).collect();
    let mut piece_ids: HashMap<String, u32> = pieces
        .iter()
        .enumerate()
        .map(|(i, p)| (p.clone(), i as u32))
        .collect();
    let char_id: HashMap<char, u32> = base
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i as u32))
        .collect();
    let mut words: Vec<(Vec<u32>, usize)> = word_freqs
        .iter()
        .map(|(w, &f)| (w.chars().map(|c| char_id[&c]).collect(), f))
        .collect();

    let mut merges: Vec<(String, String)> = Vec::new();
    while pieces.len() < vocab_size {
        let mut counts: HashMap<(u32, u32), usize> = HashMap::new();
        for (seq, freq) in &words {
            for w in seq.windows(2) {
                *counts.entry((w[0], w[1])).or_default() += freq;
            }
        }
        let best = counts.into_iter().max_by(|(pa, ca), (pb, cb)| {
            ca.cmp(cb).then_with(|| {
                // smaller strings win ties, so compare reversed
                let ka = (&pieces[pa.0 as usize], &pieces[pa.1 as usize]);
                let kb = (&pieces[pb.0 as usize], &pieces[pb.1 as usize]);
                kb.cmp(&ka)
            })
        });
        let Some(((l, r), _)) = best else { break };
        let joined = format!("{}{}", pieces[l as usize], pieces[r as usize]);
        merges.push((pieces[l as usize].clone(), pieces[r as usize].clone()));
        let merged = *piece_ids.entry(joined.clone()).or_insert_with(|| {
            pieces.push(joined);
            (pieces.len() - 1) as u32
        });
        for (seq, _) in &mut words {
            if seq.len() < 2 {
                continue;
            }
            let mut out = Vec::with_capacity(seq.len());
            let mut i = 0;
            while i < seq.len() {
                if i + 1 < seq.len() && seq[i] == l && seq[i + 1] == r {
                    out.push(merged);
                    i += 2;
                } else {
                    out.push(seq[i]);
                    i += 1;
                }
            }
            *seq = out;
        }
    }
    BpeModel::assemble(lang, vocab_size, base.into_iter().collect(), merges)
}

/// Either tokenization mode behind one interface.
#[derive(Debug, Clone)]
pub enum Tokenizer {
    Char(CtcSymbolTable),
    Subword(BpeModel),
}

impl Tokenizer {
    pub fn table(&self) -> &CtcSymbolTable {
        match self {
            Tokenizer::Char(t) => t,
            Tokenizer::Subword(m) => m.symbol_table(),
        }
    }

    pub fn encode(&self, sentence: &str) -> Vec<usize> {
        match self {
            Tokenizer::Char(t) => t.encode_chars(sentence),
            Tokenizer::Subword(m) => m.encode_sentence(sentence),
        }
    }

    pub fn decode(&self, ids: &[usize]) -> Result<String, BpeError> {
        match self {
            Tokenizer::Char(t) => Ok(t.decode(ids)?.text),
            Tokenizer::Subword(m) => m.decode_pieces(ids),
        }
    }

    pub fn mode(&self) -> &'static str {
        match self {
            Tokenizer::Char(_) => "char",
            Tokenizer::Subword(_) => "subword",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn syms(model: &BpeModel, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&i| model.symbol_table().symbol(i).unwrap().to_string())
            .collect()
    }

    #[test]
    fn abab_hand_run() {
        // pairs in "abab": (a,b)x2, (b,a)x1 -> merge (a,b); then [ab, ab] -> (ab,ab)
        let model = train_bpe(&["abab"], 6, Lang::Persian).unwrap();
        assert_eq!(
            model.merges(),
            &[
                ("a".to_string(), "b".to_string()),
                ("ab".to_string(), "ab".to_string())
            ]
        );
        assert_eq!(model.pieces(), &["a", "b", "ab", "abab"]);
        assert_eq!(syms(&model, &model.encode_word("abab")), vec!["abab"]);
        let ab = model.symbol_table().id_of("ab").unwrap();
        assert_eq!(
            model.decode_pieces(&[ab, WB_ID, ab, ab]).unwrap(),
            "ab abab"
        );
    }

    #[test]
    fn distinct_single_characters_need_no_merges() {
        let model = train_bpe(&["ا ب پ ت ث"], 64, Lang::Persian).unwrap();
        assert!(model.merges().is_empty());
        assert_eq!(model.pieces(), &["ا", "ب", "ت", "ث", "پ"]);
    }

    #[test]
    fn stops_at_vocab_size() {
        let corpus = ["abcd abcd abce", "bcde xbcd"];
        let model = train_bpe(&corpus, 9, Lang::Urdu).unwrap();
        assert_eq!(model.pieces().len(), 9);
    }

    #[test]
    fn training_errors() {
        let empty: [&str; 0] = [];
        assert!(matches!(
            train_bpe(&empty, 512, Lang::Persian),
            Err(BpeError::EmptyCorpus)
        ));
        assert!(matches!(
            train_bpe(&["   "], 512, Lang::Persian),
            Err(BpeError::EmptyCorpus)
        ));
        assert!(matches!(
            train_bpe(&["abcdef"], 8, Lang::Persian),
            Err(BpeError::VocabTooSmall {
                vocab_size: 8,
                chars: 6
            })
        ));
    }

    #[test]
    fn unknown_characters_map_to_unk() {
        let model = train_bpe(&["سلام دنیا سلام"], 64, Lang::Persian).unwrap();
        assert_eq!(syms(&model, &model.encode_word("ا")), vec!["ا"]);
        let ids = model.encode_word("سqلام");
        assert_eq!(ids[1], UNK_ID);
        assert_eq!(model.symbol_table().decode(&ids).unwrap().unk_count, 1);
    }

    #[test]
    fn sentence_roundtrip() {
        let model = train_bpe(&["سلام دنیا", "سلام بر دنیا"], 64, Lang::Persian).unwrap();
        let ids = model.encode_sentence("سلام دنیا");
        assert_eq!(model.decode_pieces(&ids).unwrap(), "سلام دنیا");
        assert_eq!(model.decode_pieces(&[WB_ID]).unwrap(), "");
    }

    #[test]
    fn decode_rejects_bad_ids() {
        let model = train_bpe(&["ab"], 16, Lang::Persian).unwrap();
        assert!(matches!(
            model.decode_pieces(&[99]),
            Err(BpeError::InvalidIndex(99))
        ));
        assert!(matches!(
            model.decode_pieces(&[BLANK_ID]),
            Err(BpeError::InvalidIndex(0))
        ));
    }

    #[test]
    fn symbol_table_layout() {
        let t = CtcSymbolTable::from_pieces(["a", "b", "ab"]);
        assert_eq!(t.symbols(), &["<blank>", "<wb>", "<unk>", "a", "b", "ab"]);
        let c = CtcSymbolTable::from_corpus_chars(&["اب"]);
        assert_eq!(c.symbols(), &["<blank>", "<wb>", "<unk>", "ا", "ب"]);
        let back = CtcSymbolTable::parse(&t.to_text()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn symbol_table_parse_errors() {
        assert!(CtcSymbolTable::parse("a\nb\n").is_err());
        assert!(CtcSymbolTable::parse("<blank>\n<wb>\n<unk>\na\na\n").is_err());
    }

    #[test]
    fn char_mode_encode_decode() {
        let t = CtcSymbolTable::from_corpus_chars(&["اب جد"]);
        let ids = t.encode_chars("اب جد");
        assert_eq!(ids.len(), 5);
        assert_eq!(ids[2], WB_ID);
        assert_eq!(t.decode(&ids).unwrap().text, "اب جد");
    }

    #[test]
    fn model_file_roundtrip() {
        let model = train_bpe(&["abab abc", "cab"], 12, Lang::Arabic).unwrap();
        let text = model.to_text();
        assert!(text.starts_with("#bpe v1 lang=arabic vocab=12\n#base 3\n"));
        let back = BpeModel::parse(&text).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.symbol_table(), model.symbol_table());
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn model_parse_errors() {
        assert!(BpeModel::parse("").is_err());
        assert!(BpeModel::parse("#bpe v2 lang=arabic vocab=3\n").is_err());
        assert!(
            BpeModel::parse("#bpe v1 lang=arabic vocab=3\n#base 1\na\n#merges 1\na\tz\n").is_err()
        );
        assert!(BpeModel::parse("#bpe v1 lang=arabic vocab=3\n#base 2\na\n").is_err());
    }

    #[test]
    fn continued_training_extends_merge_list() {
        let corpus = ["abcab bcabc", "cabbac abc"];
        let short = train_bpe(&corpus, 8, Lang::Persian).unwrap();
        let long = train_bpe(&corpus, 12, Lang::Persian).unwrap();
        assert!(long.merges().len() >= short.merges().len());
        assert_eq!(&long.merges()[..short.merges().len()], short.merges());
    }
}
