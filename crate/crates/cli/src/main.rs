//! `asrforge`: corpus curation, tokenization, CTC decoding and scoring for
//! Perso-Arabic speech recognition.
//!
//! Every option can also be set in a `key = value` file passed with
//! `--config`, keyed by the long flag name. Flags win over the file, and the
//! file wins over built-in defaults.

use std::collections::BTreeMap;
use std::fmt::{Debug, Display};
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use asrforge_core::audio::{read_wav, resample_to_16k, write_wav};
use asrforge_core::bpe::{train_bpe, BpeModel, CtcSymbolTable, Tokenizer, DEFAULT_VOCAB_SIZE};
use asrforge_core::corpus::{
    ingest, read_hypotheses, read_manifest, render_comparison, score, split, stats, write_manifest,
    IngestOptions, ProfileSet, Split, SplitSpec, TokenMode,
};
use asrforge_core::ctc::{
    beam_decode, ctc_loss, greedy_decode, log_softmax, BeamConfig, LogitMatrix,
};
use asrforge_core::text::{normalize, LangProfile};
use asrforge_core::vad::{
    chunk_segments, compute_speech_probs, detect_segments, export_speech_probs,
    import_speech_probs, ChunkingConfig, EnergyVadConfig, FrameConfig,
};
use asrforge_core::Lang;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "asrforge", version, about)]
struct Cli {
    /// `key = value` file supplying defaults for any long option.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a JSONL manifest from a directory of WAV files or a listing.
    Ingest(IngestArgs),
    /// Estimate per-frame speech probabilities for one recording.
    Vad(VadArgs),
    /// Cut speech chunks from a speech-probability file.
    Chunk(ChunkArgs),
    /// Summarize hours and utterances per language, dataset and split.
    Stats(StatsArgs),
    /// Normalize transcripts line by line.
    Normalize(NormalizeArgs),
    /// Train a subword (or character) output vocabulary.
    BpeTrain(BpeTrainArgs),
    /// Map transcripts to output-symbol ids.
    Encode(EncodeArgs),
    /// CTC loss (and optionally its gradient) of a target under saved logits.
    CtcLoss(CtcLossArgs),
    /// Decode saved logits to text.
    Decode(DecodeArgs),
    /// Assign labeled records to train, valid and test.
    Split(SplitArgs),
    /// WER and CER of hypotheses against manifest references.
    Score(ScoreArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Directory scanned recursively, or a file listing one WAV path per line.
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    lang: Option<Lang>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    split: Option<String>,
    /// Normalization profile replacing the built-in one for `--lang`.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VadArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    frame_ms: Option<u32>,
    #[arg(long)]
    hop_ms: Option<u32>,
}

#[derive(Args)]
struct ChunkArgs {
    #[arg(long)]
    probs: Option<PathBuf>,
    /// Shortest chunk kept, in seconds.
    #[arg(long)]
    min: Option<f64>,
    /// Longest chunk kept, in seconds; longer spans are split.
    #[arg(long)]
    max: Option<f64>,
    /// Minimum mean speech probability of a kept chunk.
    #[arg(long)]
    thresh: Option<f64>,
    #[arg(long)]
    merge_gap: Option<f64>,
    #[arg(long)]
    onset: Option<f64>,
    #[arg(long)]
    offset: Option<f64>,
    /// Chunk listing (TSV); printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Recording to cut; chunks are written as WAV files into `--out-dir`.
    #[arg(long)]
    audio: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Show the per-dataset split table for one language.
    #[arg(long)]
    lang: Option<Lang>,
    /// Emit CSV instead of an aligned table.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct NormalizeArgs {
    #[arg(long)]
    lang: Option<Lang>,
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Input text (stdin when absent).
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Output text (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BpeTrainArgs {
    /// One transcript per line; normalized before training.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    lang: Option<Lang>,
    #[arg(long)]
    vocab: Option<usize>,
    /// `subword` trains merges; `char` writes a character symbol table.
    #[arg(long)]
    mode: Option<TokenMode>,
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Defaults to `<lang>.bpe` (or `<lang>.chars`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeArgs {
    /// BPE model or character symbol table.
    #[arg(long)]
    model: Option<PathBuf>,
    /// A single transcript; otherwise lines are read from `--in` or stdin.
    #[arg(long)]
    text: Option<String>,
    #[arg(long = "in")]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct CtcLossArgs {
    /// Logit matrix file.
    #[arg(long)]
    logits: Option<PathBuf>,
    /// Whitespace-separated symbol ids.
    #[arg(long)]
    target: Option<String>,
    /// Write the gradient, in the logit file format.
    #[arg(long)]
    grad: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    /// Logit matrix file, or a directory of them.
    #[arg(long)]
    logits: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// `beam` or `greedy`.
    #[arg(long)]
    decoder: Option<String>,
    #[arg(long)]
    beam_width: Option<usize>,
    #[arg(long)]
    prune: Option<f64>,
    /// Prepended as `<prefix>/` to every utterance id.
    #[arg(long)]
    prefix: Option<String>,
    /// Hypotheses as `id<TAB>text`; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Train:valid:test weights, e.g. `8:1:1`.
    #[arg(long, conflicts_with = "hours")]
    ratios: Option<String>,
    /// Train:valid:test hours per dataset, e.g. `4.23:0.73:0`.
    #[arg(long)]
    hours: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where records left over by `--hours` go.
    #[arg(long)]
    unused: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    refs: Option<PathBuf>,
    /// Hypothesis file(s); several produce a side-by-side comparison.
    #[arg(long, num_args = 1..)]
    hyps: Vec<PathBuf>,
    /// Tokenization mode per hypothesis file (`char` or `subword`).
    #[arg(long, num_args = 1..)]
    mode: Vec<TokenMode>,
    /// Decoder that produced the hypotheses, recorded in the report.
    #[arg(long)]
    decoder: Option<String>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(String),
}

fn data(e: impl Display) -> Failure {
    Failure::Data(e.to_string())
}

fn io_at(path: &Path) -> impl Fn(io::Error) -> Failure + '_ {
    move |e| Failure::Data(format!("IoFailure: {}: {e}", path.display()))
}

type Outcome<T = ()> = Result<T, Failure>;

/// Layered option lookup that also records the effective configuration.
struct Settings {
    file: BTreeMap<String, String>,
    effective: BTreeMap<String, String>,
}

impl Settings {
    fn load(path: Option<&Path>) -> Outcome<Self> {
        let mut file = BTreeMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path).map_err(io_at(path))?;
            for (n, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    Failure::Usage(format!(
                        "{}:{}: expected key = value",
                        path.display(),
                        n + 1
                    ))
                })?;
                file.insert(k.trim().replace('_', "-"), v.trim().to_string());
            }
        }
        Ok(Settings {
            file,
            effective: BTreeMap::new(),
        })
    }

    fn optional<T>(&mut self, key: &str, flag: Option<T>) -> Outcome<Option<T>>
    where
        T: FromStr + Debug,
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(raw) => Some(raw.parse::<T>().map_err(|e| {
                    Failure::Usage(format!("config key {key}: invalid value {raw:?}: {e}"))
                })?),
                None => None,
            },
        };
        if let Some(v) = &value {
            self.effective.insert(key.to_string(), format!("{v:?}"));
        }
        Ok(value)
    }

    fn value<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Outcome<T>
    where
        T: FromStr + Debug,
        T::Err: Display,
    {
        match self.optional(key, flag)? {
            Some(v) => Ok(v),
            None => {
                self.effective
                    .insert(key.to_string(), format!("{default:?}"));
                Ok(default)
            }
        }
    }

    fn required<T>(&mut self, key: &str, flag: Option<T>) -> Outcome<T>
    where
        T: FromStr + Debug,
        T::Err: Display,
    {
        self.optional(key, flag)?.ok_or_else(|| {
            Failure::Usage(format!(
                "missing --{key} (or `{key} = ...` in the config file)"
            ))
        })
    }

    fn header(&self, command: &str) {
        let pairs: Vec<String> = self
            .effective
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        log::info!("asrforge {command}: {}", pairs.join(" "));
    }
}

fn profile_for(settings: &mut Settings, lang: Lang, flag: Option<PathBuf>) -> Outcome<LangProfile> {
    match settings.optional("profile", flag)? {
        Some(path) => {
            let p = LangProfile::load(&path).map_err(data)?;
            if p.lang != lang {
                return Err(Failure::Data(format!(
                    "LangProfileMismatch: {} is a {} profile, expected {lang}",
                    path.display(),
                    p.lang
                )));
            }
            Ok(p)
        }
        None => Ok(LangProfile::builtin(lang)),
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(path) => fs::write(path, text).map_err(io_at(path)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Data(format!("IoFailure: stdout: {e}"))),
    }
}

fn read_input(input: Option<&Path>) -> Outcome<String> {
    match input {
        Some(path) => fs::read_to_string(path).map_err(io_at(path)),
        None => {
            let mut s = String::new();
            io::stdin()
                .read_to_string(&mut s)
                .map_err(|e| Failure::Data(format!("IoFailure: stdin: {e}")))?;
            Ok(s)
        }
    }
}

fn load_tokenizer(path: &Path) -> Outcome<Tokenizer> {
    let text = fs::read_to_string(path).map_err(io_at(path))?;
    if text.starts_with("#bpe") {
        Ok(Tokenizer::Subword(BpeModel::parse(&text).map_err(data)?))
    } else {
        Ok(Tokenizer::Char(CtcSymbolTable::parse(&text).map_err(data)?))
    }
}

fn parse_triple(key: &str, raw: &str) -> Outcome<[f64; 3]> {
    let parts: Vec<&str> = raw.split(':').collect();
    let bad = || Failure::Usage(format!("--{key} expects train:valid:test, got {raw:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut out = [0.0; 3];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = p.trim().parse().map_err(|_| bad())?;
    }
    Ok(out)
}

fn run_ingest(s: &mut Settings, a: IngestArgs) -> Outcome {
    let source: PathBuf = s.required("source", a.source)?;
    let lang: Lang = s.required("lang", a.lang)?;
    let dataset: String = s.required("dataset", a.dataset)?;
    let split_name: String = s.value("split", a.split, "train".to_string())?;
    let split_label: Split = split_name
        .parse()
        .map_err(|e| Failure::Usage(format!("{e}")))?;
    let out: Option<PathBuf> = s.optional("out", a.out)?;
    let profile = profile_for(s, lang, a.profile)?;
    s.header("ingest");
    let opts = IngestOptions {
        lang,
        dataset,
        split: split_label,
        profile: &profile,
    };
    let report = ingest(&source, &opts).map_err(data)?;
    for dup in &report.duplicates {
        log::warn!(
            "duplicate audio {} (same as {})",
            dup.path.display(),
            dup.kept_id
        );
    }
    log::info!(
        "{} records, {} duplicates dropped",
        report.records.len(),
        report.duplicates.len()
    );
    let jsonl = asrforge_core::corpus::manifest_to_jsonl(&report.records);
    write_or_print(out.as_deref(), &jsonl)
}

fn run_vad(s: &mut Settings, a: VadArgs) -> Outcome {
    let input: PathBuf = s.required("in", a.input)?;
    let out: PathBuf = s.required("out", a.out)?;
    let defaults = FrameConfig::default();
    let frame = FrameConfig {
        frame_ms: s.value("frame-ms", a.frame_ms, defaults.frame_ms)?,
        hop_ms: s.value("hop-ms", a.hop_ms, defaults.hop_ms)?,
    };
    s.header("vad");
    let audio = resample_to_16k(&read_wav(&input).map_err(data)?);
    let cfg = EnergyVadConfig {
        frame,
        ..EnergyVadConfig::default()
    };
    let fp = compute_speech_probs(&audio, &cfg).map_err(data)?;
    log::info!(
        "{} frames from {:.2} s of audio",
        fp.len(),
        audio.duration_s()
    );
    export_speech_probs(&fp, &out).map_err(data)
}

fn run_chunk(s: &mut Settings, a: ChunkArgs) -> Outcome {
    let probs_path: PathBuf = s.required("probs", a.probs)?;
    let d = ChunkingConfig::default();
    let cfg = ChunkingConfig {
        min_chunk_s: s.value("min", a.min, d.min_chunk_s)?,
        max_chunk_s: s.value("max", a.max, d.max_chunk_s)?,
        speech_prob_threshold: s.value("thresh", a.thresh, d.speech_prob_threshold)?,
        merge_gap_s: s.value("merge-gap", a.merge_gap, d.merge_gap_s)?,
        onset: s.value("onset", a.onset, d.onset)?,
        offset: s.value("offset", a.offset, d.offset)?,
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let out: Option<PathBuf> = s.optional("out", a.out)?;
    let audio: Option<PathBuf> = s.optional("audio", a.audio)?;
    let out_dir: Option<PathBuf> = s.optional("out-dir", a.out_dir)?;
    s.header("chunk");

    let fp = import_speech_probs(&probs_path).map_err(data)?;
    let source_id = probs_path
        .file_stem()
        .map(|x| x.to_string_lossy().into_owned())
        .unwrap_or_else(|| "audio".into());
    let segments = detect_segments(&fp, &cfg);
    let chunks = chunk_segments(&segments, &fp, &cfg, &source_id);
    log::info!("{} segments, {} chunks kept", segments.len(), chunks.len());

    let mut listing = String::from("file\tstart_s\tend_s\tduration_s\tmean_speech_prob\n");
    for c in &chunks {
        listing.push_str(&format!(
            "{}\t{:.3}\t{:.3}\t{:.3}\t{:.4}\n",
            c.file_name(),
            c.start_s(),
            c.end_s(),
            c.duration_s(),
            c.mean_speech_prob
        ));
    }
    if let Some(audio_path) = audio {
        let dir = out_dir.ok_or_else(|| Failure::Usage("--audio needs --out-dir".into()))?;
        fs::create_dir_all(&dir).map_err(io_at(&dir))?;
        let buf = read_wav(&audio_path).map_err(data)?;
        for c in &chunks {
            let piece = buf.slice_seconds(c.start_s(), c.end_s());
            write_wav(&piece, dir.join(c.file_name())).map_err(data)?;
        }
    }
    write_or_print(out.as_deref(), &listing)
}

fn run_stats(s: &mut Settings, a: StatsArgs) -> Outcome {
    let manifest: PathBuf = s.required("manifest", a.manifest)?;
    let lang: Option<Lang> = s.optional("lang", a.lang)?;
    s.header("stats");
    let records = read_manifest(&manifest).map_err(data)?;
    let st = stats(&records);
    let text = if a.csv {
        st.to_csv()
    } else {
        match lang {
            Some(l) => st.render_splits(l),
            None => st.render_overview(),
        }
    };
    write_or_print(None, &text)
}

fn run_normalize(s: &mut Settings, a: NormalizeArgs) -> Outcome {
    let lang: Lang = s.required("lang", a.lang)?;
    let profile = profile_for(s, lang, a.profile)?;
    let input: Option<PathBuf> = s.optional("in", a.input)?;
    let out: Option<PathBuf> = s.optional("out", a.out)?;
    s.header("normalize");
    let text = read_input(input.as_deref())?;
    let mut result = String::with_capacity(text.len());
    for line in text.lines() {
        result.push_str(&normalize(line, &profile));
        result.push('\n');
    }
    write_or_print(out.as_deref(), &result)
}

fn run_bpe_train(s: &mut Settings, a: BpeTrainArgs) -> Outcome {
    let corpus: PathBuf = s.required("corpus", a.corpus)?;
    let lang: Lang = s.required("lang", a.lang)?;
    let vocab: usize = s.value("vocab", a.vocab, DEFAULT_VOCAB_SIZE)?;
    let mode: TokenMode = s.value("mode", a.mode, TokenMode::Subword)?;
    let profile = profile_for(s, lang, a.profile)?;
    let default_out = match mode {
        TokenMode::Subword => format!("{lang}.bpe"),
        TokenMode::Char => format!("{lang}.chars"),
    };
    let out: PathBuf = s.value("out", a.out, PathBuf::from(default_out))?;
    s.header("bpe-train");

    let text = fs::read_to_string(&corpus).map_err(io_at(&corpus))?;
    let sentences: Vec<String> = text
        .lines()
        .map(|l| normalize(l, &profile))
        .filter(|l| !l.is_empty())
        .collect();
    match mode {
        TokenMode::Subword => {
            let model = train_bpe(&sentences, vocab, lang).map_err(data)?;
            log::info!(
                "{} pieces ({} merges) from {} sentences",
                model.pieces().len(),
                model.merges().len(),
                sentences.len()
            );
            model.save(&out).map_err(data)
        }
        TokenMode::Char => {
            let table = CtcSymbolTable::from_corpus_chars(&sentences);
            log::info!("{} symbols", table.len());
            table.save(&out).map_err(data)
        }
    }
}

fn run_encode(s: &mut Settings, a: EncodeArgs) -> Outcome {
    let model_path: PathBuf = s.required("model", a.model)?;
    let input: Option<PathBuf> = s.optional("in", a.input)?;
    s.header("encode");
    let tok = load_tokenizer(&model_path)?;
    let text = match a.text {
        Some(t) => t,
        None => read_input(input.as_deref())?,
    };
    let mut out = String::new();
    for line in text.lines() {
        let ids: Vec<String> = tok.encode(line).iter().map(|i| i.to_string()).collect();
        out.push_str(&ids.join(" "));
        out.push('\n');
    }
    write_or_print(None, &out)
}

fn run_ctc_loss(s: &mut Settings, a: CtcLossArgs) -> Outcome {
    let logits_path: PathBuf = s.required("logits", a.logits)?;
    let target_raw: String = s.required("target", a.target)?;
    let grad_path: Option<PathBuf> = s.optional("grad", a.grad)?;
    s.header("ctc-loss");
    let target = target_raw
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::Usage(format!("--target: {e}")))?;
    let logits = LogitMatrix::load(&logits_path).map_err(data)?;
    let out = ctc_loss(&log_softmax(&logits), &target).map_err(data)?;
    if !out.feasible {
        log::warn!(
            "target of length {} cannot be aligned to {} frames",
            target.len(),
            logits.frames()
        );
    }
    if let Some(path) = grad_path {
        LogitMatrix::new(logits.frames(), logits.symbols(), out.grad)
            .and_then(|g| g.save(&path))
            .map_err(data)?;
    }
    write_or_print(None, &format!("{}\n", out.loss))
}

fn logit_files(root: &Path) -> Outcome<Vec<(String, PathBuf)>> {
    if root.is_file() {
        let id = root
            .file_stem()
            .map(|x| x.to_string_lossy().into_owned())
            .unwrap_or_default();
        return Ok(vec![(id, root.to_path_buf())]);
    }
    let mut found = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(io_at(&dir))? {
            let path = entry.map_err(io_at(&dir))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "ctcl") {
                let rel = path.strip_prefix(root).unwrap_or(&path).with_extension("");
                let id = rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                found.push((id, path));
            }
        }
    }
    found.sort();
    Ok(found)
}

fn run_decode(s: &mut Settings, a: DecodeArgs) -> Outcome {
    use rayon::prelude::*;

    let root: PathBuf = s.required("logits", a.logits)?;
    let model_path: PathBuf = s.required("model", a.model)?;
    let decoder: String = s.value("decoder", a.decoder, "beam".to_string())?;
    let d = BeamConfig::default();
    let beam = BeamConfig {
        beam_width: s.value("beam-width", a.beam_width, d.beam_width)?,
        prune_log_prob: s.value("prune", a.prune, d.prune_log_prob)?,
    };
    let prefix: Option<String> = s.optional("prefix", a.prefix)?;
    let out: Option<PathBuf> = s.optional("out", a.out)?;
    if decoder != "beam" && decoder != "greedy" {
        return Err(Failure::Usage(format!(
            "--decoder must be beam or greedy, got {decoder:?}"
        )));
    }
    s.header("decode");

    let tok = load_tokenizer(&model_path)?;
    let files = logit_files(&root)?;
    let lines: Vec<Outcome<String>> = files
        .par_iter()
        .map(|(id, path)| {
            let logits = LogitMatrix::load(path).map_err(data)?;
            if logits.symbols() != tok.table().len() {
                return Err(Failure::Data(format!(
                    "DimensionMismatch: {} has {} symbols, model has {}",
                    path.display(),
                    logits.symbols(),
                    tok.table().len()
                )));
            }
            let logp = log_softmax(&logits);
            let labels = if decoder == "greedy" {
                greedy_decode(&logp)
            } else {
                beam_decode(&logp, &beam)
                    .into_iter()
                    .next()
                    .map(|h| h.labels)
                    .unwrap_or_default()
            };
            let text = tok.decode(&labels).map_err(data)?;
            let full_id = match &prefix {
                Some(p) => format!("{p}/{id}"),
                None => id.clone(),
            };
            Ok(format!("{full_id}\t{text}\n"))
        })
        .collect();
    let mut result = String::new();
    for line in lines {
        result.push_str(&line?);
    }
    log::info!("decoded {} utterances", files.len());
    write_or_print(out.as_deref(), &result)
}

fn run_split(s: &mut Settings, a: SplitArgs, seed: u64) -> Outcome {
    let manifest: PathBuf = s.required("manifest", a.manifest)?;
    let ratios: Option<String> = s.optional("ratios", a.ratios)?;
    let hours: Option<String> = s.optional("hours", a.hours)?;
    let out: Option<PathBuf> = s.optional("out", a.out)?;
    let unused_path: Option<PathBuf> = s.optional("unused", a.unused)?;
    let spec = match (ratios, hours) {
        (Some(_), Some(_)) => {
            return Err(Failure::Usage(
                "give either --ratios or --hours, not both".into(),
            ))
        }
        (Some(r), None) => SplitSpec::Ratios(parse_triple("ratios", &r)?),
        (None, Some(h)) => SplitSpec::Hours(parse_triple("hours", &h)?),
        (None, None) => return Err(Failure::Usage("missing --ratios or --hours".into())),
    };
    s.header("split");
    let records = read_manifest(&manifest).map_err(data)?;
    let outcome = split(&records, spec, seed).map_err(data)?;
    if !outcome.unused.is_empty() {
        log::info!(
            "{} records not needed for the hour targets",
            outcome.unused.len()
        );
        if let Some(path) = unused_path {
            write_manifest(&outcome.unused, &path).map_err(data)?;
        }
    }
    let jsonl = asrforge_core::corpus::manifest_to_jsonl(&outcome.records);
    write_or_print(out.as_deref(), &jsonl)
}

fn run_score(s: &mut Settings, a: ScoreArgs) -> Outcome {
    let refs: PathBuf = s.required("refs", a.refs)?;
    if a.hyps.is_empty() {
        return Err(Failure::Usage("missing --hyps".into()));
    }
    let modes: Vec<TokenMode> = match a.mode.len() {
        0 => vec![s.value("mode", None, TokenMode::Subword)?; a.hyps.len()],
        1 => vec![a.mode[0]; a.hyps.len()],
        n if n == a.hyps.len() => a.mode.clone(),
        n => {
            return Err(Failure::Usage(format!(
                "{n} --mode values for {} --hyps files",
                a.hyps.len()
            )))
        }
    };
    let decoder: Option<String> = s.optional("decoder", a.decoder)?;
    let csv: Option<PathBuf> = s.optional("csv", a.csv)?;
    s.header("score");

    let records = read_manifest(&refs).map_err(data)?;
    let profiles = ProfileSet::builtin();
    let mut reports = Vec::new();
    for (path, mode) in a.hyps.iter().zip(modes) {
        let hyps = read_hypotheses(path).map_err(data)?;
        let mut report = score(&records, &hyps, mode, &profiles).map_err(data)?;
        report.decoder = decoder.clone();
        reports.push(report);
    }
    let mut text = String::new();
    for r in &reports {
        text.push_str(&r.render_table());
        text.push('\n');
    }
    if reports.len() > 1 {
        text.push_str(&render_comparison(&reports));
    }
    if let Some(path) = csv {
        let joined: String = reports.iter().map(|r| r.to_csv()).collect();
        fs::write(&path, joined).map_err(io_at(&path))?;
    }
    write_or_print(None, &text)
}

fn run(cli: Cli) -> Outcome {
    let mut s = Settings::load(cli.config.as_deref())?;
    let seed: u64 = s.value("seed", cli.seed, 0)?;
    if let Some(jobs) = s.optional::<usize>("jobs", cli.jobs)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Usage(format!("--jobs: {e}")))?;
    }
    match cli.command {
        Command::Ingest(a) => run_ingest(&mut s, a),
        Command::Vad(a) => run_vad(&mut s, a),
        Command::Chunk(a) => run_chunk(&mut s, a),
        Command::Stats(a) => run_stats(&mut s, a),
        Command::Normalize(a) => run_normalize(&mut s, a),
        Command::BpeTrain(a) => run_bpe_train(&mut s, a),
        Command::Encode(a) => run_encode(&mut s, a),
        Command::CtcLoss(a) => run_ctc_loss(&mut s, a),
        Command::Decode(a) => run_decode(&mut s, a),
        Command::Split(a) => run_split(&mut s, a, seed),
        Command::Score(a) => run_score(&mut s, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ASRFORGE_LOG", "info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
