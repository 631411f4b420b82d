//! Building blocks for low-resource Perso-Arabic speech recognition:
//! corpus curation (audio I/O, VAD chunking, manifests, splits, statistics),
//! transcript normalization, word-internal BPE vocabularies for a CTC output
//! layer, CTC loss and decoding, and WER/CER scoring.

pub mod audio;
pub mod bpe;
pub mod corpus;
pub mod ctc;
pub mod lang;
pub mod text;
pub mod vad;

pub use lang::Lang;
