//! Core algorithms for the wsp workbench: text normalization and WER
//! scoring, transcript corruption, synthetic feature corpora, a small CTC
//! acoustic model, and greedy / LM beam-search decoding.

pub mod acoustic;
pub mod charset;
pub mod corpus;
pub mod corruptor;
pub mod decode;
pub mod mat;
pub mod rng;
pub mod synth;
pub mod textkit;

pub use charset::Charset;
pub use corpus::Utterance;
pub use textkit::TokenSeq;
