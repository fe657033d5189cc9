//! Utterances and the line-delimited manifest format.
//!
//! A manifest holds one JSON record per line with the fields
//! `{id, audio_path, text, start_s, end_s}`. `audio_path` is relative to the
//! manifest's directory.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textkit::TokenSeq;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: bad manifest record: {source}")]
    BadRecord {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// One transcribed utterance: the unit of weak or gold transcription.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub text: TokenSeq,
    pub start_s: f64,
    pub end_s: f64,
}

/// One manifest row. `text` is the serialized token sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub audio_path: String,
    pub text: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl ManifestEntry {
    pub fn utterance(&self) -> Utterance {
        Utterance {
            id: self.id.clone(),
            text: TokenSeq::parse(&self.text),
            start_s: self.start_s,
            end_s: self.end_s,
        }
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, CorpusError> {
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line).map_err(|source| CorpusError::BadRecord {
            path: path.to_owned(),
            line: i + 1,
            source,
        })?;
        entries.push(entry);
    }
    Ok(entries)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_owned(),
        source,
    };
    let mut out = Vec::new();
    for e in entries {
        serde_json::to_writer(&mut out, e).expect("manifest entries serialize infallibly");
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(&out).map_err(io_err)?;
    Ok(())
}

/// Load a plain-text vocabulary file: one lowercase word per line, blank
/// lines ignored.
pub fn read_vocab_file(path: &Path) -> Result<Vec<String>, CorpusError> {
    let content = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })?;
    Ok(content
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        let entries = vec![
            ManifestEntry {
                id: "utt-000000".into(),
                audio_path: "feats/utt-000000.wspf".into(),
                text: "hello there".into(),
                start_s: 0.0,
                end_s: 1.25,
            },
            ManifestEntry {
                id: "utt-000001".into(),
                audio_path: "feats/utt-000001.wspf".into(),
                text: "it's fine".into(),
                start_s: 0.0,
                end_s: 0.8,
            },
        ];
        write_manifest(&path, &entries).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back, entries);
        assert_eq!(back[1].utterance().text.to_string(), "it's fine");
    }

    #[test]
    fn bad_record_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        fs::write(&path, "{\"id\": 3}\n").unwrap();
        let err = read_manifest(&path).unwrap_err();
        assert!(matches!(err, CorpusError::BadRecord { line: 1, .. }));
    }
}
