use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Emotion columns of the SemEval 2018 Task E-c files, in file order.
pub const EMOTIONS: [&str; 11] = [
    "anger",
    "anticipation",
    "disgust",
    "fear",
    "joy",
    "love",
    "optimism",
    "pessimism",
    "sadness",
    "surprise",
    "trust",
];

/// Language or domain tag: `en`, `es`, `ar`, or `synthetic-<name>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Language(String);

impl Language {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// SemEval languages carry the fixed 11-emotion label layout.
    pub fn is_semeval(&self) -> bool {
        matches!(self.0.as_str(), "en" | "es" | "ar")
    }

    pub fn synthetic(name: impl fmt::Display) -> Self {
        Self(format!("synthetic-{name}"))
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let ok = matches!(s, "en" | "es" | "ar")
            || s.strip_prefix("synthetic-")
                .is_some_and(|rest| !rest.is_empty() && !rest.contains(['.', '/', '\t', ',']));
        if ok {
            Ok(Self(s.to_string()))
        } else {
            Err(Error::Config(format!("unknown language {s:?}")))
        }
    }
}

impl TryFrom<String> for Language {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Language> for String {
    fn from(l: Language) -> Self {
        l.0
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown split {s:?}")))
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub id: String,
    pub language: Language,
    pub text: Option<String>,
    pub labels: Vec<u8>,
    pub split: Split,
}

fn malformed(path: &Path, row: usize, reason: impl Into<String>) -> Error {
    Error::MalformedRow {
        path: path.to_path_buf(),
        row,
        reason: reason.into(),
    }
}

/// Parses a tab-separated file with header `ID, Tweet, <label columns>`.
///
/// For `en`, `es` and `ar` the label columns must be exactly [`EMOTIONS`].
/// Row numbers in errors are 1-based file lines (the header is line 1).
pub fn parse_dataset(path: impl AsRef<Path>, language: &Language, split: Split) -> Result<Vec<LabeledRecord>> {
    let path = path.as_ref();
    let content = fs::read_to_string(path)?;
    parse_dataset_str(&content, path, language, split)
}

pub fn parse_dataset_str(
    content: &str,
    path: &Path,
    language: &Language,
    split: Split,
) -> Result<Vec<LabeledRecord>> {
    let mut lines = content.lines().enumerate();
    let header: Vec<&str> = match lines.next() {
        Some((_, h)) => h.trim_end_matches('\r').split('\t').collect(),
        None => return Err(malformed(path, 1, "missing header")),
    };
    if header.len() < 3 || header[0] != "ID" || header[1] != "Tweet" {
        return Err(malformed(path, 1, "header must start with ID, Tweet and name at least one label"));
    }
    let label_names = &header[2..];
    if language.is_semeval() && label_names != EMOTIONS {
        return Err(malformed(path, 1, format!("expected emotion columns {EMOTIONS:?}")));
    }
    let n_cols = header.len();

    let mut records = Vec::new();
    for (i, line) in lines {
        let row = i + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != n_cols {
            return Err(malformed(path, row, format!("expected {n_cols} columns, found {}", fields.len())));
        }
        if fields[0].is_empty() {
            return Err(malformed(path, row, "empty ID"));
        }
        let labels = fields[2..]
            .iter()
            .zip(label_names)
            .map(|(v, name)| match *v {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(malformed(path, row, format!("label {name} has non-binary value {other:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        records.push(LabeledRecord {
            id: fields[0].to_string(),
            language: language.clone(),
            text: (!fields[1].is_empty()).then(|| fields[1].to_string()),
            labels,
            split,
        });
    }
    Ok(records)
}

/// Writes records in the same layout [`parse_dataset`] reads.
pub fn write_dataset(path: impl AsRef<Path>, records: &[LabeledRecord], label_names: &[String]) -> Result<()> {
    let mut out = String::from("ID\tTweet");
    for n in label_names {
        out.push('\t');
        out.push_str(n);
    }
    out.push('\n');
    for r in records {
        if r.labels.len() != label_names.len() {
            return Err(Error::LengthMismatch {
                expected: label_names.len(),
                actual: r.labels.len(),
            });
        }
        out.push_str(&r.id);
        out.push('\t');
        out.push_str(r.text.as_deref().unwrap_or(""));
        for l in &r.labels {
            out.push('\t');
            out.push(if *l == 1 { '1' } else { '0' });
        }
        out.push('\n');
    }
    crate::io_util::write_atomic(path.as_ref(), out.as_bytes())
}

/// File name of one split inside a data directory: `<language>.<split>.tsv`.
pub fn dataset_file_name(language: &Language, split: Split) -> String {
    format!("{language}.{split}.tsv")
}

pub fn dataset_path(dir: &Path, language: &Language, split: Split) -> PathBuf {
    dir.join(dataset_file_name(language, split))
}
