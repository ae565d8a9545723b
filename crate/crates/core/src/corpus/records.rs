use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    /// Statute identification: any subset of |L| labels.
    MultiLabel,
    /// Case acceptance: a single {0, 1} outcome.
    Binary,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::MultiLabel => "multi-label",
            TaskKind::Binary => "binary",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gold {
    Labels(BTreeSet<usize>),
    Outcome(bool),
}

impl Gold {
    /// Dense 0/1 target vector of length `num_labels` (1 for the binary task).
    pub fn to_vector(&self, num_labels: usize) -> Vec<f64> {
        match self {
            Gold::Labels(set) => (0..num_labels)
                .map(|j| if set.contains(&j) { 1.0 } else { 0.0 })
                .collect(),
            Gold::Outcome(b) => vec![if *b { 1.0 } else { 0.0 }],
        }
    }

    fn to_indices(&self) -> Vec<usize> {
        match self {
            Gold::Labels(set) => set.iter().copied().collect(),
            Gold::Outcome(b) => vec![usize::from(*b)],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaseDocument {
    pub id: String,
    pub tokens: Vec<String>,
    pub labels: Gold,
}

impl CaseDocument {
    pub fn new(id: impl Into<String>, tokens: Vec<String>, labels: Gold) -> Result<Self> {
        let id = id.into();
        if tokens.is_empty() {
            return Err(Error::EmptyDocument { id });
        }
        Ok(Self { id, tokens, labels })
    }

    /// Copy of the document keeping only its last `m` tokens.
    pub fn last_tokens(&self, m: usize) -> CaseDocument {
        let start = self.tokens.len().saturating_sub(m.max(1));
        CaseDocument {
            id: self.id.clone(),
            tokens: self.tokens[start..].to_vec(),
            labels: self.labels.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVocabulary {
    names: Vec<String>,
}

impl LabelVocabulary {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Config("label vocabulary is empty".into()));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::Config(format!("duplicate label name `{n}`")));
            }
        }
        Ok(Self { names })
    }

    /// `label_0 … label_{n-1}`.
    pub fn indexed(n: usize) -> Self {
        Self {
            names: (0..n).map(|i| format!("label_{i}")).collect(),
        }
    }

    pub fn binary() -> Self {
        Self {
            names: vec!["accepted".into()],
        }
    }

    pub fn size(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Lowercase, then split on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRecord {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<String>>,
    labels: Vec<usize>,
}

fn parse_record(
    line: &str,
    task: TaskKind,
    vocab: &LabelVocabulary,
) -> std::result::Result<CaseDocument, (String, Option<Error>)> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| (e.to_string(), None))?;
    let tokens = match (raw.tokens, raw.text) {
        (Some(t), _) => t,
        (None, Some(text)) => tokenize(&text),
        (None, None) => return Err(("record has neither `tokens` nor `text`".into(), None)),
    };
    if tokens.is_empty() {
        return Err((String::new(), Some(Error::EmptyDocument { id: raw.id })));
    }
    let labels = match task {
        TaskKind::MultiLabel => {
            if let Some(&bad) = raw.labels.iter().find(|&&l| l >= vocab.size()) {
                return Err((
                    String::new(),
                    Some(Error::LabelOutOfRange {
                        id: raw.id,
                        label: bad,
                        size: vocab.size(),
                    }),
                ));
            }
            Gold::Labels(raw.labels.into_iter().collect())
        }
        TaskKind::Binary => match raw.labels.as_slice() {
            [0] => Gold::Outcome(false),
            [1] => Gold::Outcome(true),
            [bad] => {
                return Err((
                    String::new(),
                    Some(Error::LabelOutOfRange {
                        id: raw.id,
                        label: *bad,
                        size: 2,
                    }),
                ))
            }
            _ => {
                return Err((
                    format!(
                        "binary record `{}` must carry exactly one label in {{0,1}}",
                        raw.id
                    ),
                    None,
                ))
            }
        },
    };
    Ok(CaseDocument {
        id: raw.id,
        tokens,
        labels,
    })
}

/// Reads a JSON-lines case file. Blank lines are skipped; every other line is
/// one record.
pub fn load_corpus(
    path: &Path,
    task: TaskKind,
    vocab: &LabelVocabulary,
) -> Result<Vec<CaseDocument>> {
    let file = fs::File::open(path).map_err(|source| Error::MissingInput {
        path: path.to_path_buf(),
        source,
    })?;
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(&line, task, vocab) {
            Ok(doc) => docs.push(doc),
            Err((_, Some(err))) => return Err(err),
            Err((reason, None)) => {
                return Err(Error::MalformedRecord {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason,
                })
            }
        }
    }
    Ok(docs)
}

pub fn write_corpus(path: &Path, docs: &[CaseDocument]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    for doc in docs {
        let raw = RawRecord {
            id: doc.id.clone(),
            text: None,
            tokens: Some(doc.tokens.clone()),
            labels: doc.labels.to_indices(),
        };
        let line = serde_json::to_string(&raw).expect("record serialises");
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}
