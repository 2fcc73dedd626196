//! Corpus input. Two layouts are accepted:
//!
//! - JSON-lines, one record per writing:
//!   `{"subject_id": "...", "seq": 3, "text": "...", "label": "..."}` —
//!   `label` is optional per record but all labels of one subject must agree,
//!   and at least one record per subject must carry it for labeled work.
//! - A directory of `<subject_id>.json` files, each
//!   `{"label": "...", "writings": ["...", ...]}`.

use crate::error::{Result, Ss3Error};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

/// One subject: an ordered stream of writings plus an optional label (the
/// category name the subject belongs to).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledStream {
    pub subject_id: String,
    pub items: Vec<String>,
    pub label: Option<String>,
}

#[derive(Debug, Deserialize)]
struct JsonlRecord {
    subject_id: String,
    seq: i64,
    text: String,
    #[serde(default)]
    label: Option<String>,
}

#[derive(Debug, Deserialize)]
struct SubjectFile {
    #[serde(default)]
    label: Option<String>,
    writings: Vec<String>,
}

/// Loads a corpus from either layout: a directory of subject files or a
/// JSONL file.
pub fn load_streams(path: &Path) -> Result<Vec<LabeledStream>> {
    if path.is_dir() {
        load_subject_dir(path)
    } else {
        load_jsonl(path)
    }
}

/// JSONL loader. Subjects keep their order of first appearance; a subject's
/// writings are ordered by `seq` (stably, so equal `seq` values keep file
/// order).
pub fn load_jsonl(path: &Path) -> Result<Vec<LabeledStream>> {
    let file = fs::File::open(path)
        .map_err(|e| Ss3Error::Dataset(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);

    struct Partial {
        writings: Vec<(i64, String)>,
        label: Option<String>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut subjects: HashMap<String, Partial> = HashMap::new();

    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonlRecord = serde_json::from_str(&line).map_err(|e| {
            Ss3Error::Dataset(format!("{}:{}: {e}", path.display(), line_no + 1))
        })?;
        let entry = subjects.entry(record.subject_id.clone()).or_insert_with(|| {
            order.push(record.subject_id.clone());
            Partial {
                writings: Vec::new(),
                label: None,
            }
        });
        if let Some(label) = record.label {
            match &entry.label {
                Some(existing) if *existing != label => {
                    return Err(Ss3Error::Dataset(format!(
                        "subject `{}` has conflicting labels `{existing}` and `{label}`",
                        record.subject_id
                    )));
                }
                _ => entry.label = Some(label),
            }
        }
        entry.writings.push((record.seq, record.text));
    }

    Ok(order
        .into_iter()
        .map(|id| {
            let mut partial = subjects.remove(&id).expect("subject recorded");
            partial.writings.sort_by_key(|(seq, _)| *seq);
            LabeledStream {
                subject_id: id,
                items: partial.writings.into_iter().map(|(_, text)| text).collect(),
                label: partial.label,
            }
        })
        .collect())
}

/// Directory loader: every `*.json` file is one subject, named by the file
/// stem. Files are read in lexicographic order.
pub fn load_subject_dir(path: &Path) -> Result<Vec<LabeledStream>> {
    let mut files: Vec<_> = fs::read_dir(path)
        .map_err(|e| Ss3Error::Dataset(format!("cannot read {}: {e}", path.display())))?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|entry| entry.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Ss3Error::Dataset(format!(
            "no .json subject files in {}",
            path.display()
        )));
    }
    files
        .into_iter()
        .map(|file| {
            let subject_id = file
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Ss3Error::Dataset(format!("bad file name {}", file.display())))?
                .to_string();
            let json = fs::read_to_string(&file)?;
            let parsed: SubjectFile = serde_json::from_str(&json)
                .map_err(|e| Ss3Error::Dataset(format!("{}: {e}", file.display())))?;
            Ok(LabeledStream {
                subject_id,
                items: parsed.writings,
                label: parsed.label,
            })
        })
        .collect()
}

/// Errors unless every stream carries a label.
pub fn require_labels(streams: &[LabeledStream]) -> Result<()> {
    for s in streams {
        if s.label.is_none() {
            return Err(Ss3Error::Dataset(format!(
                "subject `{}` has no label",
                s.subject_id
            )));
        }
    }
    Ok(())
}

/// `(text, label)` pairs for training: every writing becomes one training
/// document under its subject's label.
pub fn training_documents(streams: &[LabeledStream]) -> Result<Vec<(&str, &str)>> {
    require_labels(streams)?;
    let mut docs = Vec::new();
    for s in streams {
        let label = s.label.as_deref().expect("labels checked");
        for item in &s.items {
            docs.push((item.as_str(), label));
        }
    }
    Ok(docs)
}
