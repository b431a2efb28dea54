//! Dataset records and line-delimited file I/O.
//!
//! Every dataset is UTF-8 text with one JSON record per line — diffable and
//! stream-parsable. Three record shapes share the format, distinguished by
//! their fields: retrieval triplets, term definitions, and knowledge-graph
//! statements. Definitions and KG statements feed the distillation
//! curriculum; triplets feed contrastive training and evaluation.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use treble_eval::EvalItem;
use treble_train::{DistillText, TextKind, TripletExample};

use crate::error::CliError;

/// One line of a dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetRecord {
    /// A query with its positive passage and exactly five negatives.
    Triplet {
        query: String,
        positive: String,
        negatives: Vec<String>,
        /// Optional stratum label carried through to per-stratum metric
        /// breakdowns (e.g. the generating cluster).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stratum: Option<String>,
    },
    /// A structured relation; `rendered_text` holds its natural-language
    /// form and is rendered from the template when absent.
    Kg {
        subject: String,
        predicate: String,
        object: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rendered_text: Option<String>,
    },
    /// A term paired with its definition.
    Definition { term: String, definition: String },
}

/// Render a knowledge-graph triplet as a natural-language statement.
///
/// The template is fixed and locale-independent: `"The {subject}
/// {predicate} the {object}."` with every underscore in the predicate
/// replaced by a space.
pub fn render_kg(subject: &str, predicate: &str, object: &str) -> Result<String, CliError> {
    for (name, value) in [
        ("subject", subject),
        ("predicate", predicate),
        ("object", object),
    ] {
        if value.trim().is_empty() {
            return Err(CliError::Data(format!("kg record has an empty {name}")));
        }
    }
    Ok(format!(
        "The {subject} {} the {object}.",
        predicate.replace('_', " ")
    ))
}

impl DatasetRecord {
    /// Convert to a training triplet; errors on the other record shapes.
    pub fn into_triplet(self) -> Result<TripletExample, CliError> {
        match self {
            DatasetRecord::Triplet {
                query,
                positive,
                negatives,
                stratum,
            } => Ok(TripletExample {
                query,
                positive,
                negatives,
                stratum,
            }),
            other => Err(CliError::Data(format!(
                "expected a triplet record, got {other:?}"
            ))),
        }
    }

    /// Convert to a distillation text; errors on triplet records.
    pub fn into_distill(self) -> Result<DistillText, CliError> {
        match self {
            DatasetRecord::Definition { term, definition } => {
                if term.trim().is_empty() || definition.trim().is_empty() {
                    return Err(CliError::Data(
                        "definition record has an empty field".into(),
                    ));
                }
                Ok(DistillText {
                    text: format!("{term}: {definition}"),
                    kind: TextKind::Definition,
                })
            }
            DatasetRecord::Kg {
                subject,
                predicate,
                object,
                rendered_text,
            } => {
                let text = match rendered_text {
                    Some(t) if t.trim().is_empty() => {
                        return Err(CliError::Data(
                            "kg record has an empty rendered_text".into(),
                        ));
                    }
                    Some(t) => t,
                    None => render_kg(&subject, &predicate, &object)?,
                };
                Ok(DistillText {
                    text,
                    kind: TextKind::KgStatement,
                })
            }
            DatasetRecord::Triplet { .. } => Err(CliError::Data(
                "expected a definition or kg record, got a triplet".into(),
            )),
        }
    }
}

/// A passage or query line for index subcommands.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextLine {
    pub id: u32,
    pub text: String,
}

/// Read one record per line, reporting the path and 1-based line number on
/// failure.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let contents = fs::read_to_string(path).map_err(|e| CliError::at(path, e))?;
    let mut records = Vec::new();
    for (i, line) in contents.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| {
            CliError::Data(format!("{}:{}: {e}", path.display(), i + 1))
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Write one record per line. The caller is responsible for the overwrite
/// guard; this always truncates.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    for record in records {
        serde_json::to_writer(&mut buf, record)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(|e| CliError::at(path, e))?;
    Ok(())
}

/// Load a triplet dataset file.
pub fn load_triplets(path: &Path) -> Result<Vec<TripletExample>, CliError> {
    let records: Vec<DatasetRecord> = read_jsonl(path)?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.into_triplet()
                .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Load a distillation dataset file (definitions and KG statements).
pub fn load_distill(path: &Path) -> Result<Vec<DistillText>, CliError> {
    let records: Vec<DatasetRecord> = read_jsonl(path)?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.into_distill()
                .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Load a triplet file as evaluation items.
pub fn load_eval_items(path: &Path) -> Result<Vec<EvalItem>, CliError> {
    Ok(load_triplets(path)?
        .iter()
        .map(TripletExample::to_eval_item)
        .collect())
}

/// Refuse to clobber `path` unless `overwrite` is set.
pub fn guard_overwrite(path: &Path, overwrite: bool) -> Result<(), CliError> {
    if path.exists() && !overwrite {
        return Err(CliError::Data(format!(
            "refusing to overwrite {}; pass --overwrite to replace it",
            path.display()
        )));
    }
    Ok(())
}

/// Serialize a report as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::at(path, e))?;
    Ok(())
}
