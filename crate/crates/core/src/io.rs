//! JSONL and JSON file formats.
//!
//! Every JSONL reader reports the 1-based line number of the first bad
//! record. Blank lines are skipped.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::model::{GoldSet, Partition, QuestionAnnotations, QuestionRecord};
use crate::scoring::{EmbeddingTable, RawScoreMatrix, ScoreMatrix, ScoreTable};
use crate::split::DatasetSplit;
use crate::{Error, Result};

/// Reads one JSON value per non-blank line, paired with its line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push((idx + 1, value));
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `value` as pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::io(path, e.into()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_owned(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn at_line(path: &Path, line: usize, err: Error) -> Error {
    match err {
        Error::Validation(msg) => Error::Parse {
            path: path.to_owned(),
            line,
            message: msg,
        },
        other => other,
    }
}

/// Loads `questions.jsonl` in file order. Duplicate question ids and
/// per-record invariant violations are rejected.
pub fn load_questions(path: &Path) -> Result<Vec<QuestionRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, q) in read_jsonl::<QuestionRecord>(path)? {
        q.validate().map_err(|e| at_line(path, line, e))?;
        if !seen.insert(q.question_id.clone()) {
            return Err(Error::validation(format!(
                "duplicate question_id {} at {}:{line}",
                q.question_id,
                path.display()
            )));
        }
        out.push(q);
    }
    Ok(out)
}

pub fn write_questions(path: &Path, questions: &[QuestionRecord]) -> Result<()> {
    write_jsonl(path, questions)
}

pub fn load_annotations(path: &Path) -> Result<Vec<QuestionAnnotations>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, a) in read_jsonl::<QuestionAnnotations>(path)? {
        if !seen.insert(a.question_id.clone()) {
            return Err(Error::validation(format!(
                "duplicate question_id {} at {}:{line}",
                a.question_id,
                path.display()
            )));
        }
        out.push(a);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct PartitionLine<P> {
    question_id: String,
    #[serde(flatten)]
    partition: P,
}

pub fn load_partitions(path: &Path) -> Result<GoldSet> {
    let mut out = GoldSet::new();
    for (line, rec) in read_jsonl::<PartitionLine<Partition>>(path)? {
        let p = Partition::new(rec.partition.groups, rec.partition.discarded)
            .map_err(|e| at_line(path, line, e))?;
        if out.insert(rec.question_id.clone(), p).is_some() {
            return Err(Error::validation(format!(
                "duplicate question_id {} at {}:{line}",
                rec.question_id,
                path.display()
            )));
        }
    }
    Ok(out)
}

pub fn write_partitions(path: &Path, partitions: &GoldSet) -> Result<()> {
    write_jsonl(
        path,
        partitions.iter().map(|(qid, p)| PartitionLine {
            question_id: qid.clone(),
            partition: p,
        }),
    )
}

pub fn load_splits(path: &Path) -> Result<DatasetSplit> {
    let split: DatasetSplit = read_json(path)?;
    split.validate()?;
    Ok(split)
}

pub fn write_splits(path: &Path, split: &DatasetSplit) -> Result<()> {
    write_json(path, split)
}

#[derive(Deserialize)]
struct EmbeddingLine {
    #[serde(default)]
    question_id: Option<String>,
    sentence_id: String,
    vector: Vec<f64>,
}

/// Loads `embeddings.jsonl`. Lines carrying a `question_id` are stored as
/// question-conditioned embeddings.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::default();
    for (line, rec) in read_jsonl::<EmbeddingLine>(path)? {
        table
            .insert(rec.question_id, rec.sentence_id, rec.vector)
            .map_err(|e| at_line(path, line, e))?;
    }
    Ok(table)
}

#[derive(Serialize, Deserialize)]
struct ScoreLine<V> {
    question_id: String,
    order: Vec<String>,
    values: Vec<Vec<V>>,
}

/// Loads `scores.jsonl`. Entries may be `null`, which marks the pair as
/// missing; scoring a question that needs such a pair fails.
pub fn load_scores(path: &Path) -> Result<ScoreTable> {
    let mut table = ScoreTable::default();
    for (line, rec) in read_jsonl::<ScoreLine<Option<f64>>>(path)? {
        let raw = RawScoreMatrix::new(rec.order, rec.values).map_err(|e| at_line(path, line, e))?;
        if table.matrices.insert(rec.question_id.clone(), raw).is_some() {
            return Err(Error::validation(format!(
                "duplicate question_id {} at {}:{line}",
                rec.question_id,
                path.display()
            )));
        }
    }
    Ok(table)
}

pub fn write_scores(path: &Path, matrices: &[ScoreMatrix]) -> Result<()> {
    write_jsonl(
        path,
        matrices.iter().map(|m| ScoreLine {
            question_id: m.question_id.clone(),
            order: m.order.clone(),
            values: m.to_nested(),
        }),
    )
}

/// Indexes records by question id, preserving order.
pub fn by_question_id(questions: &[QuestionRecord]) -> IndexMap<&str, &QuestionRecord> {
    questions
        .iter()
        .map(|q| (q.question_id.as_str(), q))
        .collect()
}
