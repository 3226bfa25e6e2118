use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use super::BenchError;
use crate::model::Question;

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RecordId {
    Text(String),
    Number(u64),
}

#[derive(Debug, Deserialize)]
struct DatasetLine {
    id: RecordId,
    question: String,
    golden_answers: Vec<String>,
    #[serde(default)]
    dataset: Option<String>,
}

/// Loads `{id, question, golden_answers, dataset}` JSONL. Records without a
/// `dataset` field are labelled with the file stem.
pub fn load_dataset(path: &Path) -> Result<Vec<Question>, BenchError> {
    let file = File::open(path).map_err(|e| BenchError::io(path, e))?;
    let fallback = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    parse_dataset(BufReader::new(file), fallback)
}

pub fn parse_dataset<R: BufRead>(input: R, fallback_dataset: &str) -> Result<Vec<Question>, BenchError> {
    let mut questions = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| BenchError::Schema { line: line_no, reason: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetLine =
            serde_json::from_str(&line).map_err(|e| BenchError::Schema { line: line_no, reason: e.to_string() })?;
        let id = match rec.id {
            RecordId::Text(s) => s,
            RecordId::Number(n) => n.to_string(),
        };
        if !ids.insert(id.clone()) {
            tracing::warn!(line = line_no, %id, "duplicate question id");
        }
        let dataset = rec.dataset.unwrap_or_else(|| fallback_dataset.to_string());
        let q = Question::new(id, rec.question, rec.golden_answers, dataset)
            .map_err(|e| BenchError::Schema { line: line_no, reason: e.to_string() })?;
        questions.push(q);
    }
    Ok(questions)
}
