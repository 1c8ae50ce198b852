use std::collections::{BTreeSet, HashSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::text::normalize;

/// One question with its gold answers. On disk:
/// `{"id": "q1", "question": "...", "answers": ["Paris"]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetExample {
    pub id: String,
    pub question: String,
    pub answers: Vec<String>,
}

impl DatasetExample {
    pub fn gold_answers(&self) -> BTreeSet<String> {
        self.answers.iter().map(|a| normalize(a)).filter(|a| !a.is_empty()).collect()
    }
}

pub fn read_dataset<R: BufRead>(source: R) -> Result<Vec<DatasetExample>, HarnessError> {
    let mut out: Vec<DatasetExample> = Vec::new();
    let mut seen = HashSet::new();
    for (index, line) in source.lines().enumerate() {
        let line = line.map_err(|e| HarnessError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let example: DatasetExample =
            serde_json::from_str(&line).map_err(|e| HarnessError::Json { line: index + 1, message: e.to_string() })?;
        if example.gold_answers().is_empty() {
            return Err(HarnessError::EmptyAnswers(example.id));
        }
        if !seen.insert(example.id.clone()) {
            return Err(HarnessError::DuplicateId(example.id));
        }
        out.push(example);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetExample>, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    read_dataset(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_reject() {
        let ok = r#"{"id": "a", "question": "q?", "answers": ["Paris", " paris "]}
{"id": "b", "question": "r?", "answers": ["x"]}
"#;
        let data = read_dataset(ok.as_bytes()).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data[0].gold_answers().len(), 1);
        let dup = r#"{"id": "a", "question": "q", "answers": ["x"]}
{"id": "a", "question": "q", "answers": ["y"]}"#;
        assert_eq!(read_dataset(dup.as_bytes()), Err(HarnessError::DuplicateId("a".into())));
        let empty = r#"{"id": "a", "question": "q", "answers": ["?"]}"#;
        assert_eq!(read_dataset(empty.as_bytes()), Err(HarnessError::EmptyAnswers("a".into())));
        assert!(matches!(read_dataset("{".as_bytes()), Err(HarnessError::Json { line: 1, .. })));
    }
}
