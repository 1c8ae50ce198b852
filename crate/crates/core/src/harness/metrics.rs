use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetExample, HarnessError};
use crate::text::normalize;

/// A system output: answers in rank order, empty for an abstention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub answers: Vec<String>,
    #[serde(default)]
    pub stage: String,
}

impl Prediction {
    pub fn abstained(&self) -> bool {
        self.answers.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub id: String,
    pub hit: bool,
    pub exact: bool,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub f1_variant: String,
    pub count: usize,
    pub hits_at_1: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub per_example: Vec<Verdict>,
}

impl MetricsReport {
    pub fn table(&self) -> String {
        format!(
            "examples  {}\nhits@1    {:.4}\naccuracy  {:.4}\nf1        {:.4}\n",
            self.count, self.hits_at_1, self.accuracy, self.f1
        )
    }
}

/// Set F1 between predicted and gold answers; 0 when either is empty.
pub fn set_f1(predicted: &BTreeSet<String>, gold: &BTreeSet<String>) -> f64 {
    let common = predicted.intersection(gold).count() as f64;
    if common == 0.0 {
        return 0.0;
    }
    let precision = common / predicted.len() as f64;
    let recall = common / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Scores predictions against golds matched by id. Every gold needs exactly
/// one prediction and vice versa.
pub fn evaluate(predictions: &[Prediction], golds: &[DatasetExample]) -> Result<MetricsReport, HarnessError> {
    let mut by_id: BTreeMap<&str, &Prediction> = BTreeMap::new();
    for p in predictions {
        if by_id.insert(p.id.as_str(), p).is_some() {
            return Err(HarnessError::DuplicateId(p.id.clone()));
        }
    }
    if by_id.len() != golds.len() {
        return Err(HarnessError::IdMismatch(format!("{} predictions for {} examples", by_id.len(), golds.len())));
    }
    let mut per_example = Vec::with_capacity(golds.len());
    for gold in golds {
        let p = by_id
            .get(gold.id.as_str())
            .ok_or_else(|| HarnessError::IdMismatch(format!("no prediction for {:?}", gold.id)))?;
        let gold_set = gold.gold_answers();
        let predicted: BTreeSet<String> = p.answers.iter().map(|a| normalize(a)).filter(|a| !a.is_empty()).collect();
        let hit = p.answers.first().is_some_and(|top| gold_set.contains(&normalize(top)));
        per_example.push(Verdict { id: gold.id.clone(), hit, exact: predicted == gold_set, f1: set_f1(&predicted, &gold_set) });
    }
    let n = per_example.len().max(1) as f64;
    let count = |f: fn(&Verdict) -> bool| per_example.iter().filter(|v| f(v)).count() as f64 / n;
    Ok(MetricsReport {
        f1_variant: "answer-set".into(),
        count: per_example.len(),
        hits_at_1: count(|v| v.hit),
        accuracy: count(|v| v.exact),
        f1: per_example.iter().map(|v| v.f1).sum::<f64>() / n,
        per_example,
    })
}

pub fn read_predictions<R: BufRead>(source: R) -> Result<Vec<Prediction>, HarnessError> {
    let mut out = Vec::new();
    for (index, line) in source.lines().enumerate() {
        let line = line.map_err(|e| HarnessError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| HarnessError::Json { line: index + 1, message: e.to_string() })?);
    }
    Ok(out)
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    read_predictions(std::io::BufReader::new(file))
}
