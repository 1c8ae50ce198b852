use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::trace::{GroundingVerdict, SchemaSource, ScoredPath, Stage, TraceRecord};
use super::{evaluate, DatasetExample, HarnessError, MetricsReport, Prediction, RunConfig};
use crate::adapter::{LanguageModel, RequestKind, Session};
use crate::collab::{aggregate, blend, ground_paths, iterate, path_score};
use crate::direct::{direct_stage, rank_candidates, select_validated, DirectOutcome, DirectStage};
use crate::gql::compile_schema;
use crate::kg::{KnowledgeGraph, Triple};
use crate::reasoner::{
    extract_schema, run_walks, schema_walks, seed_walks, select_answer_joint, CandidateAnswer, QuestionSchema,
    ReasonerError,
};
use crate::relevance::{seed_entities, select_subgraph, Subgraph};

/// Default size of the worker pool.
pub const DEFAULT_WORKERS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleOutcome {
    pub prediction: Prediction,
    pub trace: TraceRecord,
}

fn entity_schema(graph: &KnowledgeGraph, question: &str) -> QuestionSchema {
    QuestionSchema::entity_only(
        graph
            .link_entities(question)
            .into_iter()
            .filter_map(|e| graph.entity(e).map(|x| x.canonical_name.clone())),
    )
}

fn named(graph: &KnowledgeGraph, t: &Triple) -> [String; 3] {
    let (h, r, tl) = graph.names(t).unwrap_or(("?", "?", "?"));
    [h.to_string(), r.to_string(), tl.to_string()]
}

/// Runs one question through schema extraction, subgraph selection, the
/// direct stage and, when that yields nothing valid, the refinement stage.
/// `ordinal` fixes the conversation and request ids so runs replay exactly.
pub fn run_example(
    example: &DatasetExample,
    ordinal: usize,
    graph: &KnowledgeGraph,
    model: &dyn LanguageModel,
    config: &RunConfig,
) -> ExampleOutcome {
    let question = example.question.as_str();
    let session = Session::new(model, format!("{ordinal}:{}", example.id), (ordinal as u64) << 32);
    let mut errors = Vec::new();
    let mut notes = Vec::new();
    let retrieval = !config.disable_graph_retrieval;

    let (schema_source, schema, schema_warnings) = if config.disable_schema {
        (SchemaSource::Disabled, entity_schema(graph, question), Vec::new())
    } else {
        match extract_schema(question, graph, &session) {
            Ok((schema, warnings)) => (SchemaSource::Model, schema, warnings),
            Err(e) => {
                if let ReasonerError::Adapter(_) = e {
                    errors.push(format!("schema extraction: {e}"));
                }
                notes.push(format!("{e}; using linked question entities"));
                (SchemaSource::Fallback, entity_schema(graph, question), Vec::new())
            }
        }
    };

    let subgraph = if retrieval {
        select_subgraph(graph, &schema, question, config.selection_policy(), config.hops).unwrap_or_else(|e| {
            errors.push(format!("subgraph selection: {e}"));
            Subgraph::default()
        })
    } else {
        Subgraph::default()
    };

    let mut direct: Option<DirectStage> = None;
    if !retrieval {
        notes.push("graph retrieval disabled; direct stage skipped".into());
    } else if !schema.is_usable() {
        notes.push("no usable schema; direct stage skipped".into());
    } else {
        match direct_stage(question, &schema, graph, &session) {
            Ok(stage) => direct = Some(stage),
            Err(e) => notes.push(format!("direct stage: {e}")),
        }
    }
    if let Some(stage) = &direct {
        if stage.run.rank_fallback {
            errors.extend(
                session
                    .exchanges()
                    .into_iter()
                    .filter(|x| x.kind == RequestKind::AnswerRank)
                    .filter_map(|x| x.error)
                    .map(|e| format!("answer ranking: {e}")),
            );
        }
    }

    let mut trace = TraceRecord {
        id: example.id.clone(),
        question: question.to_string(),
        errored: false,
        errors: Vec::new(),
        schema_source,
        schema_warnings,
        subgraph_size: subgraph.len(),
        subgraph: subgraph.triples().iter().map(|t| named(graph, t)).collect(),
        direct: None,
        notes: Vec::new(),
        stepwise: Vec::new(),
        stepwise_pick: None,
        collaborative: Vec::new(),
        grounding: Vec::new(),
        vote: None,
        exchanges: Vec::new(),
        answer: None,
        stage: Stage::Abstained,
        schema: schema.clone(),
    };

    let mut answer: Option<CandidateAnswer> = None;
    if let Some(DirectOutcome::Answer(candidate)) = direct.as_ref().map(|d| &d.outcome) {
        let mut chosen = candidate.clone();
        if config.rerank_after_validation {
            let valid: Vec<_> = direct
                .as_ref()
                .map(|d| {
                    d.run
                        .candidates
                        .iter()
                        .zip(&d.verdicts)
                        .filter(|(_, (_, ok))| *ok)
                        .filter_map(|(c, _)| graph.resolve_entity(&c.value))
                        .collect()
                })
                .unwrap_or_default();
            let (reranked, _) = rank_candidates(question, &schema, graph, &valid, &session);
            if let Ok(best) = select_validated(&reranked) {
                chosen = best;
            }
        }
        answer = Some(chosen);
        trace.stage = Stage::Direct;
    } else {
        // stepwise paths over the candidate pool
        let seeds = seed_entities(graph, &schema, question);
        let pool: BTreeSet<Triple> = if retrieval {
            graph.neighborhood(&seeds, config.hops).unwrap_or_default().into_iter().collect()
        } else {
            BTreeSet::new()
        };
        let walks = match compile_schema(&schema) {
            Ok(ast) => schema_walks(&ast, graph, &pool, &subgraph),
            Err(_) => seed_walks(&seeds, &pool, &subgraph),
        };
        let stepwise = run_walks(&session, graph, question, &walks, &subgraph);
        for (id, e) in &stepwise.failures {
            errors.push(format!("stepwise path {id}: {e}"));
        }
        let alpha = config.alpha_lambda();
        let mut entries: Vec<(Option<CandidateAnswer>, f64)> = Vec::new();
        for path in stepwise.paths {
            let prob = path.answer.as_ref().map_or(0.0, |a| a.model_prob);
            let score = blend(prob, path.consistency, alpha).unwrap_or(0.0);
            entries.push((path.answer.clone(), score));
            trace.stepwise.push(ScoredPath { path, score_alpha: score });
        }
        let joint: Vec<_> = trace
            .stepwise
            .iter()
            .filter_map(|s| s.path.answer.clone().map(|a| (a, s.path.clone())))
            .collect();
        trace.stepwise_pick = select_answer_joint(&joint, &subgraph).ok();

        // collaborative loop
        let mut paths = iterate(question, graph, &session, &config.loop_config());
        for p in &paths {
            if let Some(f) = &p.failure {
                errors.push(format!("collaborative instance {}: {f}", p.instance));
            }
        }
        if retrieval {
            trace.grounding = ground_paths(&mut paths, graph)
                .into_iter()
                .map(|(instance, answer, accepted)| GroundingVerdict { instance, answer, accepted })
                .collect();
        }
        for p in &mut paths {
            p.score_beta = path_score(p, graph, config.lambda).unwrap_or(0.0);
            entries.push((p.answer.clone(), p.score_beta));
        }
        trace.collaborative = paths;

        match aggregate(&entries) {
            Some(vote) => {
                answer = Some(vote.answer.clone());
                trace.vote = Some(vote);
                trace.stage = Stage::Refined;
            }
            None => match direct.as_ref().and_then(DirectStage::best_unvalidated) {
                Some(best) => {
                    answer = Some(best);
                    trace.stage = Stage::Fallback;
                }
                None => notes.push("no candidate survived; abstaining".into()),
            },
        }
    }

    trace.direct = direct;
    trace.answer = answer.clone();
    trace.exchanges = session.exchanges();
    trace.errored = !errors.is_empty();
    trace.errors = errors;
    trace.notes = notes;
    let prediction = Prediction {
        id: example.id.clone(),
        answers: answer.iter().map(|a| a.label.clone()).collect(),
        stage: trace.stage.as_str().to_string(),
    };
    ExampleOutcome { prediction, trace }
}

/// Runs every example on a pool of `workers` threads. Outcomes come back in
/// dataset order.
pub fn run_dataset(
    examples: &[DatasetExample],
    graph: &KnowledgeGraph,
    model: &dyn LanguageModel,
    config: &RunConfig,
    workers: usize,
) -> Result<Vec<ExampleOutcome>, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok(pool.install(|| {
        examples
            .par_iter()
            .enumerate()
            .map(|(i, ex)| run_example(ex, i, graph, model, config))
            .collect()
    }))
}

/// Writes `traces.jsonl`, `predictions.jsonl` and `metrics.json` under `out`.
pub fn write_outputs(
    out: &Path,
    outcomes: &[ExampleOutcome],
    examples: &[DatasetExample],
) -> Result<MetricsReport, HarnessError> {
    let io = |e: std::io::Error| HarnessError::Io(format!("{}: {e}", out.display()));
    fs::create_dir_all(out).map_err(io)?;
    let mut traces = Vec::new();
    let mut predictions = Vec::new();
    for o in outcomes {
        serde_json::to_writer(&mut traces, &o.trace).map_err(|e| HarnessError::Io(e.to_string()))?;
        traces.push(b'\n');
        serde_json::to_writer(&mut predictions, &o.prediction).map_err(|e| HarnessError::Io(e.to_string()))?;
        predictions.push(b'\n');
    }
    fs::write(out.join("traces.jsonl"), traces).map_err(io)?;
    fs::write(out.join("predictions.jsonl"), predictions).map_err(io)?;
    let preds: Vec<Prediction> = outcomes.iter().map(|o| o.prediction.clone()).collect();
    let report = evaluate(&preds, examples)?;
    let mut file = fs::File::create(out.join("metrics.json")).map_err(io)?;
    serde_json::to_writer_pretty(&mut file, &report).map_err(|e| HarnessError::Io(e.to_string()))?;
    file.write_all(b"\n").map_err(io)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{MockAdapter, MockScript};
    use serde_json::json;

    const Q: &str = "Which river flows through the capital of Freedonia?";

    fn graph() -> KnowledgeGraph {
        KnowledgeGraph::load_triples(
            "Velmora\tcapital_of\tFreedonia\nAstra River\tflows_through\tVelmora\nOrlen\tcity_of\tFreedonia\n".as_bytes(),
        )
        .unwrap()
    }

    fn example() -> DatasetExample {
        DatasetExample { id: "q1".into(), question: Q.into(), answers: vec!["Astra River".into()] }
    }

    fn script(schema: &str) -> MockScript {
        let mut s = MockScript::default();
        s.push(Q, RequestKind::SchemaExtraction, 0, None, json!({ "text": schema }));
        s.push(
            Q,
            RequestKind::Hypothesis,
            0,
            None,
            json!({"text": "The Astra River flows through Velmora.", "proposed_answer": "Astra River", "confidence": 0.9}),
        );
        s
    }

    const GOOD: &str = "```\n?c|capital_of|Freedonia\n?x|flows_through|?c\nanswer: ?x\n```";
    const WRONG: &str = "```\n?c|capital_of|Freedonia\n?x|runs_past|?c\nanswer: ?x\n```";

    #[test]
    fn solvable_question_is_answered_directly() {
        let mock = MockAdapter::new(script(GOOD));
        let out = run_example(&example(), 0, &graph(), &mock, &RunConfig::default());
        assert_eq!(out.prediction.answers, ["Astra River"]);
        assert_eq!(out.trace.stage, Stage::Direct);
        assert!(out.trace.collaborative.is_empty());
        assert!(!out.trace.errored);
    }

    #[test]
    fn retrieval_off_engages_collaboration() {
        let mock = MockAdapter::new(script(GOOD));
        let config = RunConfig { disable_graph_retrieval: true, ..Default::default() };
        let out = run_example(&example(), 0, &graph(), &mock, &config);
        assert_eq!(out.trace.stage, Stage::Refined);
        assert_eq!(out.trace.subgraph_size, 0);
        assert!(out.trace.direct.is_none());
        assert_eq!(out.trace.collaborative.len(), 3);
    }

    #[test]
    fn wrong_schema_recovers_collaboratively() {
        let mock = MockAdapter::new(script(WRONG));
        let out = run_example(&example(), 0, &graph(), &mock, &RunConfig::default());
        assert_eq!(out.trace.direct.as_ref().unwrap().outcome, DirectOutcome::NeedsRefinement);
        assert_eq!(out.trace.stage, Stage::Refined);
        assert_eq!(out.prediction.answers, ["Astra River"]);
    }

    #[test]
    fn silence_abstains() {
        let mock = MockAdapter::new(MockScript::default());
        let config = RunConfig { disable_graph_retrieval: true, ..Default::default() };
        let out = run_example(&example(), 0, &graph(), &mock, &config);
        assert_eq!(out.trace.stage, Stage::Abstained);
        assert!(out.prediction.answers.is_empty());
    }

    #[test]
    fn request_ids_follow_ordinal() {
        let mock = MockAdapter::new(script(GOOD));
        let out = run_example(&example(), 7, &graph(), &mock, &RunConfig::default());
        assert_eq!(out.trace.exchanges[0].request_id, 7 << 32);
    }
}
