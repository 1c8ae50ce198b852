//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::Value;

use common::{exhaustive_rows, random_query, random_schema, rng, Edges};
use sgr::adapter::{LanguageModel, MockAdapter, MockDefaults, MockScript, Session};
use sgr::collab::{aggregate, graph_consistency, path_score, CollabPath, EvidenceSet, Hypothesis, PathEntry};
use sgr::direct::{direct_answers, direct_stage, valid_set, validate, DirectOutcome};
use sgr::gql::execute;
use sgr::harness::{evaluate, load_dataset, load_predictions, run_dataset, set_f1, DatasetExample, Prediction, RunConfig};
use sgr::kg::{EntityId, KnowledgeGraph, RelationId, Triple};
use sgr::reasoner::{
    path_consistency, select_answer_joint, step, trajectory_prob, AnswerSource, CandidateAnswer, ReasoningPath,
    ReasoningState,
};
use sgr::relevance::{apply_policy, select_subgraph, SelectionPolicy, Subgraph};
use sgr::text::normalize;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn close(a: f64, b: f64, what: &str) -> Result<(), String> {
    ensure((a - b).abs() < 1e-9, format!("{what}: got {a}, want {b}"))
}

fn criterion_1() -> Check {
    let mut r = rng(1001);
    let mut agree = 0;
    for case in 0..500 {
        let edges = Edges::random(&mut r, 40, 8, 3);
        let g = edges.graph();
        let ast = random_query(&mut r, 8, 3);
        let got: BTreeSet<_> = execute(&ast, &g).rows.into_iter().map(|row| row.bindings).collect();
        ensure(got == exhaustive_rows(&ast, &g), format!("case {case}: {ast}"))?;
        agree += 1;
    }
    Ok(format!("{agree}/500 executor row sets equal the exhaustive oracle"))
}

fn random_scored(r: &mut impl Rng, n: usize) -> Vec<(Triple, f64)> {
    let mut triples = BTreeSet::new();
    while triples.len() < n {
        triples.insert(Triple::new(EntityId(r.gen_range(0..6)), RelationId(r.gen_range(0..3)), EntityId(r.gen_range(0..6))));
    }
    let mut out: Vec<(Triple, f64)> = triples.into_iter().map(|t| (t, r.gen_range(-4..=8) as f64 / 8.0)).collect();
    out.shuffle(r);
    out
}

fn criterion_2() -> Check {
    let mut r = rng(1002);
    for case in 0..500 {
        let n = r.gen_range(0..40);
        let scored = random_scored(&mut r, n);
        let k = r.gen_range(0..45);
        let mut sorted = scored.clone();
        sorted.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        sorted.truncate(k);
        ensure(apply_policy(scored.clone(), SelectionPolicy::TopK { k }) == sorted, format!("top-k case {case}"))?;
        let tau = r.gen_range(-1.0..1.2);
        let filtered: Vec<_> = scored.iter().copied().filter(|(_, s)| *s >= tau).collect();
        ensure(apply_policy(scored, SelectionPolicy::Threshold { tau }) == filtered, format!("threshold case {case}"))?;
    }
    let mut generated = 0;
    for case in 0..1000 {
        let g = Edges::random(&mut r, 40, 10, 4).graph();
        let names: Vec<String> = g.entities().iter().filter(|_| r.gen_bool(0.3)).map(|e| e.canonical_name.clone()).collect();
        let question: Vec<String> = (0..4)
            .filter_map(|_| g.triples().choose(&mut r).map(|t| g.verbalize(t).unwrap()))
            .collect();
        let question = question.join(" ");
        let schema = sgr::reasoner::QuestionSchema::entity_only(names);
        let sel = |p| select_subgraph(&g, &schema, &question, p, 2).unwrap();
        let (a, b): (f64, f64) = (r.gen_range(0.0..1.0), r.gen_range(0.0..1.0));
        let (lo, hi) = (a.min(b), a.max(b));
        ensure(
            sel(SelectionPolicy::Threshold { tau: hi }).triples().is_subset(sel(SelectionPolicy::Threshold { tau: lo }).triples()),
            format!("threshold monotonicity case {case}"),
        )?;
        let pool = sel(SelectionPolicy::TopK { k: usize::MAX }).len();
        let k = r.gen_range(0..30);
        let small = sel(SelectionPolicy::TopK { k });
        ensure(
            small.triples().is_subset(sel(SelectionPolicy::TopK { k: k + 1 }).triples()) && small.len() == k.min(pool),
            format!("top-k nesting case {case}"),
        )?;
        generated += 1;
    }
    Ok(format!("500 selections equal sort/filter oracles; {generated} monotonicity and nesting cases hold"))
}

fn collab_path(evidence: Vec<Vec<Triple>>, answer: Option<CandidateAnswer>) -> CollabPath {
    let mut interleaved = Vec::new();
    for (i, triples) in evidence.into_iter().enumerate() {
        interleaved.push(PathEntry::Hypothesis(Hypothesis { iteration: i + 1, text: String::new(), proposed_answer: None, confidence: 0.5 }));
        interleaved.push(PathEntry::Evidence(EvidenceSet { iteration: i + 1, triples }));
    }
    CollabPath { instance: 0, interleaved, answer, score_beta: 0.0, failure: None }
}

fn vote_oracle(entries: &[(Option<CandidateAnswer>, f64)]) -> Option<(String, f64)> {
    let mut sums: HashMap<String, f64> = HashMap::new();
    for (a, s) in entries {
        if let Some(a) = a {
            *sums.entry(a.value.clone()).or_insert(0.0) += s;
        }
    }
    let mut best: Option<(String, f64)> = None;
    for (v, m) in sums {
        best = match best {
            Some((bv, bm)) if bm > m || (bm == m && bv < v) => Some((bv, bm)),
            _ => Some((v, m)),
        };
    }
    best
}

fn criterion_3() -> Check {
    let g = KnowledgeGraph::load_triples("Paris\tcapital_of\tFrance\nSeine\tflows_through\tParis\n".as_bytes()).unwrap();
    let (t0, t1) = (g.triples()[0], g.triples()[1]);
    let foreign = Triple::new(EntityId(8), RelationId(8), EntityId(9));
    let cand = |v: &str, p: f64| Some(CandidateAnswer::new(v, p, AnswerSource::Collaborative, None));

    let script = MockScript { defaults: MockDefaults { step_confidence: 0.9, hypothesis_confidence: 0.0 }, ..Default::default() };
    let mock = MockAdapter::new(script);
    let session = Session::new(&mock, "c", 0);
    let mut states: Vec<ReasoningState> = Vec::new();
    for _ in 0..3 {
        let s = step(&session, &g, "q", &states, t0, 0).map_err(|e| e.to_string())?;
        states.push(s);
    }
    ensure(states[0].step_index == 1, "first step index")?;
    close(trajectory_prob(&states), 0.729, "trajectory_prob")?;

    let sub = Subgraph::from_scored([(t0, 1.0), (t1, 1.0)]);
    close(path_consistency(&[t0, t1, t0, t1], &sub).map_err(|e| e.to_string())?, 1.0, "consistency 4/4")?;
    close(path_consistency(&[t0, foreign, t1, foreign], &sub).map_err(|e| e.to_string())?, 0.5, "consistency 2/4")?;
    close(path_consistency(&[foreign; 3], &sub).map_err(|e| e.to_string())?, 0.0, "consistency 0/3")?;

    close(graph_consistency(&collab_path(vec![vec![t0], vec![t1], vec![t0, t1]], None), &g).unwrap(), 1.0, "C all retrieved")?;
    close(graph_consistency(&collab_path(vec![vec![t0, foreign], vec![t1]], None), &g).unwrap(), 0.5, "C one injected")?;
    close(graph_consistency(&collab_path(vec![vec![]], None), &g).unwrap(), 1.0, "C empty evidence")?;

    let mut ev = vec![vec![t0]; 3];
    ev.extend(vec![vec![foreign]; 2]);
    let p = collab_path(ev, cand("paris", 0.8));
    close(path_score(&p, &g, 0.5).unwrap(), 0.7, "beta blend")?;
    close(path_score(&p, &g, 1.0).unwrap(), 0.8, "beta lambda 1")?;
    close(path_score(&p, &g, 0.0).unwrap(), 0.6, "beta lambda 0")?;

    let vote = aggregate(&[(cand("a", 0.5), 0.7), (cand("b", 0.5), 0.4), (cand("a", 0.5), 0.2)]).ok_or("no vote")?;
    ensure(vote.answer.value == "a", "vote winner")?;
    close(vote.mass, 0.9, "vote mass")?;
    ensure(aggregate(&[(cand("z", 0.5), 0.3)]).map(|v| v.answer.value) == Some("z".into()), "singleton vote")?;

    let path = |id: u32, triples: Vec<Triple>| ReasoningPath { id, steps: triples.into_iter().map(|t| ReasoningState { step_index: 1, text: String::new(), confidence: 1.0, triple: t }).collect(), answer: None, trajectory_prob: 1.0, consistency: 0.0 };
    let first = CandidateAnswer::new("first", 0.9, AnswerSource::Stepwise, Some(0));
    let second = CandidateAnswer::new("second", 0.6, AnswerSource::Stepwise, Some(1));
    let joint = select_answer_joint(&[(first, path(0, vec![t0, foreign])), (second, path(1, vec![t0]))], &sub).map_err(|e| e.to_string())?;
    ensure(joint.value == "second", "joint selection 0.45 vs 0.60")?;

    let mut r = rng(1003);
    let values = ["alpha", "beta", "gamma", "delta", "epsilon"];
    for case in 0..1000 {
        let n = r.gen_range(1..30);
        let entries: Vec<(Option<CandidateAnswer>, f64)> = (0..n)
            .map(|_| {
                let a = if r.gen_bool(0.15) { None } else { cand(values.choose(&mut r).unwrap(), 0.5) };
                (a, r.gen_range(0..=8) as f64 / 8.0)
            })
            .collect();
        let got = aggregate(&entries).map(|v| (v.answer.value, v.mass));
        let want = vote_oracle(&entries);
        let same = match (&got, &want) {
            (Some((gv, gm)), Some((wv, wm))) => gv == wv && (gm - wm).abs() < 1e-9,
            (None, None) => true,
            _ => false,
        };
        ensure(same, format!("aggregate case {case}: {got:?} vs {want:?}"))?;
    }
    Ok("all arithmetic examples exact to 1e-9; aggregate equals scan oracle on 1000 inputs".into())
}

fn criterion_4() -> Check {
    let mut r = rng(1004);
    let mock = MockAdapter::new(MockScript::default());
    let (mut answered, mut refined) = (0, 0);
    for case in 0..300 {
        let g = Edges::random(&mut r, 40, 8, 3).graph();
        let schema = random_schema(&mut r, 8, 3);
        let session = Session::new(&mock, format!("{case}"), 0);
        let answers = direct_answers("q", &schema, &g, &session).map_err(|e| e.to_string())?;
        for a in &answers {
            ensure(validate(a, &schema, &g), format!("case {case}: {} fails validation", a.value))?;
        }
        let stage = direct_stage("q", &schema, &g, &Session::new(&mock, format!("s{case}"), 0)).map_err(|e| e.to_string())?;
        let empty = valid_set(&stage.run.candidates, &schema, &g).is_empty();
        let needs = matches!(stage.outcome, DirectOutcome::NeedsRefinement);
        ensure(needs == empty, format!("case {case}: NeedsRefinement {needs} but empty valid set {empty}"))?;
        if needs {
            refined += 1;
        } else {
            answered += 1;
        }
    }
    Ok(format!("300 pairs coherent ({answered} answered, {refined} needing refinement)"))
}

struct Suite {
    graph: KnowledgeGraph,
    examples: Vec<DatasetExample>,
}

fn toy() -> Result<Suite, String> {
    let dir = common::fixtures().join("toy");
    let graph = KnowledgeGraph::load_files(&dir.join("graph.tsv"), Some(&dir.join("aliases.tsv"))).map_err(|e| e.to_string())?;
    let examples = load_dataset(&dir.join("questions.jsonl")).map_err(|e| e.to_string())?;
    Ok(Suite { graph, examples })
}

fn mock(name: &str) -> Result<Box<dyn LanguageModel>, String> {
    let script = MockScript::load(&common::fixtures().join("toy").join(name)).map_err(|e| e.to_string())?;
    Ok(Box::new(MockAdapter::new(script)))
}

fn criterion_5() -> Check {
    let suite = toy()?;
    ensure(suite.examples.len() == 50, "50 questions")?;
    let triples = suite.graph.triples().len();
    ensure((450..=550).contains(&triples), format!("toy graph has {triples} triples"))?;
    let config = RunConfig::default();

    let outcomes = run_dataset(&suite.examples, &suite.graph, mock("mock_correct.json")?.as_ref(), &config, 4).map_err(|e| e.to_string())?;
    let preds: Vec<Prediction> = outcomes.iter().map(|o| o.prediction.clone()).collect();
    let correct = evaluate(&preds, &suite.examples).map_err(|e| e.to_string())?;
    ensure(correct.hits_at_1 == 1.0, format!("correct scripts Hits@1 {}", correct.hits_at_1))?;

    let manifest: BTreeMap<String, Value> = serde_json::from_str(
        &std::fs::read_to_string(common::fixtures().join("toy/distractor_manifest.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let outcomes = run_dataset(&suite.examples, &suite.graph, mock("mock_distractor.json")?.as_ref(), &config, 4).map_err(|e| e.to_string())?;
    let (mut proposed, mut rejected) = (0, 0);
    for o in &outcomes {
        let fakes: BTreeSet<String> = manifest[&o.trace.id]["hallucinated"]
            .as_array()
            .ok_or("manifest entry lacks hallucinated list")?
            .iter()
            .filter_map(|v| v.as_str().map(normalize))
            .collect();
        for v in &o.trace.grounding {
            if fakes.contains(&v.answer) {
                proposed += 1;
                ensure(!v.accepted, format!("{}: hallucinated {:?} accepted", o.trace.id, v.answer))?;
                rejected += 1;
            }
        }
        if let Some(direct) = &o.trace.direct {
            for (value, ok) in &direct.verdicts {
                if fakes.contains(value) {
                    proposed += 1;
                    ensure(!ok, format!("{}: hallucinated {value:?} validated", o.trace.id))?;
                    rejected += 1;
                }
            }
        }
        let top = o.prediction.answers.first().map(|a| normalize(a));
        ensure(top.as_ref().is_none_or(|t| !fakes.contains(t)), format!("{}: predicted hallucination {top:?}", o.trace.id))?;
    }
    ensure(proposed > 0, "no hallucinated candidate was ever proposed")?;
    let preds: Vec<Prediction> = outcomes.iter().map(|o| o.prediction.clone()).collect();
    let distractor = evaluate(&preds, &suite.examples).map_err(|e| e.to_string())?;
    ensure(distractor.hits_at_1 >= 0.8, format!("distractor Hits@1 {}", distractor.hits_at_1))?;
    Ok(format!(
        "correct Hits@1 {:.3}; distractor Hits@1 {:.3} with {rejected}/{proposed} hallucinated proposals rejected",
        correct.hits_at_1, distractor.hits_at_1
    ))
}

fn criterion_6() -> Check {
    let suite = toy()?;
    let base = RunConfig::default();
    let hits = |config: RunConfig| -> Result<f64, String> {
        let outcomes = run_dataset(&suite.examples, &suite.graph, mock("mock_noisy.json")?.as_ref(), &config, 4).map_err(|e| e.to_string())?;
        let preds: Vec<Prediction> = outcomes.into_iter().map(|o| o.prediction).collect();
        Ok(evaluate(&preds, &suite.examples).map_err(|e| e.to_string())?.hits_at_1)
    };
    let full = hits(base.clone())?;
    let no_schema = hits(RunConfig { disable_schema: true, ..base.clone() })?;
    let no_retrieval = hits(RunConfig { disable_graph_retrieval: true, ..base })?;
    let summary = format!("full {full:.3}, disable_schema {no_schema:.3}, disable_graph_retrieval {no_retrieval:.3}");
    ensure(full > no_schema && full > no_retrieval, summary.clone())?;
    Ok(summary)
}

fn run_cli(out: &Path) -> Result<(), String> {
    let toy = common::fixtures().join("toy");
    let p = |n: &str| toy.join(n).display().to_string();
    let status = Command::new(env!("CARGO_BIN_EXE_sgr"))
        .args(["run", "--graph", &p("graph.tsv"), "--aliases", &p("aliases.tsv"), "--dataset", &p("questions.jsonl")])
        .args(["--mock", &p("mock_distractor.json"), "--workers", "4", "--out"])
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(status.status.success(), String::from_utf8_lossy(&status.stderr).into_owned())
}

fn criterion_7() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("first"), dir.path().join("second"));
    run_cli(&a)?;
    run_cli(&b)?;
    let mut bytes = 0;
    for file in ["traces.jsonl", "metrics.json", "predictions.jsonl"] {
        let x = std::fs::read(a.join(file)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join(file)).map_err(|e| e.to_string())?;
        ensure(!x.is_empty() && x == y, format!("{file} differs between runs"))?;
        bytes += x.len();
    }
    Ok(format!("two 4-worker runs byte-identical ({bytes} bytes compared)"))
}

fn criterion_8() -> Check {
    let dir = common::fixtures().join("metrics");
    let golds = load_dataset(&dir.join("gold.jsonl")).map_err(|e| e.to_string())?;
    let preds = load_predictions(&dir.join("pred.jsonl")).map_err(|e| e.to_string())?;
    let report = evaluate(&preds, &golds).map_err(|e| e.to_string())?;
    close(report.hits_at_1, 0.6, "fixture hits@1")?;
    close(report.accuracy, 0.4, "fixture accuracy")?;
    close(report.f1, 7.0 / 12.0, "fixture f1")?;

    let golds: Vec<DatasetExample> = (0..1000)
        .map(|i| DatasetExample { id: format!("q{i}"), question: String::new(), answers: vec![format!("a{i}")] })
        .collect();
    let preds: Vec<Prediction> = (0..1000)
        .map(|i| Prediction { id: format!("q{i}"), answers: vec![if i < 578 { format!("a{i}") } else { "x".into() }], stage: String::new() })
        .collect();
    close(evaluate(&preds, &golds).map_err(|e| e.to_string())?.hits_at_1, 0.578, "578 of 1000")?;

    let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
    close(set_f1(&set(&["a", "b"]), &set(&["a"])), 2.0 / 3.0, "set F1 {a,b} vs {a}")?;
    Ok("fixture 0.6/0.4/0.5833, 578/1000 = 0.578, F1 2/3 exact".into())
}

fn main() -> ExitCode {
    let criteria: [(u8, &str, Option<Duration>, fn() -> Check); 8] = [
        (1, "query-engine oracle equivalence", Some(Duration::from_secs(10)), criterion_1),
        (2, "selection oracle equivalence", Some(Duration::from_secs(10)), criterion_2),
        (3, "score-law exactness", Some(Duration::from_secs(5)), criterion_3),
        (4, "executor-validator coherence", Some(Duration::from_secs(10)), criterion_4),
        (5, "end-to-end fixture suite", Some(Duration::from_secs(30)), criterion_5),
        (6, "ablation direction", Some(Duration::from_secs(60)), criterion_6),
        (7, "determinism", None, criterion_7),
        (8, "metrics exactness", None, criterion_8),
    ];
    let mut failed = 0;
    for (n, name, limit, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let result = match (result, limit) {
            (Ok(_), Some(limit)) if elapsed > limit => Err(format!("took {elapsed:.2?}, limit {limit:?}")),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS [{n}] {name}: {detail} ({elapsed:.2?})"),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{n}] {name}: {detail} ({elapsed:.2?})");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
