//! Regenerates the toy graph, its question set and the mock scripts under
//! `fixtures/toy/`. Output is fully determined by the seed.
//!
//! cargo run --example gen_fixtures

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use sgr::gql::{compile_schema, execute};
use sgr::kg::KnowledgeGraph;
use sgr::reasoner::parse_schema_reply;

const SEED: u64 = 0x5347_5231;

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "kr", "tr", "st", "th", "vel", "mor",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ae", "ai", "ou"];
const CODAS: &[&str] = &["", "n", "r", "s", "th", "l", "x", "nd", "sk"];

/// Words used by the question and dialogue templates; never entity names.
const STOP_WORDS: &[&str] = &[
    "what", "capital", "leader", "official", "language", "founded", "river", "flows", "through", "city", "company",
    "headquartered", "country", "born", "founder", "leads", "whose", "spoken", "which", "start", "from", "sure", "surely",
    "fairly", "knows", "everyone", "recalling", "memory", "without", "looking", "this", "reach", "works", "labs",
    "holdings", "foundry", "republic",
];

struct Names {
    used: BTreeSet<String>,
}

impl Names {
    fn base(&mut self, rng: &mut ChaCha8Rng, syllables: usize) -> String {
        loop {
            let mut s = String::new();
            for i in 0..syllables {
                s.push_str(ONSETS.choose(rng).unwrap());
                s.push_str(VOWELS.choose(rng).unwrap());
                if i + 1 == syllables {
                    s.push_str(CODAS.choose(rng).unwrap());
                }
            }
            let mut name: Vec<char> = s.chars().collect();
            name[0] = name[0].to_ascii_uppercase();
            let name: String = name.into_iter().collect();
            let lower = name.to_lowercase();
            if name.len() >= 4 && !STOP_WORDS.contains(&lower.as_str()) && self.used.insert(lower) {
                return name;
            }
        }
    }
}

#[derive(Default)]
struct World {
    triples: Vec<(String, String, String)>,
    countries: Vec<String>,
    capital: BTreeMap<String, String>,
    cities: Vec<String>,
    city_country: BTreeMap<String, String>,
    leaders: BTreeMap<String, String>,
    rivers: Vec<String>,
    companies: Vec<String>,
    founder: BTreeMap<String, String>,
    people: Vec<String>,
    languages: Vec<String>,
    aliases: Vec<(String, String)>,
}

impl World {
    fn add(&mut self, h: &str, r: &str, t: &str) {
        self.triples.push((h.into(), r.into(), t.into()));
    }
}

fn build(rng: &mut ChaCha8Rng) -> World {
    let mut names = Names { used: BTreeSet::new() };
    let mut w = World::default();
    let regions: Vec<String> = (0..4).map(|_| format!("{} Reach", names.base(rng, 2))).collect();
    w.languages = (0..8).map(|_| format!("{}ic", names.base(rng, 2))).collect();

    for _ in 0..14 {
        let country = names.base(rng, 3);
        let region = regions.choose(rng).unwrap().clone();
        w.add(&country, "part_of", &region);
        let lang = w.languages.choose(rng).unwrap().clone();
        w.add(&country, "official_language", &lang);
        let capital = names.base(rng, 2);
        w.add(&capital, "capital_of", &country);
        w.add(&capital, "city_of", &country);
        w.city_country.insert(capital.clone(), country.clone());
        w.cities.push(capital.clone());
        w.capital.insert(country.clone(), capital);
        for _ in 0..3 {
            let city = names.base(rng, 2);
            w.add(&city, "city_of", &country);
            w.city_country.insert(city.clone(), country.clone());
            w.cities.push(city);
        }
        w.countries.push(country);
    }
    for i in 0..w.countries.len() {
        for _ in 0..2 {
            let j = rng.gen_range(0..w.countries.len());
            if i != j {
                let (a, b) = (w.countries[i].clone(), w.countries[j].clone());
                w.add(&a, "borders", &b);
            }
        }
    }

    // exactly one river per capital; other cities get a river or two
    let non_capitals: Vec<String> =
        w.cities.iter().filter(|c| !w.capital.values().any(|x| x == *c)).cloned().collect();
    let capitals: Vec<String> = w.countries.iter().map(|k| w.capital[k].clone()).collect();
    for capital in &capitals {
        let river = format!("{} River", names.base(rng, 2));
        w.add(&river, "flows_through", capital);
        for _ in 0..rng.gen_range(1..3) {
            let c = non_capitals.choose(rng).unwrap().clone();
            w.add(&river, "flows_through", &c);
        }
        w.rivers.push(river);
    }
    for _ in 0..10 {
        let river = format!("{} River", names.base(rng, 2));
        for _ in 0..rng.gen_range(1..4) {
            let c = non_capitals.choose(rng).unwrap().clone();
            w.add(&river, "flows_through", &c);
        }
        w.rivers.push(river);
    }

    for k in w.countries.clone() {
        let p = person(&mut names, rng, &mut w);
        w.add(&p, "leader_of", &k);
        w.leaders.insert(k, p);
    }
    let suffixes = ["Works", "Labs", "Holdings", "Foundry"];
    let mut companies = Vec::new();
    for _ in 0..40 {
        let company = format!("{} {}", names.base(rng, 2), suffixes.choose(rng).unwrap());
        let founder = person(&mut names, rng, &mut w);
        w.add(&company, "founded_by", &founder);
        let hq = w.cities.choose(rng).unwrap().clone();
        w.add(&company, "headquartered_in", &hq);
        w.founder.insert(company.clone(), founder);
        companies.push(company);
    }
    w.companies = companies;
    for _ in 0..78 {
        let p = person(&mut names, rng, &mut w);
        let c = w.companies.choose(rng).unwrap().clone();
        w.add(&p, "works_for", &c);
    }
    for _ in 0..20 {
        let a = w.cities.choose(rng).unwrap().clone();
        let b = w.cities.choose(rng).unwrap().clone();
        if a != b {
            w.add(&a, "twinned_with", &b);
        }
    }
    // a few surface variants for the alias table
    for k in w.countries.iter().take(6) {
        w.aliases.push((format!("Republic of {k}"), k.clone()));
    }
    for c in w.companies.iter().take(4) {
        let short = c.split(' ').next().unwrap().to_string();
        w.aliases.push((format!("{short} Co"), c.clone()));
    }
    w
}

fn person(names: &mut Names, rng: &mut ChaCha8Rng, w: &mut World) -> String {
    let p = format!("{} {}", names.base(rng, 2), names.base(rng, 2));
    let city = w.cities.choose(rng).unwrap().clone();
    w.add(&p, "born_in", &city);
    w.people.push(p.clone());
    p
}

/// A question with its schema chain in reply format.
struct Question {
    id: String,
    text: String,
    schema: Vec<String>,
    answer: String,
    /// Entity named in the question.
    topic: String,
    /// Entity adjacent to the answer on the chain.
    penultimate: String,
    /// An answer of the same kind that is wrong for this question.
    decoy: String,
}

fn solve(graph: &KnowledgeGraph, schema: &[String]) -> Vec<String> {
    let text = format!("```\n{}\nanswer: ?x\n```", schema.join("\n"));
    let parsed = parse_schema_reply(&text);
    let ast = compile_schema(&parsed.schema).expect("generated schema compiles");
    let result = execute(&ast, graph);
    result.column(ast.answer_variable()).into_iter().map(|e| graph.label(e).to_string()).collect()
}

fn questions(w: &World, graph: &KnowledgeGraph, rng: &mut ChaCha8Rng) -> Vec<Question> {
    let mut out: Vec<Question> = Vec::new();
    let mut used_topics: BTreeSet<(usize, String)> = BTreeSet::new();
    let pick = |v: &Vec<String>, rng: &mut ChaCha8Rng| v.choose(rng).unwrap().clone();
    for template in 0..10usize {
        let mut made = 0;
        let mut attempts = 0;
        while made < 5 && attempts < 500 {
            attempts += 1;
            let (text, schema, topic, decoy_pool): (String, Vec<String>, String, &Vec<String>) = match template {
                0 => {
                    let k = pick(&w.countries, rng);
                    (format!("What is the capital of {k}?"), vec![format!("?x|capital_of|{k}")], k, &w.cities)
                }
                1 => {
                    let k = pick(&w.countries, rng);
                    (format!("Who is the leader of {k}?"), vec![format!("?x|leader_of|{k}")], k, &w.people)
                }
                2 => {
                    let k = pick(&w.countries, rng);
                    (format!("What is the official language of {k}?"), vec![format!("{k}|official_language|?x")], k, &w.languages)
                }
                3 => {
                    let c = pick(&w.companies, rng);
                    (format!("Who founded {c}?"), vec![format!("{c}|founded_by|?x")], c, &w.people)
                }
                4 => {
                    let k = pick(&w.countries, rng);
                    (
                        format!("Which river flows through the capital of {k}?"),
                        vec![format!("?c|capital_of|{k}"), "?x|flows_through|?c".into()],
                        k,
                        &w.rivers,
                    )
                }
                5 => {
                    let c = pick(&w.companies, rng);
                    let p = w.founder[&c].clone();
                    (
                        format!("In which city is the company founded by {p} headquartered?"),
                        vec![format!("?c|founded_by|{p}"), "?c|headquartered_in|?x".into()],
                        p,
                        &w.cities,
                    )
                }
                6 => {
                    let p = pick(&w.people, rng);
                    (
                        format!("In which country was {p} born?"),
                        vec![format!("{p}|born_in|?c"), "?c|city_of|?x".into()],
                        p,
                        &w.countries,
                    )
                }
                7 => {
                    let c = pick(&w.companies, rng);
                    (
                        format!("In which country was the founder of {c} born?"),
                        vec![format!("{c}|founded_by|?p"), "?p|born_in|?c".into(), "?c|city_of|?x".into()],
                        c,
                        &w.countries,
                    )
                }
                8 => {
                    let r = pick(&w.rivers[..14].to_vec(), rng);
                    (
                        format!("Who leads the country whose capital the {r} flows through?"),
                        vec![format!("{r}|flows_through|?c"), "?c|capital_of|?k".into(), "?x|leader_of|?k".into()],
                        r,
                        &w.people,
                    )
                }
                _ => {
                    let k = pick(&w.countries, rng);
                    let p = w.leaders[&k].clone();
                    (
                        format!("What language is spoken in the country led by {p}?"),
                        vec![format!("{p}|leader_of|?k"), "?k|official_language|?x".into()],
                        p,
                        &w.languages,
                    )
                }
            };
            if !used_topics.insert((template, topic.clone())) {
                continue;
            }
            let answers = solve(graph, &schema);
            let [answer] = answers.as_slice() else {
                continue;
            };
            // the entity next to the answer: solve the chain without its last hop
            let penultimate = if schema.len() == 1 {
                topic.clone()
            } else {
                let mut prefix = schema[..schema.len() - 1].to_vec();
                let last = schema.last().unwrap();
                let last_var = last.split('|').find(|p| p.starts_with('?') && *p != "?x").unwrap().to_string();
                for s in &mut prefix {
                    *s = s.replace(&last_var, "?x");
                }
                let mids = solve(graph, &prefix);
                let [mid] = mids.as_slice() else {
                    continue;
                };
                mid.clone()
            };
            let decoy = loop {
                let d = decoy_pool.choose(rng).unwrap();
                if d != answer {
                    break d.clone();
                }
            };
            out.push(Question {
                id: format!("t{template}-{made}"),
                text,
                schema,
                answer: answer.clone(),
                topic,
                penultimate,
                decoy,
            });
            made += 1;
        }
        assert_eq!(made, 5, "template {template} could not produce five questions");
    }
    out
}

/// Swaps a schema line's relation for one the graph does not have.
fn mangle(line: &str, suffix: &str) -> String {
    let parts: Vec<&str> = line.split('|').collect();
    format!("{}|{}_{suffix}|{}", parts[0], parts[1], parts[2])
}

fn fenced(lines: &[String]) -> String {
    format!("```schema\n{}\nanswer: ?x\n```", lines.join("\n"))
}

fn entry(question: &str, kind: &str, instance: u32, occurrence: Option<u32>, body: Value) -> Value {
    let mut e = json!({"question": question, "kind": kind, "instance": instance, "body": body});
    if let Some(o) = occurrence {
        e["occurrence"] = json!(o);
    }
    e
}

fn hypothesis(text: &str, answer: Option<&str>, confidence: f64) -> Value {
    json!({"text": text, "proposed_answer": answer, "confidence": confidence})
}

/// Two-turn grounded dialogue ending in `answer`.
fn recovering(q: &Question, instance: u32, answer: &str, near: &str, confidence: f64) -> Vec<Value> {
    vec![
        entry(&q.text, "hypothesis", instance, Some(0), hypothesis(&format!("Start from {}.", q.topic), None, 0.3)),
        entry(
            &q.text,
            "hypothesis",
            instance,
            Some(1),
            hypothesis(&format!("{near} leads to {answer}."), Some(answer), confidence),
        ),
    ]
}

fn invented(rng: &mut ChaCha8Rng) -> String {
    let a = ["Zarquon", "Quillamor", "Yxtelbrand", "Oomvarra", "Pelluxia", "Grendalor"];
    let b = ["Prime", "Vale", "Spire", "Deep", "Crown"];
    format!("{} {}", a.choose(rng).unwrap(), b.choose(rng).unwrap())
}

fn main() -> std::io::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy");
    fs::create_dir_all(&dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let world = build(&mut rng);

    let mut graph_text = String::new();
    for (h, r, t) in &world.triples {
        graph_text.push_str(&format!("{h}\t{r}\t{t}\n"));
    }
    let alias_text: String = world.aliases.iter().map(|(a, c)| format!("{a}\t{c}\n")).collect();
    fs::write(dir.join("graph.tsv"), &graph_text)?;
    fs::write(dir.join("aliases.tsv"), &alias_text)?;
    let graph = KnowledgeGraph::load(graph_text.as_bytes(), Some(alias_text.as_bytes())).expect("generated graph loads");

    let qs = questions(&world, &graph, &mut rng);
    let dataset: String = qs
        .iter()
        .map(|q| json!({"id": q.id, "question": q.text, "answers": [q.answer]}).to_string() + "\n")
        .collect();
    fs::write(dir.join("questions.jsonl"), dataset)?;

    // correct schemas for every question
    let correct: Vec<Value> =
        qs.iter().map(|q| entry(&q.text, "schema_extraction", 0, None, json!({"text": fenced(&q.schema)}))).collect();
    write_script(&dir.join("mock_correct.json"), correct)?;

    // distractors: wrong schemas, hallucinated collaborative answers
    let mut entries = Vec::new();
    let mut manifest = BTreeMap::new();
    for (i, q) in qs.iter().enumerate() {
        let mut hallucinated = Vec::new();
        let schema_text = match i % 5 {
            0 => fenced(&q.schema),
            1 | 2 => {
                let mut s = q.schema.clone();
                let last = s.len() - 1;
                s[last] = mangle(&s[last], "alleged");
                fenced(&s)
            }
            3 => {
                let fake = invented(&mut rng);
                hallucinated.push(fake.clone());
                format!("```schema\n{}\nconstraint: equality ?x {fake}\nanswer: ?x\n```", q.schema.join("\n"))
            }
            _ => {
                // a real but wrong entity pinned by the constraint
                hallucinated.push(q.decoy.clone());
                format!("```schema\n{}\nconstraint: equality ?x {}\nanswer: ?x\n```", q.schema.join("\n"), q.decoy)
            }
        };
        entries.push(entry(&q.text, "schema_extraction", 0, None, json!({ "text": schema_text })));

        let fake = invented(&mut rng);
        hallucinated.push(fake.clone());
        entries.push(entry(
            &q.text,
            "hypothesis",
            0,
            Some(0),
            hypothesis(&format!("I am fairly sure it is {fake}."), Some(&fake), 0.95),
        ));
        let designed_failure = i % 10 == 1;
        if designed_failure {
            // instance 1 stays silent, instance 2 names a real entity it never checks
            hallucinated.push(q.decoy.clone());
            entries.push(entry(
                &q.text,
                "hypothesis",
                2,
                None,
                hypothesis("Recalling this from memory without looking.", Some(&q.decoy), 0.9),
            ));
        } else {
            entries.extend(recovering(q, 1, &q.answer, &q.penultimate, 0.85));
            entries.extend(recovering(q, 2, &q.answer, &q.penultimate, 0.8));
        }
        manifest.insert(q.id.clone(), json!({"hallucinated": hallucinated, "designed_failure": designed_failure}));
    }
    write_script(&dir.join("mock_distractor.json"), entries)?;
    fs::write(dir.join("distractor_manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;

    // noisy: mostly correct schemas, collaboration alone is unreliable
    let mut entries = Vec::new();
    for (i, q) in qs.iter().enumerate() {
        let schema_text = if i % 10 == 3 {
            let mut s = q.schema.clone();
            s[0] = mangle(&s[0], "unverified");
            fenced(&s)
        } else {
            fenced(&q.schema)
        };
        entries.push(entry(&q.text, "schema_extraction", 0, None, json!({ "text": schema_text })));
        let fake = invented(&mut rng);
        if i % 3 == 0 {
            entries.extend(recovering(q, 0, &q.answer, &q.penultimate, 0.9));
        } else {
            entries.push(entry(
                &q.text,
                "hypothesis",
                0,
                Some(0),
                hypothesis(&format!("It is surely {}.", q.decoy), Some(&q.decoy), 0.9),
            ));
        }
        entries.push(entry(&q.text, "hypothesis", 1, Some(0), hypothesis(&format!("Everyone knows it is {fake}."), Some(&fake), 0.95)));
        entries.extend(recovering(q, 2, &q.answer, &q.penultimate, 0.75));
    }
    write_script(&dir.join("mock_noisy.json"), entries)?;

    println!("{} triples, {} aliases, {} questions", graph.triples().len(), world.aliases.len(), qs.len());
    Ok(())
}

fn write_script(path: &Path, entries: Vec<Value>) -> std::io::Result<()> {
    let script = json!({"strict": false, "entries": entries});
    fs::write(path, serde_json::to_string_pretty(&script)? + "\n")
}
