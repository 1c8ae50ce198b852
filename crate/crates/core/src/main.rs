use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sgr::adapter::{LanguageModel, MockAdapter, MockScript, RemoteAdapter, RemoteConfig};
use sgr::gql::{execute, parse_query};
use sgr::harness::{
    evaluate, load_dataset, load_predictions, run_dataset, write_outputs, MetricsReport, PolicyKind, RunConfig,
    DEFAULT_WORKERS,
};
use sgr::kg::KnowledgeGraph;

#[derive(Parser)]
#[command(name = "sgr", version, about = "Stepwise question answering over a knowledge graph")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer every question in a dataset and write traces, predictions and metrics.
    Run(RunArgs),
    /// Run a graph query and print the answer column.
    Query {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        aliases: Option<PathBuf>,
        query: String,
    },
    /// Score a predictions file against a dataset.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
    },
    /// Compare the full pipeline with schema guidance off and graph retrieval off.
    Ablate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    aliases: Option<PathBuf>,
    #[arg(long)]
    dataset: PathBuf,
    /// Scripted mock replies (JSON).
    #[arg(long, conflicts_with = "remote")]
    mock: Option<PathBuf>,
    /// Use the remote endpoint named by SGR_LLM_ENDPOINT.
    #[arg(long)]
    remote: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_WORKERS)]
    workers: usize,
    /// Fail on unscripted mock requests and exit nonzero if any example errored.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lambda_alpha: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    hops: Option<usize>,
    #[arg(long = "t-max")]
    t_max: Option<usize>,
    #[arg(long = "m")]
    m: Option<usize>,
    #[arg(long, value_parser = ["topk", "threshold"])]
    policy: Option<String>,
    #[arg(long)]
    early_stop_conf: Option<f64>,
    #[arg(long)]
    disable_schema: bool,
    #[arg(long)]
    disable_graph_retrieval: bool,
    #[arg(long)]
    rerank_after_validation: bool,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.lambda {
            c.lambda = v;
        }
        if let Some(v) = self.lambda_alpha {
            c.lambda_alpha = Some(v);
        }
        if let Some(v) = self.tau {
            c.tau = v;
        }
        if let Some(v) = self.k {
            c.k = v;
        }
        if let Some(v) = self.hops {
            c.hops = v;
        }
        if let Some(v) = self.t_max {
            c.t_max = v;
        }
        if let Some(v) = self.m {
            c.m = v;
        }
        if let Some(p) = &self.policy {
            c.policy = if p == "threshold" { PolicyKind::Threshold } else { PolicyKind::Topk };
        }
        if let Some(v) = self.early_stop_conf {
            c.early_stop_conf = v;
        }
        c.disable_schema |= self.disable_schema;
        c.disable_graph_retrieval |= self.disable_graph_retrieval;
        c.rerank_after_validation |= self.rerank_after_validation;
        c.check()?;
        Ok(c)
    }

    fn model(&self) -> Result<Box<dyn LanguageModel>> {
        match (&self.mock, self.remote) {
            (Some(path), _) => {
                let mut script = MockScript::load(path)?;
                script.strict |= self.strict;
                Ok(Box::new(MockAdapter::new(script)))
            }
            (None, true) => Ok(Box::new(RemoteAdapter::new(RemoteConfig::from_env()?))),
            (None, false) => bail!("one of --mock or --remote is required"),
        }
    }

    fn graph(&self) -> Result<KnowledgeGraph> {
        load_graph(&self.graph, self.aliases.as_deref())
    }
}

fn load_graph(graph: &Path, aliases: Option<&Path>) -> Result<KnowledgeGraph> {
    KnowledgeGraph::load_files(graph, aliases).with_context(|| format!("loading {}", graph.display()))
}

fn run(args: &RunArgs) -> Result<ExitCode> {
    let config = args.config()?;
    let graph = args.graph()?;
    let examples = load_dataset(&args.dataset)?;
    let model = args.model()?;
    let outcomes = run_dataset(&examples, &graph, model.as_ref(), &config, args.workers)?;
    let report = match &args.out {
        Some(out) => write_outputs(out, &outcomes, &examples)?,
        None => {
            let preds: Vec<_> = outcomes.iter().map(|o| o.prediction.clone()).collect();
            evaluate(&preds, &examples)?
        }
    };
    print!("{}", report.table());
    let errored = outcomes.iter().filter(|o| o.trace.errored).count();
    if errored > 0 {
        eprintln!("{errored} example(s) hit adapter errors");
        if args.strict {
            return Ok(ExitCode::FAILURE);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn ablate(args: &RunArgs) -> Result<ExitCode> {
    let base = args.config()?;
    let graph = args.graph()?;
    let examples = load_dataset(&args.dataset)?;
    let variants = [
        ("full", RunConfig { disable_schema: false, disable_graph_retrieval: false, ..base.clone() }),
        ("no_schema", RunConfig { disable_schema: true, disable_graph_retrieval: false, ..base.clone() }),
        ("no_retrieval", RunConfig { disable_schema: false, disable_graph_retrieval: true, ..base.clone() }),
    ];
    let mut rows: Vec<(&str, MetricsReport)> = Vec::new();
    for (name, config) in &variants {
        let model = args.model()?;
        let outcomes = run_dataset(&examples, &graph, model.as_ref(), config, args.workers)?;
        let report = match &args.out {
            Some(out) => write_outputs(&out.join(name), &outcomes, &examples)?,
            None => {
                let preds: Vec<_> = outcomes.iter().map(|o| o.prediction.clone()).collect();
                evaluate(&preds, &examples)?
            }
        };
        rows.push((name, report));
    }
    println!("{:<14}{:>8}{:>10}{:>8}", "config", "hits@1", "accuracy", "f1");
    for (name, r) in &rows {
        println!("{name:<14}{:>8.3}{:>10.3}{:>8.3}", r.hits_at_1, r.accuracy, r.f1);
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Ablate(args) => ablate(args),
        Command::Query { graph, aliases, query } => (|| {
            let graph = load_graph(graph, aliases.as_deref())?;
            let ast = parse_query(query)?;
            let result = execute(&ast, &graph);
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            for e in result.column(ast.answer_variable()) {
                println!("{}", graph.label(e));
            }
            Ok(ExitCode::SUCCESS)
        })(),
        Command::Eval { pred, gold } => (|| {
            let report = evaluate(&load_predictions(pred)?, &load_dataset(gold)?)?;
            print!("{}", report.table());
            Ok(ExitCode::SUCCESS)
        })(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
