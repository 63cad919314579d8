use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::OnceLock;

use clap::{Args, Parser, Subcommand};
use semql::aqe::{AqeConfig, Objective};
use semql::bench::{
    explain_query, generate_corpus, render_table, run_bench, run_query, standard_variants, write_corpus, write_json,
    write_reports, CorpusSpec, OutputFormat, PairTarget, ProviderConfig, ProviderKind, RunConfig,
};
use semql::catalog::Catalog;
use semql::engine::{EngineConfig, DEFAULT_BATCH_SIZE};
use semql::llm::{Gateway, MockOracle};
use semql::optimizer::OptimizerFlags;
use semql::Error;

/// The query text, kept for annotating parse errors.
static QUERY: OnceLock<String> = OnceLock::new();

#[derive(Parser)]
#[command(name = "semql", version, about = "SQL with natural-language operators evaluated by language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, optimize and execute a query.
    Run(RunArgs),
    /// Print the physical plan without calling any model.
    Explain(ExplainArgs),
    /// Run a query under several optimization settings and compare them.
    Bench(BenchArgs),
    /// Write a synthetic corpus with known filter verdicts and a mock ruleset.
    GenCorpus(GenArgs),
}

#[derive(Args)]
struct QueryArgs {
    /// Table manifest (JSON list of {name, path, schema?}).
    #[arg(long)]
    tables: Option<PathBuf>,
    #[arg(short = 'q', long, conflicts_with = "query_file")]
    query: Option<String>,
    #[arg(long)]
    query_file: Option<PathBuf>,
}

impl QueryArgs {
    fn text(&self) -> Result<Option<String>, Error> {
        let q = match (&self.query, &self.query_file) {
            (Some(q), _) => q.clone(),
            (None, Some(p)) => std::fs::read_to_string(p)?,
            (None, None) => return Ok(None),
        };
        let _ = QUERY.set(q.clone());
        Ok(Some(q))
    }

    fn required(&self) -> Result<String, Error> {
        self.text()?
            .ok_or_else(|| Error::Config("a query is required (--query or --query-file)".into()))
    }
}

#[derive(Args)]
struct ProviderArgs {
    /// Mock ruleset; implies the mock provider unless --provider says otherwise.
    #[arg(long)]
    mock_oracle: Option<PathBuf>,
    /// mock or openai.
    #[arg(long)]
    provider: Option<ProviderKind>,
    /// OpenAI-compatible endpoint, e.g. http://localhost:8000/v1.
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long, default_value = "mock")]
    model: String,
    /// Model for optimizer calls; defaults to --model.
    #[arg(long)]
    aux_model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    api_key_env: String,
    /// Pricing file: {"input_rate": .., "output_rate": ..} in dollars per million tokens.
    #[arg(long)]
    pricing: Option<PathBuf>,
    /// Reuse responses to identical prompts.
    #[arg(long)]
    cache: bool,
}

impl ProviderArgs {
    fn config(&self) -> ProviderConfig {
        let kind = self.provider.unwrap_or(if self.base_url.is_some() && self.mock_oracle.is_none() {
            ProviderKind::OpenAi
        } else {
            ProviderKind::Mock
        });
        ProviderConfig {
            kind,
            mock_rules: self.mock_oracle.clone(),
            base_url: self.base_url.clone(),
            model: self.model.clone(),
            aux_model: self.aux_model.clone(),
            api_key_env: self.api_key_env.clone(),
            pricing: self.pricing.clone(),
            cache: self.cache,
        }
    }
}

#[derive(Args)]
struct EngineArgs {
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    batch_size: usize,
    #[arg(long)]
    no_fusion: bool,
    #[arg(long)]
    no_batching: bool,
    #[arg(long)]
    no_aqe: bool,
    /// Rows per chunk.
    #[arg(long)]
    chunk_size: Option<usize>,
    /// Concurrent model calls per operator.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value_t = 1.0 / 32.0)]
    delta1: f64,
    #[arg(long, default_value_t = 3.0 / 32.0)]
    delta2: f64,
    #[arg(long, default_value_t = 0.5)]
    mcc_threshold: f64,
    #[arg(long, default_value_t = 0.8)]
    tau_acc: f64,
    #[arg(long, default_value = "latency")]
    objective: Objective,
}

impl EngineArgs {
    fn config(&self) -> EngineConfig {
        let mut e = EngineConfig {
            batch_size: self.batch_size,
            batching: !self.no_batching,
            fusion: !self.no_fusion,
            aqe: !self.no_aqe,
            aqe_config: AqeConfig {
                delta1: self.delta1,
                delta2: self.delta2,
                mcc_threshold: self.mcc_threshold,
                acc_threshold: self.tau_acc,
                objective: self.objective,
                ..AqeConfig::default()
            },
            ..EngineConfig::default()
        };
        if let Some(c) = self.chunk_size {
            e.chunk_capacity = c;
        }
        if let Some(w) = self.workers {
            e.workers = w;
        }
        e
    }
}

#[derive(Args)]
struct OptimizerArgs {
    #[arg(long)]
    no_compress: bool,
    #[arg(long)]
    no_deduce: bool,
}

impl OptimizerArgs {
    fn flags(&self) -> OptimizerFlags {
        OptimizerFlags {
            compress: !self.no_compress,
            deduce: !self.no_deduce,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    query: QueryArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    #[command(flatten)]
    engine: EngineArgs,
    /// Write the per-operator metrics tree as JSON.
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    /// Write adaptive-execution traces as JSON.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[arg(long, default_value = "table")]
    output: OutputFormat,
    /// Print the plan and stop.
    #[arg(long)]
    explain: bool,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    query: QueryArgs,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Without --tables and a query, a generated corpus and its conjunctive query are used.
    #[command(flatten)]
    query: QueryArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    #[command(flatten)]
    engine: EngineArgs,
    /// Seed of the generated corpus.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Where to write the JSON report.
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Corpus specification as JSON; the flags below are ignored when given.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 864)]
    rows: usize,
    /// Target selectivity of each filter, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0.66, 0.77, 0.22])]
    selectivity: Vec<f64>,
    /// Pair correlation target `i:j:mcc` with 1-based filter numbers; repeatable.
    #[arg(long, value_parser = parse_pair)]
    correlation: Vec<PairTarget>,
    /// Share of rows whose text is `nan`.
    #[arg(long, default_value_t = 0.0)]
    nan_rate: f64,
    #[arg(long, default_value = "corpus")]
    table: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn parse_pair(s: &str) -> Result<PairTarget, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [i, j, m] = parts[..] else {
        return Err(format!("expected i:j:mcc, got {s:?}"));
    };
    let idx = |x: &str| {
        x.parse::<usize>()
            .ok()
            .filter(|&v| v >= 1)
            .map(|v| v - 1)
            .ok_or_else(|| format!("filter numbers start at 1, got {x:?}"))
    };
    Ok(PairTarget {
        i: idx(i)?,
        j: idx(j)?,
        mcc: m.parse().map_err(|_| format!("bad correlation {m:?}"))?,
    })
}

fn cmd_run(a: RunArgs) -> Result<(), Error> {
    let cfg = RunConfig {
        provider: a.provider.config(),
        tables: a.query.tables.clone(),
        optimizer: a.optimizer.flags(),
        engine: a.engine.config(),
        metrics_out: a.metrics_out.clone(),
        trace_out: a.trace_out.clone(),
    };
    let query = a.query.required()?;
    if a.explain {
        let catalog = cfg.catalog()?;
        print!("{}", explain_query(&query, &catalog, &cfg.engine)?);
        return Ok(());
    }
    cfg.validate()?;
    let gateway = cfg.gateway()?;
    let catalog = cfg.catalog()?;
    let out = run_query(&query, &catalog, &gateway, cfg.optimizer, &cfg.engine)?;
    write_reports(&cfg, &out)?;
    print!("{}", render_table(&out.result.table, a.output)?);
    log::info!(
        "{} model calls ({} optimizer), {} input and {} output tokens",
        out.total_calls(),
        out.optimizer.aux_calls,
        out.result.usage.usage.input_tokens,
        out.result.usage.usage.output_tokens
    );
    Ok(())
}

fn cmd_explain(a: ExplainArgs) -> Result<(), Error> {
    let engine = a.engine.config();
    engine.validate()?;
    let catalog = Catalog::new();
    if let Some(t) = &a.query.tables {
        semql::catalog::load_manifest(t, &catalog)?;
    }
    print!("{}", explain_query(&a.query.required()?, &catalog, &engine)?);
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<(), Error> {
    let mut engine = a.engine.config();
    engine.validate()?;
    let provider = a.provider.config();
    let (catalog, query, rules) = match (a.query.text()?, &a.query.tables) {
        (Some(q), Some(t)) => {
            let catalog = Catalog::new();
            semql::catalog::load_manifest(t, &catalog)?;
            (catalog, q, None)
        }
        (None, None) => {
            let spec = CorpusSpec::new(864, &[0.66, 0.77, 0.22], a.seed).with_correlation(0, 1, 0.755);
            let corpus = generate_corpus(&spec)?;
            let catalog = Catalog::new();
            catalog.register(corpus.table.clone());
            if a.engine.chunk_size.is_none() {
                engine.chunk_capacity = 27;
            }
            (catalog, corpus.conjunctive_query(), Some(corpus.rules))
        }
        _ => return Err(Error::Config("bench needs both --tables and a query, or neither".into())),
    };
    let gateway = || -> Result<Gateway, Error> {
        match (&rules, provider.mock_rules.is_none() && provider.kind == ProviderKind::Mock) {
            (Some(r), true) => Ok(Gateway::new(std::sync::Arc::new(MockOracle::new(r.clone())?), provider.model.clone())),
            _ => {
                let cfg = RunConfig {
                    provider: provider.clone(),
                    ..RunConfig::default()
                };
                cfg.validate()?;
                cfg.gateway()
            }
        }
    };
    let report = run_bench(&query, &catalog, gateway, &standard_variants(&engine))?;
    print!("{}", report.summary());
    if let Some(p) = &a.report_out {
        write_json(p, &report)?;
    }
    Ok(())
}

fn cmd_gen(a: GenArgs) -> Result<(), Error> {
    let spec: CorpusSpec = match &a.spec {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => CorpusSpec {
            rows: a.rows,
            selectivities: a.selectivity.clone(),
            correlations: a.correlation.clone(),
            seed: a.seed,
            nan_rate: a.nan_rate,
            table: a.table.clone(),
        },
    };
    let corpus = generate_corpus(&spec)?;
    write_corpus(&corpus, &a.out)?;
    let sel: Vec<String> = corpus.stats.selectivities.iter().map(|s| format!("{s:.3}")).collect();
    println!(
        "wrote {} rows to {} (selectivities {})",
        spec.rows,
        a.out.display(),
        sel.join(", ")
    );
    Ok(())
}

fn report(e: &Error) -> serde_json::Value {
    let kind = match e {
        Error::Parse(_) => "parse",
        Error::Catalog(_) => "catalog",
        Error::Llm(_) => "llm",
        Error::Execution { .. } => "execution",
        Error::Config(_) => "config",
        Error::Corpus(_) => "corpus",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    };
    let mut v = serde_json::json!({"error": kind, "message": e.to_string()});
    match e {
        Error::Execution { node, .. } => v["node"] = node.clone().into(),
        Error::Parse(p) => {
            v["span"] = serde_json::json!([p.span.start, p.span.end]);
            if let Some(q) = QUERY.get() {
                v["annotated"] = p.annotate(q).into();
            }
        }
        _ => {}
    }
    v
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SEMQL_LOG", "warn")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Explain(a) => cmd_explain(a),
        Command::Bench(a) => cmd_bench(a),
        Command::GenCorpus(a) => cmd_gen(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", report(&e));
            ExitCode::from(if matches!(e, Error::Config(_)) { 2 } else { 1 })
        }
    }
}
