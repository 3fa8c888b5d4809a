mod backends;
mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cone_core::analysis::{kendall_tau, spearman_rho, SystemRanking, TauVariant};
use cone_core::corpus::{
    self, parse_generation_run, parse_gold_responses, parse_nugget_file, parse_passages, parse_qrels, parse_score_tables,
    parse_topics, parse_trec_run, validate_nugget_turns, write_nugget_file, write_qrels, ExternalScoreTable, NuggetSet,
    NuggetSource, ParseMode, RetrievalRun,
};
use cone_core::dedup::deduplicate;
use cone_core::evaluate::{
    self, evaluate_generation, per_turn_tsv, retrieval_report, retrieval_tsv, EvalInputs, EvalOptions, GenerationReport,
    GoldVariant, Matching, NuggetLabel, ParseFailurePolicyName, RetrievalReport,
};
use cone_core::gateway::Gateway;
use cone_core::matcher::{match_ntn, match_ntr, match_ntr_nli, ParseFailurePolicy};
use cone_core::metrics::{evaluate_retrieval, precision_ntn, recall, Gain, RetrievalConfig};
use cone_core::nuggetizer::Nuggetizer;
use cone_core::pooling::{build_pool, grade_pool, AcceptAll, GradeThresholdFilter, LlmJudge, Pool, RejectAll, RelevanceFilter};
use serde::Serialize;

use crate::backends::{build_gateway, BackendChoice};
use crate::config::Config;

/// Nugget-based evaluation of conversational retrieval-augmented generation.
#[derive(Parser)]
#[command(name = "cone", version)]
struct Cli {
    /// Append-only JSONL cache of backend calls.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    /// Maximum backend calls in flight.
    #[arg(long, global = true)]
    concurrency: Option<usize>,
    /// Flat TOML file providing defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// LLM backend: http, mock, yes, no or canned:<file>.
    #[arg(long, global = true)]
    llm: Option<String>,
    /// Entailment backend: http, exact or substring.
    #[arg(long, global = true)]
    nli: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract nuggets from judged passages (or from run responses).
    Extract(ExtractArgs),
    /// Match gold nuggets against the responses of a generation run.
    Match(MatchArgs),
    /// Remove entailed duplicates within each turn's nugget set.
    Dedup(DedupArgs),
    /// Evaluate a generation run and write the full report.
    EvalGeneration(EvalGenerationArgs),
    /// Evaluate a TREC run against qrels.
    EvalRetrieval(EvalRetrievalArgs),
    /// Rank correlation between two metric columns.
    Correlate(CorrelateArgs),
    /// Build an assessment pool from runs, or grade one.
    Pool(PoolArgs),
    /// Collate report files into one run-by-metric table.
    Report(ReportArgs),
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    topics: Option<PathBuf>,
    /// Extract from judged passages listed in these qrels.
    #[arg(long)]
    qrels: Option<PathBuf>,
    #[arg(long)]
    passages: Option<PathBuf>,
    /// Extract from the rank-1 responses of this generation run instead.
    #[arg(long)]
    run: Option<PathBuf>,
    #[arg(long)]
    min_grade: Option<u8>,
    /// Fail on completion lines that are not spans of the text.
    #[arg(long)]
    strict_spans: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatchModeArg {
    Ntn,
    Ntr,
    NtrNli,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long, value_enum)]
    mode: MatchModeArg,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    run: PathBuf,
    /// Needed to extract response nuggets in ntn mode.
    #[arg(long)]
    topics: Option<PathBuf>,
    #[arg(long)]
    strict_spans: bool,
    /// Abort on an unparseable judge reply instead of counting it as no.
    #[arg(long)]
    abort_on_parse_failure: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DedupArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalGenerationArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    topics: Option<PathBuf>,
    /// Gold nugget file, as PATH or VARIANT=PATH; repeatable.
    #[arg(long)]
    gold_nuggets: Vec<String>,
    /// Variant of unlabelled --gold-nuggets paths.
    #[arg(long, default_value = "human")]
    gold_source: String,
    #[arg(long)]
    matching: Option<String>,
    #[arg(long)]
    gold_responses: Option<PathBuf>,
    /// Passage texts; enables groundedness.
    #[arg(long)]
    passages: Option<PathBuf>,
    /// Provenance passages considered for groundedness.
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    strict_spans: bool,
    #[arg(long)]
    abort_on_parse_failure: bool,
    /// Participant score table; defaults to the bundled one.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-turn metrics as an aligned table.
    #[arg(long)]
    tsv: Option<PathBuf>,
}

#[derive(Args)]
struct EvalRetrievalArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    qrels: Option<PathBuf>,
    /// Cutoffs for nDCG, precision and recall.
    #[arg(long, value_delimiter = ',', default_values_t = [5usize, 20])]
    k: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    depth: usize,
    #[arg(long)]
    rel_threshold: Option<u8>,
    #[arg(long)]
    gain: Option<String>,
    #[arg(long)]
    lenient: bool,
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tsv: Option<PathBuf>,
}

#[derive(Args)]
struct CorrelateArgs {
    /// SOURCE:COLUMN, SOURCE being a score table, a report, or
    /// `baseline-generation` / `baseline-retrieval`.
    #[arg(long)]
    metric_a: String,
    #[arg(long)]
    metric_b: String,
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[command(args_conflicts_with_subcommands = true)]
struct PoolArgs {
    #[command(subcommand)]
    grade: Option<PoolCommand>,
    /// Directory of TREC run files.
    #[arg(long)]
    runs: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    k5: usize,
    #[arg(long, default_value_t = 30)]
    kmax: usize,
    /// Filter for ranks beyond --k5: llm, accept-all or reject-all.
    #[arg(long, default_value = "llm")]
    filter: String,
    #[arg(long)]
    min_grade: Option<u8>,
    #[arg(long)]
    topics: Option<PathBuf>,
    #[arg(long)]
    passages: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum PoolCommand {
    /// Grade every pooled passage with the LLM judge.
    Grade {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        topics: Option<PathBuf>,
        #[arg(long)]
        passages: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ReportArgs {
    /// Generation or retrieval report files.
    #[arg(long, num_args = 1.., required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Ctx {
    cfg: Config,
    backends: BackendChoice,
}

impl Ctx {
    fn gateway(&self) -> Result<Gateway> {
        build_gateway(&self.backends)
    }
}

fn pick(flag: &Option<PathBuf>, cfg: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.clone().or_else(|| cfg.clone()).ok_or_else(|| anyhow!("missing --{name} (or `{}` in the config file)", name.replace('-', "_")))
}

fn read(path: &Path) -> Result<String> {
    corpus::read_file(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn load_topics(path: &Path) -> Result<corpus::Topics> {
    parse_topics(&read(path)?).with_context(|| format!("parsing topics {}", path.display()))
}

fn load_baseline(path: &Option<PathBuf>, bundled: fn() -> Vec<ExternalScoreTable>) -> Result<Vec<ExternalScoreTable>> {
    match path {
        Some(p) => parse_score_tables(&read(p)?).with_context(|| format!("parsing score table {}", p.display())),
        None => Ok(bundled()),
    }
}

fn parse_matching(s: &str) -> Result<Matching> {
    Ok(match s {
        "ntn" => Matching::Ntn,
        "ntr" => Matching::Ntr,
        "ntr-nli" => Matching::NtrNli,
        _ => bail!("unknown matching `{s}` (expected ntn, ntr or ntr-nli)"),
    })
}

fn nugget_source(v: GoldVariant) -> NuggetSource {
    match v.baseline_family() {
        "human" => NuggetSource::Human,
        _ => NuggetSource::Llm,
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

fn run() -> Result<i32> {
    let cli = Cli::parse();
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let backends = BackendChoice {
        llm: cli.llm.clone().or_else(|| cfg.llm.clone()).unwrap_or_else(|| "http".into()),
        nli: cli.nli.clone().or_else(|| cfg.nli.clone()).unwrap_or_else(|| "http".into()),
        cache: cli.cache.clone().or_else(|| cfg.cache.clone()),
        concurrency: cli.concurrency.or(cfg.concurrency).unwrap_or(4).max(1),
    };
    let ctx = Ctx { cfg, backends };
    match cli.command {
        Command::Extract(a) => extract(&ctx, a),
        Command::Match(a) => match_cmd(&ctx, a),
        Command::Dedup(a) => dedup(&ctx, a),
        Command::EvalGeneration(a) => eval_generation(&ctx, a),
        Command::EvalRetrieval(a) => eval_retrieval(&ctx, a),
        Command::Correlate(a) => correlate(&ctx, a),
        Command::Pool(a) => pool(&ctx, a),
        Command::Report(a) => report(a),
    }
}

fn extract(ctx: &Ctx, a: ExtractArgs) -> Result<i32> {
    let topics = load_topics(&pick(&a.topics, &ctx.cfg.topics, "topics")?)?;
    let strict = a.strict_spans || ctx.cfg.strict_spans.unwrap_or(false);
    if let Some(run_path) = &a.run {
        let run = parse_generation_run(&read(run_path)?)?;
        let gateway = ctx.gateway()?;
        let nuggetizer = Nuggetizer::new(&gateway).strict(strict).source(NuggetSource::Response);
        let mut sets = BTreeMap::new();
        let mut failed = 0;
        for (turn_id, response) in &run.responses {
            let query = topics.query_for(turn_id).ok_or_else(|| anyhow!("turn `{turn_id}` is not in the topics"))?;
            match nuggetizer.extract(turn_id, &response.text, query) {
                Ok(out) => {
                    sets.insert(turn_id.clone(), out.nuggets);
                }
                Err(e) => {
                    log::error!("nuggetizer: turn {turn_id}: {e}");
                    failed += 1;
                }
            }
        }
        emit(&a.out, &write_nugget_file(&sets))?;
        return Ok(if failed > 0 { 2 } else { 0 });
    }
    let qrels = parse_qrels(&read(&pick(&a.qrels, &ctx.cfg.qrels, "qrels")?)?)?;
    let passages = parse_passages(&read(&pick(&a.passages, &ctx.cfg.passages, "passages")?)?)?;
    let min_grade = a.min_grade.or(ctx.cfg.min_grade).unwrap_or(2);
    let gateway = ctx.gateway()?;
    let out = Nuggetizer::new(&gateway).strict(strict).extract_for_pool(&qrels, &passages, &topics, min_grade)?;
    for f in &out.failures {
        eprintln!("extract: turn {} passage {}: {}", f.turn_id, f.passage_id, f.error);
    }
    emit(&a.out, &write_nugget_file(&out.sets))?;
    Ok(if out.failures.is_empty() { 0 } else { 2 })
}

#[derive(Serialize)]
struct TurnMatches {
    mode: &'static str,
    recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    precision: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    extracted: Vec<NuggetLabel>,
    gold: Vec<NuggetLabel>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    parse_failures: Vec<String>,
}

fn match_cmd(ctx: &Ctx, a: MatchArgs) -> Result<i32> {
    let gold = parse_nugget_file(&read(&a.gold)?, NuggetSource::Human)?;
    let run = parse_generation_run(&read(&a.run)?)?;
    let topics = match a.mode {
        MatchModeArg::Ntn => Some(load_topics(&pick(&a.topics, &ctx.cfg.topics, "topics")?)?),
        _ => None,
    };
    let gateway = ctx.gateway()?;
    let policy = if a.abort_on_parse_failure { ParseFailurePolicy::Abort } else { ParseFailurePolicy::TreatAsNo };
    let strict = a.strict_spans || ctx.cfg.strict_spans.unwrap_or(false);
    let nuggetizer = Nuggetizer::new(&gateway).strict(strict).source(NuggetSource::Response);
    let mut out = BTreeMap::new();
    let mut failed = 0;
    for (turn_id, g) in &gold {
        let Some(response) = run.responses.get(turn_id) else {
            log::warn!("turn {turn_id}: no response in run {}", run.run_tag);
            continue;
        };
        let result: Result<TurnMatches> = (|| {
            let gold_labels = |m: &cone_core::matcher::MatchMatrix| -> Vec<NuggetLabel> {
                g.iter()
                    .enumerate()
                    .map(|(j, n)| NuggetLabel { nugget_id: n.nugget_id.clone(), text: n.text.clone(), matched: m.gold_decision(j) })
                    .collect()
            };
            Ok(match a.mode {
                MatchModeArg::Ntn => {
                    let topics = topics.as_ref().expect("loaded for ntn");
                    let query = topics.query_for(turn_id).ok_or_else(|| anyhow!("turn `{turn_id}` is not in the topics"))?;
                    let p: NuggetSet = nuggetizer.extract(turn_id, &response.text, query)?.nuggets;
                    let m = match_ntn(&gateway, &p, g)?;
                    let covering = m.covering_extracted().unwrap_or_default();
                    TurnMatches {
                        mode: "ntn",
                        recall: recall(&m),
                        precision: Some(precision_ntn::<f64>(&m).0),
                        extracted: p
                            .iter()
                            .map(|n| NuggetLabel {
                                nugget_id: n.nugget_id.clone(),
                                text: n.text.clone(),
                                matched: covering.contains(n.nugget_id.as_str()),
                            })
                            .collect(),
                        gold: gold_labels(&m),
                        parse_failures: Vec::new(),
                    }
                }
                MatchModeArg::Ntr | MatchModeArg::NtrNli => {
                    let m = if matches!(a.mode, MatchModeArg::Ntr) {
                        match_ntr(&gateway, response, g, policy)?
                    } else {
                        match_ntr_nli(&gateway, response, g)?
                    };
                    TurnMatches {
                        mode: if matches!(a.mode, MatchModeArg::Ntr) { "ntr" } else { "ntr-nli" },
                        recall: recall(&m),
                        precision: None,
                        extracted: Vec::new(),
                        gold: gold_labels(&m),
                        parse_failures: m.parse_failures.clone(),
                    }
                }
            })
        })();
        match result {
            Ok(m) => {
                out.insert(turn_id.clone(), m);
            }
            Err(e) => {
                eprintln!("matcher: turn {turn_id}: {e:#}");
                failed += 1;
            }
        }
    }
    emit(&a.out, &to_json(&out))?;
    Ok(if failed > 0 { 2 } else { 0 })
}

fn dedup(ctx: &Ctx, a: DedupArgs) -> Result<i32> {
    let sets = parse_nugget_file(&read(&a.input)?, NuggetSource::Human)?;
    let gateway = ctx.gateway()?;
    let mut out = BTreeMap::new();
    let mut failed = 0;
    let (mut before, mut after) = (0, 0);
    for (turn_id, set) in sets {
        before += set.len();
        let kept = match deduplicate(&gateway, set) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("dedup: {e}; turn left unchanged");
                failed += 1;
                e.input
            }
        };
        after += kept.len();
        out.insert(turn_id, kept);
    }
    eprintln!("dedup: {before} -> {after} nuggets");
    emit(&a.out, &write_nugget_file(&out))?;
    Ok(if failed > 0 { 2 } else { 0 })
}

fn gold_paths(ctx: &Ctx, a: &EvalGenerationArgs) -> Result<BTreeMap<GoldVariant, PathBuf>> {
    let mut paths = BTreeMap::new();
    for spec in &a.gold_nuggets {
        let (variant, path) = match spec.split_once('=') {
            Some((v, p)) => (v, p),
            None => (a.gold_source.as_str(), spec.as_str()),
        };
        let v = GoldVariant::parse(variant)
            .ok_or_else(|| anyhow!("unknown gold source `{variant}` (expected human, human-dedup, llm or llm-dedup)"))?;
        if paths.insert(v, PathBuf::from(path)).is_some() {
            bail!("gold source `{variant}` given twice");
        }
    }
    if paths.is_empty() {
        for (v, p) in [
            (GoldVariant::Human, &ctx.cfg.gold_human),
            (GoldVariant::HumanDedup, &ctx.cfg.gold_human_dedup),
            (GoldVariant::Llm, &ctx.cfg.gold_llm),
            (GoldVariant::LlmDedup, &ctx.cfg.gold_llm_dedup),
        ] {
            if let Some(p) = p {
                paths.insert(v, p.clone());
            }
        }
    }
    if paths.is_empty() {
        bail!("no gold nuggets given (use --gold-nuggets or gold_* keys in the config file)");
    }
    Ok(paths)
}

fn eval_generation(ctx: &Ctx, a: EvalGenerationArgs) -> Result<i32> {
    // Everything is read and validated before the first backend call.
    let topics = load_topics(&pick(&a.topics, &ctx.cfg.topics, "topics")?)?;
    let run = parse_generation_run(&read(&a.run)?).with_context(|| format!("parsing run {}", a.run.display()))?;
    let mut gold = BTreeMap::new();
    for (variant, path) in gold_paths(ctx, &a)? {
        let sets = parse_nugget_file(&read(&path)?, nugget_source(variant))
            .with_context(|| format!("parsing gold nuggets {}", path.display()))?;
        validate_nugget_turns(&sets, &topics).with_context(|| format!("gold nuggets {}", path.display()))?;
        gold.insert(variant, sets);
    }
    let gold_responses = match a.gold_responses.clone().or_else(|| ctx.cfg.gold_responses.clone()) {
        Some(p) => Some(parse_gold_responses(&read(&p)?).with_context(|| format!("parsing {}", p.display()))?),
        None => None,
    };
    let passages = match a.passages.clone().or_else(|| ctx.cfg.passages.clone()) {
        Some(p) => Some(parse_passages(&read(&p)?).with_context(|| format!("parsing {}", p.display()))?),
        None => None,
    };
    let baselines = load_baseline(&a.baseline.clone().or_else(|| ctx.cfg.baseline.clone()), evaluate::baseline_generation)?;
    let matching = parse_matching(a.matching.as_deref().or(ctx.cfg.matching.as_deref()).unwrap_or("ntn"))?;
    let opts = EvalOptions {
        matching,
        strict_spans: a.strict_spans || ctx.cfg.strict_spans.unwrap_or(false),
        groundedness_top_k: a.top_k.or(ctx.cfg.top_k).unwrap_or(3),
        parse_failures: if a.abort_on_parse_failure { ParseFailurePolicyName::Abort } else { ParseFailurePolicyName::TreatAsNo },
    };
    let gateway = ctx.gateway()?;
    let inputs = EvalInputs {
        topics: &topics,
        run: &run,
        gold: &gold,
        gold_responses: gold_responses.as_ref(),
        passages: passages.as_ref(),
        baselines: &baselines,
    };
    let report = evaluate_generation(&gateway, &inputs, &opts);
    emit(&a.out, &to_json(&report))?;
    if let Some(tsv) = &a.tsv {
        std::fs::write(tsv, per_turn_tsv(&report.per_turn)).with_context(|| format!("writing {}", tsv.display()))?;
    }
    if report.incomplete {
        for e in &report.errors {
            eprintln!("{}: turn {}: {} (hint: {})", e.module, e.turn_id, e.message, e.hint);
        }
        eprintln!("report is incomplete");
        return Ok(2);
    }
    Ok(0)
}

fn parse_gain(s: &str) -> Result<Gain> {
    Ok(match s {
        "linear" => Gain::Linear,
        "exponential" => Gain::Exponential,
        _ => bail!("unknown gain `{s}` (expected linear or exponential)"),
    })
}

fn eval_retrieval(ctx: &Ctx, a: EvalRetrievalArgs) -> Result<i32> {
    let qrels = parse_qrels(&read(&pick(&a.qrels, &ctx.cfg.qrels, "qrels")?)?)?;
    let mode = if a.lenient { ParseMode::Lenient } else { ParseMode::Strict };
    let run = parse_trec_run(&read(&a.run)?, mode).with_context(|| format!("parsing run {}", a.run.display()))?;
    let threshold = a.rel_threshold.or(ctx.cfg.rel_threshold).unwrap_or(1);
    if !(1..=4).contains(&threshold) {
        bail!("--rel-threshold must be between 1 and 4");
    }
    if a.k.contains(&0) {
        bail!("cutoffs must be at least 1");
    }
    let cfg = RetrievalConfig {
        ndcg_ks: a.k.clone(),
        cutoffs: a.k.clone(),
        depth: a.depth,
        threshold,
        gain: parse_gain(a.gain.as_deref().or(ctx.cfg.gain.as_deref()).unwrap_or("linear"))?,
    };
    let scores = evaluate_retrieval::<f64>(&run, &qrels, &cfg);
    let baselines = load_baseline(&a.baseline.clone().or_else(|| ctx.cfg.baseline.clone()), evaluate::baseline_retrieval)?;
    if let Some(tsv) = &a.tsv {
        std::fs::write(tsv, retrieval_tsv(&scores)).with_context(|| format!("writing {}", tsv.display()))?;
    }
    emit(&a.out, &to_json(&retrieval_report(scores, &baselines)))?;
    Ok(0)
}

/// Loads `SOURCE:COLUMN` as run tag -> score.
fn metric_column(spec: &str) -> Result<(String, BTreeMap<String, f64>)> {
    for (i, _) in spec.match_indices(':') {
        let (source, column) = (&spec[..i], &spec[i + 1..]);
        let tables = match source {
            "baseline-generation" => evaluate::baseline_generation(),
            "baseline-retrieval" => evaluate::baseline_retrieval(),
            path if Path::new(path).is_file() => load_score_source(Path::new(path))?,
            _ => continue,
        };
        let table = tables
            .into_iter()
            .find(|t| t.metric_name == column)
            .ok_or_else(|| anyhow!("no column `{column}` in {source}"))?;
        return Ok((spec.to_string(), table.scores));
    }
    bail!("`{spec}` is not SOURCE:COLUMN with an existing source")
}

/// A score table, or a single report read as a one-row table.
fn load_score_source(path: &Path) -> Result<Vec<ExternalScoreTable>> {
    let text = read(path)?;
    if text.trim_start().starts_with('{') {
        let (run_tag, means) = report_means(&text).with_context(|| format!("reading report {}", path.display()))?;
        return Ok(means
            .into_iter()
            .map(|(m, v)| ExternalScoreTable { metric_name: m, scores: [(run_tag.clone(), v)].into_iter().collect() })
            .collect());
    }
    parse_score_tables(&text).with_context(|| format!("parsing score table {}", path.display()))
}

fn report_means(text: &str) -> Result<(String, BTreeMap<String, f64>)> {
    if let Ok(r) = serde_json::from_str::<GenerationReport>(text) {
        return Ok((r.run_tag, r.per_turn.means));
    }
    let r: RetrievalReport = serde_json::from_str(text).context("neither a generation nor a retrieval report")?;
    Ok((r.scores.run_tag, r.scores.means))
}

#[derive(Serialize)]
struct Correlation {
    metric_a: String,
    metric_b: String,
    tau_variant: TauVariant,
    runs: usize,
    kendall_tau: f64,
    spearman_rho: f64,
}

fn correlate(ctx: &Ctx, a: CorrelateArgs) -> Result<i32> {
    let tau = match a.tau.as_deref().or(ctx.cfg.tau.as_deref()).unwrap_or("b") {
        "a" => TauVariant::A,
        "b" => TauVariant::B,
        other => bail!("unknown tau variant `{other}` (expected a or b)"),
    };
    let (name_a, sa) = metric_column(&a.metric_a)?;
    let (name_b, sb) = metric_column(&a.metric_b)?;
    let shared: Vec<&String> = sa.keys().filter(|k| sb.contains_key(*k)).collect();
    let dropped = sa.len() + sb.len() - 2 * shared.len();
    if dropped > 0 {
        log::warn!("{dropped} runs appear in only one source and are left out");
    }
    let ra = SystemRanking::new(name_a.clone(), shared.iter().map(|k| (k.as_str(), sa[*k])))?;
    let rb = SystemRanking::new(name_b.clone(), shared.iter().map(|k| (k.as_str(), sb[*k])))?;
    let out = Correlation {
        metric_a: name_a,
        metric_b: name_b,
        tau_variant: tau,
        runs: shared.len(),
        kendall_tau: kendall_tau(&ra, &rb, tau)?,
        spearman_rho: spearman_rho(&ra, &rb)?,
    };
    emit(&a.out, &to_json(&out))?;
    Ok(0)
}

fn load_runs(dir: &Path) -> Result<Vec<RetrievalRun>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.is_file());
    paths.sort();
    paths
        .iter()
        .map(|p| parse_trec_run(&read(p)?, ParseMode::Strict).with_context(|| format!("parsing run {}", p.display())))
        .collect()
}

fn pool(ctx: &Ctx, a: PoolArgs) -> Result<i32> {
    if let Some(PoolCommand::Grade { pool, topics, passages, out }) = a.grade {
        let pool: Pool = serde_json::from_str(&read(&pool)?).with_context(|| format!("parsing pool {}", pool.display()))?;
        let topics = load_topics(&pick(&topics, &ctx.cfg.topics, "topics")?)?;
        let passages = parse_passages(&read(&pick(&passages, &ctx.cfg.passages, "passages")?)?)?;
        let gateway = ctx.gateway()?;
        let judge = LlmJudge { gateway: &gateway, topics: &topics, passages: &passages };
        let graded = grade_pool(&pool, &judge);
        eprintln!("grade distribution 0-4: {:?}", graded.distribution);
        for (t, p, raw) in &graded.clamped {
            eprintln!("clamped grade {raw} for ({t}, {p})");
        }
        emit(&out, &write_qrels(&graded.qrels))?;
        return Ok(if graded.failures.is_empty() { 0 } else { 2 });
    }
    let runs = load_runs(&a.runs.clone().ok_or_else(|| anyhow!("missing --runs"))?)?;
    let min_grade = i64::from(a.min_grade.or(ctx.cfg.min_grade).unwrap_or(1));
    let result = match a.filter.as_str() {
        "accept-all" => build_pool(&runs, a.k5, a.kmax, &AcceptAll),
        "reject-all" => build_pool(&runs, a.k5, a.kmax, &RejectAll),
        "llm" => {
            let topics = load_topics(&pick(&a.topics, &ctx.cfg.topics, "topics")?)?;
            let passages = parse_passages(&read(&pick(&a.passages, &ctx.cfg.passages, "passages")?)?)?;
            let gateway = ctx.gateway()?;
            let filter = GradeThresholdFilter { judge: LlmJudge { gateway: &gateway, topics: &topics, passages: &passages }, min_grade };
            build_pool(&runs, a.k5, a.kmax, &filter as &dyn RelevanceFilter)
        }
        other => bail!("unknown filter `{other}` (expected llm, accept-all or reject-all)"),
    };
    let pool = result?;
    eprintln!("pool: {} passages over {} turns, {} filter calls", pool.size(), pool.turns.len(), pool.filter_calls);
    emit(&a.out, &to_json(&pool))?;
    Ok(if pool.filter_failures.is_empty() { 0 } else { 2 })
}

fn report(a: ReportArgs) -> Result<i32> {
    let mut by_metric: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for path in &a.reports {
        let (run_tag, means) = report_means(&read(path)?).with_context(|| format!("reading report {}", path.display()))?;
        for (m, v) in means {
            if by_metric.entry(m.clone()).or_default().insert(run_tag.clone(), v).is_some() {
                bail!("run `{run_tag}` appears in more than one report for `{m}`");
            }
        }
    }
    let tables: Vec<ExternalScoreTable> =
        by_metric.into_iter().map(|(metric_name, scores)| ExternalScoreTable { metric_name, scores }).collect();
    emit(&a.out, &corpus::write_score_tables(&tables))?;
    Ok(0)
}
