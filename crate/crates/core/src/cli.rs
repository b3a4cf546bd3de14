//! The `llmcoder` command line: argument parsing, the run configuration
//! file and one function per subcommand.
//!
//! Every command reads a [`RunConfig`] (or the built-in defaults), writes a
//! human-readable report plus a JSON twin into the output directory and
//! prints the report. [`run`] returns the process exit code.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::agreement_metrics::GoldTable;
use crate::assets::{FATHERHOOD_EXAMPLES, FATHERHOOD_TASKS, FATHER_KEYWORDS};
use crate::budget::{actual_spend, human_cost, speedup, BudgetReport, CorpusCost, HumanBaseline, LoggedUsage, PricingTable};
use crate::corpus_ingest::{
    keyword_filter, load_corpus, parse_keywords, pos_filter, read_instances, split_sentences, split_validation,
    write_instances, Instance, PosSidecar, DEFAULT_NOUN_TAGS,
};
use crate::error::{Error, Result};
use crate::io::{read_to_string, write_file, write_jsonl};
use crate::label_parser::{write_annotation_table, AnnotationRecord};
use crate::llm_gateway::{Backend, Gateway, HttpBackend, MockBackend, MockFixtures, ModelEndpoint, ResponseCache, RunLog};
use crate::order_ensemble::ReferenceScores;
use crate::pipeline::{annotate_instances, evaluate_task, run_ensemble, run_id, run_sweep, ModelRun, SweepGrid};
use crate::prompt_forge::{parse_examples, FewShotExample, PromptConfig, TaskSelection};
use crate::task_schema::{DescriptionLevel, TaskSuite};

#[derive(Debug, Parser)]
#[command(name = "llmcoder", version, about = "Code text with a language model and check it against human coders")]
pub struct Cli {
    /// Run configuration (TOML). Relative paths inside it are resolved
    /// against its directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Base URL of an OpenAI-compatible endpoint; overrides the config.
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    /// Answer from a fixtures file instead of the network.
    #[arg(long, global = true, value_name = "FIXTURES")]
    pub mock: Option<PathBuf>,
    /// Write every rendered prompt under `<out>/prompts/<run id>/`.
    #[arg(long, global = true)]
    pub dump_prompts: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a corpus into sentences, filter them and draw a validation sample.
    Ingest(IngestArgs),
    /// Code instances with the model.
    Annotate(AnnotateArgs),
    /// Score annotations against human coders.
    Evaluate(EvaluateArgs),
    /// Try every combination of prompt settings on the validation set.
    Sweep(SweepArgs),
    /// Code under several example orders and take the majority vote.
    Ensemble(EnsembleArgs),
    /// Compare API spend with the cost of human coding.
    Budget(BudgetArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Corpus directory; overrides the config.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Validation sample size; overrides the config.
    #[arg(long)]
    pub validation_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    /// Instances to code (defaults to `<out>/instances.jsonl`).
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Annotations to score (defaults to `<out>/annotations.jsonl`).
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Human labels CSV; overrides the config.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Tasks to report; defaults to every task with gold columns.
    #[arg(long)]
    pub task: Vec<String>,
    /// Only score instances that not every coder placed behind the gate.
    #[arg(long)]
    pub restrict_gated: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Instances to code; defaults to the validation sample.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub gold: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Number of example orders; overrides the config.
    #[arg(long)]
    pub orders: Option<usize>,
    /// Task to score; overrides the config.
    #[arg(long)]
    pub task: Option<String>,
    /// Skip the standard deviation row (allows a single order).
    #[arg(long)]
    pub no_std: bool,
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    /// Run log with token usage (defaults to `<out>/runlog.jsonl` if present).
    #[arg(long)]
    pub runlog: Option<PathBuf>,
    /// Pricing table; overrides the config.
    #[arg(long)]
    pub pricing: Option<PathBuf>,
    /// Corpus size to cost.
    #[arg(long)]
    pub instances: Option<u64>,
    /// Hours one coder needs for the corpus (otherwise derived from the rate).
    #[arg(long)]
    pub hours: Option<Decimal>,
    /// Hourly wage of one coder.
    #[arg(long)]
    pub wage: Option<Decimal>,
    /// Number of coders labelling every instance.
    #[arg(long)]
    pub coders: Option<u32>,
    /// Sentences one coder labels per hour.
    #[arg(long)]
    pub sentences_per_hour: Option<Decimal>,
    /// Currency of the wage.
    #[arg(long)]
    pub currency: Option<String>,
    /// Known total API cost for the corpus.
    #[arg(long)]
    pub api_total: Option<Decimal>,
    /// Wall-clock minutes the model needed for the corpus.
    #[arg(long)]
    pub machine_minutes: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    #[serde(default)]
    pub keywords: Option<Vec<String>>,
    #[serde(default)]
    pub keywords_file: Option<PathBuf>,
    /// Part-of-speech sidecar; when set, keyword hits must be tagged as nouns.
    #[serde(default)]
    pub pos_sidecar: Option<PathBuf>,
    #[serde(default)]
    pub noun_tags: Option<Vec<String>>,
    #[serde(default)]
    pub validation_size: usize,
    /// One instance id per line to keep out of the validation sample.
    #[serde(default)]
    pub exclude_ids: Option<PathBuf>,
}

fn default_orders() -> usize {
    3
}

fn default_reference_source() -> String {
    "the reference table".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "default_orders")]
    pub orders: usize,
    #[serde(default)]
    pub eval_task: Option<String>,
    /// Published Avg row to compare the computed one with.
    #[serde(default)]
    pub reference: Option<ReferenceScores>,
    #[serde(default)]
    pub reference_std: Option<ReferenceScores>,
    #[serde(default = "default_reference_source")]
    pub reference_source: String,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            orders: default_orders(),
            eval_task: None,
            reference: None,
            reference_std: None,
            reference_source: default_reference_source(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    #[serde(default)]
    pub human: Option<HumanBaseline>,
    #[serde(default)]
    pub instances: Option<u64>,
    #[serde(default)]
    pub hours: Option<Decimal>,
    #[serde(default)]
    pub api_total: Option<Decimal>,
    #[serde(default)]
    pub machine_minutes: Option<f64>,
}

fn default_prompt() -> PromptConfig {
    PromptConfig::new(TaskSelection::Joint, DescriptionLevel::Long, 15)
}

/// Contents of the `--config` file. Every field has a default, so an empty
/// file (or no file) runs on the bundled codebook and examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Output directory; `out` under the working directory when absent.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Codebook; the bundled fatherhood codebook when absent.
    #[serde(default)]
    pub task_suite: Option<PathBuf>,
    /// Few-shot pool; the bundled examples when absent.
    #[serde(default)]
    pub examples: Option<PathBuf>,
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    #[serde(default)]
    pub instances: Option<PathBuf>,
    #[serde(default)]
    pub gold: Option<PathBuf>,
    #[serde(default)]
    pub pricing: Option<PathBuf>,
    /// Response cache; `<out>/cache` when absent.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub ingest: IngestConfig,
    #[serde(default = "default_prompt")]
    pub prompt: PromptConfig,
    #[serde(default)]
    pub endpoint: Option<ModelEndpoint>,
    #[serde(default)]
    pub sweep: Option<SweepGrid>,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub budget: BudgetConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_toml_str("").expect("empty config is valid")
    }
}

impl RunConfig {
    pub fn from_toml_str(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    /// Loads a config and makes its relative paths relative to its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml_str(&read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut cfg.out_dir,
            &mut cfg.task_suite,
            &mut cfg.examples,
            &mut cfg.corpus,
            &mut cfg.instances,
            &mut cfg.gold,
            &mut cfg.pricing,
            &mut cfg.cache_dir,
            &mut cfg.ingest.keywords_file,
            &mut cfg.ingest.pos_sidecar,
            &mut cfg.ingest.exclude_ids,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        Ok(cfg)
    }
}

/// A config with command-line overrides applied and its inputs loaded.
pub struct Context {
    pub config: RunConfig,
    pub suite: TaskSuite,
    pub examples: Vec<FewShotExample>,
    mock: Option<PathBuf>,
    endpoint_override: Option<String>,
    dump_prompts: bool,
}

impl Context {
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let mut config = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = cli.seed {
            config.seed = s;
        }
        if let Some(o) = &cli.out {
            config.out_dir = Some(o.clone());
        }
        Self::new(config, cli.mock.clone(), cli.endpoint.clone(), cli.dump_prompts)
    }

    pub fn new(config: RunConfig, mock: Option<PathBuf>, endpoint_override: Option<String>, dump_prompts: bool) -> Result<Self> {
        let suite = match &config.task_suite {
            Some(p) => TaskSuite::load(p)?,
            None => TaskSuite::from_toml_str(FATHERHOOD_TASKS)?,
        };
        let examples = match &config.examples {
            Some(p) => parse_examples(&read_to_string(p)?, &suite)?,
            None => parse_examples(FATHERHOOD_EXAMPLES, &suite)?,
        };
        Ok(Context { config, suite, examples, mock, endpoint_override, dump_prompts })
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.config.out_dir.as_deref().unwrap_or(Path::new("out")).join(name)
    }

    /// Gateway for the configured endpoint, or the mock backend with
    /// `--mock`. An empty `api_key_env` means the endpoint takes anonymous
    /// requests.
    pub fn gateway(&self) -> Result<Gateway> {
        let mut endpoint = match (&self.config.endpoint, &self.mock) {
            (Some(e), _) => e.clone(),
            (None, Some(_)) => ModelEndpoint::new("mock://local", "mock"),
            (None, None) => {
                return Err(Error::Config("no [endpoint] configured (or pass --mock FIXTURES)".into()));
            }
        };
        if let Some(url) = &self.endpoint_override {
            endpoint.base_url = url.clone();
        }
        let backend: Arc<dyn Backend> = match &self.mock {
            Some(path) => Arc::new(MockBackend::new(MockFixtures::load(path)?)),
            None if endpoint.api_key_env.is_empty() => Arc::new(HttpBackend::unauthenticated()),
            None => Arc::new(HttpBackend::new()),
        };
        let cache_dir = self.config.cache_dir.clone().unwrap_or_else(|| self.out("cache"));
        Gateway::new(endpoint, backend, ResponseCache::on_disk(cache_dir)?)
    }

    fn gold(&self, flag: &Option<PathBuf>) -> Result<GoldTable> {
        let path = flag
            .as_ref()
            .or(self.config.gold.as_ref())
            .ok_or_else(|| Error::Config("no gold file (set `gold` or pass --gold)".into()))?;
        GoldTable::load(path, &self.suite)
    }

    fn instances_path(&self, flag: &Option<PathBuf>, prefer_validation: bool) -> PathBuf {
        if let Some(p) = flag.as_ref().or(self.config.instances.as_ref()) {
            return p.clone();
        }
        let validation = self.out("validation.jsonl");
        if prefer_validation && validation.exists() {
            validation
        } else {
            self.out("instances.jsonl")
        }
    }
}

/// Outcome of a subcommand: the printed report and the exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub report: String,
    pub exit_code: i32,
}

impl Outcome {
    fn ok(report: String) -> Self {
        Outcome { report, exit_code: 0 }
    }
}

fn write_report<T: Serialize>(ctx: &Context, stem: &str, text: &str, json: &T) -> Result<()> {
    write_file(ctx.out(&format!("{stem}.txt")), text)?;
    let body = serde_json::to_string_pretty(json).map_err(|e| Error::format(stem, e))?;
    write_file(ctx.out(&format!("{stem}.json")), body + "\n")
}

#[derive(Debug, Serialize)]
struct IngestSummary {
    documents: usize,
    sentences: usize,
    keyword_hits: usize,
    after_pos_filter: Option<usize>,
    instances: usize,
    validation: usize,
    seed: u64,
}

pub fn cmd_ingest(ctx: &Context, args: &IngestArgs) -> Result<Outcome> {
    let cfg = &ctx.config.ingest;
    let corpus = args
        .corpus
        .as_ref()
        .or(ctx.config.corpus.as_ref())
        .ok_or_else(|| Error::Config("no corpus directory (set `corpus` or pass --corpus)".into()))?;
    let keywords: Vec<String> = match (&cfg.keywords, &cfg.keywords_file) {
        (Some(k), _) => k.clone(),
        (None, Some(p)) => parse_keywords(&read_to_string(p)?),
        (None, None) => FATHER_KEYWORDS.iter().map(|s| s.to_string()).collect(),
    };
    let docs = load_corpus(corpus)?;
    let sentences: Vec<Instance> = docs.iter().flat_map(split_sentences).collect();
    let hits = keyword_filter(&sentences, &keywords)?;
    let (instances, after_pos) = match &cfg.pos_sidecar {
        Some(p) => {
            let sidecar = PosSidecar::load(p)?;
            let tags: Vec<&str> = match &cfg.noun_tags {
                Some(t) => t.iter().map(String::as_str).collect(),
                None => DEFAULT_NOUN_TAGS.to_vec(),
            };
            let kept = pos_filter(&hits, &keywords, &sidecar, &tags)?;
            let n = kept.len();
            (kept, Some(n))
        }
        None => (hits.clone(), None),
    };
    write_instances(ctx.out("instances.jsonl"), &instances)?;
    let size = args.validation_size.unwrap_or(cfg.validation_size);
    let mut validation = Vec::new();
    if size > 0 {
        let exclude: HashSet<String> = match &cfg.exclude_ids {
            Some(p) => parse_keywords(&read_to_string(p)?).into_iter().collect(),
            None => HashSet::new(),
        };
        validation = split_validation(&instances, size, crate::derive_seed(ctx.config.seed, "validation-sample"), &exclude)?.0;
        write_instances(ctx.out("validation.jsonl"), &validation)?;
    }
    let summary = IngestSummary {
        documents: docs.len(),
        sentences: sentences.len(),
        keyword_hits: hits.len(),
        after_pos_filter: after_pos,
        instances: instances.len(),
        validation: validation.len(),
        seed: ctx.config.seed,
    };
    let mut text = format!(
        "documents: {}\nsentences: {}\nkeyword hits: {}\n",
        summary.documents, summary.sentences, summary.keyword_hits
    );
    if let Some(n) = after_pos {
        text.push_str(&format!("noun keyword hits: {n}\n"));
    }
    text.push_str(&format!("instances written: {}\nvalidation sample: {}\n", summary.instances, summary.validation));
    write_report(ctx, "ingest", &text, &summary)?;
    Ok(Outcome::ok(text))
}

#[derive(Debug, Serialize)]
struct RunMeta<'a> {
    run_id: &'a str,
    model: &'a str,
    seed: u64,
    prompt: &'a PromptConfig,
    instances: usize,
    annotated: usize,
    failed: usize,
    fallbacks: usize,
}

pub fn cmd_annotate(ctx: &Context, args: &AnnotateArgs) -> Result<Outcome> {
    let instances = read_instances(ctx.instances_path(&args.input, false))?;
    let gateway = ctx.gateway()?;
    let cfg = &ctx.config.prompt;
    let id = run_id(cfg, &gateway.endpoint().model_name, ctx.config.seed);
    let log = RunLog::new(ctx.out("runlog.jsonl"), &id);
    let dump = ctx.dump_prompts.then(|| ctx.out("prompts").join(&id));
    let a = annotate_instances(&gateway, &ctx.suite, &ctx.examples, cfg, &instances, &id, Some(&log), dump.as_deref())?;
    write_jsonl(ctx.out("annotations.jsonl"), &a.records)?;
    write_annotation_table(ctx.out("annotations.csv"), &a.records)?;
    write_jsonl(ctx.out("errors.jsonl"), &a.failures)?;
    let fallbacks = a.records.iter().filter(|r| r.fallback_applied.iter().any(|f| *f)).count();
    let meta = RunMeta {
        run_id: &id,
        model: &gateway.endpoint().model_name,
        seed: ctx.config.seed,
        prompt: cfg,
        instances: instances.len(),
        annotated: a.records.len(),
        failed: a.failures.len(),
        fallbacks,
    };
    let text = format!(
        "run {id}: {} of {} instances annotated, {} failed, {} with fallback labels, {} served from cache\n",
        meta.annotated,
        meta.instances,
        meta.failed,
        fallbacks,
        a.cache_hits
    );
    write_file(
        ctx.out("run.json"),
        serde_json::to_string_pretty(&meta).map_err(|e| Error::format("run metadata", e))? + "\n",
    )?;
    Ok(Outcome { report: text, exit_code: a.exit_code() })
}

pub fn cmd_evaluate(ctx: &Context, args: &EvaluateArgs) -> Result<Outcome> {
    let gold = ctx.gold(&args.gold)?;
    let path = args.annotations.clone().unwrap_or_else(|| ctx.out("annotations.jsonl"));
    let records: Vec<AnnotationRecord> = crate::io::read_jsonl(&path)?;
    let model = ctx.config.endpoint.as_ref().map(|e| e.model_name.clone()).unwrap_or_else(|| "model".into());
    let tasks: Vec<String> = if args.task.is_empty() {
        ctx.suite.tasks.iter().filter(|t| gold.by_task.contains_key(&t.id)).map(|t| t.id.clone()).collect()
    } else {
        args.task.clone()
    };
    if tasks.is_empty() {
        return Err(Error::Invalid("gold file has no columns for any task".into()));
    }
    let mut tables = Vec::new();
    for task in &tasks {
        let run = ModelRun { name: model.clone(), cfg: ctx.config.prompt.clone(), records: &records };
        tables.push(evaluate_task(&ctx.suite, &gold, task, &[run], args.restrict_gated)?);
    }
    let text = tables.iter().map(|t| t.render()).collect::<Vec<_>>().join("\n");
    write_report(ctx, "evaluation", &text, &tables)?;
    Ok(Outcome::ok(text))
}

/// Instances from `path` whose ids appear in the gold file, in file order.
fn gold_instances(path: &Path, gold: &GoldTable) -> Result<Vec<Instance>> {
    let wanted: HashSet<&str> = gold.instance_ids.iter().map(String::as_str).collect();
    let all = read_instances(path)?;
    let picked: Vec<Instance> = all.into_iter().filter(|i| wanted.contains(i.id.as_str())).collect();
    if picked.len() != wanted.len() {
        let have: HashSet<&str> = picked.iter().map(|i| i.id.as_str()).collect();
        let missing: Vec<&str> = gold.instance_ids.iter().map(String::as_str).filter(|i| !have.contains(i)).take(5).collect();
        return Err(Error::Misaligned(format!(
            "{} gold instance(s) are not in {}: {}",
            wanted.len() - picked.len(),
            path.display(),
            missing.join(", ")
        )));
    }
    Ok(picked)
}

pub fn cmd_sweep(ctx: &Context, args: &SweepArgs) -> Result<Outcome> {
    let grid = ctx.config.sweep.as_ref().ok_or_else(|| Error::Config("no [sweep] grid configured".into()))?;
    let gold = ctx.gold(&args.gold)?;
    let instances = gold_instances(&ctx.instances_path(&args.input, true), &gold)?;
    let gateway = ctx.gateway()?;
    let before = gateway.backend_calls();
    let report = run_sweep(&gateway, &ctx.suite, &ctx.examples, &instances, &gold, grid, &ctx.config.prompt, ctx.config.seed)?;
    let mut text = report.render();
    text.push_str(&format!("backend requests: {}\n", gateway.backend_calls() - before));
    write_report(ctx, "sweep", &text, &report)?;
    Ok(Outcome::ok(text))
}

pub fn cmd_ensemble(ctx: &Context, args: &EnsembleArgs) -> Result<Outcome> {
    let ec = &ctx.config.ensemble;
    let gold = ctx.gold(&args.gold)?;
    let instances = gold_instances(&ctx.instances_path(&args.input, true), &gold)?;
    let gateway = ctx.gateway()?;
    let task = args.task.clone().or(ec.eval_task.clone()).unwrap_or_else(|| ctx.suite.tasks[0].id.clone());
    let k = args.orders.unwrap_or(ec.orders);
    let mut out = run_ensemble(
        &gateway,
        &ctx.suite,
        &ctx.examples,
        &instances,
        &gold,
        &ctx.config.prompt,
        k,
        &task,
        !args.no_std,
        ctx.config.seed,
    )?;
    if let Some(r) = ec.reference {
        out.summary.compare_with_reference(&ec.reference_source, r, ec.reference_std);
    }
    write_jsonl(ctx.out("ensemble_majority.jsonl"), &out.majority)?;
    let text = out.summary.render();
    write_report(ctx, "ensemble", &text, &out.summary)?;
    Ok(Outcome::ok(text))
}

pub fn cmd_budget(ctx: &Context, args: &BudgetArgs) -> Result<Outcome> {
    let bc = &ctx.config.budget;
    let runlog = args.runlog.clone().or_else(|| Some(ctx.out("runlog.jsonl")).filter(|p| p.exists()));
    let mut pricing = match args.pricing.as_ref().or(ctx.config.pricing.as_ref()) {
        Some(p) => PricingTable::load(p)?,
        None => PricingTable::default(),
    };
    if let Some(e) = &ctx.config.endpoint {
        if let Some(cm) = &e.pricing {
            pricing.models.entry(e.model_name.clone()).or_insert_with(|| cm.clone());
        }
    }

    let mut logged_instances = HashSet::new();
    let actual = match &runlog {
        Some(path) => {
            let records = RunLog::read(path)?;
            let usage: Vec<LoggedUsage> = records
                .iter()
                .filter_map(|r| {
                    logged_instances.insert(r.instance_id.clone());
                    r.usage.map(|u| LoggedUsage {
                        model: r.model.clone(),
                        prompt_hash: r.prompt_hash.clone(),
                        prompt_tokens: u.prompt_tokens,
                        completion_tokens: u.completion_tokens,
                    })
                })
                .collect();
            if usage.len() < records.len() {
                log::warn!("{} run log entries carry no token usage", records.len() - usage.len());
            }
            Some(actual_spend(&usage, &pricing)?)
        }
        None => None,
    };

    let n = args.instances.or(bc.instances).unwrap_or(logged_instances.len() as u64);
    let mut baseline = bc.human.clone();
    if args.wage.is_some() || args.coders.is_some() || args.sentences_per_hour.is_some() || args.currency.is_some() {
        let base = baseline.clone().unwrap_or(HumanBaseline {
            sentences_per_hour: Decimal::from(100),
            wage_per_hour: Decimal::ZERO,
            n_coders: 1,
            currency: "USD".into(),
        });
        baseline = Some(HumanBaseline {
            sentences_per_hour: args.sentences_per_hour.unwrap_or(base.sentences_per_hour),
            wage_per_hour: args.wage.unwrap_or(base.wage_per_hour),
            n_coders: args.coders.unwrap_or(base.n_coders),
            currency: args.currency.clone().unwrap_or(base.currency),
        });
    }
    let hours = args.hours.or(bc.hours);
    let human = baseline.as_ref().map(|b| human_cost(n, b, hours)).transpose()?;

    let api_total = args.api_total.or(bc.api_total);
    let projected = match api_total {
        Some(_) if n == 0 => return Err(Error::Invalid("--api-total needs a nonzero instance count".into())),
        Some(t) => Some(CorpusCost { count: n as usize, total: t, mean: t / Decimal::from(n) }),
        None => None,
    };
    let projected_currency = projected.map(|_| {
        actual
            .as_ref()
            .map(|a| a.currency.clone())
            .or(baseline.as_ref().map(|b| b.currency.clone()))
            .unwrap_or_else(|| "USD".into())
    });
    let machine_minutes = args.machine_minutes.or(bc.machine_minutes);
    let speed = match (&human, machine_minutes) {
        (Some(h), Some(m)) => {
            let human_minutes: f64 = (h.hours * Decimal::from(60)).try_into().unwrap_or(f64::NAN);
            Some(speedup(human_minutes, m)?)
        }
        _ => None,
    };
    let report = BudgetReport {
        n_instances: n,
        projected,
        projected_currency,
        actual,
        human,
        human_currency: baseline.as_ref().map(|b| b.currency.clone()),
        human_coders: baseline.as_ref().map(|b| b.n_coders),
        machine_minutes,
        speedup: speed,
    };
    let text = report.render();
    write_report(ctx, "budget", &text, &report)?;
    Ok(Outcome::ok(text))
}

/// Runs the parsed command line and returns the exit code. Errors map to
/// [`Error::exit_code`].
pub fn run(cli: &Cli) -> Result<Outcome> {
    let ctx = Context::from_cli(cli)?;
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(&ctx, a),
        Command::Annotate(a) => cmd_annotate(&ctx, a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, a),
        Command::Sweep(a) => cmd_sweep(&ctx, a),
        Command::Ensemble(a) => cmd_ensemble(&ctx, a),
        Command::Budget(a) => cmd_budget(&ctx, a),
    }
}

/// Parses `args` (including the program name) and runs them, printing the
/// report to stdout and errors to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(out) => {
            print!("{}", out.report);
            out.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
