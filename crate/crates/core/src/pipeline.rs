//! End-to-end steps built from the other modules: annotate a set of
//! instances, score annotations against human coders, sweep prompt
//! settings and ensemble over example orders.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agreement_metrics::{
    leave_one_out, panel_average, report_against_panel, GoldTable, LabelVector, MetricTable, TableRow,
};
use crate::corpus_ingest::Instance;
use crate::error::{Error, Result};
use crate::label_parser::{parse_labels, AnnotationRecord};
use crate::llm_gateway::{BatchFailure, CompletionRequest, Gateway, RunLog};
use crate::order_ensemble::{records_to_vector, summarize_runs, EnsembleSummary, OrderRun, RunSet};
use crate::prompt_forge::{
    build_prompt, dump_prompt, enumerate_orders, selected_tasks, ExampleOrder, FewShotExample, PromptConfig,
    TaskSelection,
};
use crate::task_schema::{DescriptionLevel, TaskSuite};

/// Stable id for a (prompt settings, model, seed) combination.
pub fn run_id(cfg: &PromptConfig, model: &str, seed: u64) -> String {
    let body = serde_json::to_string(&(cfg, model, seed)).expect("prompt config serializes");
    hex::encode(&Sha256::digest(body.as_bytes())[..6])
}

/// Result of one annotation pass.
#[derive(Debug, Clone, Default)]
pub struct Annotation {
    pub run_id: String,
    /// One record per successfully answered instance, in input order.
    pub records: Vec<AnnotationRecord>,
    pub failures: Vec<BatchFailure>,
    pub cache_hits: usize,
}

impl Annotation {
    /// 0 when complete, 3 when nothing succeeded and every failure was a
    /// transport failure, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else if self.records.is_empty() && self.failures.iter().all(|f| f.kind == "transport") {
            3
        } else {
            2
        }
    }
}

/// Builds a prompt per instance, sends them through the gateway and parses
/// the answers. Prompt errors abort before any request is made.
#[allow(clippy::too_many_arguments)]
pub fn annotate_instances(
    gateway: &Gateway,
    suite: &TaskSuite,
    examples: &[FewShotExample],
    cfg: &PromptConfig,
    instances: &[Instance],
    run_id: &str,
    log: Option<&RunLog>,
    dump_prompts: Option<&Path>,
) -> Result<Annotation> {
    let mut items = Vec::with_capacity(instances.len());
    for inst in instances {
        let prompt = build_prompt(cfg, suite, examples, inst)?;
        for w in &prompt.warnings {
            log::warn!("{}: {w}", inst.id);
        }
        if let Some(dir) = dump_prompts {
            dump_prompt(dir, &inst.id, &prompt)?;
        }
        items.push((inst.id.clone(), CompletionRequest::for_endpoint(gateway.endpoint(), prompt.text)));
    }
    let outcome = gateway.annotate_batch(&items, log)?;
    let cache_hits = outcome.responses.iter().filter(|(_, r)| r.cache_hit).count();
    let records = outcome
        .responses
        .iter()
        .map(|(id, resp)| {
            let parsed = parse_labels(&resp.text, suite, &cfg.tasks);
            AnnotationRecord::new(id, run_id, suite, parsed, &resp.text)
        })
        .collect();
    Ok(Annotation { run_id: run_id.to_string(), records, failures: outcome.failures, cache_hits })
}

/// "1", "2" or "1,2,3": one-based positions of the prompted tasks.
pub fn tasks_label(selection: &TaskSelection, suite: &TaskSuite) -> Result<String> {
    Ok(selected_tasks(selection, suite)?.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(","))
}

/// Table row for a model run, labelled with its prompt settings.
pub fn model_row(name: &str, cfg: &PromptConfig, suite: &TaskSuite, vector: &LabelVector, panel: &[LabelVector]) -> Result<TableRow> {
    let r = report_against_panel(vector, panel)?;
    Ok(TableRow {
        annotator: name.to_string(),
        tasks: tasks_label(&cfg.tasks, suite)?,
        description: cfg.description_level.to_string(),
        n_examples: cfg.n_examples.to_string(),
        kappa: r.kappa,
        raw: r.raw,
        f1: r.f1,
    })
}

/// Which gold instances to keep when `restrict_gated` is on: those where
/// not every human coder chose the gating label.
pub fn gate_mask(suite: &TaskSuite, gold: &GoldTable) -> Result<Vec<bool>> {
    let Some(gate) = &suite.gate else {
        return Ok(vec![true; gold.instance_ids.len()]);
    };
    let panel = gold.panel(&gate.task)?;
    Ok((0..gold.instance_ids.len()).map(|i| !panel.iter().all(|p| p.labels[i] == gate.label)).collect())
}

/// One model's annotations to show in an evaluation table.
pub struct ModelRun<'a> {
    pub name: String,
    pub cfg: PromptConfig,
    pub records: &'a [AnnotationRecord],
}

/// Human leave-one-out rows, their average, then one row per model run
/// scored against all human coders.
pub fn evaluate_task(
    suite: &TaskSuite,
    gold: &GoldTable,
    task_id: &str,
    models: &[ModelRun<'_>],
    restrict_gated: bool,
) -> Result<MetricTable> {
    suite.require_task(task_id)?;
    let mask = if restrict_gated { gate_mask(suite, gold)? } else { vec![true; gold.instance_ids.len()] };
    let panel: Vec<LabelVector> = gold.panel(task_id)?.iter().map(|p| p.select(&mask)).collect();
    let kept = panel[0].len();
    if kept == 0 {
        return Err(Error::Invalid(format!("no gold instances left for `{task_id}`")));
    }
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    if panel.len() >= 2 {
        let humans = leave_one_out(&panel)?;
        rows.extend(humans.iter().map(TableRow::human));
        rows.push(TableRow::human(&panel_average(&humans, "Humans AVG")?));
    } else {
        notes.push("a single human coder: no human agreement rows".to_string());
    }
    for m in models {
        let v = records_to_vector(m.records, task_id, &m.name, &panel[0].instance_ids)?;
        rows.push(model_row(&m.name, &m.cfg, suite, &v, &panel)?);
    }
    if restrict_gated {
        notes.push(format!("restricted to {kept} of {} instances not gated by every coder", gold.instance_ids.len()));
    }
    Ok(MetricTable { task_id: task_id.to_string(), rows, notes })
}

/// Axes of a prompt sweep. Every combination is one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub tasks: Vec<TaskSelection>,
    pub description_levels: Vec<DescriptionLevel>,
    pub n_examples: Vec<usize>,
    #[serde(default = "default_orders")]
    pub orders: Vec<ExampleOrder>,
    /// Task scored for joint cells; defaults to the first task.
    #[serde(default)]
    pub eval_task: Option<String>,
}

fn default_orders() -> Vec<ExampleOrder> {
    vec![ExampleOrder::Authored]
}

impl SweepGrid {
    pub fn cells(&self, template: &PromptConfig) -> Vec<PromptConfig> {
        let mut out = Vec::new();
        for t in &self.tasks {
            for &level in &self.description_levels {
                for &n in &self.n_examples {
                    for order in &self.orders {
                        let mut c = template.clone();
                        c.tasks = t.clone();
                        c.description_level = level;
                        c.n_examples = n;
                        c.order = order.clone();
                        out.push(c);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub run_id: String,
    pub eval_task: String,
    pub config: PromptConfig,
    pub row: TableRow,
    pub cache_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedCell {
    pub config: PromptConfig,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    /// Sorted by kappa, best first.
    pub cells: Vec<SweepCell>,
    pub skipped: Vec<SkippedCell>,
}

impl SweepReport {
    pub fn render(&self) -> String {
        use std::fmt::Write as _;
        let rows: Vec<TableRow> = self
            .cells
            .iter()
            .map(|c| TableRow { annotator: format!("{} [{}]", c.row.annotator, c.eval_task), ..c.row.clone() })
            .collect();
        let mut out = MetricTable { task_id: "sweep (sorted by kappa)".into(), rows, notes: vec![] }.render();
        for s in &self.skipped {
            let _ = writeln!(
                out,
                "skipped: tasks={} description={} examples={}: {}",
                s.config.tasks, s.config.description_level, s.config.n_examples, s.reason
            );
        }
        out
    }
}

/// Annotates the gold instances once per grid cell and scores each cell.
/// Cells that cannot be rendered or that lose instances to failures are
/// reported as skipped.
#[allow(clippy::too_many_arguments)]
pub fn run_sweep(
    gateway: &Gateway,
    suite: &TaskSuite,
    examples: &[FewShotExample],
    instances: &[Instance],
    gold: &GoldTable,
    grid: &SweepGrid,
    template: &PromptConfig,
    seed: u64,
) -> Result<SweepReport> {
    let cells = grid.cells(template);
    if cells.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let default_eval = grid.eval_task.clone().unwrap_or_else(|| suite.tasks[0].id.clone());
    suite.require_task(&default_eval)?;
    let mut report = SweepReport { cells: Vec::new(), skipped: Vec::new() };
    for cfg in cells {
        let eval_task = match &cfg.tasks {
            TaskSelection::Single(t) => t.clone(),
            TaskSelection::Joint => default_eval.clone(),
        };
        let id = run_id(&cfg, &gateway.endpoint().model_name, seed);
        let outcome = match annotate_instances(gateway, suite, examples, &cfg, instances, &id, None, None) {
            Ok(a) => a,
            Err(e @ (Error::Invalid(_) | Error::Schema(_))) => {
                report.skipped.push(SkippedCell { config: cfg, reason: e.to_string() });
                continue;
            }
            Err(e) => return Err(e),
        };
        if !outcome.failures.is_empty() {
            let reason = format!("{} instance(s) failed, first: {}", outcome.failures.len(), outcome.failures[0].message);
            report.skipped.push(SkippedCell { config: cfg, reason });
            continue;
        }
        let panel = gold.panel(&eval_task)?;
        let v = records_to_vector(&outcome.records, &eval_task, &gateway.endpoint().model_name, &panel[0].instance_ids)?;
        let row = model_row(&gateway.endpoint().model_name, &cfg, suite, &v, panel)?;
        report.cells.push(SweepCell { run_id: id, eval_task, config: cfg, row, cache_hits: outcome.cache_hits });
    }
    report.cells.sort_by(|a, b| b.row.kappa.total_cmp(&a.row.kappa));
    Ok(report)
}

/// Everything produced by an order ensemble.
#[derive(Debug, Clone)]
pub struct EnsembleOutcome {
    pub runs: RunSet,
    pub majority: Vec<AnnotationRecord>,
    pub summary: EnsembleSummary,
}

/// Annotates under `k` example orders (the authored order first, then
/// seeded distinct permutations), scores each and the majority vote.
#[allow(clippy::too_many_arguments)]
pub fn run_ensemble(
    gateway: &Gateway,
    suite: &TaskSuite,
    examples: &[FewShotExample],
    instances: &[Instance],
    gold: &GoldTable,
    base: &PromptConfig,
    k: usize,
    eval_task: &str,
    with_std: bool,
    seed: u64,
) -> Result<EnsembleOutcome> {
    if with_std && k < 2 {
        return Err(Error::Invalid("a standard deviation needs at least two orders".into()));
    }
    let n = base.n_examples.min(examples.len());
    let orders = enumerate_orders(n, k, crate::derive_seed(seed, "example-orders"))?;
    let mut runs = Vec::with_capacity(k);
    for (i, perm) in orders.into_iter().enumerate() {
        let cfg = base.clone().with_order(ExampleOrder::Permutation(perm.clone()));
        let id = run_id(&cfg, &gateway.endpoint().model_name, seed);
        let a = annotate_instances(gateway, suite, examples, &cfg, instances, &id, None, None)?;
        if let Some(f) = a.failures.first() {
            return Err(Error::Invalid(format!(
                "order {}: {} instance(s) failed, first {}: {}",
                i + 1,
                a.failures.len(),
                f.instance_id,
                f.message
            )));
        }
        runs.push(OrderRun { order_id: format!("Order {}", i + 1), permutation: perm, records: a.records });
    }
    let runs = RunSet { runs, seed: crate::derive_seed(seed, "tie-break") };
    let summary = summarize_runs(&runs, suite, gold.panel(eval_task)?, eval_task, with_std)?;
    let (majority, _) = crate::order_ensemble::majority_records(&runs, suite)?;
    Ok(EnsembleOutcome { runs, majority, summary })
}
