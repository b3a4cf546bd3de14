//! Cohen's kappa, raw agreement and macro-F1 between label vectors, plus
//! the panel aggregation used for annotator tables.
//!
//! Scores are on a 0-100 scale (kappa can go negative) and are never
//! rounded here; [`MetricTable::render`] rounds to two decimals.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task_schema::TaskSuite;

/// One annotator's labels for one task, aligned to a shared instance index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    pub annotator_id: String,
    pub task_id: String,
    pub instance_ids: Vec<String>,
    pub labels: Vec<String>,
}

impl LabelVector {
    pub fn new(
        annotator_id: impl Into<String>,
        task_id: impl Into<String>,
        instance_ids: Vec<String>,
        labels: Vec<String>,
    ) -> Result<Self> {
        if instance_ids.len() != labels.len() {
            return Err(Error::Misaligned(format!(
                "{} instance ids but {} labels",
                instance_ids.len(),
                labels.len()
            )));
        }
        Ok(LabelVector { annotator_id: annotator_id.into(), task_id: task_id.into(), instance_ids, labels })
    }

    /// Vector over implicit ids `0..n`.
    pub fn from_labels<S: AsRef<str>>(annotator_id: &str, task_id: &str, labels: &[S]) -> Self {
        LabelVector {
            annotator_id: annotator_id.into(),
            task_id: task_id.into(),
            instance_ids: (0..labels.len()).map(|i| i.to_string()).collect(),
            labels: labels.iter().map(|s| s.as_ref().to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Keeps positions where `keep` is true.
    pub fn select(&self, keep: &[bool]) -> LabelVector {
        let pick = |v: &[String]| v.iter().zip(keep).filter(|(_, k)| **k).map(|(x, _)| x.clone()).collect();
        LabelVector {
            annotator_id: self.annotator_id.clone(),
            task_id: self.task_id.clone(),
            instance_ids: pick(&self.instance_ids),
            labels: pick(&self.labels),
        }
    }
}

fn check_aligned(a: &LabelVector, b: &LabelVector) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Misaligned(format!(
            "`{}` has {} labels, `{}` has {}",
            a.annotator_id,
            a.len(),
            b.annotator_id,
            b.len()
        )));
    }
    let mismatches: Vec<String> = a
        .instance_ids
        .iter()
        .zip(&b.instance_ids)
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .take(5)
        .map(|(i, (x, y))| format!("#{i}: {x} vs {y}"))
        .collect();
    if !mismatches.is_empty() {
        return Err(Error::Misaligned(format!(
            "instance order differs between `{}` and `{}`: {}",
            a.annotator_id,
            b.annotator_id,
            mismatches.join("; ")
        )));
    }
    Ok(())
}

fn nonempty(a: &LabelVector) -> Result<()> {
    if a.is_empty() {
        return Err(Error::Invalid("label vectors are empty".into()));
    }
    Ok(())
}

fn counts(labels: &[String]) -> HashMap<&str, u64> {
    let mut m = HashMap::new();
    for l in labels {
        *m.entry(l.as_str()).or_insert(0) += 1;
    }
    m
}

/// Cohen's kappa x 100. Both vectors constant on the same label gives 100.
pub fn cohen_kappa(a: &LabelVector, b: &LabelVector) -> Result<f64> {
    check_aligned(a, b)?;
    nonempty(a)?;
    let n = a.len() as u64;
    let matches = a.labels.iter().zip(&b.labels).filter(|(x, y)| x == y).count() as u64;
    let (ca, cb) = (counts(&a.labels), counts(&b.labels));
    let chance: u64 = ca.iter().map(|(l, c)| c * cb.get(l).copied().unwrap_or(0)).sum();
    let denom = n * n - chance;
    if denom == 0 {
        return Ok(100.0);
    }
    Ok(100.0 * (n as f64 * matches as f64 - chance as f64) / denom as f64)
}

/// Percentage of positions with identical labels.
pub fn raw_agreement(a: &LabelVector, b: &LabelVector) -> Result<f64> {
    check_aligned(a, b)?;
    nonempty(a)?;
    let matches = a.labels.iter().zip(&b.labels).filter(|(x, y)| x == y).count();
    Ok(100.0 * matches as f64 / a.len() as f64)
}

/// Unweighted mean of per-class F1 x 100 over classes seen in either vector.
pub fn macro_f1(pred: &LabelVector, gold: &LabelVector) -> Result<f64> {
    check_aligned(pred, gold)?;
    nonempty(pred)?;
    let classes: BTreeSet<&str> = pred.labels.iter().chain(&gold.labels).map(String::as_str).collect();
    let mut tp: HashMap<&str, u64> = HashMap::new();
    let mut fp: HashMap<&str, u64> = HashMap::new();
    let mut fneg: HashMap<&str, u64> = HashMap::new();
    for (p, g) in pred.labels.iter().zip(&gold.labels) {
        if p == g {
            *tp.entry(p).or_default() += 1;
        } else {
            *fp.entry(p).or_default() += 1;
            *fneg.entry(g).or_default() += 1;
        }
    }
    let total: f64 = classes
        .iter()
        .map(|c| {
            let t = tp.get(c).copied().unwrap_or(0) as f64;
            let denom = 2.0 * t + fp.get(c).copied().unwrap_or(0) as f64 + fneg.get(c).copied().unwrap_or(0) as f64;
            if denom == 0.0 { 0.0 } else { 2.0 * t / denom }
        })
        .sum();
    Ok(100.0 * total / classes.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Kappa,
    Raw,
    F1,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Kappa, Metric::Raw, Metric::F1];

    /// `target` plays the prediction, `gold` the reference.
    pub fn score(self, target: &LabelVector, gold: &LabelVector) -> Result<f64> {
        match self {
            Metric::Kappa => cohen_kappa(target, gold),
            Metric::Raw => raw_agreement(target, gold),
            Metric::F1 => macro_f1(target, gold),
        }
    }
}

/// Mean of `metric(target, p)` over the panel, each member taken as gold.
pub fn avg_against_panel(target: &LabelVector, panel: &[LabelVector], metric: Metric) -> Result<f64> {
    if panel.is_empty() {
        return Err(Error::Invalid("panel is empty".into()));
    }
    if panel.iter().any(|p| p.annotator_id == target.annotator_id) {
        return Err(Error::Invalid(format!("`{}` is part of its own panel", target.annotator_id)));
    }
    let mut sum = 0.0;
    for p in panel {
        sum += metric.score(target, p)?;
    }
    Ok(sum / panel.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub annotator_id: String,
    pub kappa: f64,
    pub raw: f64,
    pub f1: f64,
    pub against: String,
}

impl MetricReport {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Kappa => self.kappa,
            Metric::Raw => self.raw,
            Metric::F1 => self.f1,
        }
    }
}

/// All three metrics for `target` against the panel.
pub fn report_against_panel(target: &LabelVector, panel: &[LabelVector]) -> Result<MetricReport> {
    Ok(MetricReport {
        annotator_id: target.annotator_id.clone(),
        kappa: avg_against_panel(target, panel, Metric::Kappa)?,
        raw: avg_against_panel(target, panel, Metric::Raw)?,
        f1: avg_against_panel(target, panel, Metric::F1)?,
        against: panel.iter().map(|p| p.annotator_id.as_str()).collect::<Vec<_>>().join("+"),
    })
}

/// Scores each coder against all the others.
pub fn leave_one_out(coders: &[LabelVector]) -> Result<Vec<MetricReport>> {
    if coders.len() < 2 {
        return Err(Error::Invalid("leave-one-out needs at least two coders".into()));
    }
    coders
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let others: Vec<LabelVector> =
                coders.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, o)| o.clone()).collect();
            report_against_panel(c, &others)
        })
        .collect()
}

/// Column-wise unweighted mean of the rows.
pub fn panel_average(rows: &[MetricReport], name: &str) -> Result<MetricReport> {
    if rows.is_empty() {
        return Err(Error::Invalid("no rows to average".into()));
    }
    let n = rows.len() as f64;
    let mean = |m: Metric| rows.iter().map(|r| r.get(m)).sum::<f64>() / n;
    Ok(MetricReport {
        annotator_id: name.to_string(),
        kappa: mean(Metric::Kappa),
        raw: mean(Metric::Raw),
        f1: mean(Metric::F1),
        against: rows[0].against.clone(),
    })
}

/// Counts of (label in a, label in b) pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: BTreeMap<(String, String), u64>,
}

impl ConfusionMatrix {
    pub fn get(&self, a: &str, b: &str) -> u64 {
        self.counts.get(&(a.to_string(), b.to_string())).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn render(&self) -> String {
        let width = self.labels.iter().map(String::len).max().unwrap_or(1).max(5);
        let mut out = format!("{:width$}", "");
        for l in &self.labels {
            let _ = write!(out, " {l:>width$}");
        }
        out.push('\n');
        for a in &self.labels {
            let _ = write!(out, "{a:width$}");
            for b in &self.labels {
                let _ = write!(out, " {:>width$}", self.get(a, b));
            }
            out.push('\n');
        }
        out
    }
}

/// Rows are `a`'s labels, columns `b`'s. Empty vectors give an empty matrix.
pub fn confusion_matrix(a: &LabelVector, b: &LabelVector) -> Result<ConfusionMatrix> {
    check_aligned(a, b)?;
    let labels: BTreeSet<&String> = a.labels.iter().chain(&b.labels).collect();
    let mut counts = BTreeMap::new();
    for (x, y) in a.labels.iter().zip(&b.labels) {
        *counts.entry((x.clone(), y.clone())).or_insert(0) += 1;
    }
    Ok(ConfusionMatrix { labels: labels.into_iter().cloned().collect(), counts })
}

/// Human coders' labels read from CSV.
///
/// Header: `instance_id`, then one `annotator/task` column per annotator and
/// task. Each cell is a label id or alias of that task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldTable {
    pub instance_ids: Vec<String>,
    /// task id -> one vector per annotator, in column order.
    pub by_task: BTreeMap<String, Vec<LabelVector>>,
}

impl GoldTable {
    pub fn from_csv(src: &str, suite: &TaskSuite) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(src.as_bytes());
        let headers = rdr.headers().map_err(|e| Error::format("gold file", e))?.clone();
        if headers.get(0) != Some("instance_id") {
            return Err(Error::format("gold file", "first column must be `instance_id`"));
        }
        let mut columns = Vec::new();
        for h in headers.iter().skip(1) {
            let (annotator, task) = h
                .split_once('/')
                .ok_or_else(|| Error::format("gold file", format!("column `{h}` is not `annotator/task`")))?;
            let (ti, _) = suite
                .require_task(task)
                .map_err(|_| Error::format("gold file", format!("column `{h}` names unknown task `{task}`")))?;
            columns.push((annotator.to_string(), ti));
        }
        let mut instance_ids = Vec::new();
        let mut cells: Vec<Vec<String>> = vec![Vec::new(); columns.len()];
        for (row_no, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| Error::format("gold file", e))?;
            let id = row.get(0).unwrap_or_default().to_string();
            for (c, (annotator, ti)) in columns.iter().enumerate() {
                let raw = row.get(c + 1).unwrap_or_default();
                let task = &suite.tasks[*ti];
                let r = task.resolve_label(raw);
                if r.fallback {
                    return Err(Error::format(
                        "gold file",
                        format!("row {} ({id}): `{raw}` is not a `{}` label (annotator {annotator})", row_no + 2, task.id),
                    ));
                }
                cells[c].push(r.label);
            }
            instance_ids.push(id);
        }
        let mut seen = BTreeSet::new();
        for id in &instance_ids {
            if !seen.insert(id) {
                return Err(Error::format("gold file", format!("duplicate instance id `{id}`")));
            }
        }
        let mut by_task: BTreeMap<String, Vec<LabelVector>> = BTreeMap::new();
        for ((annotator, ti), labels) in columns.into_iter().zip(cells) {
            let task_id = suite.tasks[ti].id.clone();
            by_task.entry(task_id.clone()).or_default().push(LabelVector {
                annotator_id: annotator,
                task_id,
                instance_ids: instance_ids.clone(),
                labels,
            });
        }
        Ok(GoldTable { instance_ids, by_task })
    }

    pub fn load(path: impl AsRef<Path>, suite: &TaskSuite) -> Result<Self> {
        Self::from_csv(&crate::io::read_to_string(path)?, suite)
    }

    pub fn panel(&self, task_id: &str) -> Result<&[LabelVector]> {
        self.by_task
            .get(task_id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Invalid(format!("gold file has no columns for task `{task_id}`")))
    }
}

/// A printable table row with the prompt settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub annotator: String,
    pub tasks: String,
    pub description: String,
    pub n_examples: String,
    pub kappa: f64,
    pub raw: f64,
    pub f1: f64,
}

impl TableRow {
    pub fn human(report: &MetricReport) -> Self {
        TableRow {
            annotator: report.annotator_id.clone(),
            tasks: "n.a.".into(),
            description: "n.a.".into(),
            n_examples: "n.a.".into(),
            kappa: report.kappa,
            raw: report.raw,
            f1: report.f1,
        }
    }
}

/// Agreement table for one task: human rows, their average, model rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub task_id: String,
    pub rows: Vec<TableRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl MetricTable {
    pub fn render(&self) -> String {
        let header = ["Annotator", "Tasks", "Label description", "N. Examples", "Kappa", "Raw", "F1"];
        let body: Vec<[String; 7]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.annotator.clone(),
                    r.tasks.clone(),
                    r.description.clone(),
                    r.n_examples.clone(),
                    format!("{:.2}", r.kappa),
                    format!("{:.2}", r.raw),
                    format!("{:.2}", r.f1),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &body {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[&str]| {
            let mut s = String::new();
            for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
                if i > 0 {
                    s.push_str("  ");
                }
                if i < 4 {
                    let _ = write!(s, "{c:<w$}");
                } else {
                    let _ = write!(s, "{c:>w$}");
                }
            }
            s.trim_end().to_string()
        };
        let mut out = format!("task: {}\n", self.task_id);
        out.push_str(&line(&header));
        out.push('\n');
        for row in &body {
            let cells: Vec<&str> = row.iter().map(String::as_str).collect();
            out.push_str(&line(&cells));
            out.push('\n');
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}
