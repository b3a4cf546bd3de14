//! Model answers to validated per-task labels.
//!
//! Parsing never fails. Anything that is not an exact label (after case and
//! whitespace normalization, via ids or aliases) becomes the task default,
//! flagged. There is no substring rescue: "clearly passive!" is a fallback.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt_forge::TaskSelection;
use crate::task_schema::TaskSuite;

/// Labels pulled out of one model answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedLabels {
    /// Task indices the labels belong to.
    pub tasks: Vec<usize>,
    pub labels: Vec<String>,
    pub fallback: Vec<bool>,
    /// The answer held more comma-separated parts than there are tasks.
    pub extra_ignored: bool,
}

impl ParsedLabels {
    pub fn any_fallback(&self) -> bool {
        self.fallback.iter().any(|f| *f)
    }
}

/// One coded instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub instance_id: String,
    pub run_id: String,
    pub tasks: Vec<String>,
    pub labels: Vec<String>,
    pub fallback_applied: Vec<bool>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub extra_ignored: bool,
    pub raw_response: String,
}

impl AnnotationRecord {
    pub fn new(instance_id: &str, run_id: &str, suite: &TaskSuite, parsed: ParsedLabels, raw: &str) -> Self {
        AnnotationRecord {
            instance_id: instance_id.to_string(),
            run_id: run_id.to_string(),
            tasks: parsed.tasks.iter().map(|&i| suite.tasks[i].id.clone()).collect(),
            labels: parsed.labels,
            fallback_applied: parsed.fallback,
            extra_ignored: parsed.extra_ignored,
            raw_response: raw.to_string(),
        }
    }

    pub fn label_for(&self, task_id: &str) -> Option<&str> {
        self.tasks.iter().position(|t| t == task_id).map(|i| self.labels[i].as_str())
    }
}

const TRIM: &[char] = &['"', '\'', '`', '“', '”', '‘', '’', '.'];

fn clean(part: &str) -> &str {
    let mut s = part.trim();
    loop {
        let next = s.trim_matches(TRIM).trim();
        if next == s {
            return s;
        }
        s = next;
    }
}

fn strip_label_prefix(s: &str) -> &str {
    let t = s.trim_start();
    match t.get(..6) {
        Some(head) if head.eq_ignore_ascii_case("label:") => &t[6..],
        _ => t,
    }
}

/// Parses a raw completion for the selected task(s).
pub fn parse_labels(raw: &str, suite: &TaskSuite, mode: &TaskSelection) -> ParsedLabels {
    let body = clean(strip_label_prefix(clean(raw)));
    match mode {
        TaskSelection::Single(id) => {
            let Some(ti) = suite.task_index(id) else {
                // unknown task: nothing to resolve against; degrade to the first task
                let r = suite.tasks[0].resolve_label("");
                return ParsedLabels { tasks: vec![0], labels: vec![r.label], fallback: vec![true], extra_ignored: false };
            };
            let r = suite.tasks[ti].resolve_label(body);
            ParsedLabels { tasks: vec![ti], labels: vec![r.label], fallback: vec![r.fallback], extra_ignored: false }
        }
        TaskSelection::Joint => parse_joint(body, suite),
    }
}

fn parse_joint(body: &str, suite: &TaskSuite) -> ParsedLabels {
    let n = suite.len();
    let parts: Vec<&str> = body.split(',').map(clean).collect();
    let extra_ignored = parts.len() > n;

    let mut labels = Vec::with_capacity(n);
    let mut fallback = Vec::with_capacity(n);
    for (task, part) in suite.tasks.iter().zip(&parts) {
        let r = task.resolve_label(part);
        labels.push(r.label);
        fallback.push(r.fallback);
    }

    let gate_only = parts.len() == 1 && !fallback[0] && suite.gate_fires(&labels[0]);
    for i in labels.len()..n {
        if gate_only {
            labels.push(suite.not_applicable_label(i).expect("gated suite").to_string());
            fallback.push(false);
        } else {
            labels.push(suite.tasks[i].default_label.clone());
            fallback.push(true);
        }
    }

    if suite.gate_fires(&labels[0]) {
        for i in 1..n {
            let na = suite.not_applicable_label(i).expect("gated suite");
            if labels[i] != na {
                labels[i] = na.to_string();
                fallback[i] = true;
            }
        }
    }
    ParsedLabels { tasks: (0..n).collect(), labels, fallback, extra_ignored }
}

/// Writes one row per instance and one column per task, plus a flag column.
pub fn write_annotation_table(path: impl AsRef<Path>, records: &[AnnotationRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let tasks: Vec<String> = records.first().map(|r| r.tasks.clone()).unwrap_or_default();
        let mut header = vec!["instance_id".to_string()];
        header.extend(tasks.iter().cloned());
        header.push("fallback".into());
        w.write_record(&header).map_err(|e| Error::format("annotation table", e))?;
        for r in records {
            let mut row = vec![r.instance_id.clone()];
            for t in &tasks {
                row.push(r.label_for(t).unwrap_or("").to_string());
            }
            row.push(if r.fallback_applied.iter().any(|f| *f) { "1".into() } else { "0".into() });
            w.write_record(&row).map_err(|e| Error::format("annotation table", e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}
