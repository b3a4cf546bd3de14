//! Several annotation passes that differ only in few-shot example order:
//! per-order scores, their mean and sample deviation, and a majority-vote
//! pass built from them.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agreement_metrics::{report_against_panel, LabelVector, Metric, MetricReport};
use crate::error::{Error, Result};
use crate::label_parser::AnnotationRecord;
use crate::task_schema::TaskSuite;

/// One annotation pass under a fixed example order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderRun {
    pub order_id: String,
    pub permutation: Vec<usize>,
    pub records: Vec<AnnotationRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSet {
    pub runs: Vec<OrderRun>,
    pub seed: u64,
}

impl RunSet {
    /// Order ids must be unique and every run must code the same instances
    /// for the same tasks.
    pub fn validate(&self) -> Result<()> {
        let first = self.runs.first().ok_or_else(|| Error::Invalid("run set is empty".into()))?;
        let mut ids = HashSet::new();
        for r in &self.runs {
            if !ids.insert(r.order_id.as_str()) {
                return Err(Error::Invalid(format!("duplicate order id `{}`", r.order_id)));
            }
        }
        let expected: Vec<&str> = first.records.iter().map(|r| r.instance_id.as_str()).collect();
        let unique: HashSet<&str> = expected.iter().copied().collect();
        if unique.len() != expected.len() {
            return Err(Error::Invalid(format!("order `{}` codes an instance twice", first.order_id)));
        }
        for run in &self.runs[1..] {
            let got: HashSet<&str> = run.records.iter().map(|r| r.instance_id.as_str()).collect();
            if got != unique || run.records.len() != expected.len() {
                let missing: Vec<&str> = unique.difference(&got).copied().take(5).collect();
                let extra: Vec<&str> = got.difference(&unique).copied().take(5).collect();
                return Err(Error::Misaligned(format!(
                    "order `{}` covers different instances than `{}` (missing {:?}, extra {:?})",
                    run.order_id, first.order_id, missing, extra
                )));
            }
            if run.records.iter().any(|r| r.tasks != first.records[0].tasks) {
                return Err(Error::Invalid(format!("order `{}` codes different tasks", run.order_id)));
            }
        }
        Ok(())
    }
}

/// Most frequent label; ties are drawn uniformly from the sorted tied set
/// with a generator seeded by `(seed, instance_id)`. Returns whether a draw
/// was needed.
///
/// # Panics
/// On an empty label list.
pub fn majority_label<S: AsRef<str>>(labels: &[S], seed: u64, instance_id: &str) -> (String, bool) {
    assert!(!labels.is_empty(), "majority of an empty label list");
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l.as_ref()).or_default() += 1;
    }
    let top = *counts.values().max().expect("nonempty");
    let tied: Vec<&str> = counts.iter().filter(|(_, c)| **c == top).map(|(l, _)| *l).collect();
    if tied.len() == 1 {
        return (tied[0].to_string(), false);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(seed, &format!("tie-break/{instance_id}")));
    (tied[rng.random_range(0..tied.len())].to_string(), true)
}

/// Majority-vote records, one per instance in the first run's order.
/// Votes are counted per task; a full-suite row is then passed through the
/// gate so the result stays consistent.
pub fn majority_records(runs: &RunSet, suite: &TaskSuite) -> Result<(Vec<AnnotationRecord>, bool)> {
    runs.validate()?;
    let lookups: Vec<HashMap<&str, &AnnotationRecord>> = runs
        .runs
        .iter()
        .map(|r| r.records.iter().map(|rec| (rec.instance_id.as_str(), rec)).collect())
        .collect();
    let mut tie_used = false;
    let mut out = Vec::new();
    for base in &runs.runs[0].records {
        let votes: Vec<&AnnotationRecord> = lookups.iter().map(|m| m[base.instance_id.as_str()]).collect();
        let mut labels = Vec::with_capacity(base.tasks.len());
        let mut fallback = Vec::with_capacity(base.tasks.len());
        for t in 0..base.tasks.len() {
            let column: Vec<&str> = votes.iter().map(|v| v.labels[t].as_str()).collect();
            let (label, tie) = majority_label(&column, runs.seed, &base.instance_id);
            tie_used |= tie;
            fallback.push(votes.iter().all(|v| v.fallback_applied[t]));
            labels.push(label);
        }
        let full_suite = base.tasks.len() == suite.len() && base.tasks.iter().zip(&suite.tasks).all(|(a, b)| *a == b.id);
        if full_suite {
            let gated = suite.apply_gate(&labels)?;
            for (i, (old, new)) in labels.iter().zip(&gated).enumerate() {
                if old != new {
                    fallback[i] = true;
                }
            }
            labels = gated;
        }
        out.push(AnnotationRecord {
            instance_id: base.instance_id.clone(),
            run_id: "majority".into(),
            tasks: base.tasks.clone(),
            labels: labels.clone(),
            fallback_applied: fallback,
            extra_ignored: false,
            raw_response: labels.join(", "),
        });
    }
    Ok((out, tie_used))
}

/// Label vector for `task_id`, aligned to `instance_ids`.
pub fn records_to_vector(
    records: &[AnnotationRecord],
    task_id: &str,
    annotator_id: &str,
    instance_ids: &[String],
) -> Result<LabelVector> {
    let by_id: HashMap<&str, &AnnotationRecord> = records.iter().map(|r| (r.instance_id.as_str(), r)).collect();
    let mut labels = Vec::with_capacity(instance_ids.len());
    let mut missing = Vec::new();
    for id in instance_ids {
        match by_id.get(id.as_str()).and_then(|r| r.label_for(task_id)) {
            Some(l) => labels.push(l.to_string()),
            None => missing.push(id.as_str()),
        }
    }
    if !missing.is_empty() {
        let shown: Vec<&str> = missing.iter().copied().take(5).collect();
        return Err(Error::Misaligned(format!(
            "{} gold instance(s) have no `{task_id}` annotation from `{annotator_id}`: {}",
            missing.len(),
            shown.join(", ")
        )));
    }
    LabelVector::new(annotator_id, task_id, instance_ids.to_vec(), labels)
}

/// Column mean and, optionally, sample (n - 1) standard deviation.
pub fn summarize_reports(rows: &[MetricReport], with_std: bool) -> Result<(MetricReport, Option<MetricReport>)> {
    if rows.is_empty() {
        return Err(Error::Invalid("no runs to summarize".into()));
    }
    if with_std && rows.len() < 2 {
        return Err(Error::Invalid("a standard deviation needs at least two runs".into()));
    }
    let n = rows.len() as f64;
    let mean_of = |m: Metric| rows.iter().map(|r| r.get(m)).sum::<f64>() / n;
    let std_of = |m: Metric| {
        let mu = mean_of(m);
        (rows.iter().map(|r| (r.get(m) - mu).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    let against = rows[0].against.clone();
    let mean = MetricReport {
        annotator_id: "Avg".into(),
        kappa: mean_of(Metric::Kappa),
        raw: mean_of(Metric::Raw),
        f1: mean_of(Metric::F1),
        against: against.clone(),
    };
    let std = with_std.then(|| MetricReport {
        annotator_id: "Std".into(),
        kappa: std_of(Metric::Kappa),
        raw: std_of(Metric::Raw),
        f1: std_of(Metric::F1),
        against,
    });
    Ok((mean, std))
}

/// Per-order rows, Avg, Std and Majority for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub task_id: String,
    pub runs: Vec<MetricReport>,
    pub mean: MetricReport,
    pub std: Option<MetricReport>,
    pub majority: Option<MetricReport>,
    pub tie_break_used: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Scores published elsewhere for the same runs, for side-by-side checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceScores {
    pub kappa: f64,
    pub raw: f64,
    pub f1: f64,
}

impl EnsembleSummary {
    /// Summary of precomputed per-order scores (no label vectors, so no
    /// majority row unless one is attached with [`Self::with_majority`]).
    pub fn from_reports(task_id: &str, runs: Vec<MetricReport>, with_std: bool) -> Result<Self> {
        let (mean, std) = summarize_reports(&runs, with_std)?;
        Ok(EnsembleSummary {
            task_id: task_id.to_string(),
            runs,
            mean,
            std,
            majority: None,
            tie_break_used: false,
            notes: Vec::new(),
        })
    }

    pub fn with_majority(mut self, majority: MetricReport) -> Self {
        self.majority = Some(majority);
        self
    }

    /// Adds a note for every mean or std cell whose two-decimal value
    /// differs from the reference. Returns the number of notes added.
    pub fn compare_with_reference(&mut self, source: &str, mean: ReferenceScores, std: Option<ReferenceScores>) -> usize {
        let before = self.notes.len();
        let mut check = |what: &str, row: &MetricReport, r: &ReferenceScores| {
            for (m, name, reference) in [(Metric::Kappa, "kappa", r.kappa), (Metric::Raw, "raw", r.raw), (Metric::F1, "F1", r.f1)] {
                let computed = format!("{:.2}", row.get(m));
                let printed = format!("{reference:.2}");
                if computed != printed {
                    let diff = row.get(m) - reference;
                    self.notes.push(format!(
                        "{name} {what} computes to {computed}; {source} reports {printed} (difference {diff:+.2}). The computed value is shown."
                    ));
                }
            }
        };
        let (m, s) = (self.mean.clone(), self.std.clone());
        check("mean", &m, &mean);
        if let (Some(s), Some(r)) = (s, std) {
            check("std", &s, &r);
        }
        self.notes.len() - before
    }

    pub fn render(&self) -> String {
        let mut rows: Vec<(String, &MetricReport)> = self.runs.iter().map(|r| (r.annotator_id.clone(), r)).collect();
        rows.push(("Avg".into(), &self.mean));
        if let Some(s) = &self.std {
            rows.push(("Std".into(), s));
        }
        if let Some(m) = &self.majority {
            rows.push(("Majority".into(), m));
        }
        let w = rows.iter().map(|(n, _)| n.chars().count()).max().unwrap_or(0).max("Examples order".len());
        let mut out = format!("task: {}\n{:<w$}  {:>6}  {:>6}  {:>6}\n", self.task_id, "Examples order", "Kappa", "Raw", "F1");
        for (name, r) in rows {
            let _ = writeln!(out, "{name:<w$}  {:>6.2}  {:>6.2}  {:>6.2}", r.kappa, r.raw, r.f1);
        }
        let _ = writeln!(out, "tie-break used: {}", if self.tie_break_used { "yes" } else { "no" });
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}

/// Scores every run and the majority pass against the panel for `task_id`.
pub fn summarize_runs(
    runs: &RunSet,
    suite: &TaskSuite,
    panel: &[LabelVector],
    task_id: &str,
    with_std: bool,
) -> Result<EnsembleSummary> {
    runs.validate()?;
    suite.require_task(task_id)?;
    let gold_ids = &panel.first().ok_or_else(|| Error::Invalid("gold panel is empty".into()))?.instance_ids;
    let mut rows = Vec::with_capacity(runs.runs.len());
    for run in &runs.runs {
        let v = records_to_vector(&run.records, task_id, &run.order_id, gold_ids)?;
        rows.push(report_against_panel(&v, panel)?);
    }
    let (majority, tie_break_used) = majority_records(runs, suite)?;
    let mv = records_to_vector(&majority, task_id, "Majority", gold_ids)?;
    let mut summary = EnsembleSummary::from_reports(task_id, rows, with_std)?.with_majority(report_against_panel(&mv, panel)?);
    summary.tie_break_used = tie_break_used;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::FATHERHOOD_TASKS;
    use proptest::prelude::*;

    fn report(name: &str, k: f64, r: f64, f: f64) -> MetricReport {
        MetricReport { annotator_id: name.into(), kappa: k, raw: r, f1: f, against: "humans".into() }
    }

    fn rec(id: &str, labels: &[&str]) -> AnnotationRecord {
        AnnotationRecord {
            instance_id: id.into(),
            run_id: "r".into(),
            tasks: vec!["involvement".into()],
            labels: labels.iter().map(|s| s.to_string()).collect(),
            fallback_applied: vec![false; labels.len()],
            extra_ignored: false,
            raw_response: String::new(),
        }
    }

    fn run(order: &str, labels: &[&str]) -> OrderRun {
        OrderRun {
            order_id: order.into(),
            permutation: vec![],
            records: labels.iter().enumerate().map(|(i, l)| rec(&format!("s{i}"), &[l])).collect(),
        }
    }

    #[test]
    fn strict_majority_and_singleton() {
        assert_eq!(majority_label(&["passive", "passive", "active_negative"], 1, "x"), ("passive".into(), false));
        assert_eq!(majority_label(&["x"], 1, "i"), ("x".into(), false));
    }

    #[test]
    fn tie_break_is_reproducible_and_in_tied_set() {
        let labels = ["a", "b", "c"];
        let (first, tie) = majority_label(&labels, 7, "s1");
        assert!(tie);
        assert!(labels.contains(&first.as_str()));
        for _ in 0..10 {
            assert_eq!(majority_label(&labels, 7, "s1").0, first);
        }
        let (l, _) = majority_label(&["a", "a", "b", "b", "c"], 7, "s1");
        assert!(l == "a" || l == "b");
    }

    #[test]
    fn tie_break_varies_with_instance() {
        let picks: HashSet<String> = (0..40).map(|i| majority_label(&["a", "b"], 3, &format!("s{i}")).0).collect();
        assert_eq!(picks.len(), 2);
    }

    #[test]
    fn reference_order_scores() {
        let rows = vec![
            report("0", 49.36, 62.57, 54.92),
            report("1", 48.27, 61.90, 53.51),
            report("2", 46.58, 60.67, 53.72),
        ];
        let (mean, std) = summarize_reports(&rows, true).unwrap();
        let std = std.unwrap();
        assert!((mean.raw - 61.713333).abs() < 1e-5);
        assert!((mean.f1 - 54.05).abs() < 1e-9);
        assert!((mean.kappa - 48.07).abs() < 1e-9);
        assert!((std.raw - 0.96).abs() < 0.01);
        assert!((std.f1 - 0.76).abs() < 0.01);
        assert!((std.kappa - 1.4007).abs() < 1e-4);
    }

    #[test]
    fn std_needs_two_runs() {
        assert!(summarize_reports(&[report("0", 1.0, 1.0, 1.0)], true).is_err());
        let (m, s) = summarize_reports(&[report("0", 1.0, 2.0, 3.0)], false).unwrap();
        assert_eq!((m.kappa, s), (1.0, None));
    }

    #[test]
    fn reference_discrepancy_note() {
        let rows = vec![
            report("0", 49.36, 62.57, 54.92),
            report("1", 48.27, 61.90, 53.51),
            report("2", 46.58, 60.67, 53.72),
        ];
        let mut s = EnsembleSummary::from_reports("involvement", rows, true).unwrap();
        let added = s.compare_with_reference(
            "the reference table",
            ReferenceScores { kappa: 47.97, raw: 61.71, f1: 54.05 },
            None,
        );
        assert_eq!(added, 1);
        assert!(s.notes[0].contains("48.07") && s.notes[0].contains("47.97"), "{}", s.notes[0]);
        let text = s.render();
        assert!(text.contains("Avg") && text.contains("Std") && text.contains("note: kappa mean"));
    }

    #[test]
    fn identical_runs_have_zero_std_and_same_majority() {
        let suite = TaskSuite::from_toml_str(FATHERHOOD_TASKS).unwrap();
        let labels = ["passive", "active_negative", "passive", "not_applicable"];
        let rs = RunSet { runs: vec![run("0", &labels), run("1", &labels), run("2", &labels)], seed: 1 };
        let gold = vec![
            LabelVector::new("h1", "involvement", (0..4).map(|i| format!("s{i}")).collect(), labels.iter().map(|s| s.to_string()).collect()).unwrap(),
            LabelVector::new("h2", "involvement", (0..4).map(|i| format!("s{i}")).collect(), vec!["passive".into(); 4]).unwrap(),
        ];
        let s = summarize_runs(&rs, &suite, &gold, "involvement", true).unwrap();
        let std = s.std.unwrap();
        assert_eq!((std.kappa, std.raw, std.f1), (0.0, 0.0, 0.0));
        assert_eq!(s.majority.unwrap(), MetricReport { annotator_id: "Majority".into(), ..s.runs[0].clone() });
        assert!(!s.tie_break_used);
        let (m, _) = majority_records(&rs, &suite).unwrap();
        assert_eq!(m.iter().map(|r| r.labels[0].as_str()).collect::<Vec<_>>(), labels);
    }

    #[test]
    fn joint_majority_is_gated() {
        let suite = TaskSuite::from_toml_str(FATHERHOOD_TASKS).unwrap();
        let joint = |labels: &[&str]| {
            let mut r = rec("s0", labels);
            r.tasks = suite.tasks.iter().map(|t| t.id.clone()).collect();
            r
        };
        let mk = |id: &str, labels: &[&str]| OrderRun { order_id: id.into(), permutation: vec![], records: vec![joint(labels)] };
        let rs = RunSet {
            runs: vec![
                mk("0", &["not_applicable", "not_applicable", "not_applicable"]),
                mk("1", &["not_applicable", "explicit", "ideal"]),
                mk("2", &["passive", "explicit", "ideal"]),
            ],
            seed: 0,
        };
        let (m, _) = majority_records(&rs, &suite).unwrap();
        assert_eq!(m[0].labels, vec!["not_applicable"; 3]);
        assert_eq!(m[0].fallback_applied, vec![false, true, true]);
    }

    #[test]
    fn runset_validation() {
        let a = run("0", &["passive", "passive"]);
        assert!(RunSet { runs: vec![a.clone(), a.clone()], seed: 0 }.validate().is_err());
        let b = run("1", &["passive"]);
        assert!(matches!(RunSet { runs: vec![a.clone(), b], seed: 0 }.validate(), Err(Error::Misaligned(_))));
        assert!(RunSet { runs: vec![], seed: 0 }.validate().is_err());
    }

    #[test]
    fn vector_alignment_reports_missing() {
        let recs = vec![rec("s0", &["passive"])];
        let err = records_to_vector(&recs, "involvement", "m", &["s0".into(), "s9".into()]).unwrap_err();
        assert!(err.to_string().contains("s9"));
    }

    proptest! {
        #[test]
        fn majority_ignores_run_order(mut labels in prop::collection::vec(0u8..3, 1..8), seed: u64, rot in 0usize..8) {
            let names: Vec<String> = labels.iter().map(|l| format!("l{l}")).collect();
            let a = majority_label(&names, seed, "i");
            let len = labels.len();
            labels.rotate_left(rot % len);
            labels.reverse();
            let names: Vec<String> = labels.iter().map(|l| format!("l{l}")).collect();
            prop_assert_eq!(majority_label(&names, seed, "i"), a);
        }

        #[test]
        fn odd_runs_over_two_labels_never_tie(half in 0usize..5, ones in 0usize..11, seed: u64) {
            let n = 2 * half + 1;
            let labels: Vec<&str> = (0..n).map(|i| if i < ones.min(n) { "a" } else { "b" }).collect();
            prop_assert!(!majority_label(&labels, seed, "i").1);
        }

        #[test]
        fn mean_matches_panel_average(xs in prop::collection::vec((-100.0f64..100.0, 0.0f64..100.0, 0.0f64..100.0), 2..6)) {
            let rows: Vec<MetricReport> = xs.iter().enumerate().map(|(i, (k, r, f))| report(&i.to_string(), *k, *r, *f)).collect();
            let (m, _) = summarize_reports(&rows, true).unwrap();
            let p = crate::agreement_metrics::panel_average(&rows, "Avg").unwrap();
            prop_assert!((m.kappa - p.kappa).abs() < 1e-9 && (m.raw - p.raw).abs() < 1e-9 && (m.f1 - p.f1).abs() < 1e-9);
        }
    }
}
