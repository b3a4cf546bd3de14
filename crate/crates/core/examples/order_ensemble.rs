//! Few-shot example order as a source of variance: per-order scores, their
//! mean and sample standard deviation, and a majority-vote pass.

use llmcoder::agreement_metrics::{LabelVector, MetricReport};
use llmcoder::assets::FATHERHOOD_TASKS;
use llmcoder::label_parser::{parse_labels, AnnotationRecord};
use llmcoder::order_ensemble::{majority_label, summarize_runs, EnsembleSummary, OrderRun, ReferenceScores, RunSet};
use llmcoder::prompt_forge::TaskSelection;
use llmcoder::task_schema::TaskSuite;

fn report(name: &str, kappa: f64, raw: f64, f1: f64) -> MetricReport {
    MetricReport { annotator_id: name.into(), kappa, raw, f1, against: "Humans".into() }
}

fn main() -> llmcoder::Result<()> {
    // Scores of three orders of the same 15 examples, as published.
    let runs = vec![
        report("Order 1", 49.36, 62.57, 54.92),
        report("Order 2", 48.27, 61.90, 53.51),
        report("Order 3", 46.58, 60.67, 53.72),
    ];
    let mut summary = EnsembleSummary::from_reports("involvement", runs, true)?;
    // The published mean row; cells that do not match what the rows average
    // to get a note.
    summary.compare_with_reference(
        "the reference table",
        ReferenceScores { kappa: 47.97, raw: 61.71, f1: 54.05 },
        None,
    );
    print!("{}", summary.render());

    // Majority voting with a seeded tie-break.
    for labels in [vec!["passive", "passive", "ideal"], vec!["passive", "active_negative"]] {
        let (label, tie) = majority_label(&labels, 2023, "s1");
        println!("\nmajority of {labels:?}: {label} (tie-break: {tie})");
    }

    // Full path from records: three passes over four sentences, scored
    // against a panel of two coders.
    let suite = TaskSuite::from_toml_str(FATHERHOOD_TASKS)?;
    let ids = ["s1", "s2", "s3", "s4"];
    let passes = [
        ["passive", "not_applicable", "active_positive_caring", "passive"],
        ["passive", "passive", "active_positive_caring", "active_negative"],
        ["active_negative", "not_applicable", "active_positive_caring", "passive"],
    ];
    let runs: Vec<OrderRun> = passes
        .iter()
        .enumerate()
        .map(|(k, labels)| OrderRun {
            order_id: format!("Order {}", k + 1),
            permutation: vec![],
            records: ids
                .iter()
                .zip(labels)
                .map(|(id, l)| {
                    let sel = TaskSelection::Single("involvement".into());
                    AnnotationRecord::new(id, &format!("o{k}"), &suite, parse_labels(l, &suite, &sel), l)
                })
                .collect(),
        })
        .collect();
    let panel = vec![
        LabelVector::from_labels("Human 1", "involvement", &["passive", "not_applicable", "active_positive_caring", "passive"]),
        LabelVector::from_labels("Human 2", "involvement", &["passive", "not_applicable", "active_positive_other", "passive"]),
    ];
    let mut panel = panel;
    for v in &mut panel {
        v.instance_ids = ids.iter().map(|s| s.to_string()).collect();
    }
    let s = summarize_runs(&RunSet { runs, seed: 2023 }, &suite, &panel, "involvement", true)?;
    print!("\n{}", s.render());
    Ok(())
}
