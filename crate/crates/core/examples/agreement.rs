//! Agreement between coders: Cohen's kappa, raw agreement, macro-F1,
//! leave-one-out panel averages and a confusion matrix.

use llmcoder::agreement_metrics::{
    cohen_kappa, confusion_matrix, leave_one_out, macro_f1, panel_average, raw_agreement, report_against_panel,
    LabelVector, MetricReport, MetricTable, TableRow,
};

fn v(name: &str, labels: &[&str]) -> LabelVector {
    LabelVector::from_labels(name, "involvement", labels)
}

fn main() -> llmcoder::Result<()> {
    let a = v("a", &["A", "A", "B", "B"]);
    let b = v("b", &["A", "B", "B", "B"]);
    println!("kappa {:.2}  raw {:.2}  F1 {:.2}", cohen_kappa(&a, &b)?, raw_agreement(&a, &b)?, macro_f1(&a, &b)?);
    print!("{}", confusion_matrix(&a, &b)?.render());

    // Three coders and a model. Each coder is scored against the other two,
    // the model against all three.
    let humans = vec![
        v("Human 1", &["passive", "caring", "na", "na", "passive", "other", "caring", "na"]),
        v("Human 2", &["passive", "other", "na", "passive", "passive", "other", "caring", "na"]),
        v("Human 3", &["other", "caring", "na", "na", "passive", "other", "other", "na"]),
    ];
    let model = v("model", &["passive", "caring", "na", "na", "other", "other", "caring", "passive"]);

    let rows = leave_one_out(&humans)?;
    let avg = panel_average(&rows, "Humans AVG")?;
    let mut table = MetricTable { task_id: "involvement".into(), rows: rows.iter().map(TableRow::human).collect(), notes: vec![] };
    table.rows.push(TableRow::human(&avg));
    let m = report_against_panel(&model, &humans)?;
    table.rows.push(TableRow { tasks: "1".into(), description: "long".into(), n_examples: "15".into(), ..TableRow::human(&m) });
    print!("\n{}", table.render());

    // Averages of already published per-coder rows work the same way.
    let printed = [(49.30, 61.29, 57.22), (51.02, 63.86, 57.60), (51.65, 64.29, 57.54)];
    let rows: Vec<MetricReport> = printed
        .iter()
        .enumerate()
        .map(|(i, &(kappa, raw, f1))| MetricReport { annotator_id: format!("Human {}", i + 1), kappa, raw, f1, against: "others".into() })
        .collect();
    let avg = panel_average(&rows, "Humans AVG")?;
    println!("\naverage of printed rows: {:.2} / {:.2} / {:.2}", avg.kappa, avg.raw, avg.f1);
    Ok(())
}
