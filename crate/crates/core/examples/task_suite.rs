//! Load a codebook, inspect it, and resolve raw label strings.
//!
//! ```text
//! cargo run --example task_suite
//! cargo run --example task_suite -- path/to/codebook.toml
//! ```

use llmcoder::assets::FATHERHOOD_TASKS;
use llmcoder::task_schema::{DescriptionLevel, TaskSuite};

fn main() -> llmcoder::Result<()> {
    let suite = match std::env::args().nth(1) {
        Some(path) => TaskSuite::load(path)?,
        None => TaskSuite::from_toml_str(FATHERHOOD_TASKS)?,
    };

    for (i, task) in suite.tasks.iter().enumerate() {
        let levels: Vec<&str> = task.description_levels.iter().map(|l| l.as_str()).collect();
        println!("task {} `{}` ({}): {} labels, descriptions: {}", i + 1, task.id, task.name, task.labels.len(), levels.join("/"));
        for label in &task.labels {
            let short = label.description(DescriptionLevel::Short).unwrap_or("-");
            println!("  {:<28} {}", label.id, short);
        }
    }
    if let Some(gate) = &suite.gate {
        println!("\n`{}` = `{}` forces every later task to its not-applicable label", gate.task, gate.label);
    }

    // Answers are matched on ids and aliases, ignoring case and spacing.
    // Anything else falls back to the task default and is flagged.
    let involvement = &suite.tasks[0];
    for raw in ["Passive", "active positive daring", "NOT_APPLICABLE", "clearly passive!"] {
        let r = involvement.resolve_label(raw);
        println!("{raw:>24} -> {:<28} fallback={}", r.label, r.fallback);
    }

    let row = vec!["not_applicable".to_string(), "explicit".into(), "ideal".into()];
    println!("\ngated {:?} -> {:?}", row, suite.apply_gate(&row)?);

    // The suite round-trips through TOML.
    let again = TaskSuite::from_toml_str(&suite.to_toml_string()?)?;
    assert_eq!(again, suite);
    Ok(())
}
