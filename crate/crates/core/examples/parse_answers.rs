//! Turn raw model answers into validated labels.

use llmcoder::assets::FATHERHOOD_TASKS;
use llmcoder::label_parser::parse_labels;
use llmcoder::prompt_forge::TaskSelection;
use llmcoder::task_schema::TaskSuite;

fn main() -> llmcoder::Result<()> {
    let suite = TaskSuite::from_toml_str(FATHERHOOD_TASKS)?;
    let joint = TaskSelection::Joint;
    let answers = [
        "not_applicable",
        "passive, explicit, descriptive",
        "active_positive_challenging, explicit, ideal",
        " Label: Active_Positive_Other, implicit, ideal.",
        "passive, explicit",
        "not_applicable, explicit, ideal",
        "The father seems passive here.",
    ];
    for raw in answers {
        let p = parse_labels(raw, &suite, &joint);
        println!("{raw:<48} -> {:?} fallback={:?}", p.labels, p.fallback);
    }

    let single = TaskSelection::Single("normativeness".into());
    let p = parse_labels("\"Ideal\"", &suite, &single);
    println!("\nsingle task: {:?} fallback={:?}", p.labels, p.fallback);
    Ok(())
}
