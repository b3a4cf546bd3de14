mod common;

use llmcoder::assets::{FATHERHOOD_EXAMPLES, FATHERHOOD_TASKS};
use llmcoder::corpus_ingest::Instance;
use llmcoder::prompt_forge::{build_prompt, parse_examples, ExampleOrder, PromptConfig, TaskSelection};
use llmcoder::task_schema::{DescriptionLevel, TaskSuite};

fn render(selection: TaskSelection, level: DescriptionLevel, n: usize) -> llmcoder::prompt_forge::Prompt {
    let suite = TaskSuite::from_toml_str(FATHERHOOD_TASKS).unwrap();
    let pool = parse_examples(FATHERHOOD_EXAMPLES, &suite).unwrap();
    let target = Instance::new("target", "cli", pool[15].text.clone());
    let cfg = PromptConfig::new(selection, level, n).with_order(ExampleOrder::Authored);
    build_prompt(&cfg, &suite, &pool, &target).unwrap()
}

#[test]
fn joint_long_prompt_matches_golden_file() {
    let expected = std::fs::read_to_string(common::golden("joint_long_15_authored.txt")).unwrap();
    let prompt = render(TaskSelection::Joint, DescriptionLevel::Long, 15);
    assert_eq!(prompt.text, expected);
    let lines: Vec<&str> = prompt.text.lines().collect();
    let i = lines.iter().position(|l| *l == "Text: i båda fallen är modern genetisk mor till barnet .").unwrap();
    assert_eq!(lines[i + 1], "Label: not_applicable");
    assert!(prompt.text.ends_with("\nLabel:"));
}

#[test]
fn segments_tile_the_prompt() {
    let p = render(TaskSelection::Joint, DescriptionLevel::Long, 15);
    let s = &p.segments;
    let ex = s.examples.clone().unwrap();
    assert_eq!(s.instruction.start, 0);
    assert!(s.instruction.end <= s.codebook.start && s.codebook.end <= ex.start && ex.end <= s.target.start);
    assert_eq!(s.target.end, p.text.len());
    assert!(p.segment(&s.target).contains("polisen"));
}

#[test]
fn zero_shot_has_no_example_segment() {
    for level in [DescriptionLevel::None, DescriptionLevel::Short, DescriptionLevel::Long] {
        let p = render(TaskSelection::Joint, level, 0);
        assert!(p.segments.examples.is_none());
        assert_eq!(p.text.matches("Text:").count(), 1, "{level:?}");
        assert!(!p.text.contains("modern genetisk"));
    }
}

#[test]
fn single_task_prompt_only_lists_that_task() {
    let p = render(TaskSelection::Single("normativeness".into()), DescriptionLevel::Short, 5);
    assert!(!p.text.contains("paternal involvement"));
    // each example line carries exactly one label
    for l in p.text.lines().filter(|l| l.starts_with("Label: ")) {
        assert!(!l.contains(','), "{l}");
    }
}
