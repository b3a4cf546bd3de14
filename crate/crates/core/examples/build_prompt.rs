//! Render a coding prompt from the bundled codebook and example pool.
//!
//! ```text
//! cargo run --example build_prompt
//! cargo run --example build_prompt -- --tasks involvement --level short --examples 0
//! cargo run --example build_prompt -- --order 3 --stats
//! ```
//!
//! By default the target is the first pool sentence not used as an example,
//! so nothing in the prompt leaks its label.

use clap::Parser;
use llmcoder::assets::{FATHERHOOD_EXAMPLES, FATHERHOOD_TASKS};
use llmcoder::corpus_ingest::Instance;
use llmcoder::prompt_forge::{build_prompt, parse_examples, ExampleOrder, PromptConfig, TaskSelection};
use llmcoder::task_schema::{DescriptionLevel, TaskSuite};

#[derive(Parser)]
struct Args {
    /// `joint` or a task id.
    #[arg(long, default_value = "joint")]
    tasks: String,
    #[arg(long, default_value = "long")]
    level: DescriptionLevel,
    #[arg(long, default_value_t = 15)]
    examples: usize,
    /// Shuffle the examples with this seed instead of the authored order.
    #[arg(long)]
    order: Option<u64>,
    /// Sentence to code; defaults to the next unused pool sentence.
    #[arg(long)]
    target: Option<String>,
    /// Print segment offsets and size estimates to stderr.
    #[arg(long)]
    stats: bool,
}

fn main() -> llmcoder::Result<()> {
    let args = Args::parse();
    let suite = TaskSuite::from_toml_str(FATHERHOOD_TASKS)?;
    let pool = parse_examples(FATHERHOOD_EXAMPLES, &suite)?;

    let mut cfg = PromptConfig::new(TaskSelection::parse(&args.tasks), args.level, args.examples);
    if let Some(seed) = args.order {
        cfg = cfg.with_order(ExampleOrder::Seed(seed));
    }
    let text = match args.target {
        Some(t) => t,
        None => pool.get(args.examples).or(pool.last()).map(|e| e.text.clone()).unwrap_or_default(),
    };
    let prompt = build_prompt(&cfg, &suite, &pool, &Instance::new("target", "cli", text))?;

    print!("{}", prompt.text);
    if args.stats {
        let s = &prompt.segments;
        eprintln!();
        eprintln!("instruction {:?}", s.instruction);
        eprintln!("codebook    {:?}", s.codebook);
        eprintln!("examples    {:?}", s.examples);
        eprintln!("target      {:?}", s.target);
        eprintln!(
            "{} words, {} chars, ~{} tokens",
            prompt.stats.words, prompt.stats.chars, prompt.stats.estimated_tokens
        );
    }
    for w in &prompt.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}
