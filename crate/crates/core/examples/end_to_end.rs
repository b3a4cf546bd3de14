//! The whole workflow against canned model answers, in a scratch directory:
//! ingest the sample corpus, code it, score it against made-up coders,
//! sweep prompt settings, ensemble over example orders and price it.
//!
//! Each step is the same call the `llmcoder` binary makes, so this doubles
//! as a map of the command line.

use std::path::Path;

use llmcoder::cli::main_with_args;
use llmcoder::corpus_ingest::read_instances;
use llmcoder::io::{read_jsonl, write_file};
use llmcoder::label_parser::AnnotationRecord;

fn step(name: &str, out: &Path, extra: &[&str]) {
    let sample = concat!(env!("CARGO_MANIFEST_DIR"), "/data/sample");
    let mut args = vec![
        "llmcoder".to_string(),
        "--config".into(),
        format!("{sample}/run.toml"),
        "--out".into(),
        out.display().to_string(),
        "--mock".into(),
        format!("{sample}/mock_fixtures.json"),
        name.into(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    println!("$ llmcoder {}", args[1..].join(" "));
    let code = main_with_args(args);
    assert_eq!(code, 0, "`{name}` exited with {code}");
}

fn main() -> llmcoder::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| llmcoder::Error::io("tempdir", e))?;
    let out = dir.path();

    step("ingest", out, &[]);
    let instances = read_instances(out.join("instances.jsonl"))?;
    println!("{} instances\n", instances.len());

    step("annotate", out, &[]);
    let records: Vec<AnnotationRecord> = read_jsonl(out.join("annotations.jsonl"))?;

    // Three pretend coders: the first agrees with the model everywhere, the
    // others disagree on one sentence each.
    let tasks = ["involvement", "explicitness", "normativeness"];
    let mut csv = String::from("instance_id");
    for h in 1..=3 {
        for t in tasks {
            csv.push_str(&format!(",Human {h}/{t}"));
        }
    }
    csv.push('\n');
    for (i, r) in records.iter().enumerate() {
        csv.push_str(&r.instance_id);
        for h in 1..=3 {
            for (t, label) in r.labels.iter().enumerate() {
                let flip = h > 1 && i == h - 1 && t == 0;
                let l = if flip && label == "passive" { "active_negative" } else if flip { "passive" } else { label.as_str() };
                csv.push_str(&format!(",{l}"));
            }
        }
        csv.push('\n');
    }
    let gold = out.join("gold.csv");
    write_file(&gold, csv)?;
    let gold = gold.display().to_string();

    step("evaluate", out, &["--gold", &gold, "--task", "involvement"]);

    // Sweeps and ensembles normally run on the held-out validation sample;
    // the pretend coders only labelled the coding set, so point them there.
    let input = out.join("instances.jsonl").display().to_string();
    step("sweep", out, &["--input", &input, "--gold", &gold]);
    step("ensemble", out, &["--input", &input, "--gold", &gold]);
    step("budget", out, &["--machine-minutes", "1"]);
    println!("outputs: {}", list(out).join(" "));
    Ok(())
}

fn list(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map(|rd| rd.filter_map(|e| e.ok()).map(|e| e.file_name().to_string_lossy().into_owned()).collect())
        .unwrap_or_default();
    names.sort();
    names
}
