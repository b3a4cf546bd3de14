mod common;

use common::{cli, sample, sample_cli, stub_config, synthetic_gold, write_synthetic_instances};
use llmcoder::corpus_ingest::read_instances;
use llmcoder::io::read_jsonl;
use llmcoder::label_parser::AnnotationRecord;
use llmcoder::llm_gateway::MockFixtures;
use llmcoder::stub_server::StubServer;
use llmcoder::Error;

fn read(path: impl AsRef<std::path::Path>) -> String {
    std::fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

#[test]
fn ingest_matches_stored_instances_and_repeats_exactly() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = sample_cli(a.path(), &["ingest"]).unwrap();
    assert_eq!(out.exit_code, 0);
    assert!(out.report.contains("keyword hits: 11"), "{}", out.report);
    sample_cli(b.path(), &["ingest"]).unwrap();
    for f in ["instances.jsonl", "validation.jsonl", "ingest.json"] {
        assert_eq!(read(a.path().join(f)), read(b.path().join(f)), "{f} differs between runs");
    }
    assert_eq!(read(a.path().join("instances.jsonl")), read(common::golden("sample_instances.jsonl")));
}

#[test]
fn ingest_with_missing_pos_sidecar_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = read(sample("run.toml")).replace("pos_sidecar = \"pos.tsv\"", "pos_sidecar = \"no-such-file.tsv\"");
    let path = sample("").join(format!("missing-pos-{}.toml", std::process::id()));
    std::fs::write(&path, cfg).unwrap();
    let r = cli(&["--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "ingest"]);
    std::fs::remove_file(&path).unwrap();
    assert!(r.is_err(), "ingest should refuse a missing sidecar");
}

#[test]
fn annotate_writes_one_record_per_instance_with_every_task() {
    let dir = tempfile::tempdir().unwrap();
    sample_cli(dir.path(), &["ingest"]).unwrap();
    let out = sample_cli(dir.path(), &["annotate"]).unwrap();
    assert_eq!(out.exit_code, 0);
    let instances = read_instances(dir.path().join("instances.jsonl")).unwrap();
    let records: Vec<AnnotationRecord> = read_jsonl(dir.path().join("annotations.jsonl")).unwrap();
    assert_eq!(records.len(), instances.len());
    for r in &records {
        assert_eq!(r.tasks, ["involvement", "explicitness", "normativeness"]);
        assert_eq!(r.labels.len(), 3);
    }
    for f in ["annotations.csv", "runlog.jsonl", "run.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }

    // Second run is served from the on-disk cache.
    let again = sample_cli(dir.path(), &["annotate"]).unwrap();
    assert!(again.report.contains(&format!("{} served from cache", instances.len())), "{}", again.report);
}

#[test]
fn rejected_requests_give_partial_failure_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let instances = dir.path().join("instances.jsonl");
    write_synthetic_instances(&instances, 6);
    let server = StubServer::start_scripted(MockFixtures::constant("passive, explicit, ideal"), vec![400]).unwrap();
    let cfg = stub_config(dir.path(), &server.base_url(), &instances, None);
    let out = cli(&["--config", cfg.to_str().unwrap(), "annotate"]).unwrap();
    assert_eq!(out.exit_code, 2, "{}", out.report);
    let records: Vec<AnnotationRecord> = read_jsonl(dir.path().join("out/annotations.jsonl")).unwrap();
    assert_eq!(records.len(), 5);
    assert!(!read(dir.path().join("out/errors.jsonl")).trim().is_empty());
}

#[test]
fn exhausted_retries_give_transport_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let instances = dir.path().join("instances.jsonl");
    write_synthetic_instances(&instances, 4);
    let server = StubServer::start_scripted(MockFixtures::constant("passive"), vec![503; 64]).unwrap();
    let cfg = stub_config(dir.path(), &server.base_url(), &instances, None);
    let out = cli(&["--config", cfg.to_str().unwrap(), "annotate"]).unwrap();
    assert_eq!(out.exit_code, 3, "{}", out.report);
    // 4 instances x (1 try + 2 retries)
    assert_eq!(server.requests(), 12);
}

#[test]
fn evaluate_prints_human_rows_average_and_model_row() {
    let dir = tempfile::tempdir().unwrap();
    let instances = dir.path().join("instances.jsonl");
    let inst = write_synthetic_instances(&instances, 40);
    let gold = dir.path().join("gold.csv");
    std::fs::write(&gold, synthetic_gold(&inst.iter().map(|i| i.id.clone()).collect::<Vec<_>>())).unwrap();
    let out = dir.path().join("out");
    let (o, g, i) = (out.to_str().unwrap(), gold.to_str().unwrap(), instances.to_str().unwrap());
    sample_cli(&out, &["annotate", "--input", i]).unwrap();
    let report = sample_cli(&out, &["evaluate", "--gold", g, "--task", "involvement"]).unwrap().report;
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "task: involvement");
    assert!(lines[2].starts_with("Human 1"));
    assert!(lines[5].starts_with("Humans AVG"));
    assert!(lines[6].starts_with("text-davinci-003"));
    assert!(std::path::Path::new(o).join("evaluation.json").exists());

    let gated = sample_cli(&out, &["evaluate", "--gold", g, "--task", "explicitness", "--restrict-gated"]).unwrap();
    assert!(gated.report.contains("task: explicitness"));
}

#[test]
fn sweep_covers_every_cell_and_zero_shot_sends_no_examples() {
    let dir = tempfile::tempdir().unwrap();
    let instances = dir.path().join("instances.jsonl");
    let inst = write_synthetic_instances(&instances, 12);
    let gold = dir.path().join("gold.csv");
    std::fs::write(&gold, synthetic_gold(&inst.iter().map(|i| i.id.clone()).collect::<Vec<_>>())).unwrap();
    let server = StubServer::start(MockFixtures::echo_hash(&["passive, explicit, ideal", "not_applicable"])).unwrap();
    let cfg = stub_config(dir.path(), &server.base_url(), &instances, Some(&gold));
    let mut text = read(&cfg);
    text.push_str(
        "\n[sweep]\ntasks = [\"joint\"]\ndescription_levels = [\"short\", \"long\"]\nn_examples = [0, 15]\neval_task = \"involvement\"\n",
    );
    std::fs::write(&cfg, text).unwrap();

    let out = cli(&["--config", cfg.to_str().unwrap(), "sweep", "--input", instances.to_str().unwrap()]).unwrap();
    assert_eq!(out.exit_code, 0, "{}", out.report);
    let rows = out.report.lines().filter(|l| l.starts_with("stub-model")).count();
    assert_eq!(rows, 4, "{}", out.report);
    let prompts = server.prompts();
    assert_eq!(prompts.len(), 4 * 12);
    let with_examples = prompts.iter().filter(|p| p.matches("\nLabel:").count() > 1).count();
    assert_eq!(with_examples, 2 * 12, "half the cells are zero-shot");
}

#[test]
fn ensemble_runs_each_order_and_needs_two_for_a_deviation() {
    let dir = tempfile::tempdir().unwrap();
    let instances = dir.path().join("instances.jsonl");
    let inst = write_synthetic_instances(&instances, 20);
    let gold = dir.path().join("gold.csv");
    std::fs::write(&gold, synthetic_gold(&inst.iter().map(|i| i.id.clone()).collect::<Vec<_>>())).unwrap();
    let out = dir.path().join("out");
    let (g, i) = (gold.to_str().unwrap(), instances.to_str().unwrap());

    let r = sample_cli(&out, &["ensemble", "--input", i, "--gold", g, "--orders", "3"]).unwrap();
    assert_eq!(r.exit_code, 0);
    for row in ["Order 1", "Order 2", "Order 3", "Avg", "Std", "Majority", "tie-break used:"] {
        assert!(r.report.contains(row), "missing {row}:\n{}", r.report);
    }
    let majority: Vec<AnnotationRecord> = read_jsonl(out.join("ensemble_majority.jsonl")).unwrap();
    assert_eq!(majority.len(), 20);

    let err = sample_cli(&out, &["ensemble", "--input", i, "--gold", g, "--orders", "1"]).unwrap_err();
    assert!(matches!(err, Error::Invalid(_)), "{err}");
    let single = sample_cli(&out, &["ensemble", "--input", i, "--gold", g, "--orders", "1", "--no-std"]).unwrap();
    assert!(!single.report.contains("Std"));
}

#[test]
fn budget_with_published_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = sample_cli(
        dir.path(),
        &["budget", "--instances", "1910", "--hours", "19", "--wage", "12.35", "--coders", "3", "--api-total", "93"],
    )
    .unwrap();
    assert!(out.report.contains("703.95 USD"), "{}", out.report);
    assert!(out.report.contains("0.0487"), "{}", out.report);
}

#[test]
fn budget_without_pricing_for_the_logged_model_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    sample_cli(dir.path(), &["ingest"]).unwrap();
    sample_cli(dir.path(), &["annotate"]).unwrap();
    let pricing = dir.path().join("pricing.toml");
    std::fs::write(&pricing, "[models.\"other\"]\ninput_per_1k = 0.01\noutput_per_1k = 0.01\n").unwrap();
    let err = sample_cli(dir.path(), &["budget", "--pricing", pricing.to_str().unwrap()]).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn binary_entry_point_maps_errors_to_exit_codes() {
    assert_eq!(llmcoder::cli::main_with_args(["llmcoder", "--config", "/no/such/run.toml", "ingest"]), 1);
}
