//! Shared fixtures for the integration tests.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Parser;
use llmcoder::cli::{run, Cli, Outcome};
use llmcoder::corpus_ingest::{write_instances, Instance};

pub fn sample(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/sample").join(rel)
}

pub fn golden(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(rel)
}

/// Parses `args` as the binary would and runs it.
pub fn cli(args: &[&str]) -> llmcoder::Result<Outcome> {
    let mut full = vec!["llmcoder"];
    full.extend_from_slice(args);
    let parsed = Cli::try_parse_from(full).unwrap_or_else(|e| panic!("bad test arguments: {e}"));
    run(&parsed)
}

/// `cli` with the sample config, `out` as output dir and the canned answers.
pub fn sample_cli(out: &Path, args: &[&str]) -> llmcoder::Result<Outcome> {
    let config = sample("run.toml");
    let fixtures = sample("mock_fixtures.json");
    let mut full = vec![
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--mock",
        fixtures.to_str().unwrap(),
    ];
    full.extend_from_slice(args);
    cli(&full)
}

const WORDS: &[&str] = &[
    "pappan", "fadern", "barnet", "mamman", "hemmet", "förskolan", "ansvar", "tid", "omsorg", "lagen", "domstolen",
    "vårdnad", "ledighet", "föräldrar", "arbetet", "familjen", "stöd", "tar", "har", "ger", "ska", "kan", "inte",
    "med", "för", "och", "på", "till",
];

/// `n` distinct made-up sentences, deterministic in `n` alone.
pub fn synthetic_instances(n: usize) -> Vec<Instance> {
    (0..n)
        .map(|i| {
            let mut x = i as u64 * 2654435761 + 12345;
            let mut text = String::new();
            for k in 0..(6 + i % 7) {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                if k > 0 {
                    text.push(' ');
                }
                text.push_str(WORDS[(x >> 33) as usize % WORDS.len()]);
            }
            let _ = write!(text, " nummer {i} .");
            Instance::new(format!("syn:{i}"), format!("syn{}", i / 50), text)
        })
        .collect()
}

pub fn write_synthetic_instances(path: &Path, n: usize) -> Vec<Instance> {
    let v = synthetic_instances(n);
    write_instances(path, &v).unwrap();
    v
}

const INVOLVEMENT: &[&str] = &[
    "passive",
    "active_negative",
    "active_positive_caring",
    "active_positive_challenging",
    "active_positive_other",
    "not_applicable",
];

/// Gold table for three coders over `ids` on all three tasks. Coder `h`
/// deviates from a shared base label on every `(h + 3)`-th instance.
pub fn synthetic_gold(ids: &[String]) -> String {
    let tasks = ["involvement", "explicitness", "normativeness"];
    let mut out = String::from("instance_id");
    for h in 1..=3 {
        for t in tasks {
            let _ = write!(out, ",Human {h}/{t}");
        }
    }
    out.push('\n');
    for (i, id) in ids.iter().enumerate() {
        out.push_str(id);
        for h in 1..=3usize {
            let shift = usize::from(i % (h + 3) == 0);
            let inv = INVOLVEMENT[(i + shift) % INVOLVEMENT.len()];
            let (expl, norm) = if inv == "not_applicable" {
                ("not_applicable", "not_applicable")
            } else {
                (["implicit", "explicit"][(i / 2 + shift) % 2], ["descriptive", "ideal"][(i / 3 + h) % 2])
            };
            let _ = write!(out, ",{inv},{expl},{norm}");
        }
        out.push('\n');
    }
    out
}

/// Config pointing at an OpenAI-compatible endpoint without credentials.
pub fn stub_config(dir: &Path, base_url: &str, instances: &Path, gold: Option<&Path>) -> PathBuf {
    let mut s = format!(
        "seed = 7\nout_dir = {:?}\ninstances = {:?}\ncache_dir = {:?}\n",
        dir.join("out").display().to_string(),
        instances.display().to_string(),
        dir.join("cache").display().to_string()
    );
    if let Some(g) = gold {
        let _ = writeln!(s, "gold = {:?}", g.display().to_string());
    }
    let _ = write!(
        s,
        "\n[prompt]\ntasks = \"joint\"\ndescription_level = \"long\"\nn_examples = 15\n\n\
         [endpoint]\nbase_url = {base_url:?}\nmodel = \"stub-model\"\napi_key_env = \"\"\nmax_in_flight = 4\n\
         retry = {{ max_retries = 2, base_backoff_secs = 0.01 }}\n"
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, s).unwrap();
    path
}
