//! Sentence-split a corpus, keep sentences mentioning fathers, drop verb
//! uses of ambiguous keywords with a part-of-speech sidecar, and draw a
//! seeded validation sample.
//!
//! ```text
//! cargo run --example ingest_corpus
//! cargo run --example ingest_corpus -- <corpus dir> [pos.tsv]
//! ```

use std::collections::HashSet;
use std::path::PathBuf;

use llmcoder::assets::FATHER_KEYWORDS;
use llmcoder::corpus_ingest::{
    keyword_filter, load_corpus, normalize, pos_filter, split_sentences, split_validation, Instance, PosSidecar,
    DEFAULT_NOUN_TAGS,
};

fn main() -> llmcoder::Result<()> {
    let sample = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/sample");
    let mut args = std::env::args().skip(1);
    let corpus = args.next().map(PathBuf::from).unwrap_or_else(|| sample.join("corpus"));
    let pos = args.next().map(PathBuf::from).or_else(|| Some(sample.join("pos.tsv")).filter(|p| p.exists()));

    println!("normalize: {:?}", normalize("Pappor tog ut 11,7 % av dagarna (år 2019)."));

    let docs = load_corpus(&corpus)?;
    let sentences: Vec<Instance> = docs.iter().flat_map(split_sentences).collect();
    let keywords: Vec<String> = FATHER_KEYWORDS.iter().map(|s| s.to_string()).collect();
    let hits = keyword_filter(&sentences, &keywords)?;
    println!("{} documents, {} sentences, {} keyword hits", docs.len(), sentences.len(), hits.len());

    let kept = match pos {
        Some(path) => {
            let tags = PosSidecar::load(path)?;
            let kept = pos_filter(&hits, &keywords, &tags, DEFAULT_NOUN_TAGS)?;
            for dropped in hits.iter().filter(|h| !kept.contains(h)) {
                println!("  not a noun use: {}", dropped.text);
            }
            kept
        }
        None => hits,
    };

    let (validation, rest) = split_validation(&kept, 3.min(kept.len()), 2023, &HashSet::new())?;
    println!("\nvalidation sample ({}):", validation.len());
    for v in &validation {
        println!("  {:<12} {}", v.id, v.text);
    }
    println!("{} instances outside the validation sample", rest.len());
    Ok(())
}
