//! LLM-assisted text coding.
//!
//! Build prompts from a codebook, annotate a corpus through a completions
//! endpoint, score the model against human coders, sweep prompt variants,
//! ensemble over example orders and compare cost against human coding.
//!
//! The runnable programs under `examples/` walk through each step.

pub mod agreement_metrics;
pub mod assets;
pub mod budget;
pub mod cli;
pub mod corpus_ingest;
pub mod error;
pub mod io;
pub mod label_parser;
pub mod llm_gateway;
pub mod order_ensemble;
pub mod pipeline;
pub mod prompt_forge;
pub mod stub_server;
pub mod task_schema;

pub use error::{Error, Result};

/// Derives an independent sub-seed for one purpose from the global seed,
/// so that sampling, order enumeration and tie-breaking never share a stream.
pub fn derive_seed(seed: u64, purpose: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(purpose.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("sha256 has 32 bytes"))
}
