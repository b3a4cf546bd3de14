//! Talk to an OpenAI-compatible endpoint through the gateway, here a local
//! stub server that rejects the first two requests with 429.
//!
//! Shows retries with exponential backoff, the response cache (a second
//! identical request never reaches the server), bounded concurrency and the
//! run log.
//!
//! ```text
//! cargo run --example gateway_stub
//! ```

use std::sync::{Arc, Mutex};

use llmcoder::llm_gateway::{
    CompletionRequest, Gateway, HttpBackend, MockFixtures, ModelEndpoint, ResponseCache, RetryPolicy, RunLog,
};
use llmcoder::stub_server::StubServer;

fn main() -> llmcoder::Result<()> {
    let fixtures = MockFixtures::echo_hash(&["passive, explicit, descriptive", "not_applicable"]);
    let server = StubServer::start_scripted(fixtures, vec![429, 429])?;

    let mut endpoint = ModelEndpoint::new(server.base_url(), "stub-model");
    endpoint.api_key_env = String::new();
    endpoint.max_in_flight = 2;
    endpoint.retry = RetryPolicy { max_retries: 3, base_backoff_secs: 0.05 };

    // Record the backoff delays instead of only sleeping through them.
    let delays = Arc::new(Mutex::new(Vec::new()));
    let seen = Arc::clone(&delays);
    let gateway = Gateway::new(endpoint, Arc::new(HttpBackend::unauthenticated()), ResponseCache::in_memory())?
        .with_sleeper(move |d| {
            seen.lock().unwrap().push(d);
            std::thread::sleep(d);
        });

    let request = CompletionRequest::for_endpoint(gateway.endpoint(), "Text: pappa lagar mat .\nLabel:");
    let first = gateway.complete(&request)?;
    println!("answer {:?} after {} requests, backoff {:?}", first.text, server.requests(), delays.lock().unwrap());

    let again = gateway.complete(&request)?;
    println!("repeat served from cache: {} (server still saw {} requests)", again.cache_hit, server.requests());

    let items: Vec<(String, CompletionRequest)> = (0..8)
        .map(|i| (format!("s{i}"), CompletionRequest::for_endpoint(gateway.endpoint(), format!("Text: mening {i} .\nLabel:"))))
        .collect();
    let log_path = std::env::temp_dir().join(format!("llmcoder-gateway-{}.jsonl", std::process::id()));
    let log = RunLog::new(&log_path, "demo");
    let outcome = gateway.annotate_batch(&items, Some(&log))?;
    for (id, r) in &outcome.responses {
        println!("  {id}: {}", r.text);
    }
    println!(
        "{} answered, {} failed, peak in flight {}, {} run log lines",
        outcome.responses.len(),
        outcome.failures.len(),
        gateway.peak_in_flight(),
        RunLog::read(&log_path)?.len()
    );
    let _ = std::fs::remove_file(log_path);
    Ok(())
}
