//! A tiny local HTTP server that speaks the OpenAI completions and chat
//! shapes, answering from [`MockFixtures`].
//!
//! It counts every request it receives and can be scripted to fail the
//! first N requests with chosen statuses, which makes retry and cache
//! behaviour observable over a real socket.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::llm_gateway::MockFixtures;
use crate::prompt_forge::estimate_tokens;

struct Shared {
    fixtures: MockFixtures,
    script: Mutex<VecDeque<u16>>,
    requests: AtomicUsize,
    prompts: Mutex<Vec<String>>,
    stop: AtomicBool,
}

/// Running stub server; shuts down on drop.
pub struct StubServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    /// Binds an ephemeral port on localhost.
    pub fn start(fixtures: MockFixtures) -> Result<Self> {
        Self::start_scripted(fixtures, Vec::new())
    }

    /// The first requests are answered with `statuses` (one each, in
    /// order) before normal service starts.
    pub fn start_scripted(fixtures: MockFixtures, statuses: Vec<u16>) -> Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| Error::io("127.0.0.1:0", e))?;
        let addr = listener.local_addr().map_err(|e| Error::io("stub listener", e))?;
        let shared = Arc::new(Shared {
            fixtures,
            script: Mutex::new(statuses.into()),
            requests: AtomicUsize::new(0),
            prompts: Mutex::new(Vec::new()),
            stop: AtomicBool::new(false),
        });
        let worker = Arc::clone(&shared);
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if worker.stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let shared = Arc::clone(&worker);
                std::thread::spawn(move || {
                    if let Err(e) = serve(stream, &shared) {
                        log::debug!("stub server connection error: {e}");
                    }
                });
            }
        });
        Ok(StubServer { addr, shared, handle: Some(handle) })
    }

    /// Base URL to put in a [`crate::llm_gateway::ModelEndpoint`].
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    /// Requests received so far, including scripted failures.
    pub fn requests(&self) -> usize {
        self.shared.requests.load(Ordering::SeqCst)
    }

    /// Prompts received so far, in arrival order.
    pub fn prompts(&self) -> Vec<String> {
        self.shared.prompts.lock().unwrap().clone()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(stream: TcpStream, shared: &Shared) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line)? == 0 {
        return Ok(());
    }
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.trim().eq_ignore_ascii_case("content-length") {
                content_length = value.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    shared.requests.fetch_add(1, Ordering::SeqCst);

    let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();
    let (status, payload) = respond(&path, &body, shared);
    let text = payload.to_string();
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    };
    let mut out = stream;
    write!(
        out,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    )?;
    out.flush()
}

fn respond(path: &str, body: &[u8], shared: &Shared) -> (u16, Value) {
    if let Some(code) = shared.script.lock().unwrap().pop_front() {
        return (code, json!({ "error": { "message": "scripted failure" } }));
    }
    let Ok(req) = serde_json::from_slice::<Value>(body) else {
        return (400, json!({ "error": { "message": "body is not JSON" } }));
    };
    let chat = path.ends_with("/chat/completions");
    let prompt = if chat {
        req["messages"].as_array().and_then(|m| m.last()).and_then(|m| m["content"].as_str())
    } else {
        req["prompt"].as_str()
    };
    let Some(prompt) = prompt else {
        return (400, json!({ "error": { "message": "no prompt in request" } }));
    };
    shared.prompts.lock().unwrap().push(prompt.to_string());
    let Some(answer) = shared.fixtures.answer(prompt) else {
        return (404, json!({ "error": { "message": "no fixture for prompt" } }));
    };
    let usage = json!({
        "prompt_tokens": estimate_tokens(prompt, 4.0),
        "completion_tokens": estimate_tokens(&answer, 4.0),
        "total_tokens": estimate_tokens(prompt, 4.0) + estimate_tokens(&answer, 4.0),
    });
    let choice = if chat {
        json!({ "index": 0, "message": { "role": "assistant", "content": answer }, "finish_reason": "stop" })
    } else {
        json!({ "index": 0, "text": answer, "finish_reason": "stop" })
    };
    (200, json!({ "object": if chat { "chat.completion" } else { "text_completion" }, "choices": [choice], "usage": usage }))
}
