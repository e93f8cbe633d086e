#![allow(dead_code)]

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use modechoice::gateway::{MockBackend, MockConfig};
use modechoice::{ChoiceSituation, ModeLabel, PerMode};
use rand::Rng;

pub fn data_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/swissmetro.dat")
}

pub fn random_situation(rng: &mut impl Rng, id: usize) -> ChoiceSituation {
    ChoiceSituation {
        situation_id: format!("r{id}"),
        travel_time_min: PerMode::from_fn(|_| rng.gen_range(1..400)),
        travel_cost: PerMode::from_fn(|_| rng.gen_range(0..300)),
        is_regular_train_user: rng.gen(),
        owns_annual_pass: rng.gen(),
        chosen: ModeLabel::ALL[rng.gen_range(0..3)],
    }
}

/// Minimal OpenAI-style chat endpoint on localhost. Scripted statuses are
/// served first; afterwards every request gets the generalized-cost
/// answer computed from the prompt it carries.
pub struct FakeChatServer {
    pub url: String,
    pub requests: Arc<AtomicUsize>,
    pub auth_headers: Arc<Mutex<Vec<String>>>,
}

struct Shared {
    script: Mutex<VecDeque<u16>>,
    requests: Arc<AtomicUsize>,
    auth_headers: Arc<Mutex<Vec<String>>>,
}

impl FakeChatServer {
    pub fn start(script: Vec<u16>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let requests = Arc::new(AtomicUsize::new(0));
        let auth_headers = Arc::new(Mutex::new(Vec::new()));
        let shared = Arc::new(Shared {
            script: Mutex::new(script.into()),
            requests: requests.clone(),
            auth_headers: auth_headers.clone(),
        });
        std::thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let shared = shared.clone();
                std::thread::spawn(move || serve(stream, &shared));
            }
        });
        FakeChatServer { url, requests, auth_headers }
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

fn serve(stream: TcpStream, shared: &Shared) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut writer = stream;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let mut content_length = 0;
        loop {
            let mut header = String::new();
            if reader.read_line(&mut header).unwrap_or(0) == 0 {
                return;
            }
            let header = header.trim_end();
            if header.is_empty() {
                break;
            }
            let (name, value) = header.split_once(':').unwrap_or((header, ""));
            match name.to_ascii_lowercase().as_str() {
                "content-length" => content_length = value.trim().parse().unwrap(),
                "authorization" => shared.auth_headers.lock().unwrap().push(value.trim().to_string()),
                _ => {}
            }
        }
        let mut body = vec![0; content_length];
        reader.read_exact(&mut body).unwrap();
        shared.requests.fetch_add(1, Ordering::SeqCst);

        let scripted = shared.script.lock().unwrap().pop_front();
        let (status, payload) = match scripted {
            Some(status) => (status, r#"{"error":{"message":"scripted"}}"#.to_string()),
            None => {
                let request: serde_json::Value = serde_json::from_slice(&body).unwrap();
                let messages = request["messages"].as_array().unwrap();
                let prompt = messages.last().unwrap()["content"].as_str().unwrap();
                let text = MockBackend::new(MockConfig::default()).reply(prompt).unwrap();
                let reply = serde_json::json!({
                    "id": "chatcmpl-local",
                    "object": "chat.completion",
                    "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}]
                });
                (200, reply.to_string())
            }
        };
        let response = format!(
            "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{payload}",
            payload.len()
        );
        if writer.write_all(response.as_bytes()).is_err() {
            return;
        }
    }
}
