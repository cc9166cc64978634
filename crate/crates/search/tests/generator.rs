use std::collections::HashSet;
use std::io::{Read, Write};
use std::net::TcpListener;
use std::thread;

use rewardsmith_core::rewards::PROTECTED_NAMES;
use rewardsmith_lang::{validate, RewardProgram, SandboxLimits};
use rewardsmith_search::generator::{parse_candidates, GenError, GeneratorRequest, HttpGenerator};
use rewardsmith_search::{Generator, HttpSettings, MockGenerator};

fn req(round: u32, count: usize) -> GeneratorRequest {
    GeneratorRequest { round, prompt: "p".into(), count, temperature: 0.6, max_tokens: 8192 }
}

#[test]
fn mock_candidates_are_valid_and_distinct() {
    let mut stems = HashSet::new();
    for seed in 0..8u64 {
        for round in 1..=5 {
            let cands = MockGenerator::new(seed).generate(&req(round, 10)).unwrap();
            assert_eq!(cands.len(), 10);
            let names: HashSet<_> = cands.iter().map(|c| c.name.clone()).collect();
            assert_eq!(names.len(), 10);
            for c in cands {
                assert!(!PROTECTED_NAMES.contains(&c.name.as_str()));
                stems.insert(c.name.rsplit_once("_r").unwrap().0.to_string());
                let mut p = RewardProgram::new(&c.name, &c.code, &c.description, round);
                assert!(validate(&mut p, SandboxLimits::default()).is_some(), "{}: {:?}\n{}", c.name, p.status, c.code);
            }
        }
    }
    assert_eq!(stems.len(), 12);
}

#[test]
fn mock_is_deterministic_per_round() {
    let g = MockGenerator::new(1);
    assert_eq!(g.generate(&req(2, 3)).unwrap(), g.generate(&req(2, 3)).unwrap());
    assert_ne!(g.generate(&req(1, 3)).unwrap(), g.generate(&req(2, 3)).unwrap());
}

#[test]
fn malformed_payload_is_unparseable() {
    assert!(matches!(parse_candidates("no json here"), Err(GenError::Unparseable { .. })));
    assert!(matches!(parse_candidates("[{\"name\": 1}]"), Err(GenError::Unparseable { .. })));
}

/// Serves `responses` in order, one per connection, and records request bodies.
fn serve(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let mut seen = Vec::new();
        for (status, body) in responses {
            let (mut s, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            loop {
                let n = s.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
                let text = String::from_utf8_lossy(&buf).to_string();
                if let Some(i) = text.find("\r\n\r\n") {
                    let len = text[..i]
                        .lines()
                        .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
                        .unwrap_or(0);
                    if buf.len() >= i + 4 + len {
                        seen.push(text);
                        break;
                    }
                }
                if n == 0 {
                    break;
                }
            }
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            s.write_all(reply.as_bytes()).unwrap();
        }
        seen
    });
    (url, handle)
}

fn settings(url: String) -> HttpSettings {
    HttpSettings { url, token_env: "RS_TEST_TOKEN".into(), backoff_ms: 1, timeout_secs: 5, ..HttpSettings::default() }
}

fn chat(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

#[test]
fn http_round_trip_with_retry() {
    std::env::set_var("RS_TEST_TOKEN", "secret");
    let content = "```json\n[{\"name\": \"a_reward\", \"code\": \"def a_reward(p, c, a, **k):\\n    return [0.0]\", \"description\": \"d\"}]\n```";
    let (url, h) = serve(vec![(500, "{}".into()), (200, chat(content))]);
    let out = HttpGenerator::new(settings(url)).generate(&req(1, 1)).unwrap();
    assert_eq!(out[0].name, "a_reward");
    let seen = h.join().unwrap();
    assert_eq!(seen.len(), 2);
    let last = &seen[1];
    assert!(last.to_ascii_lowercase().contains("authorization: bearer secret"));
    let body: serde_json::Value = serde_json::from_str(&last[last.find("\r\n\r\n").unwrap() + 4..]).unwrap();
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["temperature"], 0.6);
    assert_eq!(body["max_tokens"], 8192);
}

#[test]
fn http_gives_up_after_three_attempts() {
    std::env::set_var("RS_TEST_TOKEN", "secret");
    let (url, h) = serve(vec![(503, "{}".into()), (503, "{}".into()), (503, "{}".into())]);
    let err = HttpGenerator::new(settings(url)).generate(&req(1, 1)).unwrap_err();
    assert!(matches!(err, GenError::Transport { attempts: 3, .. }), "{err}");
    h.join().unwrap();
}

#[test]
fn http_malformed_content() {
    std::env::set_var("RS_TEST_TOKEN", "secret");
    let (url, h) = serve(vec![(200, chat("sorry, no rewards today"))]);
    let err = HttpGenerator::new(settings(url)).generate(&req(1, 1)).unwrap_err();
    match err {
        GenError::Unparseable { raw, .. } => assert!(raw.contains("sorry")),
        e => panic!("{e}"),
    }
    h.join().unwrap();
}
