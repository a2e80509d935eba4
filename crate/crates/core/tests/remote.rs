//! HTTP backend against a loopback mock. Set `METACOG_REMOTE_SMOKE=1` with
//! `METACOG_BACKEND_URL` to also probe a real endpoint.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use metacog_core::backend::{BackendError, CognitionBackend, GenerationRequest, RemoteBackend, RemoteConfig, Role};

struct Seen {
    request_line: String,
    auth: Option<String>,
    body: serde_json::Value,
}

/// Serves one canned reply per connection, in order, then stops.
fn mock(replies: Vec<(u16, &'static str)>) -> (String, mpsc::Receiver<Seen>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, reply) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut len = 0;
            let mut auth = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (k, v) = line.split_once(':').unwrap();
                match k.to_ascii_lowercase().as_str() {
                    "content-length" => len = v.trim().parse().unwrap(),
                    "authorization" => auth = Some(v.trim().to_string()),
                    _ => {}
                }
            }
            let mut raw = vec![0; len];
            reader.read_exact(&mut raw).unwrap();
            let body = if raw.is_empty() { serde_json::Value::Null } else { serde_json::from_slice(&raw).unwrap() };
            tx.send(Seen { request_line: request_line.trim_end().to_string(), auth, body }).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
        }
    });
    (url, rx)
}

fn backend(url: String, token: Option<&str>) -> RemoteBackend {
    RemoteBackend::new(RemoteConfig {
        url,
        token: token.map(str::to_string),
        timeout: Duration::from_secs(5),
        force_temperature: None,
    })
}

fn request(role: Role) -> GenerationRequest {
    let mut r = GenerationRequest::new(role, "[tags] mode=act\nhello".into(), 9);
    r.temperature = 0.4;
    r.max_length = 77;
    r
}

#[test]
fn sends_the_four_field_body_with_bearer_auth() {
    let (url, rx) = mock(vec![(200, r#"{"text":"children:\n0.7 look"}"#)]);
    let got = backend(url, Some("s3cret")).generate(&request(Role::GoalWriter)).unwrap();
    assert_eq!(got.text, "children:\n0.7 look");
    assert_eq!(got.value, None);

    let seen = rx.recv().unwrap();
    assert!(seen.request_line.starts_with("POST /generate "), "{}", seen.request_line);
    assert_eq!(seen.auth.as_deref(), Some("Bearer s3cret"));
    let body = seen.body.as_object().unwrap();
    let mut keys: Vec<&str> = body.keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["max_length", "prompt", "role", "temperature"]);
    assert_eq!(body["role"], "goal-writer");
    assert_eq!(body["max_length"], 77);
    assert_eq!(body["temperature"], 0.4);
    assert_eq!(body["prompt"], "[tags] mode=act\nhello");
}

#[test]
fn forced_temperature_and_no_token() {
    let (url, rx) = mock(vec![(200, r#"{"text":"ok","value":0.25}"#)]);
    let mut b = RemoteConfig { url, token: None, timeout: Duration::from_secs(5), force_temperature: Some(0.0) };
    b.url.push('/');
    let got = RemoteBackend::new(b).generate(&request(Role::Guardian)).unwrap();
    assert_eq!(got.value, Some(0.25));
    let seen = rx.recv().unwrap();
    assert!(seen.request_line.starts_with("POST /generate "));
    assert_eq!(seen.auth, None);
    assert_eq!(seen.body["temperature"], 0.0);
}

#[test]
fn out_of_range_value_is_a_protocol_error() {
    let (url, _rx) = mock(vec![(200, r#"{"text":"x","value":1.5}"#), (200, r#"{"text":"x","value":1.5}"#)]);
    let err = backend(url, None).generate(&request(Role::Planner)).unwrap_err();
    assert!(matches!(err, BackendError::Protocol(_)), "{err}");
}

#[test]
fn malformed_json_is_a_protocol_error() {
    let (url, _rx) = mock(vec![(200, "not json"), (200, "{\"nope\":1}")]);
    let err = backend(url, None).generate(&request(Role::Reflector)).unwrap_err();
    assert!(matches!(err, BackendError::Protocol(_)), "{err}");
}

#[test]
fn one_retry_after_a_failure() {
    let (url, rx) = mock(vec![(500, "{}"), (200, r#"{"text":"second"}"#)]);
    let got = backend(url, None).generate(&request(Role::Planner)).unwrap();
    assert_eq!(got.text, "second");
    assert_eq!(rx.iter().take(2).count(), 2);
}

#[test]
fn healthcheck_reports_both_states() {
    let (url, rx) = mock(vec![(200, "{}")]);
    let h = backend(url, Some("t")).healthcheck();
    assert!(h.healthy && h.latency.is_some(), "{h:?}");
    let seen = rx.recv().unwrap();
    assert!(seen.request_line.starts_with("GET /health "));
    assert_eq!(seen.auth.as_deref(), Some("Bearer t"));

    let closed = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let h = backend(format!("http://{closed}"), None).healthcheck();
    assert!(!h.healthy && h.reason.is_some(), "{h:?}");
    let err = backend(format!("http://{closed}"), None).generate(&request(Role::Planner)).unwrap_err();
    assert!(matches!(err, BackendError::Unavailable(_)), "{err}");
}

#[test]
fn live_endpoint_smoke() {
    if std::env::var_os("METACOG_REMOTE_SMOKE").is_none() {
        return;
    }
    let mut config = RemoteConfig::from_env().expect("METACOG_BACKEND_URL");
    config.force_temperature = Some(0.0);
    let b = RemoteBackend::new(config);
    assert!(b.healthcheck().healthy);
    for role in [Role::Planner, Role::Guardian, Role::Reflector, Role::GoalWriter] {
        let r = b.generate(&GenerationRequest::new(role, "[tags] mode=act\nReply with one short line.".into(), 7)).unwrap();
        assert!(!r.text.trim().is_empty(), "{role:?} answered nothing");
    }
}
